//! Cache data model and the bit-exact on-disk formats: the JSON manifest,
//! little-endian float32 key tensors (head-major, one file per layer), and
//! the retained-index JSON output.
//!
//! Value tensors are never stored or read: every score is key-only and the
//! engine's output is an index set.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Element type of the key tensors. Exactly one member: producers dump in
/// float32 or convert before handing caches to this engine.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    Float32,
}

/// Validated description of a dumped cache: dimensions plus one binary key
/// file per layer. `n_kv_heads` counts KV heads, not query heads.
#[derive(Clone, Debug)]
pub struct CacheManifest {
    pub n_layers: usize,
    pub n_kv_heads: usize,
    pub n_tokens: usize,
    pub head_dim: usize,
    pub dtype: Dtype,
    pub layer_files: Vec<String>,
    base_dir: PathBuf,
}

impl CacheManifest {
    pub fn new(
        n_layers: usize,
        n_kv_heads: usize,
        n_tokens: usize,
        head_dim: usize,
        layer_files: Vec<String>,
        base_dir: PathBuf,
    ) -> Result<Self> {
        let m = Self {
            n_layers,
            n_kv_heads,
            n_tokens,
            head_dim,
            dtype: Dtype::Float32,
            layer_files,
            base_dir,
        };
        m.check_dims()?;
        Ok(m)
    }

    fn check_dims(&self) -> Result<()> {
        for (field, value) in [
            ("n_layers", self.n_layers),
            ("n_kv_heads", self.n_kv_heads),
            ("n_tokens", self.n_tokens),
            ("head_dim", self.head_dim),
        ] {
            if value == 0 {
                return Err(Error::InvalidField {
                    field,
                    reason: "must be >= 1".into(),
                });
            }
        }
        if self.layer_files.len() != self.n_layers {
            return Err(Error::InvalidField {
                field: "layer_files",
                reason: format!(
                    "{} entries for n_layers = {}",
                    self.layer_files.len(),
                    self.n_layers
                ),
            });
        }
        Ok(())
    }

    /// Exact byte length of every layer file.
    pub fn layer_bytes(&self) -> u64 {
        (self.n_kv_heads * self.n_tokens * self.head_dim * 4) as u64
    }

    pub fn layer_path(&self, layer: usize) -> PathBuf {
        self.base_dir.join(&self.layer_files[layer])
    }
}

#[derive(Serialize, Deserialize)]
struct ManifestDoc {
    n_layers: usize,
    n_kv_heads: usize,
    n_tokens: usize,
    head_dim: usize,
    dtype: String,
    layer_files: Vec<String>,
}

fn require_count(obj: &serde_json::Map<String, Value>, field: &'static str) -> Result<usize> {
    let v = obj.get(field).ok_or(Error::MissingField(field))?;
    match v.as_u64() {
        Some(n) => Ok(n as usize),
        None => Err(Error::InvalidField {
            field,
            reason: format!("expected a non-negative integer, got {v}"),
        }),
    }
}

/// Reads and validates a manifest. Layer file sizes are checked against the
/// declared dimensions; each failure names the offending field or file.
pub fn read_manifest(path: &Path) -> Result<CacheManifest> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    let value: Value = serde_json::from_str(&text).map_err(Error::json(path))?;
    let obj = value.as_object().ok_or(Error::InvalidField {
        field: "manifest",
        reason: "top level is not a JSON object".into(),
    })?;

    let n_layers = require_count(obj, "n_layers")?;
    let n_kv_heads = require_count(obj, "n_kv_heads")?;
    let n_tokens = require_count(obj, "n_tokens")?;
    let head_dim = require_count(obj, "head_dim")?;

    let dtype_val = obj.get("dtype").ok_or(Error::MissingField("dtype"))?;
    let dtype_str = dtype_val.as_str().ok_or(Error::InvalidField {
        field: "dtype",
        reason: "expected a string".into(),
    })?;
    if dtype_str != "float32" {
        return Err(Error::UnsupportedDtype(dtype_str.to_string()));
    }

    let files_val = obj
        .get("layer_files")
        .ok_or(Error::MissingField("layer_files"))?;
    let layer_files: Vec<String> = files_val
        .as_array()
        .ok_or(Error::InvalidField {
            field: "layer_files",
            reason: "expected an array of paths".into(),
        })?
        .iter()
        .map(|v| {
            v.as_str().map(str::to_string).ok_or(Error::InvalidField {
                field: "layer_files",
                reason: format!("non-string entry {v}"),
            })
        })
        .collect::<Result<_>>()?;

    let base_dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let manifest = CacheManifest::new(
        n_layers,
        n_kv_heads,
        n_tokens,
        head_dim,
        layer_files,
        base_dir,
    )?;

    let expected = manifest.layer_bytes();
    for (layer, file) in manifest.layer_files.iter().enumerate() {
        let p = manifest.layer_path(layer);
        let meta = fs::metadata(&p).map_err(Error::io(&p))?;
        if meta.len() != expected {
            return Err(Error::FileSizeMismatch {
                file: file.clone(),
                expected,
                actual: meta.len(),
            });
        }
    }
    Ok(manifest)
}

pub fn write_manifest(manifest: &CacheManifest, path: &Path) -> Result<()> {
    let doc = ManifestDoc {
        n_layers: manifest.n_layers,
        n_kv_heads: manifest.n_kv_heads,
        n_tokens: manifest.n_tokens,
        head_dim: manifest.head_dim,
        dtype: "float32".into(),
        layer_files: manifest.layer_files.clone(),
    };
    let mut text = serde_json::to_string_pretty(&doc).map_err(Error::json(path))?;
    text.push('\n');
    fs::write(path, text).map_err(Error::io(path))
}

/// One head's cached keys: N rows of d float32 values, row i holding the key
/// of position i.
#[derive(Clone, Debug, PartialEq)]
pub struct KeyStream {
    n_tokens: usize,
    head_dim: usize,
    data: Vec<f32>,
}

impl KeyStream {
    pub fn new(n_tokens: usize, head_dim: usize, data: Vec<f32>) -> Self {
        assert_eq!(
            data.len(),
            n_tokens * head_dim,
            "key buffer length mismatch"
        );
        Self {
            n_tokens,
            head_dim,
            data,
        }
    }

    pub fn n_tokens(&self) -> usize {
        self.n_tokens
    }

    pub fn head_dim(&self) -> usize {
        self.head_dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.head_dim..(i + 1) * self.head_dim]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }
}

/// Reads one layer's keys as one stream per head.
///
/// Layout: little-endian float32, head-major; element (h, i, j) sits at byte
/// offset `4 * ((h*N + i)*d + j)`.
pub fn read_layer_keys(manifest: &CacheManifest, layer: usize) -> Result<Vec<KeyStream>> {
    if layer >= manifest.n_layers {
        return Err(Error::LayerOutOfRange {
            layer,
            n_layers: manifest.n_layers,
        });
    }
    let path = manifest.layer_path(layer);
    let bytes = fs::read(&path).map_err(Error::io(&path))?;
    if bytes.len() as u64 != manifest.layer_bytes() {
        return Err(Error::FileSizeMismatch {
            file: manifest.layer_files[layer].clone(),
            expected: manifest.layer_bytes(),
            actual: bytes.len() as u64,
        });
    }

    let (n, d) = (manifest.n_tokens, manifest.head_dim);
    let per_head = n * d;
    let mut heads = Vec::with_capacity(manifest.n_kv_heads);
    for h in 0..manifest.n_kv_heads {
        let mut data = Vec::with_capacity(per_head);
        let start = h * per_head * 4;
        for (k, chunk) in bytes[start..start + per_head * 4]
            .chunks_exact(4)
            .enumerate()
        {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    head: h,
                    token: k / d,
                    dim: k % d,
                });
            }
            data.push(v);
        }
        heads.push(KeyStream::new(n, d, data));
    }
    Ok(heads)
}

/// Writes one layer's key streams in the binary layout `read_layer_keys`
/// expects. All heads must share N and d.
pub fn write_layer_keys(heads: &[KeyStream], path: &Path) -> Result<()> {
    let mut bytes = Vec::new();
    for ks in heads {
        for v in ks.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, bytes).map_err(Error::io(path))
}

/// Retained positions for one head, sorted ascending. `budget` always equals
/// `indices.len()`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadRetained {
    pub budget: usize,
    pub indices: Vec<usize>,
}

impl HeadRetained {
    pub fn new(indices: Vec<usize>) -> Self {
        Self {
            budget: indices.len(),
            indices,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerRetained {
    pub heads: Vec<HeadRetained>,
}

impl LayerRetained {
    pub fn total_retained(&self) -> usize {
        self.heads.iter().map(|h| h.indices.len()).sum()
    }
}

/// The engine's output: per (layer, head), strictly increasing retained
/// position indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetainedSet {
    pub layers: Vec<LayerRetained>,
}

impl RetainedSet {
    pub fn validate(&self, n_tokens: usize) -> Result<()> {
        for (l, layer) in self.layers.iter().enumerate() {
            for (h, head) in layer.heads.iter().enumerate() {
                if head.budget != head.indices.len() {
                    return Err(Error::InvalidConfig(format!(
                        "layer {l} head {h}: budget {} != {} indices",
                        head.budget,
                        head.indices.len()
                    )));
                }
                for w in head.indices.windows(2) {
                    if w[0] >= w[1] {
                        return Err(Error::InvalidConfig(format!(
                            "layer {l} head {h}: indices not strictly increasing at {}..{}",
                            w[0], w[1]
                        )));
                    }
                }
                if let Some(&last) = head.indices.last() {
                    if last >= n_tokens {
                        return Err(Error::InvalidConfig(format!(
                            "layer {l} head {h}: index {last} >= n_tokens {n_tokens}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct RetainedDoc<'a> {
    config: &'a Value,
    layers: &'a [LayerRetained],
}

/// Writes the retained-index JSON: a config echo plus per-layer, per-head
/// budgets and sorted indices.
pub fn write_retained(sets: &RetainedSet, config: &Value, path: &Path) -> Result<()> {
    let doc = RetainedDoc {
        config,
        layers: &sets.layers,
    };
    let mut text = serde_json::to_string_pretty(&doc).map_err(Error::json(path))?;
    text.push('\n');
    fs::write(path, text).map_err(Error::io(path))
}

/// Same document as `write_retained`, rendered to a string (for stdout).
pub fn retained_to_string(sets: &RetainedSet, config: &Value) -> String {
    let doc = RetainedDoc {
        config,
        layers: &sets.layers,
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("retained set serializes");
    text.push('\n');
    text
}

//! Three time-scale summaries of a normalized key stream: a stable anchor
//! (global mean), episodic anchors (block means), and current anchors
//! (sliding-window means).
//!
//! Anchors are plain means of unit-normalized rows; they are not themselves
//! re-normalized. Summation always runs in ascending index order so outputs
//! are bitwise reproducible within one build.

use std::ops::Range;

use crate::config::{BlockSchedule, ScoringConfig};
use crate::error::{Error, Result};
use crate::opcount;
use crate::tensor::KeyStream;

/// Key stream with every row scaled to unit L2 norm.
#[derive(Clone, Debug)]
pub struct NormalizedKeys {
    n_tokens: usize,
    head_dim: usize,
    data: Vec<f32>,
}

impl NormalizedKeys {
    pub fn n_tokens(&self) -> usize {
        self.n_tokens
    }

    pub fn head_dim(&self) -> usize {
        self.head_dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.head_dim..(i + 1) * self.head_dim]
    }
}

/// Scales each key row to unit L2 norm. Rows with norm <= 1e-12 carry no
/// direction and are rejected with their index.
pub fn normalize_keys(keys: &KeyStream) -> Result<NormalizedKeys> {
    let (n, d) = (keys.n_tokens(), keys.head_dim());
    let mut data = Vec::with_capacity(n * d);
    for i in 0..n {
        let row = keys.row(i);
        let norm = row
            .iter()
            .map(|&x| (x as f64) * (x as f64))
            .sum::<f64>()
            .sqrt();
        if norm <= 1e-12 {
            return Err(Error::ZeroNorm(i));
        }
        data.extend(row.iter().map(|&x| (x as f64 / norm) as f32));
    }
    opcount::record((n * d) as u64);
    Ok(NormalizedKeys {
        n_tokens: n,
        head_dim: d,
        data,
    })
}

/// Contiguous blocks covering [0, N). All blocks have length `block_size`
/// except possibly the last, which holds the remainder.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockPartition {
    block_size: usize,
    bounds: Vec<Range<usize>>,
}

impl BlockPartition {
    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn bounds(&self) -> &[Range<usize>] {
        &self.bounds
    }

    pub fn n_blocks(&self) -> usize {
        self.bounds.len()
    }

    /// Index of the block containing position `i`.
    pub fn block_of(&self, i: usize) -> usize {
        i / self.block_size
    }
}

pub fn block_partition(n_tokens: usize, schedule: &BlockSchedule) -> BlockPartition {
    let b = schedule.block_size(n_tokens);
    let mut bounds = Vec::with_capacity(n_tokens.div_ceil(b));
    let mut start = 0;
    while start < n_tokens {
        let end = (start + b).min(n_tokens);
        bounds.push(start..end);
        start = end;
    }
    BlockPartition {
        block_size: b,
        bounds,
    }
}

/// Global mean of the normalized rows.
pub fn stable_anchor(nk: &NormalizedKeys) -> Vec<f64> {
    let (n, d) = (nk.n_tokens(), nk.head_dim());
    let mut sum = vec![0.0f64; d];
    for i in 0..n {
        for (acc, &x) in sum.iter_mut().zip(nk.row(i)) {
            *acc += x as f64;
        }
    }
    opcount::record((n * d) as u64);
    for acc in &mut sum {
        *acc /= n as f64;
    }
    sum
}

/// Per-block means, one d-vector per block of the partition.
pub fn episodic_anchors(nk: &NormalizedKeys, partition: &BlockPartition) -> Vec<Vec<f64>> {
    let d = nk.head_dim();
    let mut anchors = Vec::with_capacity(partition.n_blocks());
    for range in partition.bounds() {
        let len = range.len();
        let mut sum = vec![0.0f64; d];
        for i in range.clone() {
            for (acc, &x) in sum.iter_mut().zip(nk.row(i)) {
                *acc += x as f64;
            }
        }
        for acc in &mut sum {
            *acc /= len as f64;
        }
        anchors.push(sum);
    }
    opcount::record((nk.n_tokens() * d) as u64);
    anchors
}

/// Sliding-window means: position i averages rows max(0, i-W+1)..=i.
///
/// Computed as differences of running prefix sums in f64, one pass over the
/// stream; windows shorter than W at the start use the truncated length.
pub fn current_anchors(nk: &NormalizedKeys, window: usize) -> Vec<f64> {
    assert!(window >= 1, "window must be >= 1");
    let (n, d) = (nk.n_tokens(), nk.head_dim());
    let mut prefix = vec![0.0f64; (n + 1) * d];
    for i in 0..n {
        let row = nk.row(i);
        let (lo, hi) = (i * d, (i + 1) * d);
        for j in 0..d {
            prefix[hi + j] = prefix[lo + j] + row[j] as f64;
        }
    }
    let mut out = vec![0.0f64; n * d];
    for i in 0..n {
        let start = (i + 1).saturating_sub(window);
        let len = (i + 1 - start) as f64;
        for j in 0..d {
            out[i * d + j] = (prefix[(i + 1) * d + j] - prefix[start * d + j]) / len;
        }
    }
    opcount::record(2 * (n * d) as u64);
    out
}

/// The continuum memory state: all three anchor scales for one head.
#[derive(Clone, Debug)]
pub struct ContinuumAnchors {
    pub stable: Vec<f64>,
    pub episodic: Vec<Vec<f64>>,
    pub partition: BlockPartition,
    current: Vec<f64>,
    head_dim: usize,
}

impl ContinuumAnchors {
    pub fn compute(nk: &NormalizedKeys, cfg: &ScoringConfig) -> Self {
        let partition = block_partition(nk.n_tokens(), &cfg.block);
        Self {
            stable: stable_anchor(nk),
            episodic: episodic_anchors(nk, &partition),
            current: current_anchors(nk, cfg.window),
            partition,
            head_dim: nk.head_dim(),
        }
    }

    /// Episodic anchor for the block containing position i.
    pub fn episodic_for(&self, i: usize) -> &[f64] {
        &self.episodic[self.partition.block_of(i)]
    }

    /// Current anchor at position i.
    pub fn current_for(&self, i: usize) -> &[f64] {
        &self.current[i * self.head_dim..(i + 1) * self.head_dim]
    }
}

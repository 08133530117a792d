//! Reference scorers and the method grid: the routed continuum scorer is
//! compared against single-anchor, recency, and random baselines, each
//! paired with either competitive or uniform budget allocation.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::ScoringConfig;
use crate::continuum::ContinuumAnchors;
use crate::continuum::{normalize_keys, stable_anchor};
use crate::error::{Error, Result};
use crate::scoring::{minmax_normalize, per_scale_anomalies, pin_sinks};
use crate::tensor::KeyStream;

/// Token scoring signal.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scorer {
    ContinuumRouted,
    SingleAnchor,
    Recency,
    Random,
}

/// Budget allocation rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Allocator {
    Competitive,
    Uniform,
}

/// A compression method: a scorer paired with an allocator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    NestedKv,
    NestedKvUniform,
    SingleAnchorAdaptive,
    SingleAnchorUniform,
    Recency,
    Random,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::NestedKv,
        Method::NestedKvUniform,
        Method::SingleAnchorAdaptive,
        Method::SingleAnchorUniform,
        Method::Recency,
        Method::Random,
    ];

    /// The four-variant ablation grid: full, without adaptive allocation,
    /// without the continuum score, and without both.
    pub const ABLATION: [Method; 4] = [
        Method::NestedKv,
        Method::NestedKvUniform,
        Method::SingleAnchorAdaptive,
        Method::SingleAnchorUniform,
    ];

    pub fn scorer(self) -> Scorer {
        match self {
            Method::NestedKv | Method::NestedKvUniform => Scorer::ContinuumRouted,
            Method::SingleAnchorAdaptive | Method::SingleAnchorUniform => Scorer::SingleAnchor,
            Method::Recency => Scorer::Recency,
            Method::Random => Scorer::Random,
        }
    }

    pub fn allocator(self) -> Allocator {
        match self {
            Method::NestedKv | Method::SingleAnchorAdaptive => Allocator::Competitive,
            _ => Allocator::Uniform,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::NestedKv => "nestedkv",
            Method::NestedKvUniform => "nestedkv_uniform",
            Method::SingleAnchorAdaptive => "single_anchor_adaptive",
            Method::SingleAnchorUniform => "single_anchor_uniform",
            Method::Recency => "recency",
            Method::Random => "random",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::UnknownMethod(s.to_string()))
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

/// Single-anchor key-distinctiveness score: the stable channel alone.
/// Equivalent to the routed scorer's norm_s channel, sinks pinned.
pub fn single_anchor_score(keys: &KeyStream, n_sink: usize) -> Result<Vec<f64>> {
    let nk = normalize_keys(keys)?;
    let mu = stable_anchor(&nk);
    let n = nk.n_tokens();
    let mut raw = Vec::with_capacity(n);
    for i in 0..n {
        raw.push(neg_cos_unit(nk.row(i), &mu));
    }
    let norm = minmax_normalize(&raw);
    Ok(pin_sinks(&norm, n_sink).0)
}

fn neg_cos_unit(row: &[f32], anchor: &[f64]) -> f64 {
    let mut dot = 0.0f64;
    let mut row_sq = 0.0f64;
    let mut anchor_sq = 0.0f64;
    for (&x, &a) in row.iter().zip(anchor) {
        dot += x as f64 * a;
        row_sq += (x as f64) * (x as f64);
        anchor_sq += a * a;
    }
    let anchor_norm = anchor_sq.sqrt();
    if anchor_norm <= 1e-12 {
        return 0.0;
    }
    -(dot / (row_sq.sqrt() * anchor_norm))
}

/// Recency baseline, as a retained set directly: the first min(n_sink, B)
/// positions plus the last B - min(n_sink, B).
pub fn recency_retain(n_tokens: usize, n_sink: usize, budget: usize) -> Vec<usize> {
    let keep = budget.min(n_tokens);
    let lead = n_sink.min(keep);
    let tail = keep - lead;
    let mut out: Vec<usize> = (0..lead).collect();
    out.extend(n_tokens - tail..n_tokens);
    out
}

/// Seeded pseudorandom scores in [0, 1), sinks pinned. A control baseline.
pub fn random_score(n_tokens: usize, n_sink: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..n_tokens).map(|_| rng.gen::<f64>()).collect();
    pin_sinks(&raw, n_sink).0
}

/// The routed scorer's norm_s channel, for the ablation cross-check.
pub fn stable_channel(keys: &KeyStream, cfg: &ScoringConfig) -> Result<Vec<f64>> {
    let nk = normalize_keys(keys)?;
    let anchors = ContinuumAnchors::compute(&nk, cfg);
    let raw = per_scale_anomalies(&nk, &anchors);
    Ok(minmax_normalize(&raw.stable))
}

//! Synthetic key streams with planted anomalies at each time scale, plus the
//! benchmark runner that sweeps compression methods across eviction ratios
//! and reports needle recall and attention-mass retention.
//!
//! Generators verify their own construction at build time (needle anomaly
//! strictly separated from the background at the targeted scale), so recall
//! targets downstream are checked against a predicate that never touches the
//! compressor.

mod generators;
mod metrics;
mod runner;

pub use generators::{
    gen_current_needle, gen_episodic_needle, gen_global_needle, gen_uniform_noise, generate,
    SynthStream,
};
pub use metrics::{default_queries, mass_retention, needle_recall};
pub use runner::{
    run_bench, run_sweep, BenchConfig, BenchReport, BenchRow, SweepConfig, SweepKnob, SweepReport,
    SweepRow,
};

use std::str::FromStr;

use serde::Serialize;

use crate::error::Error;

/// Which anomaly structure a stream plants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GeneratorKind {
    /// Needles orthogonal to a single global base direction: anomalous at
    /// every scale, easiest to separate.
    GlobalNeedle,
    /// Per-block base directions arranged so needles sit near the global
    /// mean but far from their own block: globally typical, locally
    /// anomalous.
    EpisodicNeedle,
    /// A slowly drifting stream where needles deviate sharply from the local
    /// window yet stay near the global mean.
    CurrentNeedle,
    /// Pure noise, no needles; for determinism and mass checks.
    UniformNoise,
}

impl GeneratorKind {
    pub const ALL: [GeneratorKind; 4] = [
        GeneratorKind::GlobalNeedle,
        GeneratorKind::EpisodicNeedle,
        GeneratorKind::CurrentNeedle,
        GeneratorKind::UniformNoise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GeneratorKind::GlobalNeedle => "global_needle",
            GeneratorKind::EpisodicNeedle => "episodic_needle",
            GeneratorKind::CurrentNeedle => "current_needle",
            GeneratorKind::UniformNoise => "uniform_noise",
        }
    }
}

impl FromStr for GeneratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownGenerator(s.to_string()))
    }
}

impl Serialize for GeneratorKind {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

/// Needle placement: explicit positions, or a count to sample from the
/// stream's allowed range.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum NeedlePlacement {
    Positions(Vec<usize>),
    Count(usize),
}

/// Full description of a synthetic stream. The seed determines the stream
/// and the planted set bit-for-bit.
#[derive(Clone, Debug, Serialize)]
pub struct SynthSpec {
    pub kind: GeneratorKind,
    pub n_tokens: usize,
    pub head_dim: usize,
    pub n_heads: usize,
    pub needles: NeedlePlacement,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Sink prefix the generator must avoid planting on.
    pub n_sink: usize,
    /// Total sweep of the current-needle stream direction, in units of pi
    /// radians. 0 degenerates to a fixed direction, which makes the needles
    /// anomalous at every scale.
    pub drift: f64,
}

impl SynthSpec {
    pub fn new(
        kind: GeneratorKind,
        n_tokens: usize,
        head_dim: usize,
        n_heads: usize,
        seed: u64,
    ) -> Self {
        Self {
            kind,
            n_tokens,
            head_dim,
            n_heads,
            needles: NeedlePlacement::Count(16),
            noise_sigma: 0.05,
            seed,
            n_sink: 4,
            drift: 1.2,
        }
    }

    pub fn needle_count(&self) -> usize {
        match &self.needles {
            NeedlePlacement::Positions(p) => p.len(),
            NeedlePlacement::Count(c) => *c,
        }
    }
}

//! Engine configuration. The defaults here are the fixed constants of the
//! compression policy; every knob is overridable from the CLI but nothing is
//! learned or tuned at runtime.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sentinel score assigned to pinned sink positions. Strictly above the
/// [0, 1] range of normalized scores, so sinks always win selection, and
/// finite, so sorts and sums stay well-defined.
pub const SINK_SENTINEL: f64 = 2.0;

/// Block schedule for the episodic scale: the block size for an N-token
/// stream is `clamp(N / divisor, min_block, max_block)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSchedule {
    pub divisor: usize,
    pub min_block: usize,
    pub max_block: usize,
}

impl Default for BlockSchedule {
    fn default() -> Self {
        Self {
            divisor: 32,
            min_block: 128,
            max_block: 256,
        }
    }
}

impl BlockSchedule {
    pub fn block_size(&self, n_tokens: usize) -> usize {
        (n_tokens / self.divisor).clamp(self.min_block, self.max_block)
    }
}

/// Per-head scoring configuration: anchor schedules, channel prior, and the
/// surprise-gate shape.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoringConfig {
    /// Sliding-window length for the current anchor.
    pub window: usize,
    /// Leading positions pinned unconditionally.
    pub n_sink: usize,
    /// Prior channel weights (stable, episodic, current); positive, sum 1.
    pub prior: [f64; 3],
    /// Temperature on the reliability gaps in the head-adaptive softmax.
    pub beta: f64,
    /// Surprise-gate threshold.
    pub tau: f64,
    /// Surprise-gate sharpness.
    pub kappa: f64,
    /// Fraction p used for the top-p / bottom-p reliability gap.
    pub gap_fraction: f64,
    pub block: BlockSchedule,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            window: 64,
            n_sink: 4,
            prior: [0.4, 0.4, 0.2],
            beta: 3.0,
            tau: 0.60,
            kappa: 10.0,
            gap_fraction: 0.10,
            block: BlockSchedule::default(),
        }
    }
}

impl ScoringConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::InvalidConfig("window must be >= 1".into()));
        }
        let sum: f64 = self.prior.iter().sum();
        if self.prior.iter().any(|&w| w <= 0.0) || (sum - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidPrior(self.prior));
        }
        if self.kappa <= 0.0 {
            return Err(Error::InvalidConfig("kappa must be > 0".into()));
        }
        if !(self.gap_fraction > 0.0 && self.gap_fraction <= 0.5) {
            return Err(Error::InvalidConfig(
                "gap_fraction must lie in (0, 0.5]".into(),
            ));
        }
        if self.block.min_block == 0 || self.block.min_block > self.block.max_block {
            return Err(Error::InvalidConfig(
                "block clip bounds out of order".into(),
            ));
        }
        if self.block.divisor == 0 {
            return Err(Error::InvalidConfig("block divisor must be >= 1".into()));
        }
        Ok(())
    }
}

/// Budget-allocation configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllocConfig {
    /// Safeguard fraction: each head keeps `floor(safeguard * B)` of its own
    /// top tokens before cross-head competition.
    pub safeguard: f64,
}

impl Default for AllocConfig {
    fn default() -> Self {
        Self { safeguard: 0.20 }
    }
}

impl AllocConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.safeguard) {
            return Err(Error::InvalidConfig("safeguard must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Full engine configuration: scoring plus allocation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub scoring: ScoringConfig,
    pub alloc: AllocConfig,
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        self.scoring.validate()?;
        self.alloc.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_block_schedule_matches_clip_formula() {
        let sched = BlockSchedule::default();
        assert_eq!(sched.block_size(4096), 128);
        assert_eq!(sched.block_size(16384), 256);
        assert_eq!(sched.block_size(100), 128);
        assert_eq!(sched.block_size(8192), 256);
    }

    #[test]
    fn bad_prior_rejected() {
        let mut cfg = ScoringConfig {
            prior: [0.5, 0.5, 0.5],
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::InvalidPrior(_))));
        cfg.prior = [1.0, 0.0, 0.0];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn defaults_validate() {
        EngineConfig::default().validate().unwrap();
    }
}

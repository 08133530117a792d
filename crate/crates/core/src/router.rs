//! The training-free outer learner: head-adaptive blending of the three
//! normalized anomaly channels, and surprise-gated routing from the blend
//! toward the per-token maximum.
//!
//! Nothing here is learned. Per head, channel weights follow a softmax over
//! reliability gaps anchored at a fixed log-prior; per token, cross-scale
//! disagreement (the population std of the three readings) gates how far the
//! score moves from the blend toward the strongest single channel.

use serde::Serialize;

use crate::config::{ScoringConfig, SINK_SENTINEL};
use crate::continuum::normalize_keys;
use crate::continuum::ContinuumAnchors;
use crate::error::{Error, Result};
use crate::scoring::{minmax_normalize, ScaleScores};
use crate::tensor::KeyStream;

/// Head-adaptive channel mix: reliability gaps, prior, and the resulting
/// softmax weights (strictly positive, sum 1).
#[derive(Clone, Copy, Debug)]
pub struct HeadMix {
    pub delta: [f64; 3],
    pub prior: [f64; 3],
    pub beta: f64,
    pub weights: [f64; 3],
}

/// Top-p-mean minus bottom-p-mean of a channel over non-sink positions:
/// how strongly the channel separates its extremes on this head.
pub fn reliability_gap(norm: &[f64], p: f64, sink_mask: &[bool]) -> Result<f64> {
    let mut vals: Vec<f64> = norm
        .iter()
        .zip(sink_mask)
        .filter(|(_, &sink)| !sink)
        .map(|(&v, _)| v)
        .collect();
    if vals.is_empty() {
        return Err(Error::AllSinks);
    }
    let m = ((p * vals.len() as f64).floor() as usize).max(1);
    vals.sort_by(f64::total_cmp);
    let bottom: f64 = vals[..m].iter().sum::<f64>() / m as f64;
    let top: f64 = vals[vals.len() - m..].iter().sum::<f64>() / m as f64;
    Ok(top - bottom)
}

/// Softmax over `log(prior) + beta * delta`, renormalized to sum 1. Equal
/// gaps (or beta = 0) recover the prior.
pub fn head_mix(delta: [f64; 3], prior: [f64; 3], beta: f64) -> HeadMix {
    let logits: Vec<f64> = prior
        .iter()
        .zip(delta)
        .map(|(&w0, d)| w0.ln() + beta * d)
        .collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    HeadMix {
        delta,
        prior,
        beta,
        weights: [exps[0] / sum, exps[1] / sum, exps[2] / sum],
    }
}

/// Elementwise convex combination of the three channels.
pub fn blend(norm_s: &[f64], norm_e: &[f64], norm_c: &[f64], weights: [f64; 3]) -> Vec<f64> {
    norm_s
        .iter()
        .zip(norm_e)
        .zip(norm_c)
        .map(|((&s, &e), &c)| weights[0] * s + weights[1] * e + weights[2] * c)
        .collect()
}

/// Per-token maximum across the three channels.
pub fn channel_max(norm_s: &[f64], norm_e: &[f64], norm_c: &[f64]) -> Vec<f64> {
    norm_s
        .iter()
        .zip(norm_e)
        .zip(norm_c)
        .map(|((&s, &e), &c)| s.max(e).max(c))
        .collect()
}

/// Cross-scale disagreement: population standard deviation (divide by 3) of
/// the three normalized readings at each position.
pub fn surprise(norm_s: &[f64], norm_e: &[f64], norm_c: &[f64]) -> Vec<f64> {
    norm_s
        .iter()
        .zip(norm_e)
        .zip(norm_c)
        .map(|((&s, &e), &c)| {
            let mean = (s + e + c) / 3.0;
            let var = ((s - mean).powi(2) + (e - mean).powi(2) + (c - mean).powi(2)) / 3.0;
            var.sqrt()
        })
        .collect()
}

/// Min-max normalizes surprise over non-sink positions, mean-centers, and
/// rectifies at zero. Sink positions read zero so forced-retained tokens do
/// not distort the gate statistics.
pub fn rectify_surprise(s: &[f64], sink_mask: &[bool]) -> Result<Vec<f64>> {
    let non_sink: Vec<f64> = s
        .iter()
        .zip(sink_mask)
        .filter(|(_, &sink)| !sink)
        .map(|(&v, _)| v)
        .collect();
    if non_sink.is_empty() {
        return Err(Error::AllSinks);
    }
    let u = minmax_normalize(&non_sink);
    let mean = u.iter().sum::<f64>() / u.len() as f64;
    let mut rectified = Vec::with_capacity(s.len());
    let mut it = u.iter();
    for &sink in sink_mask {
        if sink {
            rectified.push(0.0);
        } else {
            rectified.push((it.next().unwrap() - mean).max(0.0));
        }
    }
    Ok(rectified)
}

/// Logistic gate over rectified surprise: alpha = sigmoid(kappa * (s' - tau)).
pub fn gate(rectified: &[f64], tau: f64, kappa: f64) -> Vec<f64> {
    rectified
        .iter()
        .map(|&s| 1.0 / (1.0 + (-kappa * (s - tau)).exp()))
        .collect()
}

/// Routes each position between the blend and the per-token max:
/// a*(i) = (1 - alpha) * blend + alpha * win.
pub fn route(blend: &[f64], win: &[f64], alpha: &[f64]) -> Vec<f64> {
    blend
        .iter()
        .zip(win)
        .zip(alpha)
        .map(|((&b, &w), &a)| (1.0 - a) * b + a * w)
        .collect()
}

/// All routed quantities for one head, pre-pinning.
#[derive(Clone, Debug)]
pub struct RoutedScores {
    pub blend: Vec<f64>,
    pub win: Vec<f64>,
    pub surprise: Vec<f64>,
    pub rectified: Vec<f64>,
    pub gate: Vec<f64>,
    pub routed: Vec<f64>,
    pub tau: f64,
    pub kappa: f64,
}

/// Full scoring trace for one head: per-scale scores, the head mix, routed
/// quantities, and the final sink-pinned score.
#[derive(Clone, Debug)]
pub struct HeadTrace {
    pub scales: ScaleScores,
    pub mix: HeadMix,
    pub routed: RoutedScores,
    pub pinned: Vec<f64>,
}

/// Per-head router diagnostics for the `inspect` interface.
#[derive(Clone, Debug, Serialize)]
pub struct HeadDiagnostics {
    pub delta: [f64; 3],
    pub weights: [f64; 3],
    pub mean_alpha: f64,
    pub frac_alpha_gt_half: f64,
}

impl HeadTrace {
    pub fn diagnostics(&self) -> HeadDiagnostics {
        let n = self.routed.gate.len().max(1) as f64;
        let mean_alpha = self.routed.gate.iter().sum::<f64>() / n;
        let over_half = self.routed.gate.iter().filter(|&&a| a > 0.5).count();
        HeadDiagnostics {
            delta: self.mix.delta,
            weights: self.mix.weights,
            mean_alpha,
            frac_alpha_gt_half: over_half as f64 / n,
        }
    }
}

/// The full pipeline for one head: normalize, anchors, per-scale anomalies,
/// per-head min-max, reliability-gap mix, blend, surprise gate, route, and
/// sink pinning.
pub fn nestedkv_trace(keys: &KeyStream, cfg: &ScoringConfig) -> Result<HeadTrace> {
    let n = keys.n_tokens();
    let nk = normalize_keys(keys)?;
    let anchors = ContinuumAnchors::compute(&nk, cfg);
    let scales = ScaleScores::compute(&nk, &anchors, cfg.n_sink);

    // Every position pinned: nothing left for the adaptive statistics to
    // read, so the whole head is sentinel.
    if n <= cfg.n_sink {
        let zeros = vec![0.0; n];
        return Ok(HeadTrace {
            mix: head_mix([0.0; 3], cfg.prior, cfg.beta),
            routed: RoutedScores {
                blend: zeros.clone(),
                win: zeros.clone(),
                surprise: zeros.clone(),
                rectified: zeros.clone(),
                gate: zeros.clone(),
                routed: zeros,
                tau: cfg.tau,
                kappa: cfg.kappa,
            },
            pinned: vec![SINK_SENTINEL; n],
            scales,
        });
    }

    let delta = [
        reliability_gap(&scales.norm_s, cfg.gap_fraction, &scales.sink_mask)?,
        reliability_gap(&scales.norm_e, cfg.gap_fraction, &scales.sink_mask)?,
        reliability_gap(&scales.norm_c, cfg.gap_fraction, &scales.sink_mask)?,
    ];
    let mix = head_mix(delta, cfg.prior, cfg.beta);

    let blended = blend(&scales.norm_s, &scales.norm_e, &scales.norm_c, mix.weights);
    let win = channel_max(&scales.norm_s, &scales.norm_e, &scales.norm_c);
    let s = surprise(&scales.norm_s, &scales.norm_e, &scales.norm_c);
    let rectified = rectify_surprise(&s, &scales.sink_mask)?;
    let alpha = gate(&rectified, cfg.tau, cfg.kappa);
    let routed = route(&blended, &win, &alpha);

    let mut pinned = routed.clone();
    for v in &mut pinned[..cfg.n_sink.min(n)] {
        *v = SINK_SENTINEL;
    }

    Ok(HeadTrace {
        scales,
        mix,
        routed: RoutedScores {
            blend: blended,
            win,
            surprise: s,
            rectified,
            gate: alpha,
            routed,
            tau: cfg.tau,
            kappa: cfg.kappa,
        },
        pinned,
    })
}

/// Final sink-pinned score vector for one head.
pub fn nestedkv_score(keys: &KeyStream, cfg: &ScoringConfig) -> Result<Vec<f64>> {
    nestedkv_trace(keys, cfg).map(|t| t.pinned)
}

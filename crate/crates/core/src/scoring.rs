//! Per-scale cosine anomaly scores, per-head min-max normalization, and
//! sink pinning.
//!
//! An anomaly is the negative cosine between a normalized key and an anchor:
//! high means the anchor does not explain the token. Each scale is min-max
//! normalized within its head so the three channels share a [0, 1] range.

use crate::config::SINK_SENTINEL;
use crate::continuum::{ContinuumAnchors, NormalizedKeys};
use crate::opcount;

/// Raw per-scale anomalies in [-1, 1].
#[derive(Clone, Debug)]
pub struct RawAnomalies {
    pub stable: Vec<f64>,
    pub episodic: Vec<f64>,
    pub current: Vec<f64>,
}

fn neg_cosine(row: &[f32], anchor: &[f64]) -> f64 {
    let mut dot = 0.0f64;
    let mut row_sq = 0.0f64;
    let mut anchor_sq = 0.0f64;
    for (&x, &a) in row.iter().zip(anchor) {
        let x = x as f64;
        dot += x * a;
        row_sq += x * x;
        anchor_sq += a * a;
    }
    let anchor_norm = anchor_sq.sqrt();
    // A vanishing anchor carries no directional evidence: cosine reads 0.
    if anchor_norm <= 1e-12 {
        return 0.0;
    }
    -(dot / (row_sq.sqrt() * anchor_norm))
}

/// One pass per scale over the stream: score(i) = -cos(k_i, anchor_x(i)).
pub fn per_scale_anomalies(nk: &NormalizedKeys, anchors: &ContinuumAnchors) -> RawAnomalies {
    let n = nk.n_tokens();
    let mut stable = Vec::with_capacity(n);
    let mut episodic = Vec::with_capacity(n);
    let mut current = Vec::with_capacity(n);
    for i in 0..n {
        let row = nk.row(i);
        stable.push(neg_cosine(row, &anchors.stable));
        episodic.push(neg_cosine(row, anchors.episodic_for(i)));
        current.push(neg_cosine(row, anchors.current_for(i)));
    }
    opcount::record(3 * (n * nk.head_dim()) as u64);
    RawAnomalies {
        stable,
        episodic,
        current,
    }
}

/// Affine map of a vector onto [0, 1]. A (near-)constant vector maps to a
/// uniform 0.5 so downstream reliability gaps read zero and the router falls
/// back to its prior.
pub fn minmax_normalize(raw: &[f64]) -> Vec<f64> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &x in raw {
        lo = lo.min(x);
        hi = hi.max(x);
    }
    let range = hi - lo;
    if raw.is_empty() || range <= 1e-12 {
        return vec![0.5; raw.len()];
    }
    raw.iter().map(|&x| (x - lo) / range).collect()
}

/// Boolean mask over the first min(n_sink, N) positions.
pub fn sink_mask(n_tokens: usize, n_sink: usize) -> Vec<bool> {
    (0..n_tokens).map(|i| i < n_sink).collect()
}

/// Overwrites the leading min(n_sink, N) scores with the sink sentinel.
/// Applied to the final routed score only, never to the per-scale channels
/// that feed blending statistics.
pub fn pin_sinks(scores: &[f64], n_sink: usize) -> (Vec<f64>, Vec<bool>) {
    let mut pinned = scores.to_vec();
    let k = n_sink.min(pinned.len());
    for s in &mut pinned[..k] {
        *s = SINK_SENTINEL;
    }
    (pinned, sink_mask(scores.len(), n_sink))
}

/// Raw and normalized anomalies for all three scales, plus the sink mask.
#[derive(Clone, Debug)]
pub struct ScaleScores {
    pub raw_s: Vec<f64>,
    pub raw_e: Vec<f64>,
    pub raw_c: Vec<f64>,
    pub norm_s: Vec<f64>,
    pub norm_e: Vec<f64>,
    pub norm_c: Vec<f64>,
    pub sink_mask: Vec<bool>,
}

impl ScaleScores {
    pub fn compute(nk: &NormalizedKeys, anchors: &ContinuumAnchors, n_sink: usize) -> Self {
        let raw = per_scale_anomalies(nk, anchors);
        let norm_s = minmax_normalize(&raw.stable);
        let norm_e = minmax_normalize(&raw.episodic);
        let norm_c = minmax_normalize(&raw.current);
        Self {
            raw_s: raw.stable,
            raw_e: raw.episodic,
            raw_c: raw.current,
            norm_s,
            norm_e,
            norm_c,
            sink_mask: sink_mask(nk.n_tokens(), n_sink),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ScoringConfig;
    use crate::continuum::normalize_keys;
    use crate::tensor::KeyStream;
    use proptest::prelude::*;

    #[test]
    fn aligned_key_scores_minus_one() {
        let ks = KeyStream::new(2, 2, vec![1.0, 0.0, 1.0, 0.0]);
        let nk = normalize_keys(&ks).unwrap();
        let anchors = ContinuumAnchors::compute(&nk, &ScoringConfig::default());
        let raw = per_scale_anomalies(&nk, &anchors);
        assert!((raw.stable[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_key_scores_zero() {
        let row = [1.0f32, 0.0];
        assert_eq!(neg_cosine(&row, &[0.0, 2.5]), 0.0);
    }

    #[test]
    fn hand_computed_cosine() {
        // k = (1, 0), anchor = (0.5, 0.5): cos = 0.7071, score = -0.7071.
        let row = [1.0f32, 0.0];
        let got = neg_cosine(&row, &[0.5, 0.5]);
        assert!(
            (got + std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9,
            "got {got}"
        );
    }

    #[test]
    fn zero_anchor_reads_zero() {
        let row = [0.6f32, 0.8];
        assert_eq!(neg_cosine(&row, &[0.0, 0.0]), 0.0);
    }

    #[test]
    fn minmax_examples() {
        assert_eq!(minmax_normalize(&[-1.0, 0.0, 1.0]), vec![0.0, 0.5, 1.0]);
        assert_eq!(minmax_normalize(&[0.3, 0.3]), vec![0.5, 0.5]);
        let got = minmax_normalize(&[2.0, 4.0, 6.0, 8.0]);
        let want = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn pin_first_four() {
        let (pinned, mask) = pin_sinks(&[0.5; 10], 4);
        assert_eq!(&pinned[..4], &[SINK_SENTINEL; 4]);
        assert_eq!(&pinned[4..], &[0.5; 6]);
        assert_eq!(mask.iter().filter(|&&m| m).count(), 4);
    }

    #[test]
    fn pin_clamps_to_stream_length() {
        let (pinned, mask) = pin_sinks(&[0.1, 0.2], 4);
        assert_eq!(pinned, vec![SINK_SENTINEL, SINK_SENTINEL]);
        assert_eq!(mask, vec![true, true]);
    }

    #[test]
    fn pin_zero_is_identity() {
        let (pinned, mask) = pin_sinks(&[0.1, 0.2], 0);
        assert_eq!(pinned, vec![0.1, 0.2]);
        assert!(mask.iter().all(|&m| !m));
    }

    #[test]
    fn scoring_work_is_one_pass_per_scale() {
        // The kernels tally how many elements each pass touches; the whole
        // pipeline must stay within a small constant times N*d and scale
        // linearly in N, ruling out per-window or per-block rescans.
        use crate::opcount;
        use crate::router::nestedkv_score;

        let cfg = ScoringConfig::default();
        let d = 16usize;
        let work = |n: usize| -> u64 {
            let data: Vec<f32> = (0..n * d)
                .map(|k| ((k as f32 * 0.137).sin() + 1.4) * 0.3)
                .collect();
            let ks = KeyStream::new(n, d, data);
            opcount::take();
            nestedkv_score(&ks, &cfg).unwrap();
            opcount::take()
        };
        let c1 = work(512);
        let c2 = work(2048);
        assert!(c1 <= (16 * 512 * d) as u64, "512-token work {c1} too high");
        assert!(
            c2 <= (16 * 2048 * d) as u64,
            "2048-token work {c2} too high"
        );
        assert!(c2 <= 5 * c1, "work did not scale linearly: {c1} -> {c2}");
    }

    proptest! {
        // Min-max normalization preserves order exactly.
        #[test]
        fn minmax_is_monotone(xs in proptest::collection::vec(-1.0f64..1.0, 2..64)) {
            let norm = minmax_normalize(&xs);
            for i in 0..xs.len() {
                for j in 0..xs.len() {
                    if xs[i] <= xs[j] {
                        prop_assert!(norm[i] <= norm[j]);
                    }
                }
            }
        }

        // Scaling one key by a power of two leaves every raw score bitwise
        // unchanged: normalization absorbs the scale exactly.
        #[test]
        fn per_key_scaling_invariance(
            seed_vals in proptest::collection::vec(-1.0f32..1.0, 8 * 3),
            idx in 0usize..8,
            exp in -4i32..5,
        ) {
            let mut vals = seed_vals;
            for v in &mut vals {
                if v.abs() < 1e-3 {
                    *v = 0.25;
                }
            }
            let ks = KeyStream::new(8, 3, vals.clone());
            let nk = normalize_keys(&ks).unwrap();
            let cfg = ScoringConfig::default();
            let anchors = ContinuumAnchors::compute(&nk, &cfg);
            let raw = per_scale_anomalies(&nk, &anchors);

            let c = (2.0f32).powi(exp);
            for j in 0..3 {
                vals[idx * 3 + j] *= c;
            }
            let ks2 = KeyStream::new(8, 3, vals);
            let nk2 = normalize_keys(&ks2).unwrap();
            let anchors2 = ContinuumAnchors::compute(&nk2, &cfg);
            let raw2 = per_scale_anomalies(&nk2, &anchors2);

            prop_assert_eq!(raw.stable, raw2.stable);
            prop_assert_eq!(raw.episodic, raw2.episodic);
            prop_assert_eq!(raw.current, raw2.current);
        }
    }
}

//! Cross-module properties that need the shared stream/rotation helpers.

mod common;

use nestedkv_core::allocator::{competitive_allocate, topb, BudgetPlan};
use nestedkv_core::baselines::single_anchor_score;
use nestedkv_core::config::ScoringConfig;
use nestedkv_core::continuum::{normalize_keys, ContinuumAnchors};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn apply(q: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    q.iter()
        .map(|row| row.iter().zip(v).map(|(&a, &x)| a * x).sum())
        .collect()
}

// anchors(Q . keys) = Q . anchors(keys) for orthogonal Q.
#[test]
fn anchors_are_rotation_equivariant() {
    let cfg = ScoringConfig::default();
    for case in 0..8u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(900 + case);
        let n = rng.gen_range(16..=384);
        let d = rng.gen_range(3..=32);
        let ks = common::seeded_stream(1900 + case, n, d);
        let q = common::random_orthogonal(2900 + case, d);
        let rotated = common::rotate_stream(&ks, &q);

        let base = ContinuumAnchors::compute(&normalize_keys(&ks).unwrap(), &cfg);
        let rot = ContinuumAnchors::compute(&normalize_keys(&rotated).unwrap(), &cfg);

        let check = |want: &[f64], got: &[f64], what: &str| {
            for (w, g) in apply(&q, want).iter().zip(got) {
                assert!(
                    (w - g).abs() <= 1e-5,
                    "{what} off by {} (case {case})",
                    (w - g).abs()
                );
            }
        };
        check(&base.stable, &rot.stable, "stable anchor");
        for i in 0..n {
            check(base.episodic_for(i), rot.episodic_for(i), "episodic anchor");
            check(base.current_for(i), rot.current_for(i), "current anchor");
        }
    }
}

// Permuting head order permutes the competitive allocation with it, on
// tie-free inputs.
#[test]
fn competitive_allocation_commutes_with_head_permutation() {
    for case in 0..12u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(3100 + case);
        let heads = rng.gen_range(2..=5);
        let n = rng.gen_range(8..=64);
        let scores: Vec<Vec<f64>> = (0..heads)
            .map(|_| (0..n).map(|_| rng.gen::<f64>()).collect())
            .collect();
        let plan = BudgetPlan::new(0.5, n, heads, 0.20).unwrap();
        let base = competitive_allocate(&scores, &plan);

        let mut perm: Vec<usize> = (0..heads).collect();
        // Fisher-Yates with the same rng keeps the case seeded.
        for i in (1..heads).rev() {
            let j = rng.gen_range(0..=i);
            perm.swap(i, j);
        }
        let permuted: Vec<Vec<f64>> = perm.iter().map(|&h| scores[h].clone()).collect();
        let out = competitive_allocate(&permuted, &plan);
        for (slot, &h) in perm.iter().enumerate() {
            assert_eq!(
                out.heads[slot], base.heads[h],
                "case {case}: head {h} changed under permutation"
            );
        }
    }
}

// The (single_anchor, uniform) ablation variant retains exactly
// topb(pinned norm_s, B), checked against a direct local computation.
#[test]
fn single_anchor_uniform_matches_direct_ranking() {
    for case in 0..6u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(4100 + case);
        let n = rng.gen_range(16..=256);
        let d = rng.gen_range(3..=24);
        let ks = common::seeded_stream(5100 + case, n, d);
        let n_sink = 4usize;
        let budget = n / 2;

        let engine_side = topb(&single_anchor_score(&ks, n_sink).unwrap(), budget);

        // Direct replay: mean of unit rows, negative cosine, min-max, pin,
        // then a selection sort for the top-B indices.
        let rows = common::naive::normalize(&ks);
        let mu = common::naive::stable_mean(&rows);
        let mu_norm = mu.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut raw: Vec<f64> = rows
            .iter()
            .map(|r| {
                let dot: f64 = r.iter().zip(&mu).map(|(a, b)| a * b).sum();
                let rn = r.iter().map(|x| x * x).sum::<f64>().sqrt();
                if mu_norm <= 1e-12 {
                    0.0
                } else {
                    -(dot / (rn * mu_norm))
                }
            })
            .collect();
        let (lo, hi) = raw
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| {
                (l.min(x), h.max(x))
            });
        if hi - lo > 1e-12 {
            for x in &mut raw {
                *x = (*x - lo) / (hi - lo);
            }
        } else {
            raw = vec![0.5; n];
        }
        for x in &mut raw[..n_sink.min(n)] {
            *x = 2.0;
        }
        let mut picked: Vec<usize> = Vec::new();
        let mut taken = vec![false; n];
        for _ in 0..budget.min(n) {
            let mut best = usize::MAX;
            for i in 0..n {
                if !taken[i] && (best == usize::MAX || raw[i] > raw[best]) {
                    best = i;
                }
            }
            taken[best] = true;
            picked.push(best);
        }
        picked.sort_unstable();

        assert_eq!(engine_side, picked, "case {case} (n={n}, d={d})");
    }
}

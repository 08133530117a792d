//! Turns scores into retained sets: per-head TopB selection, layer-wide
//! head competition with a per-head safeguard reserve, and the end-to-end
//! compression operator over a dumped cache.

use rayon::prelude::*;
use serde::Serialize;

use crate::baselines::{self, Allocator, Method, Scorer};
use crate::config::EngineConfig;
use crate::error::{Error, Result};
use crate::router;
use crate::tensor::{
    read_layer_keys, CacheManifest, HeadRetained, KeyStream, LayerRetained, RetainedSet,
};

/// Budgets induced by an eviction ratio over one layer of H heads and N
/// tokens: per-head budget B = floor((1-r)*N), layer budget H*B, and the
/// safeguard reserve floor(alpha_s * B).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct BudgetPlan {
    pub ratio: f64,
    pub n_tokens: usize,
    pub n_heads: usize,
    pub per_head: usize,
    pub layer: usize,
    pub reserve: usize,
}

impl BudgetPlan {
    pub fn new(ratio: f64, n_tokens: usize, n_heads: usize, safeguard: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&ratio) {
            return Err(Error::InvalidRatio(ratio));
        }
        let per_head = ((1.0 - ratio) * n_tokens as f64).floor() as usize;
        let reserve = (safeguard * per_head as f64).floor() as usize;
        Ok(Self {
            ratio,
            n_tokens,
            n_heads,
            per_head,
            layer: per_head * n_heads,
            reserve,
        })
    }
}

/// The min(B, N) highest-scoring indices, ties broken toward the lower
/// index, returned sorted ascending.
pub fn topb(scores: &[f64], budget: usize) -> Vec<usize> {
    let keep = budget.min(scores.len());
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut kept = order[..keep].to_vec();
    kept.sort_unstable();
    kept
}

/// Every head independently retains its own top-B positions.
pub fn uniform_allocate(scores: &[Vec<f64>], plan: &BudgetPlan) -> LayerRetained {
    LayerRetained {
        heads: scores
            .iter()
            .map(|s| HeadRetained::new(topb(s, plan.per_head)))
            .collect(),
    }
}

/// Two-phase head competition. Phase 1: each head reserves its own top-m
/// indices (m = the safeguard reserve; sentinel-pinned sinks occupy reserve
/// slots first since they carry the largest score). Phase 2: every remaining
/// (head, index) pair competes by score for the B_l - H*m leftover slots,
/// ties broken by lower head index, then lower position index.
pub fn competitive_allocate(scores: &[Vec<f64>], plan: &BudgetPlan) -> LayerRetained {
    let n_heads = scores.len();
    let n = plan.n_tokens;
    if plan.layer >= n_heads * n {
        return LayerRetained {
            heads: scores
                .iter()
                .map(|_| HeadRetained::new((0..n).collect()))
                .collect(),
        };
    }

    let mut kept: Vec<Vec<usize>> = vec![Vec::new(); n_heads];
    let mut taken: Vec<Vec<bool>> = vec![vec![false; n]; n_heads];

    for (h, head_scores) in scores.iter().enumerate() {
        for &i in &topb(head_scores, plan.reserve) {
            kept[h].push(i);
            taken[h][i] = true;
        }
    }

    let mut pool: Vec<(usize, usize)> = Vec::with_capacity(n_heads * n - n_heads * plan.reserve);
    for (h, head_taken) in taken.iter().enumerate() {
        for (i, &t) in head_taken.iter().enumerate() {
            if !t {
                pool.push((h, i));
            }
        }
    }
    pool.sort_unstable_by(|&(ha, ia), &(hb, ib)| {
        scores[hb][ib]
            .total_cmp(&scores[ha][ia])
            .then(ha.cmp(&hb))
            .then(ia.cmp(&ib))
    });

    let open = plan.layer - n_heads * plan.reserve.min(n);
    for &(h, i) in pool.iter().take(open) {
        kept[h].push(i);
    }

    LayerRetained {
        heads: kept
            .into_iter()
            .map(|mut indices| {
                indices.sort_unstable();
                HeadRetained::new(indices)
            })
            .collect(),
    }
}

fn head_scores(
    method: Method,
    keys: &KeyStream,
    cfg: &EngineConfig,
    seed: u64,
    layer: usize,
    head: usize,
) -> Result<Vec<f64>> {
    match method.scorer() {
        Scorer::ContinuumRouted => router::nestedkv_score(keys, &cfg.scoring),
        Scorer::SingleAnchor => baselines::single_anchor_score(keys, cfg.scoring.n_sink),
        Scorer::Random => Ok(baselines::random_score(
            keys.n_tokens(),
            cfg.scoring.n_sink,
            mix_seed(seed, layer, head),
        )),
        Scorer::Recency => unreachable!("recency has no score vector"),
    }
}

fn mix_seed(seed: u64, layer: usize, head: usize) -> u64 {
    // splitmix64 finalizer over (seed, layer, head)
    let mut z = seed
        .wrapping_add((layer as u64).wrapping_mul(0x9e3779b97f4a7c15))
        .wrapping_add((head as u64).wrapping_mul(0xbf58476d1ce4e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Scores and allocates one layer. Heads are scored in parallel; allocation
/// is a single deterministic reduction.
pub fn compress_layer(
    heads: &[KeyStream],
    method: Method,
    ratio: f64,
    cfg: &EngineConfig,
    seed: u64,
    layer: usize,
) -> Result<LayerRetained> {
    let n = heads.first().map(|h| h.n_tokens()).unwrap_or(0);
    let plan = BudgetPlan::new(ratio, n, heads.len(), cfg.alloc.safeguard)?;

    if method.scorer() == Scorer::Recency {
        return Ok(LayerRetained {
            heads: heads
                .iter()
                .map(|h| {
                    HeadRetained::new(baselines::recency_retain(
                        h.n_tokens(),
                        cfg.scoring.n_sink,
                        plan.per_head,
                    ))
                })
                .collect(),
        });
    }

    let scores: Vec<Vec<f64>> = heads
        .par_iter()
        .enumerate()
        .map(|(h, ks)| head_scores(method, ks, cfg, seed, layer, h))
        .collect::<Result<_>>()?;

    Ok(match method.allocator() {
        Allocator::Competitive => competitive_allocate(&scores, &plan),
        Allocator::Uniform => uniform_allocate(&scores, &plan),
    })
}

/// Compresses every layer of a dumped cache: score each head with the
/// method's scorer, allocate with its allocator, and collect retained sets.
pub fn compress(
    manifest: &CacheManifest,
    method: Method,
    ratio: f64,
    cfg: &EngineConfig,
    seed: u64,
) -> Result<RetainedSet> {
    cfg.validate()?;
    let mut layers = Vec::with_capacity(manifest.n_layers);
    for layer in 0..manifest.n_layers {
        let heads = read_layer_keys(manifest, layer)?;
        layers.push(compress_layer(&heads, method, ratio, cfg, seed, layer)?);
    }
    Ok(RetainedSet { layers })
}

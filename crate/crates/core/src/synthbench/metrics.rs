//! Evaluation metrics: needle recall and attention-mass retention.

use crate::error::{Error, Result};
use crate::tensor::KeyStream;

/// Fraction of planted positions surviving in the retained set.
pub fn needle_recall(retained: &[usize], planted: &[usize]) -> Result<f64> {
    if planted.is_empty() {
        return Err(Error::EmptyPlanted);
    }
    let hits = planted
        .iter()
        .filter(|p| retained.binary_search(p).is_ok())
        .count();
    Ok(hits as f64 / planted.len() as f64)
}

/// The last min(count, N) keys of the stream, unit-normalized, as probe
/// queries for mass retention.
pub fn default_queries(keys: &KeyStream, count: usize) -> Vec<Vec<f64>> {
    let n = keys.n_tokens();
    let take = count.min(n);
    (n - take..n)
        .map(|i| {
            let row: Vec<f64> = keys.row(i).iter().map(|&x| x as f64).collect();
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm <= 1e-12 {
                row
            } else {
                row.into_iter().map(|x| x / norm).collect()
            }
        })
        .collect()
}

/// Share of full-cache softmax attention probability covered by the retained
/// positions, averaged over the probe queries. The softmax runs over all N
/// positions with logits q . k_i / sqrt(d).
pub fn mass_retention(keys: &KeyStream, queries: &[Vec<f64>], retained: &[usize]) -> f64 {
    assert!(
        !queries.is_empty(),
        "mass retention needs at least one query"
    );
    let n = keys.n_tokens();
    let scale = 1.0 / (keys.head_dim() as f64).sqrt();
    let mut total = 0.0;
    for q in queries {
        let logits: Vec<f64> = (0..n)
            .map(|i| {
                keys.row(i)
                    .iter()
                    .zip(q)
                    .map(|(&k, &qv)| k as f64 * qv)
                    .sum::<f64>()
                    * scale
            })
            .collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
        let z: f64 = weights.iter().sum();
        let kept: f64 = retained.iter().map(|&i| weights[i]).sum();
        total += kept / z;
    }
    total / queries.len() as f64
}

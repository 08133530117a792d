//! Shared helpers for the integration suites: seeded streams, random
//! orthogonal maps, and a straight-line naive reimplementation of the
//! scoring pipeline used as an independent oracle.

// Each integration target compiles its own copy and uses a different subset.
#![allow(dead_code)]

use nestedkv_core::tensor::KeyStream;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    let u1 = 1.0 - rng.gen::<f64>();
    let u2 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Random stream with varied row magnitudes; every row has a healthy norm.
pub fn seeded_stream(seed: u64, n: usize, d: usize) -> KeyStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        let scale = (rng.gen::<f64>() * 2.0 - 1.0).exp();
        for _ in 0..d {
            data.push((gauss(&mut rng) * scale) as f32);
        }
    }
    KeyStream::new(n, d, data)
}

/// Random orthogonal d x d matrix (Gram-Schmidt over Gaussian draws),
/// row-major.
pub fn random_orthogonal(seed: u64, d: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(d);
    while rows.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| gauss(&mut rng)).collect();
        for u in &rows {
            let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            for (x, &y) in v.iter_mut().zip(u) {
                *x -= dot * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            for x in &mut v {
                *x /= norm;
            }
            rows.push(v);
        }
    }
    rows
}

/// Applies an orthogonal map to every key row.
pub fn rotate_stream(ks: &KeyStream, q: &[Vec<f64>]) -> KeyStream {
    let (n, d) = (ks.n_tokens(), ks.head_dim());
    let mut data = Vec::with_capacity(n * d);
    for i in 0..n {
        let row = ks.row(i);
        for q_row in q {
            let y: f64 = q_row.iter().zip(row).map(|(&a, &x)| a * x as f64).sum();
            data.push(y as f32);
        }
    }
    KeyStream::new(n, d, data)
}

/// Straight-line replay of the scoring equations with naive loops: direct
/// means, direct window sums, whole-vector sorts. No code shared with the
/// engine's pipeline.
pub mod naive {
    use nestedkv_core::tensor::KeyStream;

    pub struct NaiveConfig {
        pub window: usize,
        pub n_sink: usize,
        pub prior: [f64; 3],
        pub beta: f64,
        pub tau: f64,
        pub kappa: f64,
        pub gap_fraction: f64,
        pub block_divisor: usize,
        pub block_min: usize,
        pub block_max: usize,
    }

    impl Default for NaiveConfig {
        fn default() -> Self {
            Self {
                window: 64,
                n_sink: 4,
                prior: [0.4, 0.4, 0.2],
                beta: 3.0,
                tau: 0.60,
                kappa: 10.0,
                gap_fraction: 0.10,
                block_divisor: 32,
                block_min: 128,
                block_max: 256,
            }
        }
    }

    /// Rows scaled to unit norm, quantized to f32 like the stored key dtype.
    pub fn normalize(ks: &KeyStream) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(ks.n_tokens());
        for i in 0..ks.n_tokens() {
            let row = ks.row(i);
            let mut sq = 0.0f64;
            for &x in row {
                sq += x as f64 * x as f64;
            }
            let norm = sq.sqrt();
            out.push(
                row.iter()
                    .map(|&x| (x as f64 / norm) as f32 as f64)
                    .collect(),
            );
        }
        out
    }

    fn mean_rows(rows: &[Vec<f64>], lo: usize, hi: usize) -> Vec<f64> {
        let d = rows[0].len();
        let mut m = vec![0.0; d];
        for row in &rows[lo..hi] {
            for (acc, &x) in m.iter_mut().zip(row) {
                *acc += x;
            }
        }
        for acc in &mut m {
            *acc /= (hi - lo) as f64;
        }
        m
    }

    pub fn stable_mean(rows: &[Vec<f64>]) -> Vec<f64> {
        mean_rows(rows, 0, rows.len())
    }

    pub fn block_size(n: usize, cfg: &NaiveConfig) -> usize {
        let raw = n / cfg.block_divisor;
        raw.max(cfg.block_min).min(cfg.block_max)
    }

    /// Episodic mean for the block containing position i.
    pub fn episodic_mean(rows: &[Vec<f64>], i: usize, cfg: &NaiveConfig) -> Vec<f64> {
        let b = block_size(rows.len(), cfg);
        let lo = (i / b) * b;
        let hi = (lo + b).min(rows.len());
        mean_rows(rows, lo, hi)
    }

    /// Window mean ending at i, directly summed.
    pub fn window_mean(rows: &[Vec<f64>], i: usize, window: usize) -> Vec<f64> {
        let lo = (i + 1).saturating_sub(window);
        mean_rows(rows, lo, i + 1)
    }

    fn neg_cos(a: &[f64], b: &[f64]) -> f64 {
        let mut dot = 0.0;
        let mut na = 0.0;
        let mut nb = 0.0;
        for (&x, &y) in a.iter().zip(b) {
            dot += x * y;
            na += x * x;
            nb += y * y;
        }
        if nb.sqrt() <= 1e-12 {
            return 0.0;
        }
        -(dot / (na.sqrt() * nb.sqrt()))
    }

    fn minmax(xs: &[f64]) -> Vec<f64> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &x in xs {
            if x < lo {
                lo = x;
            }
            if x > hi {
                hi = x;
            }
        }
        if xs.is_empty() || hi - lo <= 1e-12 {
            return vec![0.5; xs.len()];
        }
        xs.iter().map(|&x| (x - lo) / (hi - lo)).collect()
    }

    fn gap(norm: &[f64], n_sink: usize, p: f64) -> f64 {
        let mut vals: Vec<f64> = norm.iter().skip(n_sink).copied().collect();
        vals.sort_by(f64::total_cmp);
        let m = ((p * vals.len() as f64).floor() as usize).max(1);
        let bot: f64 = vals[..m].iter().sum::<f64>() / m as f64;
        let top: f64 = vals[vals.len() - m..].iter().sum::<f64>() / m as f64;
        top - bot
    }

    /// The full scoring chain, including sink pinning at 2.0.
    pub fn score(ks: &KeyStream, cfg: &NaiveConfig) -> Vec<f64> {
        let n = ks.n_tokens();
        let rows = normalize(ks);
        let n_sink = cfg.n_sink.min(n);
        if n <= cfg.n_sink {
            return vec![2.0; n];
        }

        let mu_s = stable_mean(&rows);
        let mut raw_s = Vec::with_capacity(n);
        let mut raw_e = Vec::with_capacity(n);
        let mut raw_c = Vec::with_capacity(n);
        for i in 0..n {
            raw_s.push(neg_cos(&rows[i], &mu_s));
            raw_e.push(neg_cos(&rows[i], &episodic_mean(&rows, i, cfg)));
            raw_c.push(neg_cos(&rows[i], &window_mean(&rows, i, cfg.window)));
        }
        let ns = minmax(&raw_s);
        let ne = minmax(&raw_e);
        let nc = minmax(&raw_c);

        let delta = [
            gap(&ns, n_sink, cfg.gap_fraction),
            gap(&ne, n_sink, cfg.gap_fraction),
            gap(&nc, n_sink, cfg.gap_fraction),
        ];
        let mut w = [0.0f64; 3];
        let mut z = 0.0;
        for k in 0..3 {
            w[k] = (cfg.prior[k].ln() + cfg.beta * delta[k]).exp();
            z += w[k];
        }
        for wk in &mut w {
            *wk /= z;
        }

        let mut surprise = Vec::with_capacity(n);
        for i in 0..n {
            let mean = (ns[i] + ne[i] + nc[i]) / 3.0;
            let var =
                ((ns[i] - mean).powi(2) + (ne[i] - mean).powi(2) + (nc[i] - mean).powi(2)) / 3.0;
            surprise.push(var.sqrt());
        }
        let u = minmax(&surprise[n_sink..]);
        let u_mean = u.iter().sum::<f64>() / u.len() as f64;

        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            if i < n_sink {
                out.push(2.0);
                continue;
            }
            let rectified = (u[i - n_sink] - u_mean).max(0.0);
            let alpha = 1.0 / (1.0 + (-cfg.kappa * (rectified - cfg.tau)).exp());
            let blend = w[0] * ns[i] + w[1] * ne[i] + w[2] * nc[i];
            let win = ns[i].max(ne[i]).max(nc[i]);
            out.push((1.0 - alpha) * blend + alpha * win);
        }
        out
    }
}

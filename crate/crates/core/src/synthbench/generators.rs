//! Stream generators. Each one builds unit-norm key rows with needles
//! planted off the sink prefix, then checks its own separation predicate on
//! the emitted rows; on violation it regenerates with a fresh sub-seed, and
//! errors after 16 attempts.
//!
//! The verification code here is deliberately naive (direct means, direct
//! window sums) and local to this module, so the predicate stays independent
//! of the scoring pipeline it is used to judge.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::BlockSchedule;
use crate::continuum::block_partition;
use crate::error::{Error, Result};
use crate::tensor::KeyStream;

use super::{GeneratorKind, NeedlePlacement, SynthSpec};

const MAX_ATTEMPTS: usize = 16;
/// Window length assumed by the current-needle construction and predicate.
const WINDOW: usize = 64;

/// A generated stream: one KeyStream per head plus the planted positions
/// (shared across heads, sorted ascending).
#[derive(Clone, Debug)]
pub struct SynthStream {
    pub heads: Vec<KeyStream>,
    pub planted: Vec<usize>,
}

pub fn generate(spec: &SynthSpec) -> Result<SynthStream> {
    match spec.kind {
        GeneratorKind::GlobalNeedle => gen_global_needle(spec),
        GeneratorKind::EpisodicNeedle => gen_episodic_needle(spec),
        GeneratorKind::CurrentNeedle => gen_current_needle(spec),
        GeneratorKind::UniformNoise => gen_uniform_noise(spec),
    }
}

// ---- seeded randomness -------------------------------------------------

fn mix(seed: u64, salt: u64, attempt: usize, head: usize) -> u64 {
    let mut z = seed
        .wrapping_add(salt.wrapping_mul(0x9e3779b97f4a7c15))
        .wrapping_add((attempt as u64).wrapping_mul(0xbf58476d1ce4e5b9))
        .wrapping_add((head as u64).wrapping_mul(0x94d049bb133111eb));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; u1 in (0, 1] keeps the log finite.
    let u1 = 1.0 - rng.gen::<f64>();
    let u2 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn gauss_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| gauss(rng)).collect()
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in &mut v {
        *x /= norm;
    }
    v
}

/// `count` random orthonormal d-vectors (Gram-Schmidt over fresh Gaussians).
fn orthonormal_set(rng: &mut ChaCha8Rng, d: usize, count: usize) -> Vec<Vec<f64>> {
    assert!(
        count <= d,
        "cannot fit {count} orthonormal vectors in R^{d}"
    );
    let mut set: Vec<Vec<f64>> = Vec::with_capacity(count);
    while set.len() < count {
        let mut v = gauss_vec(rng, d);
        for u in &set {
            let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            for (x, &y) in v.iter_mut().zip(u) {
                *x -= dot * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            for x in &mut v {
                *x /= norm;
            }
            set.push(v);
        }
    }
    set
}

fn noisy_unit_row(dir: &[f64], sigma: f64, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let jittered: Vec<f64> = dir.iter().map(|&x| x + sigma * gauss(rng)).collect();
    unit(jittered).into_iter().map(|x| x as f32).collect()
}

// ---- needle placement --------------------------------------------------

fn validate_positions(positions: &[usize], lo: usize, n: usize) -> Result<Vec<usize>> {
    let mut sorted = positions.to_vec();
    sorted.sort_unstable();
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            return Err(Error::InvalidNeedle {
                pos: w[0],
                reason: "duplicate position".into(),
            });
        }
    }
    for &p in &sorted {
        if p < lo || p >= n {
            return Err(Error::InvalidNeedle {
                pos: p,
                reason: format!("outside allowed range [{lo}, {n})"),
            });
        }
    }
    Ok(sorted)
}

fn resolve_positions(spec: &SynthSpec, lo: usize, attempt: usize) -> Result<Vec<usize>> {
    match &spec.needles {
        NeedlePlacement::Positions(p) => validate_positions(p, spec.n_sink, spec.n_tokens),
        NeedlePlacement::Count(count) => {
            let span = spec.n_tokens.saturating_sub(lo);
            if span < *count {
                return Err(Error::StreamTooShort(format!(
                    "{count} needles do not fit in [{lo}, {})",
                    spec.n_tokens
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(mix(spec.seed, 0x504c414e54, attempt, 0));
            let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, span, *count)
                .into_iter()
                .map(|i| i + lo)
                .collect();
            picked.sort_unstable();
            Ok(picked)
        }
    }
}

fn is_needle(sorted: &[usize], i: usize) -> Option<usize> {
    sorted.binary_search(&i).ok()
}

// ---- local verification helpers (naive on purpose) ----------------------

fn neg_cos(row: &[f32], anchor: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut rs = 0.0;
    let mut an = 0.0;
    for (&x, &a) in row.iter().zip(anchor) {
        dot += x as f64 * a;
        rs += (x as f64) * (x as f64);
        an += a * a;
    }
    if an.sqrt() <= 1e-12 {
        return 0.0;
    }
    -(dot / (rs.sqrt() * an.sqrt()))
}

fn mean_of(ks: &KeyStream, range: std::ops::Range<usize>) -> Vec<f64> {
    let d = ks.head_dim();
    let mut sum = vec![0.0f64; d];
    for i in range.clone() {
        for (acc, &x) in sum.iter_mut().zip(ks.row(i)) {
            *acc += x as f64;
        }
    }
    for acc in &mut sum {
        *acc /= range.len() as f64;
    }
    sum
}

fn stable_anomalies(ks: &KeyStream) -> Vec<f64> {
    let mu = mean_of(ks, 0..ks.n_tokens());
    (0..ks.n_tokens())
        .map(|i| neg_cos(ks.row(i), &mu))
        .collect()
}

fn percentile95(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let idx = ((v.len() as f64 * 0.95).ceil() as usize).clamp(1, v.len()) - 1;
    v[idx]
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

// ---- global needle -----------------------------------------------------

/// Background rows share one base direction; each needle is a distinct unit
/// direction orthogonal to the base and to the other needles. Predicate:
/// every needle has strictly lower cosine to the stream mean than any
/// background token.
pub fn gen_global_needle(spec: &SynthSpec) -> Result<SynthStream> {
    let k = spec.needle_count();
    // The construction spends k+1 orthonormal directions: one base plus one
    // per needle.
    if spec.head_dim < k + 1 {
        return Err(Error::InfeasibleDimension {
            head_dim: spec.head_dim,
            needles: k,
        });
    }
    if spec.n_tokens <= spec.n_sink {
        return Err(Error::StreamTooShort(
            "no positions left after the sink prefix".into(),
        ));
    }

    for attempt in 0..MAX_ATTEMPTS {
        let planted = resolve_positions(spec, spec.n_sink, attempt)?;
        let mut heads = Vec::with_capacity(spec.n_heads);
        let mut ok = true;
        for h in 0..spec.n_heads {
            let mut rng = ChaCha8Rng::seed_from_u64(mix(spec.seed, 0x474c4f42, attempt, h));
            let dirs = orthonormal_set(&mut rng, spec.head_dim, k + 1);
            let base = &dirs[0];
            let mut data = Vec::with_capacity(spec.n_tokens * spec.head_dim);
            for i in 0..spec.n_tokens {
                let dir = match is_needle(&planted, i) {
                    Some(j) => &dirs[1 + j],
                    None => base,
                };
                data.extend(noisy_unit_row(dir, spec.noise_sigma, &mut rng));
            }
            let ks = KeyStream::new(spec.n_tokens, spec.head_dim, data);
            if !verify_global(&ks, &planted) {
                ok = false;
                break;
            }
            heads.push(ks);
        }
        if ok {
            return Ok(SynthStream { heads, planted });
        }
    }
    Err(Error::GenerationFailed(MAX_ATTEMPTS))
}

fn verify_global(ks: &KeyStream, planted: &[usize]) -> bool {
    let mu = mean_of(ks, 0..ks.n_tokens());
    let mut max_needle_cos = f64::NEG_INFINITY;
    let mut min_bg_cos = f64::INFINITY;
    for i in 0..ks.n_tokens() {
        let cos = -neg_cos(ks.row(i), &mu);
        if is_needle(planted, i).is_some() {
            max_needle_cos = max_needle_cos.max(cos);
        } else {
            min_bg_cos = min_bg_cos.min(cos);
        }
    }
    max_needle_cos < min_bg_cos
}

// ---- episodic needle ----------------------------------------------------

/// Block bases sit on a ring around a center direction (60 degrees off it,
/// azimuths summing to zero), so the global mean stays on the center; each
/// needle tilts 50 degrees toward the center with azimuth opposite its own
/// block, making it globally below-median yet 110 degrees from its block
/// base. A handful of background outliers orthogonal to everything anchor
/// the top of every channel, so ordinary background tokens read as typical
/// at all three scales. Predicate: needle episodic anomaly above the block
/// background's 95th percentile AND needle stable anomaly below the global
/// median.
pub fn gen_episodic_needle(spec: &SynthSpec) -> Result<SynthStream> {
    let partition = block_partition(spec.n_tokens, &BlockSchedule::default());
    if partition.n_blocks() < 2 {
        return Err(Error::StreamTooShort(format!(
            "{} tokens form a single episodic block (need at least two)",
            spec.n_tokens
        )));
    }
    let n_outliers = 2
        .max(spec.n_tokens / 256)
        .min(spec.head_dim.saturating_sub(4));
    if spec.head_dim < 4 + n_outliers {
        return Err(Error::InfeasibleDimension {
            head_dim: spec.head_dim,
            needles: spec.needle_count(),
        });
    }

    let n_blocks = partition.n_blocks();
    let (cos_block, sin_block) = (0.5f64, 0.75f64.sqrt()); // blocks 60 deg off center
    let (cos_needle, sin_needle) = (50f64.to_radians().cos(), 50f64.to_radians().sin());

    for attempt in 0..MAX_ATTEMPTS {
        let planted = resolve_positions(spec, spec.n_sink, attempt)?;
        if spec.n_tokens - spec.n_sink.min(spec.n_tokens) < planted.len() + n_outliers {
            return Err(Error::StreamTooShort(format!(
                "{} needles plus {n_outliers} outliers do not fit past the sink prefix",
                planted.len()
            )));
        }
        let mut heads = Vec::with_capacity(spec.n_heads);
        let mut ok = true;
        for h in 0..spec.n_heads {
            let mut rng = ChaCha8Rng::seed_from_u64(mix(spec.seed, 0x45504953, attempt, h));
            let dirs = orthonormal_set(&mut rng, spec.head_dim, 3 + n_outliers);
            let (center, u, v) = (&dirs[0], &dirs[1], &dirs[2]);
            let azimuth = |block: usize| -> (f64, f64) {
                let phi = std::f64::consts::TAU * block as f64 / n_blocks as f64;
                (phi.cos(), phi.sin())
            };
            let ring_dir = |block: usize, radial: f64, tangent: f64| -> Vec<f64> {
                let (cp, sp) = azimuth(block);
                center
                    .iter()
                    .zip(u)
                    .zip(v)
                    .map(|((&c, &ux), &vx)| radial * c + tangent * (cp * ux + sp * vx))
                    .collect()
            };

            // Outliers at seeded non-needle, non-sink positions.
            let mut outlier_at = vec![usize::MAX; spec.n_tokens];
            let mut placed = 0usize;
            while placed < n_outliers {
                let pos = spec.n_sink + (rng.gen::<u64>() as usize) % (spec.n_tokens - spec.n_sink);
                if is_needle(&planted, pos).is_none() && outlier_at[pos] == usize::MAX {
                    outlier_at[pos] = placed;
                    placed += 1;
                }
            }

            let mut data = Vec::with_capacity(spec.n_tokens * spec.head_dim);
            for i in 0..spec.n_tokens {
                let block = partition.block_of(i);
                let dir = if is_needle(&planted, i).is_some() {
                    ring_dir(block, cos_needle, -sin_needle)
                } else if outlier_at[i] != usize::MAX {
                    dirs[3 + outlier_at[i]].clone()
                } else {
                    ring_dir(block, cos_block, sin_block)
                };
                data.extend(noisy_unit_row(&dir, spec.noise_sigma, &mut rng));
            }
            let ks = KeyStream::new(spec.n_tokens, spec.head_dim, data);
            if !verify_episodic(&ks, &partition, &planted) {
                ok = false;
                break;
            }
            heads.push(ks);
        }
        if ok {
            return Ok(SynthStream { heads, planted });
        }
    }
    Err(Error::GenerationFailed(MAX_ATTEMPTS))
}

fn verify_episodic(
    ks: &KeyStream,
    partition: &crate::continuum::BlockPartition,
    planted: &[usize],
) -> bool {
    let a_s = stable_anomalies(ks);
    let global_median = median(&a_s);
    for &q in planted {
        let range = partition.bounds()[partition.block_of(q)].clone();
        let block_mean = mean_of(ks, range.clone());
        let mut bg = Vec::with_capacity(range.len());
        for i in range {
            if is_needle(planted, i).is_none() {
                bg.push(neg_cos(ks.row(i), &block_mean));
            }
        }
        if bg.is_empty() {
            return false;
        }
        let needle_ae = neg_cos(ks.row(q), &block_mean);
        if !(needle_ae > percentile95(&bg) && a_s[q] < global_median) {
            return false;
        }
    }
    true
}

// ---- current needle -----------------------------------------------------

/// The stream direction drifts slowly along a seeded great circle, sweeping
/// `drift * pi` radians over the stream; each needle is the stream mean
/// projected off the local drift direction, so it deviates sharply from its
/// window while staying near the global mean. Predicate: needle current
/// anomaly above the background 95th percentile AND (when the stream
/// actually drifts) needle stable anomaly below the global median. At drift
/// 0 the projection degenerates and the construction falls back to a
/// direction orthogonal to everything, behaving like a global needle.
pub fn gen_current_needle(spec: &SynthSpec) -> Result<SynthStream> {
    let n = spec.n_tokens;
    if n <= WINDOW {
        return Err(Error::StreamTooShort(format!(
            "{n} tokens <= current window {WINDOW}"
        )));
    }
    if spec.head_dim < 2 {
        return Err(Error::InfeasibleDimension {
            head_dim: spec.head_dim,
            needles: spec.needle_count(),
        });
    }

    // Sampled needles avoid the middle of the sweep, where the local drift
    // direction passes through the global mean and no position can be both
    // globally typical and locally anomalous. Explicit positions are taken
    // as given.
    let allowed = current_slots(spec);

    for attempt in 0..MAX_ATTEMPTS {
        let planted = match &spec.needles {
            NeedlePlacement::Positions(p) => validate_positions(p, spec.n_sink, n)?,
            NeedlePlacement::Count(count) => {
                if allowed.len() < *count {
                    return Err(Error::StreamTooShort(format!(
                        "{count} needles do not fit in the {} usable positions",
                        allowed.len()
                    )));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(mix(spec.seed, 0x504c414e54, attempt, 0));
                let mut picked: Vec<usize> =
                    rand::seq::index::sample(&mut rng, allowed.len(), *count)
                        .into_iter()
                        .map(|i| allowed[i])
                        .collect();
                picked.sort_unstable();
                picked
            }
        };

        let mut heads = Vec::with_capacity(spec.n_heads);
        let mut ok = true;
        for h in 0..spec.n_heads {
            let mut rng = ChaCha8Rng::seed_from_u64(mix(spec.seed, 0x43555252, attempt, h));
            let d = spec.head_dim;
            let plane = orthonormal_set(&mut rng, d, 2);
            let step = spec.drift * std::f64::consts::PI / (n - 1) as f64;
            let track: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    let phi = step * i as f64;
                    plane[0]
                        .iter()
                        .zip(&plane[1])
                        .map(|(&a, &b)| phi.cos() * a + phi.sin() * b)
                        .collect()
                })
                .collect();

            // Background rows first; their mean anchors the needle direction.
            let mut bg_rows: Vec<Option<Vec<f32>>> = vec![None; n];
            let mut mean = vec![0.0f64; d];
            let mut bg_count = 0usize;
            for (i, slot) in bg_rows.iter_mut().enumerate() {
                if is_needle(&planted, i).is_none() {
                    let row = noisy_unit_row(&track[i], spec.noise_sigma, &mut rng);
                    for (acc, &x) in mean.iter_mut().zip(&row) {
                        *acc += x as f64;
                    }
                    bg_count += 1;
                    *slot = Some(row);
                }
            }
            for acc in &mut mean {
                *acc /= bg_count.max(1) as f64;
            }

            let mut data = Vec::with_capacity(n * d);
            for i in 0..n {
                match bg_rows[i].take() {
                    Some(row) => data.extend(row),
                    None => {
                        let dir = off_axis_direction(&mean, &track[i]);
                        data.extend(noisy_unit_row(&dir, spec.noise_sigma, &mut rng));
                    }
                }
            }
            let ks = KeyStream::new(n, d, data);
            if !verify_current(&ks, &planted, spec.drift) {
                ok = false;
                break;
            }
            heads.push(ks);
        }
        if ok {
            return Ok(SynthStream { heads, planted });
        }
    }
    Err(Error::GenerationFailed(MAX_ATTEMPTS))
}

/// Positions open to sampled current needles: the outer 22% of the stream on
/// each side, past the sink prefix.
fn current_slots(spec: &SynthSpec) -> Vec<usize> {
    let n = spec.n_tokens;
    let head_end = (n as f64 * 0.22).floor() as usize;
    let tail_start = (n as f64 * 0.78).ceil() as usize;
    (spec.n_sink..n)
        .filter(|&i| i < head_end || i >= tail_start)
        .collect()
}

/// Unit component of `target` orthogonal to `axis`; when the projection
/// vanishes, a deterministic basis direction orthogonal to `axis`.
fn off_axis_direction(target: &[f64], axis: &[f64]) -> Vec<f64> {
    let axis = unit(axis.to_vec());
    let dot: f64 = target.iter().zip(&axis).map(|(a, b)| a * b).sum();
    let proj: Vec<f64> = target
        .iter()
        .zip(&axis)
        .map(|(&t, &a)| t - dot * a)
        .collect();
    let norm = proj.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 1e-6 {
        return proj.into_iter().map(|x| x / norm).collect();
    }
    // Orthogonalize the basis vector least aligned with the axis.
    let pivot = axis
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut e = vec![0.0; axis.len()];
    e[pivot] = 1.0;
    let dot: f64 = e.iter().zip(&axis).map(|(a, b)| a * b).sum();
    let v: Vec<f64> = e.iter().zip(&axis).map(|(&x, &a)| x - dot * a).collect();
    unit(v)
}

fn window_mean(ks: &KeyStream, i: usize) -> Vec<f64> {
    let start = (i + 1).saturating_sub(WINDOW);
    mean_of(ks, start..i + 1)
}

fn verify_current(ks: &KeyStream, planted: &[usize], drift: f64) -> bool {
    let n = ks.n_tokens();
    let mut bg_ac = Vec::with_capacity(n);
    let mut needle_ac = Vec::with_capacity(planted.len());
    for i in 0..n {
        let a_c = neg_cos(ks.row(i), &window_mean(ks, i));
        if is_needle(planted, i).is_some() {
            needle_ac.push(a_c);
        } else {
            bg_ac.push(a_c);
        }
    }
    let threshold = percentile95(&bg_ac);
    if needle_ac.iter().any(|&a| a <= threshold) {
        return false;
    }
    if drift > 0.0 {
        let a_s = stable_anomalies(ks);
        let global_median = median(&a_s);
        if planted.iter().any(|&q| a_s[q] >= global_median) {
            return false;
        }
    }
    true
}

// ---- uniform noise -------------------------------------------------------

/// Independent random unit rows; no needles.
pub fn gen_uniform_noise(spec: &SynthSpec) -> Result<SynthStream> {
    let mut heads = Vec::with_capacity(spec.n_heads);
    for h in 0..spec.n_heads {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(spec.seed, 0x4e4f495345, 0, h));
        let mut data = Vec::with_capacity(spec.n_tokens * spec.head_dim);
        for _ in 0..spec.n_tokens {
            let row = unit(gauss_vec(&mut rng, spec.head_dim));
            data.extend(row.into_iter().map(|x| x as f32));
        }
        heads.push(KeyStream::new(spec.n_tokens, spec.head_dim, data));
    }
    Ok(SynthStream {
        heads,
        planted: Vec::new(),
    })
}

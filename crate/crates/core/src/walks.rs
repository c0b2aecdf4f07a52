//! The structured self-avoiding walk pair used for the upper bound.
//!
//! Moves come in blocks of `block = floor(ln d)` steps. Every step whose
//! index is a multiple of `block` is forced: it moves by `+e_l` for a uniform
//! `l` in the oriented band, the last `band = floor(d / ln d)` coordinates.
//! All other steps move uniformly to an unvisited neighbour along the
//! remaining `d - band` axes. The level `beta(S_j)` (sum of the band
//! coordinates) therefore equals `floor(j / block)`, two walks can only meet
//! at equal levels, and at most `block - 1` visited vertices can block an
//! unforced move.
//!
//! Logarithms are natural throughout.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::Vertex;
use crate::error::{check_positive, Error, Result};
use crate::seed::{derive_seed, stream};

/// Smallest dimension for which unforced steps exist (`floor(ln d) >= 2`).
pub const MIN_WALK_DIM: usize = 8;

/// `floor(ln d)`.
pub fn block_len(d: usize) -> usize {
    (d as f64).ln().floor() as usize
}

/// `floor(d / ln d)`.
pub fn band_width(d: usize) -> usize {
    (d as f64 / (d as f64).ln()).floor() as usize
}

/// `2 (d - band) - block`, the guaranteed size of every unforced move set.
pub fn unforced_choice_floor(d: usize) -> usize {
    2 * (d - band_width(d)) - block_len(d)
}

/// Sum of the oriented-band coordinates.
pub fn beta(x: &[i32], d: usize) -> i64 {
    x[d - band_width(d)..].iter().map(|&c| i64::from(c)).sum()
}

/// Projection onto the oriented band.
pub fn xi(x: &[i32], d: usize) -> Vertex {
    Vertex::from_coords(&x[d - band_width(d)..])
}

fn check_dim(d: usize) -> Result<()> {
    if d < MIN_WALK_DIM {
        return Err(Error::Validation(format!(
            "structured walks need d >= {MIN_WALK_DIM} (floor(ln d) >= 2), got {d}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructuredWalk {
    d: usize,
    block: usize,
    band: usize,
    /// Row-major `(len + 1) x d` coordinates.
    coords: Vec<i32>,
    /// `|H(j)|` at every unforced step `j`, 0 at forced steps and at `j = 0`.
    choices: Vec<u32>,
}

impl StructuredWalk {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn block(&self) -> usize {
        self.block
    }

    pub fn band(&self) -> usize {
        self.band
    }

    /// Number of steps.
    pub fn len(&self) -> usize {
        self.coords.len() / self.d - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn vertex(&self, j: usize) -> &[i32] {
        &self.coords[j * self.d..(j + 1) * self.d]
    }

    pub fn vertices(&self) -> Vec<Vertex> {
        (0..=self.len())
            .map(|j| Vertex::from_coords(self.vertex(j)))
            .collect()
    }

    pub fn choice_counts(&self) -> &[u32] {
        &self.choices
    }

    pub fn is_forced(&self, j: usize) -> bool {
        j > 0 && j % self.block == 0
    }

    /// Checks every structural invariant: self-avoidance, unit steps, the
    /// allowed direction set of each step and the level function.
    pub fn verify(&self) -> Result<()> {
        let d = self.d;
        let free_axes = d - self.band;
        let fail = |msg: String| Err(Error::Validation(msg));
        if !self.vertex(0).iter().all(|&c| c == 0) {
            return fail("walk does not start at the origin".into());
        }
        for j in 1..=self.len() {
            let (a, b) = (self.vertex(j - 1), self.vertex(j));
            let diffs: Vec<(usize, i32)> = (0..d)
                .filter(|&i| a[i] != b[i])
                .map(|i| (i, b[i] - a[i]))
                .collect();
            let &[(axis, delta)] = diffs.as_slice() else {
                return fail(format!("step {j} is not a unit step"));
            };
            if delta.abs() != 1 {
                return fail(format!("step {j} is not a unit step"));
            }
            if self.is_forced(j) {
                if axis < free_axes || delta != 1 {
                    return fail(format!("forced step {j} leaves the oriented band"));
                }
            } else if axis >= free_axes {
                return fail(format!("unforced step {j} moves in the oriented band"));
            }
        }
        for j in 0..=self.len() {
            if beta(self.vertex(j), d) != (j / self.block) as i64 {
                return fail(format!("level of S_{j} is not floor(j / block)"));
            }
            // Only same-level vertices can coincide.
            let level_start = (j / self.block) * self.block;
            if (level_start..j).any(|i| self.vertex(i) == self.vertex(j)) {
                return fail(format!("S_{j} revisits a vertex"));
            }
        }
        Ok(())
    }
}

/// Samples `k_blocks` blocks of the structured walk.
pub fn sample_structured_walk<R: Rng + ?Sized>(
    d: usize,
    k_blocks: usize,
    rng: &mut R,
) -> Result<StructuredWalk> {
    check_dim(d)?;
    if k_blocks == 0 {
        return Err(Error::Validation("k_blocks must be positive".into()));
    }
    let block = block_len(d);
    let band = band_width(d);
    let free_axes = d - band;
    let n = k_blocks * block;
    let mut coords = vec![0i32; (n + 1) * d];
    let mut choices = vec![0u32; n + 1];
    let mut next = vec![0i32; d];
    for j in 1..=n {
        let (done, rest) = coords.split_at_mut(j * d);
        let current = &done[(j - 1) * d..];
        next.copy_from_slice(current);
        if j % block == 0 {
            next[free_axes + rng.random_range(0..band)] += 1;
        } else {
            let level_start = ((j - 1) / block) * block;
            let level = &done[level_start * d..(j - 1) * d];
            let blocked = level
                .chunks_exact(d)
                .filter(|u| {
                    u.iter()
                        .zip(current)
                        .map(|(a, b)| (a - b).unsigned_abs())
                        .sum::<u32>()
                        == 1
                })
                .count();
            let h = 2 * free_axes - blocked;
            if h == 0 {
                return Err(Error::DeadEnd { step: j });
            }
            debug_assert!(d < 20 || h >= unforced_choice_floor(d));
            choices[j] = h as u32;
            loop {
                let pick = rng.random_range(0..2 * free_axes);
                next.copy_from_slice(current);
                next[pick / 2] += if pick % 2 == 0 { -1 } else { 1 };
                if !level.chunks_exact(d).any(|u| u == next.as_slice()) {
                    break;
                }
            }
        }
        rest[..d].copy_from_slice(&next);
    }
    Ok(StructuredWalk {
        d,
        block,
        band,
        coords,
        choices,
    })
}

/// Collision bookkeeping for a walk pair truncated after `truncated_at` blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionStats {
    pub d_size: usize,
    pub f_size: usize,
    /// Types (1, 2 or 3) of the collision moments t(1) < t(2) < ... .
    pub type_sequence: Vec<u8>,
    /// Number of collision moments, equal to `d_size`.
    pub tau: usize,
    /// Matched index pairs `(i, j)` with `V_i = S_j`.
    pub collisions: Vec<(usize, usize)>,
    pub truncated_at: usize,
    /// True when no collision falls in the second half of the truncation window.
    pub saturation: bool,
}

impl CollisionStats {
    pub fn functional(&self, theta: f64, psi: f64) -> f64 {
        theta.powi(self.f_size as i32) * psi.powi((self.d_size - self.f_size) as i32)
    }
}

pub fn collision_stats(s: &StructuredWalk, v: &StructuredWalk) -> Result<CollisionStats> {
    if s.d != v.d || s.len() != v.len() {
        return Err(Error::Validation(
            "walks differ in dimension or length".into(),
        ));
    }
    collision_stats_truncated(s, v, s.len() / s.block)
}

/// Collision statistics of the length `k_blocks * block` prefixes.
///
/// `V_i` sits at level `floor(i / block)`, so the only candidates `S_j` lie in
/// that level's window of at most `block` indices.
pub fn collision_stats_truncated(
    s: &StructuredWalk,
    v: &StructuredWalk,
    k_blocks: usize,
) -> Result<CollisionStats> {
    if s.d != v.d {
        return Err(Error::Validation("walks differ in dimension".into()));
    }
    let block = s.block;
    let n = k_blocks * block;
    if n > s.len() || n > v.len() || k_blocks == 0 {
        return Err(Error::Validation(format!(
            "truncation at {k_blocks} blocks exceeds walk lengths {} / {}",
            s.len(),
            v.len()
        )));
    }
    let mut stats = CollisionStats {
        d_size: 0,
        f_size: 0,
        type_sequence: Vec::new(),
        tau: 0,
        collisions: Vec::new(),
        truncated_at: k_blocks,
        saturation: true,
    };
    for i in 0..=n {
        let level_start = (i / block) * block;
        let level_end = (level_start + block - 1).min(n);
        let vi = v.vertex(i);
        let Some(j) = (level_start..=level_end).find(|&j| s.vertex(j) == vi) else {
            continue;
        };
        debug_assert_eq!(beta(s.vertex(j), s.d), beta(vi, s.d));
        stats.d_size += 1;
        stats.collisions.push((i, j));
        let in_f = i < n && j < n && v.vertex(i + 1) == s.vertex(j + 1);
        let kind = if !in_f {
            3
        } else if (i + 1) % block == 0 {
            2
        } else {
            1
        };
        if in_f {
            stats.f_size += 1;
        }
        stats.type_sequence.push(kind);
        if 2 * i > n {
            stats.saturation = false;
        }
    }
    stats.tau = stats.d_size;
    Ok(stats)
}

/// Samples the independent pair `(S, V)` for replica `rep`, resampling a
/// walk from a fresh derived stream on a dead end. Returns the number of
/// resamples alongside the pair.
pub fn sample_pair(
    d: usize,
    k_blocks: usize,
    master_seed: u64,
    rep: u64,
) -> Result<(StructuredWalk, StructuredWalk, u64)> {
    const MAX_ATTEMPTS: u64 = 1000;
    let mut resamples = 0;
    let mut draw = |tag: &str| -> Result<StructuredWalk> {
        let base = derive_seed(master_seed, tag, rep);
        for attempt in 0..MAX_ATTEMPTS {
            let seed = if attempt == 0 {
                base
            } else {
                derive_seed(base, "retry", attempt)
            };
            match sample_structured_walk(d, k_blocks, &mut stream(seed)) {
                Ok(w) => return Ok(w),
                Err(Error::DeadEnd { .. }) => resamples += 1,
                Err(e) => return Err(e),
            }
        }
        Err(Error::Resource(format!(
            "{MAX_ATTEMPTS} consecutive dead-end walks"
        )))
    };
    let s = draw("walk-s")?;
    let v = draw("walk-v")?;
    Ok((s, v, resamples))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Saturation {
    pub half_mean: f64,
    pub half_stderr: f64,
    pub delta: f64,
    pub pooled_stderr: f64,
    /// `|delta| < 2 * pooled_stderr` (or both estimates exactly equal).
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalReport {
    pub d: usize,
    pub theta: f64,
    pub psi: f64,
    pub k_blocks: usize,
    pub reps: usize,
    pub mean: f64,
    pub stderr: f64,
    pub resamples: u64,
    pub resample_rate: f64,
    /// Set when more than 1% of sampled walks hit a dead end.
    pub resample_warning: bool,
    pub saturation: Saturation,
}

pub(crate) fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Monte Carlo estimate of `E[theta^|F| psi^|D \ F|]` over walk pairs truncated
/// at `k_blocks` blocks, with the same pairs re-evaluated at `k_blocks / 2`
/// blocks to certify that the truncation has saturated.
pub fn functional_mc(
    d: usize,
    theta: f64,
    psi: f64,
    k_blocks: usize,
    reps: usize,
    master_seed: u64,
) -> Result<FunctionalReport> {
    check_dim(d)?;
    check_positive("theta", theta)?;
    check_positive("psi", psi)?;
    if k_blocks < 2 || reps == 0 {
        return Err(Error::Validation("need k_blocks >= 2 and reps >= 1".into()));
    }
    let half = k_blocks / 2;
    let samples: Result<Vec<(f64, f64, u64)>> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let (s, v, resamples) = sample_pair(d, k_blocks, master_seed, r)?;
            let full = collision_stats_truncated(&s, &v, k_blocks)?.functional(theta, psi);
            let part = collision_stats_truncated(&s, &v, half)?.functional(theta, psi);
            Ok((full, part, resamples))
        })
        .collect();
    let samples = samples?;
    let full: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let part: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let resamples: u64 = samples.iter().map(|s| s.2).sum();
    let (mean, stderr) = mean_stderr(&full);
    let (half_mean, half_stderr) = mean_stderr(&part);
    let delta = mean - half_mean;
    let pooled = (stderr.powi(2) + half_stderr.powi(2)).sqrt();
    let walks = 2 * reps as u64 + resamples;
    let resample_rate = resamples as f64 / walks as f64;
    Ok(FunctionalReport {
        d,
        theta,
        psi,
        k_blocks,
        reps,
        mean,
        stderr,
        resamples,
        resample_rate,
        resample_warning: resample_rate > 0.01,
        saturation: Saturation {
            half_mean,
            half_stderr,
            delta,
            pooled_stderr: pooled,
            pass: delta == 0.0 || delta.abs() < 2.0 * pooled,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeProbabilities {
    pub d: usize,
    pub reps: usize,
    pub k_blocks: usize,
    /// `P(tau >= 2, t(1) has type j)` for j = 1, 2, 3.
    pub first: [f64; 3],
    pub first_stderr: [f64; 3],
    /// `P(tau >= 3, t(2) has type j | tau >= 2)` for j = 1, 2, 3.
    pub successor: [f64; 3],
    pub successor_stderr: [f64; 3],
    pub second_moments: usize,
    /// `1 / (2 (d - band) - block)`
    pub type1_bound: f64,
    /// `1 / band`
    pub type2_bound: f64,
}

/// Empirical type frequencies of the first collision moments, to compare
/// against the per-moment bounds `1 / (2(d - band) - block)` (type 1) and
/// `1 / band` (type 2).
pub fn first_collision_type_probs(
    d: usize,
    reps: usize,
    k_blocks: usize,
    master_seed: u64,
) -> Result<TypeProbabilities> {
    check_dim(d)?;
    if reps == 0 || k_blocks == 0 {
        return Err(Error::Validation(
            "reps and k_blocks must be positive".into(),
        ));
    }
    let seqs: Result<Vec<Vec<u8>>> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let (s, v, _) = sample_pair(d, k_blocks, master_seed, r)?;
            Ok(collision_stats_truncated(&s, &v, k_blocks)?.type_sequence)
        })
        .collect();
    let seqs = seqs?;
    let mut first = [0usize; 3];
    let mut succ = [0usize; 3];
    let mut second = 0usize;
    for seq in &seqs {
        if seq.len() >= 2 {
            first[seq[0] as usize - 1] += 1;
            second += 1;
            if seq.len() >= 3 {
                succ[seq[1] as usize - 1] += 1;
            }
        }
    }
    let freq = |counts: [usize; 3], n: usize| -> ([f64; 3], [f64; 3]) {
        let mut p = [0.0; 3];
        let mut se = [0.0; 3];
        if n > 0 {
            for j in 0..3 {
                p[j] = counts[j] as f64 / n as f64;
                se[j] = (p[j] * (1.0 - p[j]) / n as f64).sqrt();
            }
        }
        (p, se)
    };
    let (first_p, first_se) = freq(first, reps);
    let (succ_p, succ_se) = freq(succ, second);
    Ok(TypeProbabilities {
        d,
        reps,
        k_blocks,
        first: first_p,
        first_stderr: first_se,
        successor: succ_p,
        successor_stderr: succ_se,
        second_moments: second,
        type1_bound: 1.0 / unforced_choice_floor(d) as f64,
        type2_bound: 1.0 / band_width(d) as f64,
    })
}

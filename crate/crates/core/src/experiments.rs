//! Critical-rate estimation and the normalized `2dp * lambda_c` trend table.
//!
//! All survival probes for one estimate share a master seed, so replica `i`
//! sees the same environment and clocks at every `lambda`. The estimated
//! survival curve is then monotone in `lambda` path by path, which makes plain
//! bisection on it well posed.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::make_lattice_env;
use crate::epidemics::{
    replica_clock_seed, replica_env_seed, run_event_driven_traced, survival_estimate, ClockOracle,
    EnvMode, StopReason, StopRule, SurvivalConfig, SurvivalEstimate,
};
use crate::error::{check_positive, check_probability, Error, Result};
use crate::paths::rigorous_lower_bound;

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;
const MAX_ROUNDS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimationProtocol {
    pub replicas: usize,
    pub n_max: usize,
    pub t_max: f64,
    /// Survival threshold defining the finite-size pseudo-critical rate.
    pub epsilon: f64,
    /// Bisection stops once `hi - lo <= tolerance * lo`.
    pub tolerance: f64,
    /// Defaults to `[b, 3b]` with `b = 1/((2d-1)p - 1)`.
    pub bracket: Option<(f64, f64)>,
    pub mode: EnvMode,
}

impl Default for EstimationProtocol {
    fn default() -> Self {
        Self {
            replicas: 400,
            n_max: 10_000,
            t_max: f64::INFINITY,
            epsilon: 0.05,
            tolerance: 0.01,
            bracket: None,
            mode: EnvMode::Annealed,
        }
    }
}

impl EstimationProtocol {
    pub fn validate(&self) -> Result<()> {
        if self.replicas == 0 || self.n_max == 0 {
            return Err(Error::Validation(
                "replicas and n_max must be positive".into(),
            ));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(Error::Validation(format!(
                "epsilon must lie in (0, 0.5), got {}",
                self.epsilon
            )));
        }
        check_positive("tolerance", self.tolerance)?;
        if let Some((lo, hi)) = self.bracket {
            check_positive("bracket low end", lo)?;
            if !(lo < hi) {
                return Err(Error::Validation(format!(
                    "bracket needs lo < hi, got [{lo}, {hi}]"
                )));
            }
        }
        StopRule::new(self.t_max, Some(self.n_max)).map(|_| ())
    }

    /// The bracket used at `(d, p)`. A user bracket reaching below the
    /// rigorous lower bound is raised to it.
    pub fn bracket_for(&self, d: usize, p: f64) -> Result<(f64, f64)> {
        let floor = rigorous_lower_bound(d, p).ok();
        match (self.bracket, floor) {
            (Some((lo, hi)), Some(b)) => {
                let lo = lo.max(b);
                if lo >= hi {
                    return Err(Error::Validation(format!(
                        "bracket [{lo}, {hi}] lies below the proven extinction bound {b}"
                    )));
                }
                Ok((lo, hi))
            }
            (Some(br), None) => Ok(br),
            (None, Some(b)) => Ok((b, 3.0 * b)),
            (None, None) => Err(Error::Validation(
                "no rigorous lower bound at these parameters; supply a bracket".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub lambda: f64,
    pub p_hat: f64,
    pub stderr: f64,
    pub survived: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaCEstimate {
    pub d: usize,
    pub p: f64,
    pub lambda_hat: f64,
    pub ci: (f64, f64),
    /// `2dp * lambda_hat`
    pub normalized: f64,
    pub normalized_ci: (f64, f64),
    pub replicas: usize,
    pub n_max: usize,
    pub epsilon: f64,
    /// Every evaluated rate, ascending.
    pub sweep: Vec<SweepPoint>,
}

struct Prober<'a> {
    config: SurvivalConfig,
    protocol: &'a EstimationProtocol,
    stop: StopRule,
    seed: u64,
    cache: BTreeMap<u64, SurvivalEstimate>,
}

impl Prober<'_> {
    fn p_hat(&mut self, lambda: f64) -> Result<f64> {
        if let Some(e) = self.cache.get(&lambda.to_bits()) {
            return Ok(e.p_hat);
        }
        let cfg = SurvivalConfig {
            lambda,
            ..self.config
        };
        let e = survival_estimate(&cfg, self.protocol.replicas, &self.stop, self.seed)?;
        self.cache.insert(lambda.to_bits(), e);
        Ok(e.p_hat)
    }

    /// Narrows `[lo, hi]` around the rate where `p_hat` first exceeds `level`,
    /// given `p_hat(lo) <= level < p_hat(hi)`.
    fn bisect(&mut self, level: f64, mut lo: f64, mut hi: f64) -> Result<(f64, f64)> {
        for _ in 0..MAX_ROUNDS {
            if hi - lo <= self.protocol.tolerance * lo {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if self.p_hat(mid)? > level {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok((lo, hi))
    }
}

/// Bisection estimate of the rate where the censoring probability crosses
/// `epsilon`, with a 95% interval from the rates where it crosses
/// `epsilon -/+ 1.96 sqrt(epsilon (1 - epsilon) / replicas)`.
pub fn estimate_lambda_c(
    d: usize,
    p: f64,
    protocol: &EstimationProtocol,
    master_seed: u64,
) -> Result<LambdaCEstimate> {
    protocol.validate()?;
    check_probability("edge probability p", p)?;
    make_lattice_env(d, p, 0)?;
    let (lo, hi) = protocol.bracket_for(d, p)?;
    let eps = protocol.epsilon;
    let mut prober = Prober {
        config: SurvivalConfig {
            d,
            p,
            lambda: lo,
            mode: protocol.mode,
        },
        protocol,
        stop: StopRule::new(protocol.t_max, Some(protocol.n_max))?,
        seed: master_seed,
        cache: BTreeMap::new(),
    };
    let (p_lo, p_hi) = (prober.p_hat(lo)?, prober.p_hat(hi)?);
    if !(p_lo < eps && p_hi > eps) {
        return Err(Error::Bracket {
            lambda_lo: lo,
            lambda_hi: hi,
            p_lo,
            p_hi,
            epsilon: eps,
        });
    }
    let (a, b) = prober.bisect(eps, lo, hi)?;
    let lambda_hat = 0.5 * (a + b);

    let half = Z95 * (eps * (1.0 - eps) / protocol.replicas as f64).sqrt();
    let ci_lo = if p_lo > eps - half {
        lo
    } else {
        prober.bisect(eps - half, lo, a)?.0
    };
    let ci_hi = if p_hi <= eps + half {
        hi
    } else {
        prober.bisect(eps + half, b, hi)?.1
    };

    // Positive floats order like their bit patterns, so the cache is sorted.
    let sweep = prober
        .cache
        .iter()
        .map(|(&bits, e)| SweepPoint {
            lambda: f64::from_bits(bits),
            p_hat: e.p_hat,
            stderr: e.stderr,
            survived: e.survived,
        })
        .collect();
    let scale = 2.0 * d as f64 * p;
    Ok(LambdaCEstimate {
        d,
        p,
        lambda_hat,
        ci: (ci_lo, ci_hi),
        normalized: scale * lambda_hat,
        normalized_ci: (scale * ci_lo, scale * ci_hi),
        replicas: protocol.replicas,
        n_max: protocol.n_max,
        epsilon: eps,
        sweep,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub d: usize,
    pub p: f64,
    pub estimate: Option<LambdaCEstimate>,
    pub error: Option<String>,
}

/// One estimate per dimension. A failing dimension is recorded in its row.
pub fn normalized_table(
    dims: &[usize],
    p: f64,
    protocol: &EstimationProtocol,
    master_seed: u64,
) -> Result<Vec<TableRow>> {
    if dims.is_empty() || dims.windows(2).any(|w| w[0] >= w[1]) || dims[0] < 2 {
        return Err(Error::Validation(
            "dims must be strictly ascending and at least 2".into(),
        ));
    }
    protocol.validate()?;
    Ok(dims
        .iter()
        .map(|&d| match estimate_lambda_c(d, p, protocol, master_seed) {
            Ok(e) => TableRow {
                d,
                p,
                estimate: Some(e),
                error: None,
            },
            Err(e) => TableRow {
                d,
                p,
                estimate: None,
                error: Some(e.to_string()),
            },
        })
        .collect())
}

/// CSV with columns `d,p,lambda_hat,ci_lo,ci_hi,normalized,replicas,n_max,epsilon`.
/// Failed rows keep `d` and `p` and leave the remaining fields empty.
pub fn table_csv(rows: &[TableRow]) -> String {
    let mut out = String::from("d,p,lambda_hat,ci_lo,ci_hi,normalized,replicas,n_max,epsilon\n");
    for row in rows {
        match &row.estimate {
            Some(e) => out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                e.d,
                e.p,
                e.lambda_hat,
                e.ci.0,
                e.ci.1,
                e.normalized,
                e.replicas,
                e.n_max,
                e.epsilon
            )),
            None => out.push_str(&format!("{},{},,,,,,,\n", row.d, row.p)),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub d: usize,
    pub p: f64,
    pub lambda: f64,
    pub replicas: usize,
    pub fitted_rate: f64,
    /// `2dp * lambda - 1`
    pub expected_rate: f64,
    /// `|fitted - expected| / |expected|`, absent when the expected rate is 0.
    pub relative_error: Option<f64>,
    pub grid: Vec<f64>,
    pub mean_infective: Vec<f64>,
    /// Replicas stopped by the size cap before the window closed.
    pub capped_runs: usize,
}

/// Number of grid points on `[0, t_window]` for growth fits.
pub const GROWTH_GRID_POINTS: usize = 21;
const GROWTH_N_MAX: usize = 200_000;

/// Least-squares slope of `ln E|I_t|` over `[0, t_window]`, against the
/// mean-field prediction `dI/dt = (2dp lambda - 1) I`.
pub fn mean_field_growth(
    d: usize,
    p: f64,
    lambda: f64,
    replicas: usize,
    t_window: f64,
    master_seed: u64,
) -> Result<GrowthFit> {
    check_probability("edge probability p", p)?;
    check_positive("infection rate lambda", lambda)?;
    check_positive("t_window", t_window)?;
    if replicas == 0 {
        return Err(Error::Validation("replicas must be positive".into()));
    }
    let base = make_lattice_env(d, p, 0)?;
    let grid: Vec<f64> = (0..GROWTH_GRID_POINTS)
        .map(|i| t_window * i as f64 / (GROWTH_GRID_POINTS - 1) as f64)
        .collect();
    let stop = StopRule::new(t_window, Some(GROWTH_N_MAX))?;
    let runs: Result<Vec<(Vec<usize>, bool)>> = (0..replicas as u64)
        .into_par_iter()
        .map(|i| {
            let env = base.with_seed(replica_env_seed(EnvMode::Annealed, master_seed, i));
            let clocks = ClockOracle::new(replica_clock_seed(master_seed, i));
            let trace = run_event_driven_traced(&env, &clocks, lambda, &stop, &grid)?;
            Ok((
                trace.infective_on_grid,
                trace.outcome.stop_reason == StopReason::NMax,
            ))
        })
        .collect();
    let runs = runs?;
    let capped_runs = runs.iter().filter(|r| r.1).count();
    let mean_infective: Vec<f64> = (0..grid.len())
        .map(|g| runs.iter().map(|r| r.0[g] as f64).sum::<f64>() / replicas as f64)
        .collect();
    let usable = mean_infective.iter().take_while(|&&m| m > 0.0).count();
    if usable < 3 {
        return Err(Error::InsufficientData(format!(
            "all replicas extinct before t = {}",
            grid[usable.min(grid.len() - 1)]
        )));
    }
    let xs = &grid[..usable];
    let ys: Vec<f64> = mean_infective[..usable].iter().map(|m| m.ln()).collect();
    let n = usable as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let fitted_rate = sxy / sxx;
    let expected_rate = 2.0 * d as f64 * p * lambda - 1.0;
    let relative_error =
        (expected_rate != 0.0).then(|| (fitted_rate - expected_rate).abs() / expected_rate.abs());
    Ok(GrowthFit {
        d,
        p,
        lambda,
        replicas,
        fitted_rate,
        expected_rate,
        relative_error,
        grid,
        mean_infective,
        capped_runs,
    })
}

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_event_driven, ClockOracle, StopRule};
use crate::env::make_lattice_env;
use crate::error::{check_positive, check_probability, Error, Result};
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvMode {
    /// Fresh environment per replica.
    Annealed,
    /// One environment, fixed by its seed, for every replica.
    Quenched(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalConfig {
    pub d: usize,
    pub p: f64,
    pub lambda: f64,
    pub mode: EnvMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalEstimate {
    pub p_hat: f64,
    pub stderr: f64,
    pub survived: usize,
    pub replicas: usize,
}

impl SurvivalEstimate {
    pub fn from_counts(survived: usize, replicas: usize) -> Self {
        let p_hat = survived as f64 / replicas as f64;
        SurvivalEstimate {
            p_hat,
            stderr: (p_hat * (1.0 - p_hat) / replicas as f64).sqrt(),
            survived,
            replicas,
        }
    }
}

pub fn replica_env_seed(mode: EnvMode, master_seed: u64, replica: u64) -> u64 {
    match mode {
        EnvMode::Annealed => derive_seed(master_seed, "env", replica),
        EnvMode::Quenched(seed) => seed,
    }
}

pub fn replica_clock_seed(master_seed: u64, replica: u64) -> u64 {
    derive_seed(master_seed, "clock", replica)
}

/// Fraction of replicas that were censored (reached the stop rule's cap with
/// infectives still present), with its binomial standard error.
///
/// Replica `i` uses environment seed `replica_env_seed(mode, master, i)` and
/// clock seed `replica_clock_seed(master, i)`, so estimates at different
/// `lambda` share their randomness and are pathwise monotone in `lambda`.
pub fn survival_estimate(
    config: &SurvivalConfig,
    replicas: usize,
    stop: &StopRule,
    master_seed: u64,
) -> Result<SurvivalEstimate> {
    if replicas == 0 {
        return Err(Error::Validation("replicas must be at least 1".into()));
    }
    check_probability("edge probability p", config.p)?;
    check_positive("infection rate lambda", config.lambda)?;
    if !stop.is_bounded() {
        return Err(Error::Validation(
            "survival estimation needs a finite stop rule".into(),
        ));
    }
    let base = make_lattice_env(config.d, config.p, 0)?;
    let survived: Result<Vec<bool>> = (0..replicas as u64)
        .into_par_iter()
        .map(|i| {
            let env = base.with_seed(replica_env_seed(config.mode, master_seed, i));
            let clocks = ClockOracle::new(replica_clock_seed(master_seed, i));
            Ok(run_event_driven(&env, &clocks, config.lambda, stop)?.survived())
        })
        .collect();
    let survived = survived?.into_iter().filter(|&s| s).count();
    Ok(SurvivalEstimate::from_counts(survived, replicas))
}

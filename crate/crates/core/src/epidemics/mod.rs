//! The SIR process on an environment, under three mutually validating routes:
//! event-driven clocks, the direct continuous-time Markov chain, and static
//! transmission reachability.

mod clocks;
mod ctmc;
mod event_driven;
mod exact;
mod reach;
mod survival;

use serde::{Deserialize, Serialize};

pub use clocks::{ClockOracle, SenderClocks};
pub use ctmc::run_direct_ctmc;
pub use event_driven::{run_event_driven, run_event_driven_traced, Trace};
pub use exact::{exact_final_size_distribution, total_variation, MAX_EXACT_VERTICES};
pub use reach::{coupled_ever_infected, coupled_over_p, transmission_reachability, Reachability};
pub use survival::{
    replica_clock_seed, replica_env_seed, survival_estimate, EnvMode, SurvivalConfig,
    SurvivalEstimate,
};

use crate::env::Environment;
use crate::error::{check_positive, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Extinct,
    Censored,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    TMax,
    NMax,
    Extinction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpidemicOutcome {
    pub status: Status,
    /// Number of vertices ever infected, the origin included.
    pub n_ever_infected: usize,
    pub extinction_time: Option<f64>,
    pub events_processed: u64,
    pub stop_reason: StopReason,
}

impl EpidemicOutcome {
    pub fn survived(&self) -> bool {
        self.status == Status::Censored
    }
}

/// Censoring policy. A run stops as soon as `n_max` vertices have been
/// infected or the clock passes `t_max`, whichever comes first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    pub t_max: f64,
    pub n_max: Option<usize>,
}

impl StopRule {
    pub fn new(t_max: f64, n_max: Option<usize>) -> Result<Self> {
        if t_max.is_nan() || t_max <= 0.0 {
            return Err(Error::Validation(format!(
                "t_max must be positive, got {t_max}"
            )));
        }
        if n_max == Some(0) {
            return Err(Error::Validation("n_max must be at least 1".into()));
        }
        Ok(StopRule { t_max, n_max })
    }

    pub fn n_max(n: usize) -> Self {
        StopRule {
            t_max: f64::INFINITY,
            n_max: Some(n.max(1)),
        }
    }

    pub fn t_max(t: f64) -> Self {
        StopRule {
            t_max: t,
            n_max: None,
        }
    }

    pub fn unbounded() -> Self {
        StopRule {
            t_max: f64::INFINITY,
            n_max: None,
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.t_max.is_finite() || self.n_max.is_some()
    }

    pub(crate) fn n_limit(&self) -> usize {
        self.n_max.unwrap_or(usize::MAX)
    }
}

pub(crate) fn validate_run(env: &Environment, lambda: f64, stop: &StopRule) -> Result<()> {
    check_positive("infection rate lambda", lambda)?;
    if stop.t_max.is_nan() || stop.t_max <= 0.0 || stop.n_max == Some(0) {
        return Err(Error::Validation(format!("malformed stop rule {stop:?}")));
    }
    if env.is_lattice() && !stop.is_bounded() {
        return Err(Error::Validation(
            "lattice runs need a finite t_max or n_max".into(),
        ));
    }
    Ok(())
}

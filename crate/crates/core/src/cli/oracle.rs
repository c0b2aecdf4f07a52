use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::make_finite_env;
use crate::epidemics::{
    exact_final_size_distribution, run_direct_ctmc, run_event_driven, total_variation, ClockOracle,
    StopRule, MAX_EXACT_VERTICES,
};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, stream};

/// Parses `triangle`, `path4`, `edge`, `single`, or an explicit edge list
/// such as `0-1,1-2,2-0`.
pub fn parse_graph(spec: &str) -> Result<Vec<(i32, i32)>> {
    let edges = match spec.trim() {
        "single" => vec![],
        "edge" => vec![(0, 1)],
        "triangle" => vec![(0, 1), (1, 2), (2, 0)],
        "path4" => vec![(0, 1), (1, 2), (2, 3)],
        list => list
            .split(',')
            .map(|pair| {
                let (a, b) = pair.split_once('-').ok_or_else(|| {
                    Error::Validation(format!("edge '{pair}' is not of the form a-b"))
                })?;
                let parse = |s: &str| {
                    s.trim()
                        .parse::<i32>()
                        .map_err(|e| Error::Validation(format!("vertex '{s}': {e}")))
                };
                Ok((parse(a)?, parse(b)?))
            })
            .collect::<Result<_>>()?,
    };
    Ok(edges)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub edges: Vec<(i32, i32)>,
    pub lambda: f64,
    pub replicas: usize,
    /// `P(N = k)` indexed by `k`.
    pub exact: Vec<f64>,
    pub event_driven: Vec<f64>,
    pub ctmc: Vec<f64>,
    pub tv_event_driven: f64,
    pub tv_ctmc: f64,
}

fn histogram(sizes: &[usize], len: usize) -> Vec<f64> {
    let mut h = vec![0.0; len];
    for &n in sizes {
        h[n] += 1.0;
    }
    let total = sizes.len() as f64;
    h.iter_mut().for_each(|x| *x /= total);
    h
}

/// Final-size distributions from both simulation engines against exact
/// enumeration. Replica `i` uses clock seed `derive(seed, "clock", i)` for the
/// event-driven engine and stream `derive(seed, "ctmc", i)` for the direct one.
pub fn oracle_compare(
    edges: &[(i32, i32)],
    lambda: f64,
    replicas: usize,
    seed: u64,
) -> Result<OracleReport> {
    if replicas == 0 {
        return Err(Error::Validation("replicas must be positive".into()));
    }
    let env = make_finite_env(edges)?;
    let exact = exact_final_size_distribution(&env, lambda)?;
    debug_assert!(exact.len() <= MAX_EXACT_VERTICES + 1);
    let stop = StopRule::unbounded();
    let event: Result<Vec<usize>> = (0..replicas as u64)
        .into_par_iter()
        .map(|i| {
            let clocks = ClockOracle::new(derive_seed(seed, "clock", i));
            Ok(run_event_driven(&env, &clocks, lambda, &stop)?.n_ever_infected)
        })
        .collect();
    let direct: Result<Vec<usize>> = (0..replicas as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(derive_seed(seed, "ctmc", i));
            Ok(run_direct_ctmc(&env, lambda, &mut rng, &stop)?.n_ever_infected)
        })
        .collect();
    let event_driven = histogram(&event?, exact.len());
    let ctmc = histogram(&direct?, exact.len());
    Ok(OracleReport {
        edges: edges.to_vec(),
        lambda,
        replicas,
        tv_event_driven: total_variation(&exact, &event_driven),
        tv_ctmc: total_variation(&exact, &ctmc),
        exact,
        event_driven,
        ctmc,
    })
}

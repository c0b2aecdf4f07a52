use std::collections::VecDeque;

use rustc_hash::FxHashSet;

use super::ClockOracle;
use crate::env::{Environment, Vertex};
use crate::error::{check_positive, Error, Result};

/// Closure of the origin under the transmission relation.
#[derive(Debug, Clone, PartialEq)]
pub struct Reachability {
    /// Reached vertices in breadth-first order, the origin first.
    pub vertices: Vec<Vertex>,
    /// True when the closure has more than `cap` vertices and was cut off.
    pub truncated: bool,
}

impl Reachability {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn to_set(&self) -> FxHashSet<Vertex> {
        self.vertices.iter().cloned().collect()
    }

    pub fn is_subset_of(&self, other: &Reachability) -> bool {
        let big = other.to_set();
        self.vertices.iter().all(|v| big.contains(v))
    }
}

/// Vertices joined to the origin by a self-avoiding chain of open edges along
/// which every transmission clock beats its sender's removal clock; `x -> y`
/// iff the edge is open and `U(x, y) < T(x)`.
pub fn transmission_reachability(
    env: &Environment,
    clocks: &ClockOracle,
    lambda: f64,
    cap: usize,
) -> Result<Reachability> {
    check_positive("infection rate lambda", lambda)?;
    if cap == 0 {
        return Err(Error::Validation(
            "reachability cap must be positive".into(),
        ));
    }
    let origin = env.origin();
    let mut seen = FxHashSet::default();
    seen.insert(origin.clone());
    let mut order = vec![origin.clone()];
    let mut queue = VecDeque::from([origin]);
    let mut nb = Vec::new();
    while let Some(x) = queue.pop_front() {
        let sender = clocks.sender(&x);
        nb.clear();
        env.open_neighbors_into(&x, &mut nb);
        for y in nb.drain(..) {
            if seen.contains(&y) || sender.e_unit(&y) / lambda >= sender.removal {
                continue;
            }
            if order.len() == cap {
                return Ok(Reachability {
                    vertices: order,
                    truncated: true,
                });
            }
            seen.insert(y.clone());
            order.push(y.clone());
            queue.push_back(y);
        }
    }
    Ok(Reachability {
        vertices: order,
        truncated: false,
    })
}

/// Reachability sets for ascending infection rates under shared clocks.
/// Untruncated sets are nested because `U = E / lambda` decreases in `lambda`.
pub fn coupled_ever_infected(
    env: &Environment,
    clocks: &ClockOracle,
    lambdas: &[f64],
    cap: usize,
) -> Result<Vec<Reachability>> {
    if lambdas.is_empty() {
        return Err(Error::Validation("no infection rates given".into()));
    }
    if lambdas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Validation(format!(
            "infection rates not strictly ascending: {lambdas:?}"
        )));
    }
    lambdas
        .iter()
        .map(|&l| transmission_reachability(env, clocks, l, cap))
        .collect()
}

/// Reachability sets for ascending edge probabilities with the edge uniforms
/// of `env` shared, so that open edge sets (and hence untruncated sets) nest.
pub fn coupled_over_p(
    env: &Environment,
    ps: &[f64],
    clocks: &ClockOracle,
    lambda: f64,
    cap: usize,
) -> Result<Vec<Reachability>> {
    if !env.is_lattice() {
        return Err(Error::Validation(
            "edge-probability coupling needs a lattice environment".into(),
        ));
    }
    if ps.is_empty() || ps.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Validation(format!(
            "edge probabilities not strictly ascending: {ps:?}"
        )));
    }
    ps.iter()
        .map(|&p| transmission_reachability(&env.with_p(p)?, clocks, lambda, cap))
        .collect()
}

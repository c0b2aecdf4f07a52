//! Self-avoiding infection paths from the origin.
//!
//! A path `l = (l_0 = O, l_1, ..., l_K)` carries the event that every edge
//! along it is open and every transmission clock `U(l_i, l_{i+1})` beats the
//! sender's removal clock `T(l_i)`. Its probability is `(lambda p / (lambda + 1))^K`
//! because the clocks and edges along a self-avoiding path are distinct.
//! Summing over all paths bounds the expected number of ever-infected
//! vertices, which gives a rigorous lower bound on the critical rate.

use std::collections::BTreeSet;

use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::env::{make_lattice_env, Environment, Vertex};
use crate::epidemics::ClockOracle;
use crate::error::{check_positive, check_probability, Error, Result};
use crate::seed::derive_seed;

/// Largest admissible `2d (2d-1)^(K-1)` for exhaustive enumeration.
pub const MAX_ENUMERATION: f64 = 1e7;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SelfAvoidingPath {
    vertices: Vec<Vertex>,
}

impl SelfAvoidingPath {
    pub fn new(vertices: Vec<Vertex>) -> Result<Self> {
        let Some(first) = vertices.first() else {
            return Err(Error::Validation("empty path".into()));
        };
        if !first.is_origin() {
            return Err(Error::Validation(format!(
                "path starts at {first:?}, not the origin"
            )));
        }
        let d = first.dim();
        if vertices.iter().any(|v| v.dim() != d) {
            return Err(Error::Validation("path mixes dimensions".into()));
        }
        if vertices.windows(2).any(|w| w[0].l1_distance(&w[1]) != 1) {
            return Err(Error::Validation(
                "consecutive path vertices must be neighbours".into(),
            ));
        }
        let distinct: BTreeSet<&Vertex> = vertices.iter().collect();
        if distinct.len() != vertices.len() {
            return Err(Error::Validation("path revisits a vertex".into()));
        }
        Ok(SelfAvoidingPath { vertices })
    }

    /// Number of steps K.
    pub fn len(&self) -> usize {
        self.vertices.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.vertices[0].dim()
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn end(&self) -> &Vertex {
        self.vertices.last().expect("non-empty")
    }
}

/// Index sets where path `s` meets path `l`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CollisionSets {
    /// `{i : s_i = l_j for some j}`
    pub d: BTreeSet<usize>,
    /// `{i < K : s_i = l_j and s_{i+1} = l_{j+1} for some j}`
    pub f: BTreeSet<usize>,
}

impl CollisionSets {
    pub fn d_minus_f(&self) -> usize {
        self.d.difference(&self.f).count()
    }
}

/// All self-avoiding paths of length `k` from the origin of Z^d, in
/// depth-first order with steps tried as (axis 0, -), (axis 0, +), (axis 1, -), ...
pub fn enumerate_saw(d: usize, k: usize) -> Result<Vec<SelfAvoidingPath>> {
    if d == 0 || k == 0 {
        return Err(Error::Validation(
            "dimension and length must be positive".into(),
        ));
    }
    let bound = saw_count_bound(d, k);
    if bound > MAX_ENUMERATION {
        return Err(Error::Resource(format!(
            "2d(2d-1)^(K-1) = {bound:e} paths exceeds the enumeration limit {MAX_ENUMERATION:e}"
        )));
    }
    let mut out = Vec::new();
    let mut stack = vec![Vertex::origin(d)];
    extend_saw(d, k, &mut stack, &mut out);
    Ok(out)
}

fn extend_saw(d: usize, k: usize, stack: &mut Vec<Vertex>, out: &mut Vec<SelfAvoidingPath>) {
    if stack.len() == k + 1 {
        out.push(SelfAvoidingPath {
            vertices: stack.clone(),
        });
        return;
    }
    let here = stack.last().expect("non-empty").clone();
    for axis in 0..d {
        for sign in [-1, 1] {
            let next = here.step(axis, sign);
            if stack.contains(&next) {
                continue;
            }
            stack.push(next);
            extend_saw(d, k, stack, out);
            stack.pop();
        }
    }
}

/// `2d (2d-1)^(K-1)`, the non-backtracking walk count.
pub fn saw_count_bound(d: usize, k: usize) -> f64 {
    2.0 * d as f64 * (2.0 * d as f64 - 1.0).powi(k as i32 - 1)
}

/// Probability of a single infection path of length `k`.
pub fn infection_path_probability(k: usize, lambda: f64, p: f64) -> Result<f64> {
    check_positive("infection rate lambda", lambda)?;
    check_probability("edge probability p", p)?;
    Ok(step_probability(lambda, p).powi(k as i32))
}

/// `lambda p / (lambda + 1)`: one open edge whose transmission beats removal.
fn step_probability(lambda: f64, p: f64) -> f64 {
    lambda * p / (lambda + 1.0)
}

pub fn collision_sets(l: &SelfAvoidingPath, s: &SelfAvoidingPath) -> Result<CollisionSets> {
    if l.len() != s.len() || l.dim() != s.dim() {
        return Err(Error::Validation(format!(
            "paths differ in length or dimension ({} vs {})",
            l.len(),
            s.len()
        )));
    }
    let k = l.len();
    let position: FxHashMap<&Vertex, usize> =
        l.vertices.iter().enumerate().map(|(j, v)| (v, j)).collect();
    let mut sets = CollisionSets::default();
    for (i, v) in s.vertices.iter().enumerate() {
        let Some(&j) = position.get(v) else { continue };
        sets.d.insert(i);
        if i < k && j < k && l.vertices[j + 1] == s.vertices[i + 1] {
            sets.f.insert(i);
        }
    }
    Ok(sets)
}

/// Upper bound `a^(2K - |F|) (2/p)^|D \ F|` on the probability that both
/// paths are infection paths, with `a = lambda p / (lambda + 1)`. The
/// terminal index of `s` belongs to D whenever the endpoints meet and never
/// to F; it is counted in the exponent as the formula reads.
pub fn pair_probability_bound(
    l: &SelfAvoidingPath,
    s: &SelfAvoidingPath,
    lambda: f64,
    p: f64,
) -> Result<f64> {
    check_positive("infection rate lambda", lambda)?;
    check_probability("edge probability p", p)?;
    let sets = collision_sets(l, s)?;
    let a = step_probability(lambda, p);
    let k = l.len() as i32;
    Ok(a.powi(2 * k - sets.f.len() as i32) * (2.0 / p).powi(sets.d_minus_f() as i32))
}

/// Second-moment lower bound on `P(C_1 u ... u C_n)`:
/// `1 / sum_ij q_i q_j P(C_i n C_j) / (P(C_i) P(C_j))`.
pub fn weighted_union_lower_bound(
    pair_probs: &[Vec<f64>],
    marginals: &[f64],
    q: &[f64],
) -> Result<f64> {
    let n = marginals.len();
    if n == 0 || q.len() != n || pair_probs.len() != n || pair_probs.iter().any(|r| r.len() != n) {
        return Err(Error::Validation(
            "inconsistent event-system dimensions".into(),
        ));
    }
    // Marginals summed from atoms may overshoot 1 by rounding.
    if let Some(i) = marginals
        .iter()
        .position(|&m| !(m > 0.0 && m <= 1.0 + 1e-9))
    {
        return Err(Error::Validation(format!(
            "marginal P(C_{i}) = {} must lie in (0, 1]",
            marginals[i]
        )));
    }
    if q.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::Validation("weights must be positive".into()));
    }
    let total: f64 = q.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Validation(format!("weights sum to {total}, not 1")));
    }
    let mut second = 0.0;
    for i in 0..n {
        for j in 0..n {
            second += q[i] * q[j] * pair_probs[i][j] / (marginals[i] * marginals[j]);
        }
    }
    Ok(1.0 / second)
}

/// `1 + sum_{K>=1} a^K 2d (2d-1)^(K-1)` in closed form, infinite when the
/// ratio `a (2d - 1)` reaches 1.
pub fn expected_total_infections_bound(d: usize, p: f64, lambda: f64) -> Result<f64> {
    if d == 0 {
        return Err(Error::Validation("dimension must be positive".into()));
    }
    check_positive("infection rate lambda", lambda)?;
    check_probability("edge probability p", p)?;
    let a = step_probability(lambda, p);
    let ratio = a * (2.0 * d as f64 - 1.0);
    if ratio >= 1.0 {
        return Ok(f64::INFINITY);
    }
    Ok(1.0 + 2.0 * d as f64 * a / (1.0 - ratio))
}

/// `1 / ((2d - 1) p - 1)`: below this rate the expected number of
/// ever-infected vertices is finite, so the epidemic dies out.
pub fn rigorous_lower_bound(d: usize, p: f64) -> Result<f64> {
    if d == 0 {
        return Err(Error::Validation("dimension must be positive".into()));
    }
    check_probability("edge probability p", p)?;
    let denom = (2.0 * d as f64 - 1.0) * p - 1.0;
    if denom <= 0.0 {
        return Err(Error::Domain(format!(
            "(2d-1)p = {} <= 1: bound vacuous (critical rate infinite or formula inapplicable)",
            denom + 1.0
        )));
    }
    Ok(1.0 / denom)
}

/// Whether `path` is an infection path in the realisation `(env, clocks)`.
pub fn is_infection_path(
    env: &Environment,
    clocks: &ClockOracle,
    lambda: f64,
    path: &SelfAvoidingPath,
) -> Result<bool> {
    for w in path.vertices.windows(2) {
        if !env.edge_open(&w[0], &w[1])? {
            return Ok(false);
        }
        if clocks.u_lambda(&w[0], &w[1], lambda) >= clocks.t_removal(&w[0]) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Prefix tree over a set of paths, for evaluating all path events of one
/// realisation in a single pruned depth-first pass.
struct PathTrie {
    vertex: Vec<Vertex>,
    children: Vec<Vec<usize>>,
    /// Indices of input paths ending at each node.
    ends: Vec<Vec<usize>>,
}

impl PathTrie {
    fn build(paths: &[SelfAvoidingPath]) -> Result<Self> {
        let d = paths.first().map_or(1, |p| p.dim());
        let mut trie = PathTrie {
            vertex: vec![Vertex::origin(d)],
            children: vec![Vec::new()],
            ends: vec![Vec::new()],
        };
        for (idx, path) in paths.iter().enumerate() {
            if path.dim() != d {
                return Err(Error::Validation("paths mix dimensions".into()));
            }
            let mut node = 0;
            for v in &path.vertices[1..] {
                node = match trie.children[node].iter().find(|&&c| trie.vertex[c] == *v) {
                    Some(&c) => c,
                    None => {
                        let c = trie.vertex.len();
                        trie.vertex.push(v.clone());
                        trie.children.push(Vec::new());
                        trie.ends.push(Vec::new());
                        trie.children[node].push(c);
                        c
                    }
                };
            }
            trie.ends[node].push(idx);
        }
        Ok(trie)
    }

    fn mark(
        &self,
        env: &Environment,
        clocks: &ClockOracle,
        lambda: f64,
        node: usize,
        hits: &mut [bool],
    ) {
        let x = &self.vertex[node];
        let sender = clocks.sender(x);
        for &c in &self.children[node] {
            let y = &self.vertex[c];
            if env.open_between(x, y) && sender.e_unit(y) / lambda < sender.removal {
                for &i in &self.ends[c] {
                    hits[i] = true;
                }
                self.mark(env, clocks, lambda, c, hits);
            }
        }
    }
}

/// Monte Carlo over independent realisations: draw `i` uses environment seed
/// `derive_seed(master, "env", i)` and clock seed `derive_seed(master, "clock", i)`.
/// `visit` receives, per draw, the infection-path indicator of every input
/// path and folds it into an accumulator; accumulators are merged with `merge`.
pub fn fold_path_events<A, V, M>(
    paths: &[SelfAvoidingPath],
    lambda: f64,
    p: f64,
    draws: u64,
    master_seed: u64,
    init: A,
    visit: V,
    merge: M,
) -> Result<A>
where
    A: Clone + Send + Sync,
    V: Fn(&mut A, &[bool]) + Send + Sync,
    M: Fn(A, A) -> A + Send + Sync,
{
    check_positive("infection rate lambda", lambda)?;
    check_probability("edge probability p", p)?;
    let trie = PathTrie::build(paths)?;
    let d = trie.vertex[0].dim();
    let base = make_lattice_env(d, p, 0)?;
    let n = paths.len();
    Ok((0..draws)
        .into_par_iter()
        .fold(
            || (init.clone(), vec![false; n]),
            |(mut acc, mut hits), i| {
                hits.iter_mut().for_each(|h| *h = false);
                let env = base.with_seed(derive_seed(master_seed, "env", i));
                let clocks = ClockOracle::new(derive_seed(master_seed, "clock", i));
                trie.mark(&env, &clocks, lambda, 0, &mut hits);
                visit(&mut acc, &hits);
                (acc, hits)
            },
        )
        .map(|(acc, _)| acc)
        .reduce(|| init.clone(), &merge))
}

/// Per-path count of draws in which the path is an infection path.
pub fn path_event_counts(
    paths: &[SelfAvoidingPath],
    lambda: f64,
    p: f64,
    draws: u64,
    master_seed: u64,
) -> Result<Vec<u64>> {
    fold_path_events(
        paths,
        lambda,
        p,
        draws,
        master_seed,
        vec![0u64; paths.len()],
        |acc, hits| {
            for (a, &h) in acc.iter_mut().zip(hits) {
                *a += u64::from(h);
            }
        },
        |mut a, b| {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            a
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(c: &[i32]) -> Vertex {
        Vertex::from_coords(c)
    }

    fn path(pts: &[&[i32]]) -> SelfAvoidingPath {
        SelfAvoidingPath::new(pts.iter().map(|c| v(c)).collect()).unwrap()
    }

    #[test]
    fn enumeration_counts() {
        assert_eq!(enumerate_saw(1, 1).unwrap().len(), 2);
        assert_eq!(enumerate_saw(1, 2).unwrap().len(), 2);
        assert_eq!(enumerate_saw(2, 2).unwrap().len(), 12);
        // Known square-lattice SAW counts.
        assert_eq!(enumerate_saw(2, 3).unwrap().len(), 36);
        assert_eq!(enumerate_saw(2, 4).unwrap().len(), 100);
        assert_eq!(enumerate_saw(3, 4).unwrap().len(), 726);
    }

    #[test]
    fn enumeration_respects_bound_and_validity() {
        for d in 1..=3 {
            for k in 1..=5 {
                let all = enumerate_saw(d, k).unwrap();
                assert!(all.len() as f64 <= saw_count_bound(d, k));
                let distinct: std::collections::HashSet<_> = all.iter().collect();
                assert_eq!(distinct.len(), all.len());
                for p in &all {
                    assert!(SelfAvoidingPath::new(p.vertices().to_vec()).is_ok());
                }
            }
        }
    }

    #[test]
    fn enumeration_limit() {
        assert!(matches!(enumerate_saw(10, 10), Err(Error::Resource(_))));
    }

    #[test]
    fn enumeration_order_is_lexicographic_steps() {
        let first = &enumerate_saw(2, 1).unwrap();
        assert_eq!(first[0].end(), &v(&[-1, 0]));
        assert_eq!(first[1].end(), &v(&[1, 0]));
        assert_eq!(first[2].end(), &v(&[0, -1]));
    }

    #[test]
    fn invalid_paths_rejected() {
        assert!(SelfAvoidingPath::new(vec![v(&[1, 0])]).is_err());
        assert!(SelfAvoidingPath::new(vec![v(&[0, 0]), v(&[1, 1])]).is_err());
        assert!(SelfAvoidingPath::new(vec![v(&[0, 0]), v(&[1, 0]), v(&[0, 0])]).is_err());
    }

    #[test]
    fn path_probability_values() {
        assert_eq!(infection_path_probability(1, 1.0, 1.0).unwrap(), 0.5);
        assert_eq!(infection_path_probability(2, 1.0, 0.5).unwrap(), 0.0625);
        let near_one = infection_path_probability(3, 1e9, 1.0).unwrap();
        assert!(1.0 - near_one < 1e-8 && near_one <= 1.0);
        assert!(infection_path_probability(1, 0.0, 1.0).is_err());
    }

    #[test]
    fn collision_set_examples() {
        let l = path(&[&[0, 0], &[1, 0], &[1, 1]]);
        let same = collision_sets(&l, &l).unwrap();
        assert_eq!(same.d, BTreeSet::from([0, 1, 2]));
        assert_eq!(same.f, BTreeSet::from([0, 1]));

        let a = path(&[&[0, 0], &[1, 0]]);
        let b = path(&[&[0, 0], &[0, 1]]);
        let ab = collision_sets(&a, &b).unwrap();
        assert_eq!(ab.d, BTreeSet::from([0]));
        assert!(ab.f.is_empty());

        let s = path(&[&[0, 0], &[0, 1], &[1, 1]]);
        let ls = collision_sets(&l, &s).unwrap();
        assert_eq!(ls.d, BTreeSet::from([0, 2]));
        assert!(ls.f.is_empty());

        assert!(collision_sets(&a, &l).is_err());
    }

    #[test]
    fn pair_bound_examples() {
        let a = path(&[&[0, 0], &[1, 0]]);
        let b = path(&[&[0, 0], &[0, 1]]);
        assert!((pair_probability_bound(&a, &b, 1.0, 1.0).unwrap() - 0.5).abs() < 1e-15);

        // l = s: |F| = K, |D \ F| = 1 (the terminal index), so the bound is
        // P(A_l) * (2/p).
        for p in [1.0, 0.5] {
            let l = path(&[&[0, 0], &[1, 0], &[1, 1]]);
            let bound = pair_probability_bound(&l, &l, 1.0, p).unwrap();
            let exact = infection_path_probability(2, 1.0, p).unwrap();
            assert!((bound / exact - 2.0 / p).abs() < 1e-12);
        }
    }

    #[test]
    fn union_bound_single_event() {
        let b = weighted_union_lower_bound(&[vec![0.3]], &[0.3], &[1.0]).unwrap();
        assert!((b - 0.3).abs() < 1e-15);
        assert!(weighted_union_lower_bound(&[vec![0.0]], &[0.0], &[1.0]).is_err());
        assert!(weighted_union_lower_bound(&[vec![0.3]], &[0.3], &[0.5]).is_err());
    }

    #[test]
    fn union_bound_two_independent_halves() {
        // Four equally likely atoms; C1 = {0,1}, C2 = {0,2}; P(C1 u C2) = 3/4.
        let pair = vec![vec![0.5, 0.25], vec![0.25, 0.5]];
        let b = weighted_union_lower_bound(&pair, &[0.5, 0.5], &[0.5, 0.5]).unwrap();
        // sum = 1/4 (2 + 1 + 1 + 2) = 3/2
        assert!((b - 2.0 / 3.0).abs() < 1e-15);
        assert!(b <= 0.75);
    }

    #[test]
    fn expected_infections_examples() {
        let v = expected_total_infections_bound(3, 1.0, 0.1).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
        let lb = rigorous_lower_bound(3, 1.0).unwrap();
        assert!(expected_total_infections_bound(3, 1.0, lb)
            .unwrap()
            .is_infinite());
        assert!(expected_total_infections_bound(3, 1.0, 2.0 * lb)
            .unwrap()
            .is_infinite());
        let tiny = expected_total_infections_bound(5, 0.7, 1e-12).unwrap();
        assert!((tiny - 1.0).abs() < 1e-10);
    }

    #[test]
    fn expected_infections_matches_partial_sums() {
        let (d, p, lambda) = (4usize, 0.8, 0.15f64);
        let a = lambda * p / (lambda + 1.0);
        let partial: f64 = 1.0
            + (1..400)
                .map(|k| 2.0 * d as f64 * a * (a * (2.0 * d as f64 - 1.0)).powi(k - 1))
                .sum::<f64>();
        let closed = expected_total_infections_bound(d, p, lambda).unwrap();
        assert!(
            (partial - closed).abs() < 1e-10 * closed,
            "{partial} vs {closed}"
        );
    }

    #[test]
    fn lower_bound_examples() {
        assert_eq!(rigorous_lower_bound(3, 1.0).unwrap(), 0.25);
        assert!((rigorous_lower_bound(5, 0.5).unwrap() - 1.0 / 3.5).abs() < 1e-15);
        assert!(matches!(
            rigorous_lower_bound(1, 1.0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            rigorous_lower_bound(2, 0.3),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn monotonicity() {
        let mut prev = 0.0;
        for i in 1..50 {
            let l = i as f64 * 0.004;
            let v = expected_total_infections_bound(3, 1.0, l).unwrap();
            assert!(v >= prev);
            prev = v;
        }
        let mut prev = 0.0;
        for i in 1..=20 {
            let v = expected_total_infections_bound(3, i as f64 / 20.0, 0.1).unwrap();
            assert!(v >= prev);
            prev = v;
        }
        for d in 2..30 {
            assert!(
                rigorous_lower_bound(d + 1, 1.0).unwrap() < rigorous_lower_bound(d, 1.0).unwrap()
            );
            assert!(rigorous_lower_bound(d, 0.95).unwrap() > rigorous_lower_bound(d, 1.0).unwrap());
        }
    }

    #[test]
    fn trie_agrees_with_direct_evaluation() {
        let paths = enumerate_saw(2, 3).unwrap();
        let (lambda, p) = (1.0, 0.7);
        let trie = PathTrie::build(&paths).unwrap();
        for i in 0..200 {
            let env = make_lattice_env(2, p, derive_seed(5, "env", i)).unwrap();
            let clocks = ClockOracle::new(derive_seed(5, "clock", i));
            let mut hits = vec![false; paths.len()];
            trie.mark(&env, &clocks, lambda, 0, &mut hits);
            for (path, &h) in paths.iter().zip(&hits) {
                assert_eq!(h, is_infection_path(&env, &clocks, lambda, path).unwrap());
            }
        }
    }

    #[test]
    fn path_event_frequency_matches_formula() {
        let paths = enumerate_saw(2, 2).unwrap();
        let draws = 40_000;
        let counts = path_event_counts(&paths, 1.0, 1.0, draws, 3).unwrap();
        let q = infection_path_probability(2, 1.0, 1.0).unwrap();
        let se = (q * (1.0 - q) / draws as f64).sqrt();
        for c in counts {
            assert!((c as f64 / draws as f64 - q).abs() < 4.0 * se);
        }
    }
}

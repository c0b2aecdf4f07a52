//! Random environments: bond percolation on Z^d, evaluated lazily.
//!
//! A lattice environment never stores edges. The state of an edge is
//! `edge_uniform(e) < p`, where `edge_uniform` is a keyed hash of the seed and
//! the canonical edge key (lexicographically smaller endpoint, axis). Two
//! environments sharing a seed but differing in `p` are therefore coupled:
//! every edge open at the smaller `p` is open at the larger one.
//!
//! Finite environments hold an explicit edge list over integer-labelled
//! vertices embedded as one-dimensional coordinates. They exist so that the
//! engines can be checked against exact state-space computations.

use std::fmt;

use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{check_probability, Error, Result};
use crate::seed::KeyHasher;

const EDGE_DOMAIN: u64 = 0x6564_6765_5f78_0001;

/// A point of Z^d.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vertex(pub SmallVec<[i32; 8]>);

impl Vertex {
    pub fn origin(d: usize) -> Self {
        Vertex(SmallVec::from_elem(0, d))
    }

    pub fn from_coords(coords: &[i32]) -> Self {
        Vertex(SmallVec::from_slice(coords))
    }

    /// The elementary vector e_axis (0-based axis).
    pub fn unit(d: usize, axis: usize) -> Self {
        let mut v = Self::origin(d);
        v.0[axis] = 1;
        v
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[i32] {
        &self.0
    }

    pub fn is_origin(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    pub fn l1_distance(&self, other: &Vertex) -> u64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (i64::from(*a) - i64::from(*b)).unsigned_abs())
            .sum()
    }

    /// `self + sign * e_axis`.
    pub fn step(&self, axis: usize, sign: i32) -> Vertex {
        let mut v = self.clone();
        v.0[axis] += sign;
        v
    }

    pub fn add(&self, other: &Vertex) -> Vertex {
        Vertex(
            self.0
                .iter()
                .zip(other.0.iter())
                .map(|(a, b)| a + b)
                .collect(),
        )
    }
}

impl fmt::Debug for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

impl From<Vec<i32>> for Vertex {
    fn from(v: Vec<i32>) -> Self {
        Vertex(SmallVec::from_vec(v))
    }
}

/// An undirected nearest-neighbour edge of Z^d in canonical order (`a < b`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    a: Vertex,
    b: Vertex,
}

impl Edge {
    pub fn new(x: Vertex, y: Vertex) -> Result<Self> {
        if x.dim() != y.dim() || x.l1_distance(&y) != 1 {
            return Err(Error::Validation(format!(
                "{x:?} and {y:?} are not nearest neighbours"
            )));
        }
        Ok(if x < y {
            Edge { a: x, b: y }
        } else {
            Edge { a: y, b: x }
        })
    }

    pub fn endpoints(&self) -> (&Vertex, &Vertex) {
        (&self.a, &self.b)
    }

    /// Axis along which the edge runs.
    pub fn axis(&self) -> usize {
        self.a
            .0
            .iter()
            .zip(self.b.0.iter())
            .position(|(p, q)| p != q)
            .expect("endpoints differ")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Mode {
    Lattice,
    Finite(FiniteGraph),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteGraph {
    vertices: Vec<i32>,
    adjacency: Vec<Vec<i32>>,
    edges: FxHashSet<(i32, i32)>,
}

impl FiniteGraph {
    pub fn vertices(&self) -> &[i32] {
        &self.vertices
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    fn index_of(&self, v: i32) -> Option<usize> {
        self.vertices.binary_search(&v).ok()
    }

    fn contains(&self, x: i32, y: i32) -> bool {
        self.edges.contains(&(x.min(y), x.max(y)))
    }
}

/// A percolation configuration, immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    d: usize,
    p: f64,
    seed: u64,
    mode: Mode,
}

pub fn make_lattice_env(d: usize, p: f64, seed: u64) -> Result<Environment> {
    if d < 1 {
        return Err(Error::Validation("dimension must be at least 1".into()));
    }
    check_probability("edge probability p", p)?;
    Ok(Environment {
        d,
        p,
        seed,
        mode: Mode::Lattice,
    })
}

/// Finite graph over integer-labelled vertices; vertex 0 is the origin and is
/// always present, even when it has no incident edge.
pub fn make_finite_env(adjacency: &[(i32, i32)]) -> Result<Environment> {
    let mut edges = FxHashSet::default();
    let mut vertices = vec![0];
    for &(x, y) in adjacency {
        if x == y {
            return Err(Error::Validation(format!("self-loop at vertex {x}")));
        }
        if !edges.insert((x.min(y), x.max(y))) {
            return Err(Error::Validation(format!("duplicate edge {x}-{y}")));
        }
        vertices.push(x);
        vertices.push(y);
    }
    vertices.sort_unstable();
    vertices.dedup();
    let mut adj = vec![Vec::new(); vertices.len()];
    let index = |v: i32| vertices.binary_search(&v).expect("listed vertex");
    for &(x, y) in adjacency {
        adj[index(x)].push(y);
        adj[index(y)].push(x);
    }
    for list in &mut adj {
        list.sort_unstable();
    }
    Ok(Environment {
        d: 1,
        p: 1.0,
        seed: 0,
        mode: Mode::Finite(FiniteGraph {
            vertices,
            adjacency: adj,
            edges,
        }),
    })
}

impl Environment {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn mode(&self) -> &Mode {
        &self.mode
    }

    pub fn is_lattice(&self) -> bool {
        matches!(self.mode, Mode::Lattice)
    }

    pub fn origin(&self) -> Vertex {
        Vertex::origin(self.d)
    }

    /// Same seed, different edge probability: the coupled environment.
    pub fn with_p(&self, p: f64) -> Result<Environment> {
        check_probability("edge probability p", p)?;
        Ok(Environment { p, ..self.clone() })
    }

    pub fn with_seed(&self, seed: u64) -> Environment {
        Environment {
            seed,
            ..self.clone()
        }
    }

    fn check_vertex(&self, x: &Vertex) -> Result<()> {
        if x.dim() != self.d {
            return Err(Error::Validation(format!(
                "vertex {x:?} has dimension {}, environment has {}",
                x.dim(),
                self.d
            )));
        }
        if let Mode::Finite(g) = &self.mode {
            if g.index_of(x.0[0]).is_none() {
                return Err(Error::Validation(format!(
                    "vertex {x:?} not in finite graph"
                )));
            }
        }
        Ok(())
    }

    /// Uniform variable attached to the lattice edge with lower endpoint
    /// `lower` along `axis`. The edge is open iff this is below `p`.
    #[inline]
    pub fn edge_uniform_key(&self, lower: &[i32], axis: usize) -> f64 {
        KeyHasher::new(self.seed, EDGE_DOMAIN)
            .absorb_coords(lower)
            .absorb(axis as u64)
            .uniform()
    }

    pub fn edge_uniform(&self, e: &Edge) -> f64 {
        self.edge_uniform_key(e.a.coords(), e.axis())
    }

    pub fn edge_open(&self, x: &Vertex, y: &Vertex) -> Result<bool> {
        self.check_vertex(x)?;
        self.check_vertex(y)?;
        match &self.mode {
            Mode::Lattice => {
                let e = Edge::new(x.clone(), y.clone())?;
                Ok(self.p >= 1.0 || self.edge_uniform(&e) < self.p)
            }
            Mode::Finite(g) => {
                if x == y {
                    return Err(Error::Validation(format!("{x:?} paired with itself")));
                }
                Ok(g.contains(x.0[0], y.0[0]))
            }
        }
    }

    /// Openness of a pair already known to be nearest neighbours (lattice)
    /// or listed vertices (finite); skips validation.
    pub fn open_between(&self, x: &Vertex, y: &Vertex) -> bool {
        match &self.mode {
            Mode::Lattice => {
                if self.p >= 1.0 {
                    return true;
                }
                let axis = x
                    .coords()
                    .iter()
                    .zip(y.coords())
                    .position(|(a, b)| a != b)
                    .expect("distinct neighbours");
                debug_assert_eq!(x.l1_distance(y), 1);
                let lower = if x.coords()[axis] < y.coords()[axis] {
                    x
                } else {
                    y
                };
                self.edge_uniform_key(lower.coords(), axis) < self.p
            }
            Mode::Finite(g) => g.contains(x.0[0], y.0[0]),
        }
    }

    #[inline]
    fn open_along(&self, x: &[i32], axis: usize, sign: i32, scratch: &mut [i32]) -> bool {
        if self.p >= 1.0 {
            return true;
        }
        if sign > 0 {
            self.edge_uniform_key(x, axis) < self.p
        } else {
            scratch.copy_from_slice(x);
            scratch[axis] -= 1;
            self.edge_uniform_key(scratch, axis) < self.p
        }
    }

    /// Appends the open neighbours of `x` to `out`. Lattice neighbours are
    /// produced in the order (axis 0, -), (axis 0, +), (axis 1, -), ...
    pub fn open_neighbors_into(&self, x: &Vertex, out: &mut Vec<Vertex>) {
        match &self.mode {
            Mode::Lattice => {
                let mut scratch: SmallVec<[i32; 8]> = SmallVec::from_slice(x.coords());
                for axis in 0..self.d {
                    for sign in [-1, 1] {
                        if self.open_along(x.coords(), axis, sign, &mut scratch) {
                            out.push(x.step(axis, sign));
                        }
                    }
                }
            }
            Mode::Finite(g) => {
                if let Some(i) = g.index_of(x.0[0]) {
                    out.extend(g.adjacency[i].iter().map(|&y| Vertex::from_coords(&[y])));
                }
            }
        }
    }

    pub fn open_neighbors(&self, x: &Vertex) -> Vec<Vertex> {
        let mut out = Vec::new();
        self.open_neighbors_into(x, &mut out);
        out
    }

    pub fn open_degree(&self, x: &Vertex) -> Result<usize> {
        self.check_vertex(x)?;
        Ok(match &self.mode {
            Mode::Lattice => {
                let mut scratch: SmallVec<[i32; 8]> = SmallVec::from_slice(x.coords());
                (0..self.d)
                    .flat_map(|a| [(a, -1), (a, 1)])
                    .filter(|&(a, s)| self.open_along(x.coords(), a, s, &mut scratch))
                    .count()
            }
            Mode::Finite(g) => g.index_of(x.0[0]).map_or(0, |i| g.adjacency[i].len()),
        })
    }
}

//! SIR epidemics on bond-percolation clusters of the integer lattice.
//!
//! The crate is organised around the graphical representation of the
//! process: a lazily evaluated percolation environment ([`env`]), per-vertex
//! removal clocks and per-directed-pair transmission clocks
//! ([`epidemics::ClockOracle`]), and several engines that consume them.
//! On top of that sit the exact combinatorics of self-avoiding infection
//! paths ([`paths`]), the structured random-walk pair used for upper bounds
//! ([`walks`]), the 3x3 matrix series machinery ([`bounds`]) and the
//! critical-rate estimation protocol ([`experiments`]).

pub mod bounds;
pub mod cli;
pub mod env;
pub mod epidemics;
pub mod error;
pub mod experiments;
pub mod paths;
pub mod seed;
pub mod walks;

pub use error::{Error, Result};

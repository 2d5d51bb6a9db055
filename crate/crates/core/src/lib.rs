//! Fisher-information sloppiness analysis for quantum simulation models.
//!
//! The crate builds parameterized many-body Hamiltonians, computes
//! equilibrium measurement distributions and their exact parameter
//! derivatives, assembles the Fisher information matrix and bounds its rank
//! with lattice symmetries. A free-fermion backend handles transverse-field
//! Ising chains far beyond dense reach.

pub mod equilibrium;
pub mod error;
pub mod fim;
pub mod freefermion;
pub mod linalg;
pub mod models;
pub mod operators;
pub mod rng;
pub mod symmetry;

pub use error::{Error, Result};

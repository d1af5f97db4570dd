//! Random conductance models on Z^d boxes and the pre-Sierpinski gasket.
//!
//! The crate samples environments, runs the reversible random walk on the
//! base-point cluster, computes exact heat kernels by iterated sparse
//! transitions, and evaluates the iterated-logarithm functionals
//! `Phi(n) = n^{1/beta} (log log n)^{1 - 1/beta}` and
//! `psi(n) = n^{1/beta} (log log n)^{-1/beta}` on simulated paths.

pub mod config;
pub mod env;
pub mod error;
pub mod graph;
pub mod harness;
pub mod kernel;
pub mod lil;
pub mod rng;
pub mod stats;
pub mod walk;

pub use error::{Error, ErrorKind, Result};

//! Fourth-order BGK lattice Boltzmann schemes for linear hyperbolic equations
//! `d_t phi + u . grad phi = R` on DdQ(2d^2+1) lattices, with entropy and von Neumann
//! stability analysis and convergence experiments.

pub mod boundary;
pub mod config;
pub mod entropy;
pub mod equilibrium;
pub mod harness;
pub mod error;
pub mod lattice;
pub mod solver;
pub mod stability;

pub use error::{Error, Result};

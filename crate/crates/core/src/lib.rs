//! Numerical laboratory for Hofer geometry on two-dimensional surfaces.

pub mod capacity;
pub mod cli;
pub mod quasicyl;
pub mod expr;
pub mod flatness;
pub mod flow;
pub mod hamiltonian;
pub mod hofer;
pub mod orbits;
pub mod surface;
pub mod util;

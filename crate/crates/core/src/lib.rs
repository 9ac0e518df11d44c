//! Numerical laboratory for the q-TASEP: exact simulation, q-series special
//! functions, contour quadrature, and several independent evaluations of the
//! q-Laplace transform `E[1/(ζ q^{λ_N};q)_inf]`.

pub mod exact;
pub mod fredholm;
pub mod identities;
pub mod process;
pub mod qlap;
pub mod qseries;
pub mod quadrature;

pub use process::{EmpiricalDist, ModelParams, ParticleConfig};
pub use qlap::{Method, QLapResult};
pub use qseries::QPochConfig;

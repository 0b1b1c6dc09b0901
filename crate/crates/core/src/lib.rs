//! Numerical laboratory for quantitative stochastic homogenization of
//! divergence-form elliptic equations.
//!
//! The crate samples stationary random coefficient fields on boxes, solves
//! the massive corrector equation `T⁻¹φ − ∇·A(ξ + ∇φ) = 0` with homogeneous
//! Dirichlet data on a truncated domain, turns the solutions into estimates
//! of the homogenized coefficients and runs Monte Carlo scaling studies on
//! them.
//!
//! Module map:
//!
//! * [`ensemble`] – random coefficient laws and reproducible sampling.
//! * [`grid`] – structured-grid containers and discrete calculus.
//! * [`solver`] – matrix-free finite-volume operator and Krylov solves.
//! * [`estimator`] – energy estimates, moments, extrapolation.
//! * [`green`] – empirical probes of Green-function decay.
//! * [`sgcheck`] – brute-force spectral-gap checks on enumerable ensembles.
//! * [`study`] – Monte Carlo orchestration and slope fitting.

pub mod ensemble;
pub mod error;
pub mod estimator;
pub mod green;
pub mod grid;
pub mod sgcheck;
pub mod solver;
pub mod stats;
pub mod study;
pub mod tensor;

pub use error::{Error, Result};
pub use grid::{BoxDomain, CoefficientField, FaceField, Grid, GridFunction};
pub use tensor::{Tensor, Vector};

/// Version string recorded in study manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

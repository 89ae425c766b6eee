//! Simulation and Bayesian inference for point processes built by thinning
//! and colouring a base process.
//!
//! * [`pattern`]: domains, point patterns, Poisson samplers and densities
//! * [`gp`]: kernels, incremental Cholesky factors, GP conditionals
//! * [`colouring`]: joint densities of colour-split processes and an
//!   enumeration oracle on discretized spaces
//! * [`sgcp`]: the sigmoidal Gaussian Cox process and its thinned-point samplers
//! * [`mtsgcp`]: the multitype extension with Gibbs inference and cross-PCFs
//! * [`matern3`]: Matern type III thinning, densities and conditional sampling
//! * [`io`]: CSV and JSON-lines persistence

pub mod colouring;
pub mod error;
pub mod gp;
pub mod io;
pub mod matern3;
pub mod mtsgcp;
pub mod pattern;
pub mod rng;
pub mod sgcp;
pub mod stats;

pub use error::{Error, Result};
pub use pattern::{Domain, MarkedPattern, Marks, Point, PointPattern};
pub use rng::Rng;

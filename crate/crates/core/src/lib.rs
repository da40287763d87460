//! Linear-quadratic mean-field control.
//!
//! The library synthesizes the optimal affine feedback of an LQ mean-field
//! control problem through a cascade of two Riccati equations, propagates
//! the controlled measure both deterministically (continuity equation, by
//! particle characteristics) and viscously (advection-diffusion, by
//! stochastic ensembles), and measures the vanishing-viscosity convergence
//! of trajectories and costs in Wasserstein-2 distance.
//!
//! Entry points:
//! - [`problem::ProblemSpec`] describes a problem instance (loadable from JSON),
//! - [`synthesis::synthesize`] produces the feedback gains,
//! - [`dynamics`] propagates particle clouds and Gaussians,
//! - [`metrics`] evaluates W2 distances and the cost functional,
//! - [`lab::epsilon_sweep`] runs the full vanishing-viscosity experiment.
//!
//! See the `examples/` directory for one runnable program per capability.

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod lab;
pub mod matkit;
pub mod metrics;
pub mod problem;
pub mod rng;
pub mod synthesis;

pub use error::Error;
pub use matkit::Mat;
pub use problem::ProblemSpec;
pub use synthesis::{AffineFeedback, SynthesisSolution, TimeGrid};

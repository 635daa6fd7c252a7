//! Benchmark for the quality of uncertainty estimates from small neural
//! network classifiers and a Gaussian-process baseline.
//!
//! The crate simulates a warped two-Gaussian classification problem whose
//! class posterior is known exactly, fits six uncertainty methods to it, and
//! scores their credible intervals by frequentist coverage and width and
//! their point predictions by expected calibration error.
//!
//! Modules, bottom up:
//!
//! - [`simulator`]: the two-class generator, its analytic class posterior and grids.
//! - [`network`]: the fixed small MLP with hand-written backprop and a MAP trainer.
//! - [`hmc`]: Hamiltonian Monte Carlo with dual-averaged step size over any
//!   [`hmc::LogDensity`].
//! - [`methods`]: BNN-MCMC, mean-field VI, bootstrap, deep ensembles and MC dropout.
//! - [`gp`]: GP classifier with HMC over whitened latent values.
//! - [`metrics`]: credible intervals, coverage, width, ECE, accuracy and high confidence sets.
//! - [`harness`]: replicate study orchestration, summaries, tables and grid export.
//!
//! See `examples/` for one runnable program per capability.

pub mod error;
pub mod gp;
pub mod harness;
pub mod hmc;
pub mod methods;
pub mod metrics;
pub mod network;
pub mod numeric;
pub mod rng;
pub mod samples;
pub mod simulator;

pub use error::{Error, Result};
pub use samples::{MethodTag, ProbabilitySampleSet};

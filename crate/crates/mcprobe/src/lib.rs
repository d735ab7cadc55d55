//! Simulation and analysis toolkit for molecular-communication systems
//! that detect signaling molecules indirectly through a chemical probe.
//!
//! Signaling molecules (A) released by a transmitter react with probe
//! molecules (B) in the environment, A + B <-> C, and a transparent
//! spherical receiver counts the product molecules (C). The crate solves
//! the coupled nonlinear reaction-diffusion system by operator splitting
//! on an axisymmetric grid, computes receiver statistics, and evaluates
//! threshold-detector bit error rates both analytically and by
//! Monte-Carlo simulation.
//!
//! Modules:
//! - [`scenario`]: domain types, grids, and configuration validation
//! - [`numerics`]: scaled Bessel function, Poisson utilities, RNG streams
//! - [`reaction`]: exact reaction-only step at every grid node
//! - [`diffusion`]: precomputed convolution kernels and the diffusion step
//! - [`solver`]: the split-step outer loop and closed-form special case
//! - [`detection`]: receiver statistics, ISI tables, threshold BER
//! - [`oracle`]: independent ODE and stochastic verifiers
//! - [`config`]: INI-style scenario files and overrides
//!
//! With the default `parallel` feature, data-parallel inner loops (node
//! updates, ISI patterns, Monte-Carlo batches, SSA ensembles) run on
//! rayon; results are bit-identical to the sequential fallback.

pub mod config;
pub mod detection;
pub mod diffusion;
pub mod error;
pub mod numerics;
pub mod oracle;
pub mod reaction;
pub mod scenario;
pub mod solver;

pub use error::{Error, Result};

//! Nonlinear stochastic differential equations with q-Gaussian stationary
//! densities and power-law spectral densities, and a double-stochastic model
//! of one-minute financial returns built on top of them.
//!
//! Module map:
//!
//! - [`qgaussian`]: q-exponential, q-Gaussian density, CDF, sampling and the
//!   `(q, sigma_q) <-> (lambda, r0)` transforms.
//! - [`sde`]: drift/diffusion of the simple and two-power SDEs, the
//!   variable-step difference scheme, trajectories and windowed integration.
//! - [`spectral`]: averaged periodograms, closed-form spectrum, power-law
//!   fits, histogram densities, moving averages and correlation.
//! - [`tail`]: Hill tail-index estimation.
//! - [`returns`]: the composed return model, normalization, empirical
//!   decomposition and tick aggregation.
//! - [`io`]: trajectory, series and spectrum file formats.

pub mod error;
pub mod io;
pub mod qgaussian;
pub mod returns;
pub mod sde;
pub mod series;
pub mod spectral;
pub mod tail;

pub use error::{Error, Result};
pub use qgaussian::{exp_q, QGaussian, QGaussianParams};
pub use returns::{ReturnModelParams, Modulation};
pub use sde::{SdeParams, SolverConfig, StopRule, Trajectory};
pub use series::{Provenance, ReturnSeries};
pub use spectral::{PowerLawFit, SpectrumEstimate, Taper};

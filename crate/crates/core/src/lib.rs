//! Grid-based nonlinear filters for scalar diffusions observed linearly in
//! Gaussian noise: a Fokker-Planck filter with exact Bayes updates, a
//! deterministic density form of the mean-field ensemble Kalman filter and two
//! Gaussian-projection variants, plus the stochastic EnKF, the Kalman filter and
//! a bootstrap particle filter as baselines.

// Guards are written `!(x > 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ensemble;
pub mod error;
pub mod expm;
pub mod filters;
pub mod fokker_planck;
pub mod grid;
pub mod metrics;
pub mod quadrature;
pub mod rng;
pub mod sde;
pub mod updates;

pub use error::{Error, Result};
pub use grid::{DensityField, Grid1D};
pub use quadrature::MomentPair;

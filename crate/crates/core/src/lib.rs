//! Downlink coverage probability and average achievable rate for LEO
//! satellite constellations.
//!
//! Satellites are modeled as a binomial point process (BPP) on a sphere at
//! fixed altitude. The user associates with the nearest satellite, and
//! co-channel satellites above the horizon interfere.
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`geometry`] | user-to-satellite distance distributions |
//! | [`visibility`] | number of visible co-channel interferers |
//! | [`interference`] | Laplace transform of the aggregate interference |
//! | [`quadrature`] | adaptive Gauss-Kronrod and Fourier inversion |
//! | [`metrics`] | coverage probability and average rate |
//! | [`simkit`] | Monte Carlo simulator (BPP and Walker constellations) |
//! | [`neff`] | effective number of satellites fitting |
//!
//! All quantities are SI (metres, watts). Path loss is `(r / d_ref)^-alpha`
//! with a configurable reference distance, see [`interference::PathLoss`].

#![allow(clippy::excessive_precision, clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geometry;
pub mod interference;
pub mod metrics;
pub mod neff;
pub mod quadrature;
pub mod simkit;
pub mod visibility;

pub use error::{Error, Result};
pub use geometry::{Distance, GeometryParams};
pub use interference::{FadingModel, LaplaceNormalization, PathLoss};
pub use metrics::{Decomposition, RadioParams, ScenarioConfig, SinrThreshold};
pub use quadrature::QuadratureSpec;
pub use visibility::NetworkParams;

/// Mean Earth radius used throughout the examples, in metres.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

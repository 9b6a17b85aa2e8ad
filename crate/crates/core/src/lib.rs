//! Complex-time continuation of real-analytic ODE flows.
//!
//! The crate integrates holomorphic vector fields along paths in complex time, samples the
//! resulting Riemann surfaces, transforms imaginary-time trajectories into signed-frequency
//! spectra and classifies initial points by the high-frequency content of those spectra:
//! trajectories that start off a slow invariant manifold carry the fast rates of the system
//! as imaginary-time oscillations, while trajectories on the manifold do not.
//!
//! All numerics are generic over [`Real`] (`f32` or `f64`); the aliases at the crate root
//! fix the scalar to `f64`.

// `!(x > y)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod detect;
pub mod error;
pub mod flow;
pub mod linalg;
pub mod models;
pub mod scalar;
pub mod spectral;
pub mod validation;

pub use error::{Error, Result};
pub use scalar::{Real, C};

pub type Complex64 = C<f64>;
pub type Model = models::ModelSpec<f64>;
pub type Model32 = models::ModelSpec<f32>;
pub type Trajectory64 = flow::Trajectory<f64>;
pub type Trajectory32 = flow::Trajectory<f32>;
pub type Surface64 = flow::SurfaceGrid<f64>;
pub type Tolerances64 = flow::Tolerances<f64>;
pub type Spectrum64 = spectral::SpectrumEstimate<f64>;
pub type Spectrum32 = spectral::SpectrumEstimate<f32>;
pub type DetectionConfig64 = detect::DetectionConfig<f64>;
pub type DetectionReport64 = detect::DetectionReport<f64>;

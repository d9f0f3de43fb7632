//! Optimal transport on dyadic path space, at desk scale.
//!
//! The crate has five parts:
//!
//! - [`paths`]: piecewise-linear paths on dyadic grids, Brownian sampling,
//!   projection operators, Cameron-Martin and sup norms.
//! - [`norms`]: the Sobolev-type path norm `||.||_{k,gamma}`, its embedding
//!   constant and gradient calculus, and `l^p` norms on vectors.
//! - [`transport`]: discrete Monge-Kantorovich solvers (exact transportation
//!   simplex and entropic Sinkhorn), Kantorovich potentials, c-transforms,
//!   cyclical-monotonicity checks, and Monge-map extraction/inversion.
//! - [`rays`]: transport rays, transport sets, endpoints, and non-branching
//!   diagnostics for metric (norm) costs.
//! - [`entropy`]: grid-based relative entropy against a Gaussian reference,
//!   displacement interpolation, convexity-deficit verification, and the
//!   projection / large-`p` limit experiments.
//!
//! All numeric code is generic over the scalar type through [`Scalar`]
//! (`f32` or `f64`); the `*64` aliases below fix the common `f64`
//! instantiation.

pub mod entropy;
pub mod error;
pub mod norms;
pub mod paths;
pub mod quadrature;
pub mod rays;
pub mod scalar;
pub mod transport;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Library version, embedded in experiment reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub type DyadicPath64 = paths::DyadicPath<f64>;
pub type SobolevParams64 = norms::SobolevParams<f64>;
pub type DiscreteMeasure64 = transport::DiscreteMeasure<f64>;
pub type CostSpec64 = transport::CostSpec<f64>;
pub type TransportPlan64 = transport::TransportPlan<f64>;
pub type DualPotentials64 = transport::DualPotentials<f64>;
pub type RayGraph64 = rays::RayGraph<f64>;
pub type GridSpec64 = entropy::GridSpec<f64>;
pub type Histogram64 = entropy::Histogram<f64>;
pub type GaussianReference64 = entropy::GaussianReference<f64>;

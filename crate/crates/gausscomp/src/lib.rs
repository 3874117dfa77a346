//! Monte Carlo toolkit for Gaussian comparison principles.
//!
//! The crate estimates the interpolating free-energy functional
//! `psi(t) = E log Z(t) / (beta sqrt n)` (and its general-norm and lifted
//! relatives) along the path that carries a Gaussian matrix model at `t = 1`
//! to a decoupled surrogate at `t = 0`. Derivatives along the path are
//! estimated by two independent formulas and integrated back into curves.
//! The large-`beta` max-form inequalities of Slepian and Gordon type,
//! together with their lifted forms, are checked statistically.
//!
//! The numerical core is generic over the scalar type through [`Real`];
//! `f64` aliases are provided at the crate root for everyday use.

pub mod cli;
pub mod error;
pub mod estimators;
pub mod fixtures;
pub mod limits;
pub mod model;
pub mod quadrature;
pub mod reproduce;
pub mod sampling;
pub mod scalar;

pub use error::{Error, Result};
pub use estimators::{DerivativeRoute, Identity};
pub use model::{Sign, Variant};
pub use sampling::{Estimate, SeedPlan};
pub use scalar::Real;

/// Vector set in double precision.
pub type VectorSet = model::VectorSet<f64>;
/// Vector set in single precision.
pub type VectorSetF32 = model::VectorSet<f32>;
/// Model parameters in double precision.
pub type ModelParams = model::ModelParams<f64>;
/// Model parameters in single precision.
pub type ModelParamsF32 = model::ModelParams<f32>;
/// One replication's Gaussian draw in double precision.
pub type ReplicationDraw = model::ReplicationDraw<f64>;
/// Per-draw interpolation state in double precision.
pub type InterpolationState = model::InterpolationState<f64>;

//! Targeted estimators of principally stratified treatment effects in
//! crossover trials.
//!
//! Estimators are generic over the scalar type ([`Real`], implemented for
//! `f32` and `f64`); the `*64` aliases below fix it to `f64`.

pub mod continuous;
pub mod error;
pub mod io;
pub mod linalg;
pub mod model;
pub mod nuisance;
pub mod quadrature;
pub mod scalar;
pub mod sim;
#[cfg(test)]
pub(crate) mod testutil;
pub mod tmle;
pub mod two_phase;

pub use error::{Error, Result};
pub use model::{
    arm_of, pseudo_outcome, validate_dataset, Bandwidth, BiomarkerKind, Component, ContrastKind, ContrastReport,
    Dataset, Diagnostics, EstimatorMode, Observation, PsiEstimate, TargetSpec, Violation,
};
pub use scalar::Real;

pub type Observation64 = Observation<f64>;
pub type Dataset64 = Dataset<f64>;
pub type TargetSpec64 = TargetSpec<f64>;
pub type PsiEstimate64 = PsiEstimate<f64>;
pub type ContrastReport64 = ContrastReport<f64>;

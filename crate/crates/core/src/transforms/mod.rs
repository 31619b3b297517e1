//! Reductions to the static-chamber problem: time augmentation, moving
//! boundaries and curved boundaries.

mod curved;
mod straighten;
mod time;

use thiserror::Error;

use crate::geometry::GeometryError;
use crate::group::GroupError;
use crate::sde::SdeError;

pub use curved::{transform_curved, Diffeomorphism, HessianField, INVERSION_TOLERANCE};
pub use straighten::{
    moving_boundary_model, moving_boundary_model_with, straighten_boundary, BoundaryMotion, MatrixPath, MovingBoundary, Straightening, MAX_CONDITION,
};
pub use time::{augment_time, TimeDependentModel, TimeField};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransformError {
    #[error("boundary matrix is singular at t = {t} (condition number {condition:e})")]
    SingularBoundary { t: f64, condition: f64 },
    #[error("inverse map misses by {error:e} at {point:?}")]
    InversionFailure { point: Vec<f64>, error: f64 },
    #[error("jacobian disagrees with finite differences by {error:e} at {point:?}")]
    JacobianMismatch { point: Vec<f64>, error: f64 },
    #[error("hessian disagrees with finite differences by {error:e} at {point:?}")]
    HessianMismatch { point: Vec<f64>, error: f64 },
    #[error("{what}: expected {expected}, got {got}")]
    Shape { what: &'static str, expected: usize, got: usize },
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Sde(#[from] SdeError),
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

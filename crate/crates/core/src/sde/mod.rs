//! Diffusion models, coefficient symmetrization and the Euler–Maruyama simulator.

mod engine;
pub mod models;
pub mod rng;
mod symmetrize;

use thiserror::Error;

use crate::geometry::GeometryError;
use crate::group::GroupError;

pub(crate) use engine::{check_excluded, check_start, map_paths, run_path, Flow, PathStatus, Workspace};
pub use engine::{simulate, Observer, SimulationOutput, SimulationPlan, MAX_EXCLUDED_FRACTION};
pub use models::{arithmetic_bm, brownian, cev, gbm, heston, sabr, DiffusionModel, Field, HestonParams, SabrParams};
pub(crate) use symmetrize::probe_autonomous_factors;
pub use symmetrize::{symmetrize_sv, Branch, SymmetrizedCoefficients, SymmetrizedModel};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SdeError {
    #[error("unsupported dimension {0}")]
    BadDimension(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter `{0}`")]
    InvalidParameter(String),
    #[error("invalid simulation plan: {0}")]
    InvalidPlan(String),
    #[error("start point is not finite")]
    NonFiniteStart,
    #[error("{excluded} of {paths} paths became non-finite")]
    TooManyExcluded { excluded: usize, paths: usize },
    #[error("model structure: {0}")]
    Structure(String),
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Anything the simulator can step: coefficient evaluation into caller buffers.
pub trait Dynamics: Sync {
    fn dim(&self) -> usize;

    fn label(&self) -> &str;

    /// Coordinate advanced as elapsed time rather than integrated.
    fn clock(&self) -> Option<usize> {
        None
    }

    /// Length of the scratch buffer `eval` needs.
    fn scratch_len(&self) -> usize {
        0
    }

    /// Writes the row-major diffusion matrix and the drift at `x`.
    /// Returns `false` if `x` fell in a coverage gap.
    fn eval(&self, x: &[f64], sigma: &mut [f64], mu: &mut [f64], scratch: &mut [f64]) -> bool;
}

//! Barrier estimators, their path-dependent oracle, and closed-form references.
//!
//! All estimators return undiscounted expectations.

mod closed_form;
mod estimators;
mod payoff;

use thiserror::Error;

use crate::geometry::GeometryError;
use crate::group::GroupError;
use crate::sde::SdeError;
use crate::transforms::TransformError;

pub use closed_form::{black_scholes_call, closed_form_dao_call, normal_cdf, survival_probability_bm};
pub use estimators::{
    double_barrier_family, double_barrier_model, knockout_decomposition, price_barrier_oracle, price_barrier_symmetrized, price_double_barrier,
    price_moving_barrier_oracle, price_moving_barrier_symmetrized, price_plain, price_symmetrized, Decomposition, Monitoring,
};
pub use payoff::{Payoff, PayoffFn, DEFAULT_CAP};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PricingError {
    #[error("start point is not strictly inside the chamber")]
    StartOutside,
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Sde(#[from] SdeError),
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Transform(#[from] TransformError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(paths)`.
    pub stderr: f64,
    /// Paths that contributed.
    pub paths: usize,
    pub gap_hits: u64,
    pub excluded_paths: usize,
    /// Payoff values clamped to the payoff bound.
    pub capped: u64,
}

impl Estimate {
    /// An estimate is trusted only if no path fell outside the enumerated chambers.
    pub fn trusted(&self) -> bool {
        self.gap_hits == 0
    }

    pub fn combined_stderr(&self, other: &Estimate) -> f64 {
        self.stderr.hypot(other.stderr)
    }
}

/// Step-halving bias estimate `|est(N) - est(N/2)|`.
pub fn richardson_bias(fine: &Estimate, coarse: &Estimate) -> f64 {
    (fine.mean - coarse.mean).abs()
}

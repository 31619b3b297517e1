//! Diffusion models `dX = σ(X) dW + μ(X) dt` and the shipped model library.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{Dynamics, SdeError};
use crate::geometry::MAX_DIM;

/// `(state, out)`: writes a drift vector, or a row-major `d x d` diffusion matrix.
pub type Field = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// A time-homogeneous diffusion with pure coefficient evaluators.
///
/// When `clock` is set, that coordinate is treated as elapsed time: the
/// simulator advances it as `x0 + n * dt` instead of integrating it, and the
/// matching noise component is never drawn, so the corresponding column of
/// the diffusion matrix has no effect.
#[derive(Clone)]
pub struct DiffusionModel {
    dim: usize,
    drift: Field,
    diffusion: Field,
    label: String,
    clock: Option<usize>,
}

impl fmt::Debug for DiffusionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionModel").field("dim", &self.dim).field("label", &self.label).field("clock", &self.clock).finish()
    }
}

impl DiffusionModel {
    pub fn new<M, S>(dim: usize, label: impl Into<String>, drift: M, diffusion: S) -> Result<Self, SdeError>
    where
        M: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        S: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self::from_fields(dim, label, Arc::new(drift), Arc::new(diffusion))
    }

    pub fn from_fields(dim: usize, label: impl Into<String>, drift: Field, diffusion: Field) -> Result<Self, SdeError> {
        if dim == 0 || dim > MAX_DIM {
            return Err(SdeError::BadDimension(dim));
        }
        Ok(Self { dim, drift, diffusion, label: label.into(), clock: None })
    }

    /// Marks coordinate `index` as the clock.
    pub fn with_clock(mut self, index: usize) -> Result<Self, SdeError> {
        if index >= self.dim {
            return Err(SdeError::DimensionMismatch { expected: self.dim, got: index + 1 });
        }
        self.clock = Some(index);
        Ok(self)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn drift_field(&self) -> &Field {
        &self.drift
    }

    pub fn diffusion_field(&self) -> &Field {
        &self.diffusion
    }

    #[inline]
    pub fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        (self.drift)(x, out)
    }

    /// Row-major; the buffer is zeroed before the evaluator runs.
    #[inline]
    pub fn diffusion_into(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        (self.diffusion)(x, out)
    }

    pub fn drift_at(&self, x: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim);
        self.drift_into(x, out.as_mut_slice());
        out
    }

    pub fn diffusion_at(&self, x: &[f64]) -> DMatrix<f64> {
        let mut out = vec![0.0; self.dim * self.dim];
        self.diffusion_into(x, &mut out);
        DMatrix::from_row_slice(self.dim, self.dim, &out)
    }
}

impl Dynamics for DiffusionModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn clock(&self) -> Option<usize> {
        self.clock
    }

    fn label(&self) -> &str {
        &self.label
    }

    #[inline]
    fn eval(&self, x: &[f64], sigma: &mut [f64], mu: &mut [f64], _scratch: &mut [f64]) -> bool {
        self.diffusion_into(x, sigma);
        self.drift_into(x, mu);
        true
    }
}

fn check(name: &str, ok: bool) -> Result<(), SdeError> {
    if ok {
        Ok(())
    } else {
        Err(SdeError::InvalidParameter(name.to_string()))
    }
}

/// `dX = s dW + m dt` in one dimension.
pub fn arithmetic_bm(sigma: f64, mu: f64) -> Result<DiffusionModel, SdeError> {
    brownian(1, sigma, mu)
}

/// Isotropic Brownian motion `dX = s I dW + m 1 dt` in `dim` dimensions.
pub fn brownian(dim: usize, sigma: f64, mu: f64) -> Result<DiffusionModel, SdeError> {
    check("sigma", sigma.is_finite())?;
    check("mu", mu.is_finite())?;
    DiffusionModel::new(
        dim,
        format!("bm(sigma={sigma},mu={mu})"),
        move |_, out| out.fill(mu),
        move |_, out| {
            let d = (out.len() as f64).sqrt() as usize;
            for i in 0..d {
                out[i * d + i] = sigma;
            }
        },
    )
}

/// Geometric Brownian motion `dX = s X dW + r X dt`.
pub fn gbm(sigma: f64, r: f64) -> Result<DiffusionModel, SdeError> {
    check("sigma", sigma.is_finite())?;
    check("r", r.is_finite())?;
    DiffusionModel::new(1, format!("gbm(sigma={sigma},r={r})"), move |x, out| out[0] = r * x[0], move |x, out| out[0] = sigma * x[0])
}

/// Constant elasticity of variance `dX = s X^beta dW + r X dt`, with `X^beta` read as 0 for `X <= 0`.
pub fn cev(sigma: f64, beta: f64, r: f64) -> Result<DiffusionModel, SdeError> {
    check("sigma", sigma.is_finite())?;
    check("beta", beta.is_finite() && beta >= 0.0)?;
    check("r", r.is_finite())?;
    DiffusionModel::new(
        1,
        format!("cev(sigma={sigma},beta={beta},r={r})"),
        move |x, out| out[0] = r * x[0],
        move |x, out| out[0] = sigma * x[0].max(0.0).powf(beta),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HestonParams {
    pub r: f64,
    pub kappa: f64,
    pub theta: f64,
    pub xi: f64,
    pub rho: f64,
}

/// Heston on the state `(x, v)` with full truncation: `v` enters every
/// coefficient as `max(v, 0)`.
///
/// ```text
/// dx = x sqrt(v+) dW + r x dt
/// dv = xi sqrt(v+) (rho dW + sqrt(1 - rho^2) dB) + kappa (theta - v+) dt
/// ```
pub fn heston(p: HestonParams) -> Result<DiffusionModel, SdeError> {
    check("kappa", p.kappa.is_finite() && p.kappa >= 0.0)?;
    check("theta", p.theta.is_finite() && p.theta >= 0.0)?;
    check("xi", p.xi.is_finite() && p.xi >= 0.0)?;
    check("rho", p.rho.is_finite() && p.rho.abs() <= 1.0)?;
    check("r", p.r.is_finite())?;
    let rho_bar = (1.0 - p.rho * p.rho).sqrt();
    DiffusionModel::new(
        2,
        format!("heston(kappa={},theta={},xi={},rho={},r={})", p.kappa, p.theta, p.xi, p.rho, p.r),
        move |x, out| {
            let v = x[1].max(0.0);
            out[0] = p.r * x[0];
            out[1] = p.kappa * (p.theta - v);
        },
        move |x, out| {
            let sv = x[1].max(0.0).sqrt();
            out[0] = x[0] * sv;
            out[2] = p.rho * p.xi * sv;
            out[3] = rho_bar * p.xi * sv;
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SabrParams {
    pub r: f64,
    /// Volatility of volatility.
    pub alpha: f64,
    pub beta: f64,
    pub rho: f64,
}

/// SABR-type model on `(x, v)`:
///
/// ```text
/// dx = v x+^beta dW + r x dt
/// dv = alpha v (rho dW + sqrt(1 - rho^2) dB)
/// ```
pub fn sabr(p: SabrParams) -> Result<DiffusionModel, SdeError> {
    check("alpha", p.alpha.is_finite() && p.alpha >= 0.0)?;
    check("beta", p.beta.is_finite() && (0.0..=1.0).contains(&p.beta))?;
    check("rho", p.rho.is_finite() && p.rho.abs() <= 1.0)?;
    check("r", p.r.is_finite())?;
    let rho_bar = (1.0 - p.rho * p.rho).sqrt();
    DiffusionModel::new(
        2,
        format!("sabr(alpha={},beta={},rho={},r={})", p.alpha, p.beta, p.rho, p.r),
        move |x, out| {
            out[0] = p.r * x[0];
            out[1] = 0.0;
        },
        move |x, out| {
            out[0] = x[1] * x[0].max(0.0).powf(p.beta);
            out[2] = p.rho * p.alpha * x[1];
            out[3] = rho_bar * p.alpha * x[1];
        },
    )
}

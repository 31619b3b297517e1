use std::fmt;
use std::sync::Arc;

use super::TransformError;
use crate::geometry::MAX_DIM;
use crate::sde::{DiffusionModel, Dynamics as _, SdeError};

/// `(state, time, out)`.
pub type TimeField = Arc<dyn Fn(&[f64], f64, &mut [f64]) + Send + Sync>;

/// Coefficients that may depend on time as well as on the state.
#[derive(Clone)]
pub struct TimeDependentModel {
    dim: usize,
    drift: TimeField,
    diffusion: TimeField,
    label: String,
}

impl fmt::Debug for TimeDependentModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TimeDependentModel").field("dim", &self.dim).field("label", &self.label).finish()
    }
}

impl TimeDependentModel {
    pub fn new<M, S>(dim: usize, label: impl Into<String>, drift: M, diffusion: S) -> Result<Self, SdeError>
    where
        M: Fn(&[f64], f64, &mut [f64]) + Send + Sync + 'static,
        S: Fn(&[f64], f64, &mut [f64]) + Send + Sync + 'static,
    {
        if dim == 0 || dim > MAX_DIM {
            return Err(SdeError::BadDimension(dim));
        }
        Ok(Self { dim, drift: Arc::new(drift), diffusion: Arc::new(diffusion), label: label.into() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    #[inline]
    pub fn drift_into(&self, x: &[f64], t: f64, out: &mut [f64]) {
        (self.drift)(x, t, out)
    }

    /// Row-major; the buffer is zeroed first.
    #[inline]
    pub fn diffusion_into(&self, x: &[f64], t: f64, out: &mut [f64]) {
        out.fill(0.0);
        (self.diffusion)(x, t, out)
    }
}

impl From<DiffusionModel> for TimeDependentModel {
    fn from(base: DiffusionModel) -> Self {
        let drift = base.drift_field().clone();
        let diffusion = base.diffusion_field().clone();
        Self {
            dim: base.dim(),
            label: base.label().to_string(),
            drift: Arc::new(move |x, _t, out| drift(x, out)),
            diffusion: Arc::new(move |x, _t, out| diffusion(x, out)),
        }
    }
}

/// Appends a clock coordinate with drift 1 and no noise.
///
/// The result is autonomous in `d + 1` dimensions; the clock is the last
/// coordinate and the simulator advances it exactly.
pub fn augment_time(base: impl Into<TimeDependentModel>) -> Result<DiffusionModel, TransformError> {
    let base: TimeDependentModel = base.into();
    let d = base.dim;
    let n = d + 1;
    if n > MAX_DIM {
        return Err(SdeError::BadDimension(n).into());
    }
    let drift_base = base.clone();
    let diffusion_base = base.clone();
    let model = DiffusionModel::new(
        n,
        format!("{}+clock", base.label),
        move |x, out| {
            drift_base.drift_into(&x[..d], x[d], &mut out[..d]);
            out[d] = 1.0;
        },
        move |x, out| {
            let mut block = [0.0; MAX_DIM * MAX_DIM];
            let block = &mut block[..d * d];
            diffusion_base.diffusion_into(&x[..d], x[d], block);
            for i in 0..d {
                out[i * n..i * n + d].copy_from_slice(&block[i * d..(i + 1) * d]);
            }
        },
    )?
    .with_clock(d)?;
    Ok(model)
}

//! Coefficient symmetrization over a reflection group.
//!
//! For `x` in the chamber `gΣ` the symmetrized coefficients are
//!
//! ```text
//! σ̃(x) = T_g σ(g⁻¹x) U_x,    μ̃(x) = T_g μ(g⁻¹x)
//! ```
//!
//! where `T_g` is the linear part of `g`. The resulting diffusion agrees with
//! the base one on `Σ` and is equivariant under the group, which is what turns
//! a knock-out expectation into the signed fold of a plain one.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::models::{DiffusionModel, Field};
use super::{Dynamics, SdeError};
use crate::geometry::Hyperplane;
use crate::group::{HyperplaneFamily, ReflectionGroup};

/// Which of the two valid one-dimensional sign choices to use off `Σ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Branch {
    /// `σ̃ = T_g σ(g⁻¹x)`; in one dimension `-σ(2K - x)` below the barrier.
    #[default]
    Reflected,
    /// Additionally multiplies by `η(g)`, giving `+σ(2K - x)` in one dimension.
    Plus,
}

/// Symmetrized coefficients at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetrizedCoefficients {
    pub sigma: DMatrix<f64>,
    pub mu: DVector<f64>,
    /// `false` when no enumerated chamber contains the point and the base
    /// coefficients were used instead.
    pub covered: bool,
}

#[derive(Clone)]
pub struct SymmetrizedModel {
    base: DiffusionModel,
    group: Arc<ReflectionGroup>,
    u_map: Option<Field>,
    branch: Branch,
    label: String,
}

impl std::fmt::Debug for SymmetrizedModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SymmetrizedModel")
            .field("base", &self.base)
            .field("elements", &self.group.len())
            .field("branch", &self.branch)
            .field("u_map", &self.u_map.is_some())
            .finish()
    }
}

impl SymmetrizedModel {
    pub fn new(base: DiffusionModel, group: impl Into<Arc<ReflectionGroup>>) -> Result<Self, SdeError> {
        let group = group.into();
        if group.dim() != base.dim() {
            return Err(SdeError::DimensionMismatch { expected: base.dim(), got: group.dim() });
        }
        if let Some(c) = base.clock() {
            // The clock must be fixed by every element.
            for g in group.elements() {
                let t = g.isometry().linear();
                let fixed = (0..base.dim()).all(|j| t[(c, j)] == if j == c { 1.0 } else { 0.0 }) && g.isometry().translation()[c] == 0.0;
                if !fixed {
                    return Err(SdeError::Structure("a group element moves the clock coordinate".into()));
                }
            }
        }
        let label = format!("sym[{}]({})", group.len(), base.label());
        Ok(Self { base, group, u_map: None, branch: Branch::default(), label })
    }

    /// Right factor `U_x`, an orthogonal matrix written row-major.
    pub fn with_u_map<U>(mut self, u: U) -> Self
    where
        U: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.u_map = Some(Arc::new(u));
        self
    }

    pub fn with_branch(mut self, branch: Branch) -> Self {
        self.branch = branch;
        self
    }

    pub fn base(&self) -> &DiffusionModel {
        &self.base
    }

    pub fn group(&self) -> &ReflectionGroup {
        &self.group
    }

    pub fn group_arc(&self) -> &Arc<ReflectionGroup> {
        &self.group
    }

    pub fn branch(&self) -> Branch {
        self.branch
    }

    /// Evaluates `(σ̃(x), μ̃(x))`; falls back to the base coefficients in a coverage gap.
    pub fn symmetrized_coefficients(&self, x: &[f64]) -> SymmetrizedCoefficients {
        let d = self.base.dim();
        let mut sigma = vec![0.0; d * d];
        let mut mu = vec![0.0; d];
        let mut scratch = vec![0.0; self.scratch_len()];
        let covered = self.eval(x, &mut sigma, &mut mu, &mut scratch);
        SymmetrizedCoefficients { sigma: DMatrix::from_row_slice(d, d, &sigma), mu: DVector::from_vec(mu), covered }
    }

    fn apply_u(&self, x: &[f64], sigma: &mut [f64], scratch: &mut [f64]) {
        let Some(u_map) = &self.u_map else { return };
        let d = self.base.dim();
        let (u, rest) = scratch.split_at_mut(d * d);
        let tmp = &mut rest[..d * d];
        u.fill(0.0);
        u_map(x, u);
        tmp.copy_from_slice(sigma);
        for i in 0..d {
            for j in 0..d {
                let mut acc = 0.0;
                for k in 0..d {
                    acc += tmp[i * d + k] * u[k * d + j];
                }
                sigma[i * d + j] = acc;
            }
        }
    }
}

impl Dynamics for SymmetrizedModel {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn clock(&self) -> Option<usize> {
        self.base.clock()
    }

    fn label(&self) -> &str {
        &self.label
    }

    fn scratch_len(&self) -> usize {
        let d = self.base.dim();
        d + 2 * d * d + d
    }

    #[inline]
    fn eval(&self, x: &[f64], sigma: &mut [f64], mu: &mut [f64], scratch: &mut [f64]) -> bool {
        let d = self.base.dim();
        let Some(idx) = self.group.locate_chamber(x) else {
            self.base.eval(x, sigma, mu, scratch);
            self.apply_u(x, sigma, scratch);
            return false;
        };
        let g = self.group.element(idx);
        if g.is_identity() {
            self.base.eval(x, sigma, mu, scratch);
            self.apply_u(x, sigma, scratch);
            return true;
        }
        let (y, rest) = scratch.split_at_mut(d);
        let (raw_sigma, rest) = rest.split_at_mut(d * d);
        let raw_mu = &mut rest[..d];
        g.isometry().apply_inverse_into(x, y);
        self.base.diffusion_into(y, raw_sigma);
        self.base.drift_into(y, raw_mu);
        let t = g.isometry().linear();
        let sign = match self.branch {
            Branch::Reflected => 1.0,
            Branch::Plus => f64::from(g.eta()),
        };
        for i in 0..d {
            let mut m = 0.0;
            for k in 0..d {
                m += t[(i, k)] * raw_mu[k];
            }
            mu[i] = m;
            for j in 0..d {
                let mut s = 0.0;
                for k in 0..d {
                    s += t[(i, k)] * raw_sigma[k * d + j];
                }
                sigma[i * d + j] = sign * s;
            }
        }
        self.apply_u(x, sigma, scratch);
        true
    }
}

/// Symmetrizes a stochastic-volatility model across the asset barrier `x_0 = K`.
///
/// Coordinate 0 is the asset; the remaining coordinates must evolve without
/// reference to it. That is checked by perturbing the asset at 64 random probe
/// points and requiring bit-identical rows for the other coordinates.
pub fn symmetrize_sv(base: DiffusionModel, barrier: f64) -> Result<SymmetrizedModel, SdeError> {
    let d = base.dim();
    if d < 2 {
        return Err(SdeError::Structure("stochastic volatility model needs at least two coordinates".into()));
    }
    if !barrier.is_finite() {
        return Err(SdeError::InvalidParameter("barrier".into()));
    }
    probe_autonomous_factors(&base, barrier)?;
    let mut alpha = vec![0.0; d];
    alpha[0] = 1.0;
    let mut witness = vec![0.0; d];
    witness[0] = barrier + 1.0 + barrier.abs();
    let family = HyperplaneFamily::new(vec![Hyperplane::from_slice(&alpha, barrier)?], DVector::from_vec(witness))?;
    let group = ReflectionGroup::generate(family, 4)?;
    SymmetrizedModel::new(base, group)
}

pub(crate) fn probe_autonomous_factors(base: &DiffusionModel, barrier: f64) -> Result<(), SdeError> {
    let d = base.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0f5a);
    let (lo, hi) = if barrier > 0.0 { (0.5 * barrier, 1.5 * barrier) } else { (barrier - 1.0, barrier + 1.0) };
    let mut sigma_a = vec![0.0; d * d];
    let mut sigma_b = vec![0.0; d * d];
    let mut mu_a = vec![0.0; d];
    let mut mu_b = vec![0.0; d];
    for _ in 0..64 {
        let mut x: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
        x[0] = rng.random_range(lo..hi);
        let mut moved = x.clone();
        moved[0] += 0.37 * (1.0 + x[0].abs());
        base.diffusion_into(&x, &mut sigma_a);
        base.diffusion_into(&moved, &mut sigma_b);
        base.drift_into(&x, &mut mu_a);
        base.drift_into(&moved, &mut mu_b);
        let rows_match = sigma_a[d..].iter().zip(&sigma_b[d..]).all(|(a, b)| a.to_bits() == b.to_bits());
        let drift_match = mu_a[1..].iter().zip(&mu_b[1..]).all(|(a, b)| a.to_bits() == b.to_bits());
        if !rows_match || !drift_match {
            return Err(SdeError::Structure(format!("volatility coordinates depend on the asset at {x:?}")));
        }
    }
    Ok(())
}

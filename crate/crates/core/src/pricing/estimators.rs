use std::sync::Arc;

use crate::geometry::Hyperplane;
use crate::group::{GenerateOptions, HyperplaneFamily, ReflectionGroup};
use crate::sde::{check_excluded, check_start, map_paths, run_path, DiffusionModel, Dynamics, Flow, PathStatus, SimulationPlan, SymmetrizedModel};
use crate::transforms::{moving_boundary_model, BoundaryMotion, TimeDependentModel};

use super::{Estimate, Payoff, PricingError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Monitoring {
    /// Knock out only when a simulated state leaves the chamber.
    Discrete,
    /// Also weight each step by the Brownian-bridge probability of not touching a wall.
    #[default]
    Bridge,
}

struct PathValue {
    value: Option<f64>,
    gap_hits: u64,
}

fn summarize(values: Vec<PathValue>, capped: u64) -> Result<Estimate, PricingError> {
    let paths = values.len();
    let gap_hits = values.iter().map(|v| v.gap_hits).sum();
    let kept: Vec<f64> = values.into_iter().filter_map(|v| v.value).collect();
    let excluded = paths - kept.len();
    check_excluded(excluded, paths)?;
    let n = kept.len();
    let mean = kept.iter().sum::<f64>() / n as f64;
    let stderr = if n > 1 {
        let var = kept.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    Ok(Estimate { mean, stderr, paths: n, gap_hits, excluded_paths: excluded, capped })
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Plain Monte Carlo estimate of `E[f(X_t)]`.
pub fn price_plain<D, F>(model: &D, x0: &[f64], f: F, plan: &SimulationPlan) -> Result<Estimate, PricingError>
where
    D: Dynamics + ?Sized,
    F: Fn(&[f64]) -> f64 + Sync,
{
    plan.validate()?;
    check_start(model, x0)?;
    let values = map_paths(model, plan.paths, |p, ws| {
        let out = run_path(model, x0, plan, p, ws, |_| Flow::Continue);
        let value = if out.status == PathStatus::Finished { finite(f(&ws.x)) } else { None };
        PathValue { value, gap_hits: out.gap_hits }
    });
    summarize(values, 0)
}

/// `E[f(X_t) 1{τ > t}]` as the single expectation `E[Σ_g η(g) f(g⁻¹ X̃_t)]`
/// of the symmetrized diffusion.
pub fn price_symmetrized(model: &SymmetrizedModel, x0: &[f64], payoff: &Payoff, plan: &SimulationPlan) -> Result<Estimate, PricingError> {
    plan.validate()?;
    check_start(model, x0)?;
    let group = model.group();
    if !group.family().contains_strict(x0) {
        return Err(PricingError::StartOutside);
    }
    let capped_before = payoff.capped();
    let d = model.dim();
    let values = map_paths(model, plan.paths, |p, ws| {
        let out = run_path(model, x0, plan, p, ws, |_| Flow::Continue);
        if out.status != PathStatus::Finished {
            return PathValue { value: None, gap_hits: out.gap_hits };
        }
        let fold = group.signed_fold_with(|y| payoff.eval(y), &ws.x, &mut ws.scratch[..d]);
        PathValue { value: finite(fold.value), gap_hits: out.gap_hits + u64::from(fold.gap) }
    });
    summarize(values, payoff.capped() - capped_before)
}

pub fn price_barrier_symmetrized(
    base: &DiffusionModel,
    group: impl Into<Arc<ReflectionGroup>>,
    x0: &[f64],
    payoff: &Payoff,
    plan: &SimulationPlan,
) -> Result<Estimate, PricingError> {
    let model = SymmetrizedModel::new(base.clone(), group)?;
    price_symmetrized(&model, x0, payoff, plan)
}

enum Walls<'a> {
    Static { dim: usize, normals: Vec<f64>, offsets: Vec<f64> },
    Moving(&'a BoundaryMotion),
}

impl Walls<'_> {
    fn fixed(family: &HyperplaneFamily) -> Self {
        let mut normals = Vec::new();
        let mut offsets = Vec::new();
        for h in family.hyperplanes() {
            let norm = h.alpha().norm();
            normals.extend(h.alpha().iter().map(|a| a / norm));
            offsets.push(h.offset() / norm);
        }
        Walls::Static { dim: family.dim(), normals, offsets }
    }

    fn count(&self) -> usize {
        match self {
            Walls::Static { offsets, .. } => offsets.len(),
            Walls::Moving(m) => m.dim(),
        }
    }

    fn dim(&self) -> usize {
        match self {
            Walls::Static { dim, .. } => *dim,
            Walls::Moving(m) => m.dim(),
        }
    }

    /// Signed distances at time `t`; unit normals go to `normals` for moving walls only.
    fn distances(&self, t: f64, x: &[f64], dist: &mut [f64], normals: &mut [f64]) {
        match self {
            Walls::Static { dim, normals: n, offsets } => {
                for (i, off) in offsets.iter().enumerate() {
                    dist[i] = crate::geometry::dot(&n[i * dim..(i + 1) * dim], x) - off;
                }
            }
            Walls::Moving(m) => m.distances_into(t, x, dist, normals),
        }
    }

    fn normals<'b>(&'b self, moving: &'b [f64]) -> &'b [f64] {
        match self {
            Walls::Static { normals, .. } => normals,
            Walls::Moving(_) => moving,
        }
    }
}

struct OraclePath {
    status: PathStatus,
    knocked: bool,
    weight: f64,
    gap_hits: u64,
}

#[allow(clippy::too_many_arguments)]
fn oracle_path<D: Dynamics + ?Sized>(
    model: &D,
    walls: &Walls<'_>,
    x0: &[f64],
    plan: &SimulationPlan,
    path: usize,
    ws: &mut crate::sde::Workspace,
    monitoring: Monitoring,
    stop_on_exit: bool,
) -> OraclePath {
    let m = walls.count();
    let d = walls.dim();
    let n_dim = model.dim();
    let mut dist_prev = vec![0.0; m];
    let mut dist_next = vec![0.0; m];
    let mut normals_prev = vec![0.0; m * d];
    let mut normals_next = vec![0.0; m * d];
    walls.distances(0.0, x0, &mut dist_prev, &mut normals_prev);
    let mut knocked = dist_prev.iter().any(|v| *v <= 0.0);
    let mut weight = 1.0;
    let out = run_path(model, x0, plan, path, ws, |view| {
        if knocked {
            return if stop_on_exit { Flow::Stop } else { Flow::Continue };
        }
        let t = view.step as f64 * view.dt;
        walls.distances(t, view.next, &mut dist_next, &mut normals_next);
        if dist_next.iter().any(|v| *v <= 0.0) {
            knocked = true;
            return if stop_on_exit { Flow::Stop } else { Flow::Continue };
        }
        if monitoring == Monitoring::Bridge {
            let normals = walls.normals(&normals_prev);
            for i in 0..m {
                let unit = &normals[i * d..(i + 1) * d];
                let mut a = 0.0;
                for j in 0..n_dim {
                    let proj: f64 = (0..d).map(|k| unit[k] * view.sigma[k * n_dim + j]).sum();
                    a += proj * proj;
                }
                if a > 0.0 {
                    weight *= 1.0 - (-2.0 * dist_prev[i] * dist_next[i] / (a * view.dt)).exp();
                }
            }
        }
        std::mem::swap(&mut dist_prev, &mut dist_next);
        std::mem::swap(&mut normals_prev, &mut normals_next);
        Flow::Continue
    });
    OraclePath { status: out.status, knocked, weight, gap_hits: out.gap_hits }
}

fn run_oracle<D, F>(model: &D, walls: &Walls<'_>, x0: &[f64], f: F, plan: &SimulationPlan, monitoring: Monitoring) -> Result<Estimate, PricingError>
where
    D: Dynamics + ?Sized,
    F: Fn(&[f64]) -> f64 + Sync,
{
    let values = map_paths(model, plan.paths, |p, ws| {
        let path = oracle_path(model, walls, x0, plan, p, ws, monitoring, true);
        let value = match path.status {
            PathStatus::NonFinite => None,
            _ if path.knocked => Some(0.0),
            _ => finite(path.weight * f(&ws.x)),
        };
        PathValue { value, gap_hits: path.gap_hits }
    });
    summarize(values, 0)
}

fn knocked_out_at_start(plan: &SimulationPlan) -> Estimate {
    Estimate { mean: 0.0, stderr: 0.0, paths: plan.paths, gap_hits: 0, excluded_paths: 0, capped: 0 }
}

/// Path-dependent reference: simulates the unmodified model and kills paths that leave the chamber.
pub fn price_barrier_oracle<D, F>(
    model: &D,
    family: &HyperplaneFamily,
    x0: &[f64],
    f: F,
    plan: &SimulationPlan,
    monitoring: Monitoring,
) -> Result<Estimate, PricingError>
where
    D: Dynamics + ?Sized,
    F: Fn(&[f64]) -> f64 + Sync,
{
    plan.validate()?;
    check_start(model, x0)?;
    if family.dim() != model.dim() {
        return Err(PricingError::Domain(format!("family dimension {} for a {}-dimensional model", family.dim(), model.dim())));
    }
    if !family.contains_strict(x0) {
        return Ok(knocked_out_at_start(plan));
    }
    run_oracle(model, &Walls::fixed(family), x0, f, plan, monitoring)
}

/// Oracle for walls `<α_i(t), x> = k_i` that move with time.
pub fn price_moving_barrier_oracle<D, F>(
    model: &D,
    motion: &BoundaryMotion,
    x0: &[f64],
    f: F,
    plan: &SimulationPlan,
    monitoring: Monitoring,
) -> Result<Estimate, PricingError>
where
    D: Dynamics + ?Sized,
    F: Fn(&[f64]) -> f64 + Sync,
{
    plan.validate()?;
    check_start(model, x0)?;
    if motion.dim() != model.dim() {
        return Err(PricingError::Domain(format!("boundary dimension {} for a {}-dimensional model", motion.dim(), model.dim())));
    }
    let walls = Walls::Moving(motion);
    let mut dist = vec![0.0; motion.dim()];
    let mut normals = vec![0.0; motion.dim() * motion.dim()];
    walls.distances(0.0, x0, &mut dist, &mut normals);
    if dist.iter().any(|v| *v <= 0.0) {
        return Ok(knocked_out_at_start(plan));
    }
    run_oracle(model, &walls, x0, f, plan, monitoring)
}

/// Plain, surviving and knocked-out parts of `E[f(X_t)]` on one set of paths, discrete monitoring.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub plain: Estimate,
    pub survived: Estimate,
    pub knocked: Estimate,
}

pub fn knockout_decomposition<D, F>(model: &D, family: &HyperplaneFamily, x0: &[f64], f: F, plan: &SimulationPlan) -> Result<Decomposition, PricingError>
where
    D: Dynamics + ?Sized,
    F: Fn(&[f64]) -> f64 + Sync,
{
    plan.validate()?;
    check_start(model, x0)?;
    let walls = Walls::fixed(family);
    let rows = map_paths(model, plan.paths, |p, ws| {
        let path = oracle_path(model, &walls, x0, plan, p, ws, Monitoring::Discrete, false);
        let value = if path.status == PathStatus::Finished { finite(f(&ws.x)) } else { None };
        (value, path.knocked, path.gap_hits)
    });
    let split = |keep: &dyn Fn(bool) -> bool| -> Vec<PathValue> {
        rows.iter().map(|&(v, k, g)| PathValue { value: v.map(|v| if keep(k) { v } else { 0.0 }), gap_hits: g }).collect()
    };
    Ok(Decomposition { plain: summarize(split(&|_| true), 0)?, survived: summarize(split(&|k| !k), 0)?, knocked: summarize(split(&|k| k), 0)? })
}

/// Double barrier `K < x_0 < K + K'` on the first coordinate by the truncated
/// affine group with words of length at most `2N + 1`.
#[allow(clippy::too_many_arguments)]
pub fn price_double_barrier<F>(
    base: &DiffusionModel,
    k: f64,
    k_prime: f64,
    x0: &[f64],
    f: F,
    bound: f64,
    plan: &SimulationPlan,
    n: usize,
) -> Result<Estimate, PricingError>
where
    F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
{
    let model = double_barrier_model(base, k, k_prime, n)?;
    let payoff = Payoff::new(f, model.group().family().clone(), bound)?;
    price_symmetrized(&model, x0, &payoff, plan)
}

/// The symmetrized model behind [`price_double_barrier`].
pub fn double_barrier_model(base: &DiffusionModel, k: f64, k_prime: f64, n: usize) -> Result<SymmetrizedModel, PricingError> {
    if !(k_prime > 0.0 && k_prime.is_finite() && k.is_finite()) {
        return Err(PricingError::Domain("double barrier needs finite K and K' > 0".into()));
    }
    let d = base.dim();
    if d >= 2 {
        crate::sde::probe_autonomous_factors(base, k + 0.5 * k_prime)?;
    }
    let family = double_barrier_family(d, k, k_prime)?;
    let options = GenerateOptions { cap: 4 * n + 3, max_word_len: Some(2 * n + 1), ..GenerateOptions::default() };
    let group = ReflectionGroup::generate_with(family, options)?;
    Ok(SymmetrizedModel::new(base.clone(), group)?)
}

pub fn double_barrier_family(dim: usize, k: f64, k_prime: f64) -> Result<HyperplaneFamily, PricingError> {
    let mut lower = vec![0.0; dim];
    lower[0] = 1.0;
    let mut upper = vec![0.0; dim];
    upper[0] = -1.0;
    let mut witness = vec![0.0; dim];
    witness[0] = k + 0.5 * k_prime;
    Ok(HyperplaneFamily::new(vec![Hyperplane::from_slice(&lower, k)?, Hyperplane::from_slice(&upper, -(k + k_prime))?], nalgebra::DVector::from_vec(witness))?)
}

/// Moving walls through straightening and symmetrization; `f` is given in the original coordinates.
pub fn price_moving_barrier_symmetrized<F>(
    base: impl Into<TimeDependentModel>,
    motion: &BoundaryMotion,
    x0: &[f64],
    f: F,
    bound: f64,
    plan: &SimulationPlan,
) -> Result<Estimate, PricingError>
where
    F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
{
    plan.validate()?;
    let mb = moving_boundary_model(base, motion, plan.horizon)?;
    let group = ReflectionGroup::generate(mb.family.clone(), crate::group::DEFAULT_CAP)?;
    let model = SymmetrizedModel::new(mb.model.clone(), group)?;
    let straightening = Arc::clone(&mb.straightening);
    let horizon = plan.horizon;
    let d = motion.dim();
    let payoff = Payoff::new(
        move |y| {
            let x = straightening.apply_inverse(horizon, &y[..d]);
            f(x.as_slice())
        },
        mb.family.clone(),
        bound,
    )?;
    price_symmetrized(&model, &mb.start(x0), &payoff, plan)
}

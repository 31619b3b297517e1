use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{DMatrix, DVector};
use symbar_core::pricing::{
    closed_form_dao_call, double_barrier_family, double_barrier_model, price_barrier_oracle, price_moving_barrier_oracle, price_moving_barrier_symmetrized,
    price_symmetrized, survival_probability_bm,
};
use symbar_core::sde::{arithmetic_bm, brownian, cev, gbm, heston, sabr, symmetrize_sv, HestonParams, SabrParams};
use symbar_core::{
    BoundaryMotion, DiffusionModel, Estimate, GenerateOptions, Hyperplane, HyperplaneFamily, Monitoring, Payoff, ReflectionGroup, SimulationPlan,
    SymmetrizedModel,
};

use crate::config::{BarrierSpec, EstimatorKind, GroupSpec, ModelName, ModelSpec, PayoffKind, PlanSpec, RunConfig};
use crate::error::CliError;

/// One CSV row: an estimate, or a closed-form value with zero stderr and no paths.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub label: &'static str,
    pub mean: f64,
    pub stderr: f64,
    pub paths: usize,
    pub steps: usize,
    pub gap_hits: u64,
    pub excluded: usize,
    pub capped: u64,
    pub seed: u64,
}

impl Row {
    fn from_estimate(label: &'static str, e: &Estimate, plan: &PlanSpec) -> Self {
        Row {
            label,
            mean: e.mean,
            stderr: e.stderr,
            paths: e.paths,
            steps: plan.steps,
            gap_hits: e.gap_hits,
            excluded: e.excluded_paths,
            capped: e.capped,
            seed: plan.seed,
        }
    }

    fn closed_form(value: f64, plan: &PlanSpec) -> Self {
        Row { label: EstimatorKind::ClosedForm.label(), mean: value, stderr: 0.0, paths: 0, steps: 0, gap_hits: 0, excluded: 0, capped: 0, seed: plan.seed }
    }
}

pub fn build_model(spec: &ModelSpec) -> Result<DiffusionModel, CliError> {
    Ok(match spec.name {
        ModelName::Abm => arithmetic_bm(spec.sigma, spec.mu)?,
        ModelName::Bm => brownian(spec.dim(), spec.sigma, spec.mu)?,
        ModelName::Gbm => gbm(spec.sigma, spec.r)?,
        ModelName::Cev => cev(spec.sigma, spec.beta, spec.r)?,
        ModelName::Heston => heston(HestonParams { r: spec.r, kappa: spec.kappa, theta: spec.theta, xi: spec.xi, rho: spec.rho })?,
        ModelName::Sabr => sabr(SabrParams { r: spec.r, alpha: spec.alpha, beta: spec.beta, rho: spec.rho })?,
    })
}

fn barrier_error(e: impl std::fmt::Display) -> CliError {
    CliError::config(None, Some("barrier"), &e.to_string())
}

/// Static family of the barrier; a moving barrier contributes its walls at time 0.
pub fn static_family(barrier: &BarrierSpec, dim: usize) -> Result<HyperplaneFamily, CliError> {
    match barrier {
        BarrierSpec::Single { k } | BarrierSpec::Moving { k, .. } => {
            let mut alpha = vec![0.0; dim];
            alpha[0] = 1.0;
            let mut witness = vec![0.0; dim];
            witness[0] = k + 1.0 + k.abs();
            HyperplaneFamily::new(vec![Hyperplane::from_slice(&alpha, *k).map_err(barrier_error)?], DVector::from_vec(witness)).map_err(barrier_error)
        }
        BarrierSpec::Double { k, k_prime } => double_barrier_family(dim, *k, *k_prime).map_err(barrier_error),
        BarrierSpec::Hyperplanes { planes, witness } => {
            let hs = planes.iter().map(|(n, k)| Hyperplane::from_slice(n, *k)).collect::<Result<Vec<_>, _>>().map_err(barrier_error)?;
            HyperplaneFamily::new(hs, DVector::from_vec(witness.clone())).map_err(barrier_error)
        }
    }
}

/// The reflection group used for symmetrization and inspection.
pub fn build_group(barrier: &BarrierSpec, dim: usize, group: &GroupSpec) -> Result<ReflectionGroup, CliError> {
    let family = static_family(barrier, dim)?;
    let options = match barrier {
        BarrierSpec::Double { .. } => GenerateOptions {
            cap: 4 * group.truncation + 3,
            max_word_len: Some(2 * group.truncation + 1),
            disjointness_samples: group.samples,
            ..GenerateOptions::default()
        },
        _ => GenerateOptions { cap: group.cap, disjointness_samples: group.samples, ..GenerateOptions::default() },
    };
    Ok(ReflectionGroup::generate_with(family, options)?)
}

fn moving_motion(k: f64, growth: f64, horizon: f64) -> Result<BoundaryMotion, CliError> {
    if 1.0 + growth * horizon <= 0.0 {
        return Err(CliError::config(None, Some("barrier.growth"), "barrier level must stay positive over the horizon"));
    }
    let motion = BoundaryMotion::new(
        move |t| DMatrix::from_element(1, 1, 1.0 / (1.0 + growth * t)),
        move |t| DMatrix::from_element(1, 1, -growth / ((1.0 + growth * t) * (1.0 + growth * t))),
        DVector::from_vec(vec![k]),
    )?;
    Ok(motion)
}

fn require_one_dimensional(cfg: &RunConfig) -> Result<(), CliError> {
    if cfg.model.dim() != 1 {
        return Err(CliError::config(None, Some("barrier.growth"), "moving barriers need a one-dimensional model"));
    }
    Ok(())
}

fn symmetrized_model(cfg: &RunConfig, base: &DiffusionModel) -> Result<SymmetrizedModel, CliError> {
    let d = cfg.model.dim();
    match &cfg.barrier {
        BarrierSpec::Single { k } if d >= 2 => Ok(symmetrize_sv(base.clone(), *k)?),
        BarrierSpec::Double { k, k_prime } => Ok(double_barrier_model(base, *k, *k_prime, cfg.group.truncation)?),
        barrier => Ok(SymmetrizedModel::new(base.clone(), build_group(barrier, d, &cfg.group)?)?),
    }
}

fn symmetrized(cfg: &RunConfig, base: &DiffusionModel, plan: &SimulationPlan, spec: &PlanSpec) -> Result<Row, CliError> {
    let payoff = cfg.payoff;
    if let BarrierSpec::Moving { k, growth } = cfg.barrier {
        require_one_dimensional(cfg)?;
        let motion = moving_motion(k, growth, spec.horizon)?;
        let e = price_moving_barrier_symmetrized(base.clone(), &motion, &cfg.model.x0, move |x| payoff.eval(x), payoff.cap, plan)?;
        return Ok(Row::from_estimate(EstimatorKind::Symmetrized.label(), &e, spec));
    }
    let model = symmetrized_model(cfg, base)?;
    let wrapped = Payoff::new(move |x| payoff.eval(x), model.group().family().clone(), payoff.cap)?;
    let e = price_symmetrized(&model, &cfg.model.x0, &wrapped, plan)?;
    Ok(Row::from_estimate(EstimatorKind::Symmetrized.label(), &e, spec))
}

fn oracle(cfg: &RunConfig, base: &DiffusionModel, plan: &SimulationPlan, spec: &PlanSpec, kind: EstimatorKind) -> Result<Row, CliError> {
    let monitoring = if kind == EstimatorKind::OracleBridge { Monitoring::Bridge } else { Monitoring::Discrete };
    let payoff = cfg.payoff;
    let capped = AtomicU64::new(0);
    let f = |x: &[f64]| {
        let v = payoff.eval(x);
        if v.abs() > payoff.cap {
            capped.fetch_add(1, Ordering::Relaxed);
            v.clamp(-payoff.cap, payoff.cap)
        } else {
            v
        }
    };
    let mut e = match cfg.barrier {
        BarrierSpec::Moving { k, growth } => {
            require_one_dimensional(cfg)?;
            price_moving_barrier_oracle(base, &moving_motion(k, growth, spec.horizon)?, &cfg.model.x0, f, plan, monitoring)?
        }
        ref barrier => price_barrier_oracle(base, &static_family(barrier, cfg.model.dim())?, &cfg.model.x0, f, plan, monitoring)?,
    };
    e.capped = capped.load(Ordering::Relaxed);
    Ok(Row::from_estimate(kind.label(), &e, spec))
}

/// Undiscounted closed-form value where one exists for the configuration.
pub fn closed_form(cfg: &RunConfig) -> Result<f64, CliError> {
    let unavailable = || {
        CliError::config(
            None,
            Some("estimators"),
            "closed-form needs barrier.K with either gbm and a call payoff, or one-dimensional driftless bm/abm and an indicator payoff",
        )
    };
    let BarrierSpec::Single { k } = cfg.barrier else { return Err(unavailable()) };
    let m = &cfg.model;
    let t = cfg.plan.horizon;
    let x0 = m.x0[0];
    let value = match (m.name, cfg.payoff.kind) {
        (ModelName::Gbm, PayoffKind::Call) => {
            if x0 <= k {
                0.0
            } else {
                (m.r * t).exp() * closed_form_dao_call(x0, cfg.payoff.strike, k, m.sigma, m.r, t)?
            }
        }
        (ModelName::Abm | ModelName::Bm, PayoffKind::Indicator) if m.dim() == 1 && m.mu == 0.0 => {
            if x0 <= k {
                0.0
            } else {
                survival_probability_bm(x0, k, m.sigma, t)?
            }
        }
        _ => return Err(unavailable()),
    };
    Ok(value.min(cfg.payoff.cap))
}

pub fn simulation_plan(spec: &PlanSpec) -> Result<SimulationPlan, CliError> {
    SimulationPlan::new(spec.paths, spec.steps, spec.horizon, spec.seed).map_err(|e| CliError::config(None, Some("plan"), &e.to_string()))
}

/// Runs one estimator under the given plan.
pub fn run_estimator(cfg: &RunConfig, base: &DiffusionModel, kind: EstimatorKind, spec: &PlanSpec) -> Result<Row, CliError> {
    let plan = simulation_plan(spec)?;
    match kind {
        EstimatorKind::Symmetrized => symmetrized(cfg, base, &plan, spec),
        EstimatorKind::OracleDiscrete | EstimatorKind::OracleBridge => oracle(cfg, base, &plan, spec, kind),
        EstimatorKind::ClosedForm => Ok(Row::closed_form(closed_form(cfg)?, spec)),
    }
}

/// Every configured estimator, in configuration order.
pub fn run_price(cfg: &RunConfig) -> Result<Vec<Row>, CliError> {
    let base = build_model(&cfg.model)?;
    if cfg.estimators.contains(&EstimatorKind::ClosedForm) {
        closed_form(cfg)?;
    }
    cfg.estimators.iter().map(|&kind| run_estimator(cfg, &base, kind, &cfg.plan)).collect()
}

/// Reference for a convergence sweep and where it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reference {
    pub label: &'static str,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub row: Row,
    pub reference: f64,
}

pub fn run_convergence(cfg: &RunConfig, steps: &[usize], paths: &[usize]) -> Result<(Reference, Vec<SweepRow>), CliError> {
    if steps.is_empty() || paths.is_empty() {
        return Err(CliError::config(None, None, "convergence needs non-empty --steps and --paths lists"));
    }
    if steps.contains(&0) || paths.contains(&0) {
        return Err(CliError::config(None, None, "sweep entries must be positive"));
    }
    let estimators: Vec<EstimatorKind> = cfg.estimators.iter().copied().filter(|k| *k != EstimatorKind::ClosedForm).collect();
    if estimators.is_empty() {
        return Err(CliError::config(None, Some("estimators"), "convergence needs at least one simulation estimator"));
    }
    let base = build_model(&cfg.model)?;
    let reference = match closed_form(cfg) {
        Ok(value) => Reference { label: EstimatorKind::ClosedForm.label(), value },
        Err(_) => {
            let finest = PlanSpec { steps: *steps.iter().max().unwrap_or(&1), paths: *paths.iter().max().unwrap_or(&1), ..cfg.plan };
            let row = run_estimator(cfg, &base, EstimatorKind::OracleBridge, &finest)?;
            Reference { label: EstimatorKind::OracleBridge.label(), value: row.mean }
        }
    };
    let mut rows = Vec::new();
    for &kind in &estimators {
        for &s in steps {
            for &p in paths {
                let spec = PlanSpec { steps: s, paths: p, ..cfg.plan };
                rows.push(SweepRow { row: run_estimator(cfg, &base, kind, &spec)?, reference: reference.value });
            }
        }
    }
    Ok((reference, rows))
}

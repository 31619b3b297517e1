//! Euler–Maruyama simulation with partition-independent results.

use rayon::prelude::*;

use super::rng::PathRng;
use super::{Dynamics, SdeError};

/// Paths per work unit. Fixed so that the work split never depends on the thread count.
pub(crate) const CHUNK: usize = 1024;

/// A run exceeding this fraction of non-finite paths is rejected.
pub const MAX_EXCLUDED_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationPlan {
    pub paths: usize,
    pub steps: usize,
    pub horizon: f64,
    pub seed: u64,
    pub record_terminal_only: bool,
}

impl SimulationPlan {
    pub fn new(paths: usize, steps: usize, horizon: f64, seed: u64) -> Result<Self, SdeError> {
        let plan = Self { paths, steps, horizon, seed, record_terminal_only: true };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<(), SdeError> {
        if self.paths == 0 {
            return Err(SdeError::InvalidPlan("paths must be at least 1".into()));
        }
        if self.steps == 0 {
            return Err(SdeError::InvalidPlan("steps must be at least 1".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(SdeError::InvalidPlan("horizon must be positive and finite".into()));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn with_steps(self, steps: usize) -> Self {
        Self { steps, ..self }
    }

    pub fn with_paths(self, paths: usize) -> Self {
        Self { paths, ..self }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

/// What the simulator hands a step visitor after each Euler step.
pub(crate) struct StepView<'a> {
    /// Index of the new state, `1..=steps`.
    pub step: usize,
    pub dt: f64,
    pub next: &'a [f64],
    /// Row-major diffusion matrix evaluated at `prev`.
    pub sigma: &'a [f64],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Flow {
    Continue,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum PathStatus {
    Finished,
    Stopped,
    NonFinite,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct PathOutcome {
    pub status: PathStatus,
    pub gap_hits: u64,
}

pub(crate) struct Workspace {
    pub x: Vec<f64>,
    next: Vec<f64>,
    sigma: Vec<f64>,
    mu: Vec<f64>,
    dw: Vec<f64>,
    pub scratch: Vec<f64>,
}

impl Workspace {
    pub fn new<D: Dynamics + ?Sized>(model: &D) -> Self {
        let d = model.dim();
        Self {
            x: vec![0.0; d],
            next: vec![0.0; d],
            sigma: vec![0.0; d * d],
            mu: vec![0.0; d],
            dw: vec![0.0; d],
            scratch: vec![0.0; model.scratch_len().max(d)],
        }
    }
}

/// Simulates one path; the terminal (or stopping) state is left in `ws.x`.
pub(crate) fn run_path<D, V>(model: &D, x0: &[f64], plan: &SimulationPlan, path: usize, ws: &mut Workspace, mut visit: V) -> PathOutcome
where
    D: Dynamics + ?Sized,
    V: FnMut(&StepView<'_>) -> Flow,
{
    let d = model.dim();
    let dt = plan.dt();
    let sqrt_dt = dt.sqrt();
    let clock = model.clock();
    let mut rng = PathRng::new(plan.seed, path as u64);
    let mut gap_hits = 0;
    ws.x.copy_from_slice(x0);
    for n in 0..plan.steps {
        if !model.eval(&ws.x, &mut ws.sigma, &mut ws.mu, &mut ws.scratch) {
            gap_hits += 1;
        }
        for (i, w) in ws.dw.iter_mut().enumerate() {
            *w = if clock == Some(i) { 0.0 } else { sqrt_dt * rng.normal() };
        }
        let mut finite = true;
        for i in 0..d {
            let row = &ws.sigma[i * d..(i + 1) * d];
            let mut inc = ws.mu[i] * dt;
            for (s, w) in row.iter().zip(&ws.dw) {
                inc += s * w;
            }
            let v = ws.x[i] + inc;
            finite &= v.is_finite();
            ws.next[i] = v;
        }
        if let Some(c) = clock {
            ws.next[c] = x0[c] + (n + 1) as f64 * dt;
        }
        if !finite {
            return PathOutcome { status: PathStatus::NonFinite, gap_hits };
        }
        let flow = visit(&StepView { step: n + 1, dt, next: &ws.next, sigma: &ws.sigma });
        std::mem::swap(&mut ws.x, &mut ws.next);
        if flow == Flow::Stop {
            return PathOutcome { status: PathStatus::Stopped, gap_hits };
        }
    }
    PathOutcome { status: PathStatus::Finished, gap_hits }
}

/// Runs `per_path` for every path index and returns the results in path order.
pub(crate) fn map_paths<D, R, F>(model: &D, paths: usize, per_path: F) -> Vec<R>
where
    D: Dynamics + ?Sized,
    R: Send,
    F: Fn(usize, &mut Workspace) -> R + Sync,
{
    let chunks = paths.div_ceil(CHUNK);
    let nested: Vec<Vec<R>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut ws = Workspace::new(model);
            let end = ((c + 1) * CHUNK).min(paths);
            (c * CHUNK..end).map(|p| per_path(p, &mut ws)).collect()
        })
        .collect();
    nested.into_iter().flatten().collect()
}

pub(crate) fn check_excluded(excluded: usize, paths: usize) -> Result<(), SdeError> {
    if excluded as f64 > MAX_EXCLUDED_FRACTION * paths as f64 {
        return Err(SdeError::TooManyExcluded { excluded, paths });
    }
    Ok(())
}

pub(crate) fn check_start<D: Dynamics + ?Sized>(model: &D, x0: &[f64]) -> Result<(), SdeError> {
    if x0.len() != model.dim() {
        return Err(SdeError::DimensionMismatch { expected: model.dim(), got: x0.len() });
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(SdeError::NonFiniteStart);
    }
    Ok(())
}

/// Observer invoked as `(path, step, state)` for `step = 0..=steps`.
pub type Observer<'a> = &'a (dyn Fn(usize, usize, &[f64]) + Sync);

/// Simulated terminal states, flattened path-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutput {
    pub dim: usize,
    /// `paths x dim` terminal states; rows of excluded paths hold NaN.
    pub terminal: Vec<f64>,
    /// Full trajectories `paths x (steps + 1) x dim` when the plan asked for them.
    pub trajectories: Option<Vec<f64>>,
    pub excluded: Vec<bool>,
    pub gap_hits: u64,
}

impl SimulationOutput {
    pub fn paths(&self) -> usize {
        self.excluded.len()
    }

    pub fn state(&self, path: usize) -> &[f64] {
        &self.terminal[path * self.dim..(path + 1) * self.dim]
    }

    pub fn excluded_count(&self) -> usize {
        self.excluded.iter().filter(|e| **e).count()
    }

    /// Terminal states of paths that completed.
    pub fn kept(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.excluded.iter().enumerate().filter(|(_, e)| !**e).map(move |(p, _)| self.state(p))
    }
}

/// Euler–Maruyama: `X_{n+1} = X_n + σ(X_n) ΔW_n + μ(X_n) Δt`, one noise stream per path.
pub fn simulate<D: Dynamics + ?Sized>(model: &D, x0: &[f64], plan: &SimulationPlan, observer: Option<Observer<'_>>) -> Result<SimulationOutput, SdeError> {
    plan.validate()?;
    check_start(model, x0)?;
    let d = model.dim();
    let keep_paths = !plan.record_terminal_only;
    let results = map_paths(model, plan.paths, |p, ws| {
        if let Some(obs) = observer {
            obs(p, 0, x0);
        }
        let mut trajectory = if keep_paths { Vec::with_capacity((plan.steps + 1) * d) } else { Vec::new() };
        if keep_paths {
            trajectory.extend_from_slice(x0);
        }
        let outcome = run_path(model, x0, plan, p, ws, |view| {
            if let Some(obs) = observer {
                obs(p, view.step, view.next);
            }
            if keep_paths {
                trajectory.extend_from_slice(view.next);
            }
            Flow::Continue
        });
        let ok = outcome.status == PathStatus::Finished;
        let state: Vec<f64> = if ok { ws.x.clone() } else { vec![f64::NAN; d] };
        if keep_paths && !ok {
            trajectory.resize((plan.steps + 1) * d, f64::NAN);
        }
        (state, trajectory, !ok, outcome.gap_hits)
    });
    let mut terminal = Vec::with_capacity(plan.paths * d);
    let mut trajectories = if keep_paths { Some(Vec::with_capacity(plan.paths * (plan.steps + 1) * d)) } else { None };
    let mut excluded = Vec::with_capacity(plan.paths);
    let mut gap_hits = 0;
    for (state, traj, ex, gaps) in results {
        terminal.extend(state);
        if let Some(all) = trajectories.as_mut() {
            all.extend(traj);
        }
        excluded.push(ex);
        gap_hits += gaps;
    }
    let out = SimulationOutput { dim: d, terminal, trajectories, excluded, gap_hits };
    check_excluded(out.excluded_count(), plan.paths)?;
    Ok(out)
}

//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any failure.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use symbar_core::group::DEFAULT_CAP;
use symbar_core::pricing::{
    double_barrier_family, normal_cdf, price_barrier_oracle, price_double_barrier, price_moving_barrier_oracle, price_moving_barrier_symmetrized,
    price_symmetrized, richardson_bias, Monitoring, Payoff,
};
use symbar_core::sde::{arithmetic_bm, gbm, heston, symmetrize_sv, HestonParams};
use symbar_core::transforms::straighten_boundary;
use symbar_core::{
    simulate, BoundaryMotion, Diffeomorphism, Estimate, GroupError, Hyperplane, HyperplaneFamily, ReflectionGroup, SimulationPlan, SymmetrizedModel,
};

use common::*;

type Check = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Check + 'a>);

fn verdict(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn show(e: &Estimate) -> String {
    format!("{:.6} ± {:.6}", e.mean, e.stderr)
}

fn above(k: f64) -> HyperplaneFamily {
    HyperplaneFamily::new(vec![Hyperplane::from_slice(&[1.0], k).unwrap()], DVector::from_vec(vec![k + 1.0])).unwrap()
}

struct Context {
    dir: PathBuf,
    c1_config: PathBuf,
    c1_report: PathBuf,
}

fn price_to(config: &Path, out: &Path, workers: usize) -> Vec<u8> {
    let run = symbar().args(["price", config.to_str().unwrap(), "--workers", &workers.to_string(), "--out", out.to_str().unwrap()]).output().unwrap();
    assert_eq!(code(&run), 0, "symbar failed: {}", String::from_utf8_lossy(&run.stderr));
    std::fs::read(out).unwrap()
}

fn criterion_1(ctx: &Context) -> Check {
    let seed = 2024;
    std::fs::write(&ctx.c1_config, dao_config(1_000_000, 400, seed, "symmetrized, closed-form")).unwrap();
    let half = write_config(&ctx.dir, "c1_half.cfg", &dao_config(1_000_000, 200, seed, "symmetrized"));
    let fine = rows(&price_to(&ctx.c1_config, &ctx.c1_report, 1));
    let coarse = rows(&price_to(&half, &ctx.dir.join("c1_half.csv"), 1));
    let reference = field(by_label(&fine, "closed-form"), "mean");
    let sym = by_label(&fine, "symmetrized");
    let (mean, se, gaps) = (field(sym, "mean"), field(sym, "stderr"), field(sym, "gap_hits"));
    let bias = (mean - field(&coarse[0], "mean")).abs();
    let err = (mean - reference).abs();

    // Independent cross-check of the reference by the bridge oracle.
    let model = gbm(0.2, 0.0).unwrap();
    let call = |x: &[f64]| (x[0] - 100.0).max(0.0);
    let plan = SimulationPlan::new(200_000, 400, 1.0, seed).unwrap();
    let orc = price_barrier_oracle(&model, &above(90.0), &[100.0], call, &plan, Monitoring::Bridge).unwrap();
    let orc_half = price_barrier_oracle(&model, &above(90.0), &[100.0], call, &plan.with_steps(200), Monitoring::Bridge).unwrap();
    let orc_ok = (orc.mean - reference).abs() <= 3.0 * orc.stderr + richardson_bias(&orc, &orc_half);

    verdict(
        err <= 3.0 * se + bias && gaps == 0.0 && orc_ok,
        format!(
            "closed form {reference:.6}; symmetrized {mean:.6} ± {se:.6}, |err| {err:.6} <= 3se + bias {:.6}; bridge oracle {}",
            3.0 * se + bias,
            show(&orc)
        ),
    )
}

fn criterion_2() -> Check {
    let reference = 2.0 * normal_cdf(1.0) - 1.0;
    let model = arithmetic_bm(1.0, 0.0).unwrap();
    let plan = SimulationPlan::new(100_000, 200, 1.0, 7).unwrap();
    let group = ReflectionGroup::generate(above(0.0), DEFAULT_CAP).unwrap();
    let sym_model = SymmetrizedModel::new(model.clone(), group).unwrap();
    let payoff = Payoff::new(|_| 1.0, above(0.0), 1.0).unwrap();
    let sym = price_symmetrized(&sym_model, &[1.0], &payoff, &plan).unwrap();
    let orc = price_barrier_oracle(&model, &above(0.0), &[1.0], |_| 1.0, &plan, Monitoring::Bridge).unwrap();
    let orc_half = price_barrier_oracle(&model, &above(0.0), &[1.0], |_| 1.0, &plan.with_steps(100), Monitoring::Bridge).unwrap();
    let sym_ok = (sym.mean - reference).abs() <= 3.0 * sym.stderr && sym.trusted();
    let orc_ok = (orc.mean - reference).abs() <= 3.0 * orc.stderr + richardson_bias(&orc, &orc_half);
    verdict(sym_ok && orc_ok, format!("2Φ(1)−1 = {reference:.6}; symmetrized {}; bridge oracle {}", show(&sym), show(&orc)))
}

fn criterion_3() -> Check {
    let base = heston(HestonParams { r: 0.0, kappa: 2.0, theta: 0.04, xi: 0.3, rho: 0.0 }).unwrap();
    let model = symmetrize_sv(base.clone(), 90.0).unwrap();
    let family = model.group().family().clone();
    let call = |x: &[f64]| (x[0] - 100.0).max(0.0);
    let payoff = Payoff::new(call, family.clone(), 1e6).unwrap();
    let x0 = [100.0, 0.04];
    let plan = SimulationPlan::new(100_000, 400, 1.0, 31).unwrap();
    let run = |plan: &SimulationPlan| {
        let s = price_symmetrized(&model, &x0, &payoff, plan).unwrap();
        let o = price_barrier_oracle(&base, &family, &x0, call, plan, Monitoring::Bridge).unwrap();
        (s, o)
    };
    let (sym, orc) = run(&plan);
    let (sym_half, orc_half) = run(&plan.with_steps(200));
    let diff = sym.mean - orc.mean;
    let bias = (diff - (sym_half.mean - orc_half.mean)).abs();
    let allowance = 3.0 * sym.combined_stderr(&orc) + bias;
    verdict(
        diff.abs() <= allowance && sym.trusted(),
        format!("symmetrized {}; bridge oracle {}; |diff| {:.6} <= {allowance:.6}", show(&sym), show(&orc), diff.abs()),
    )
}

fn criterion_4() -> Check {
    let model = gbm(0.2, 0.0).unwrap();
    let plan = SimulationPlan::new(100_000, 200, 0.5, 41).unwrap();
    let f = |x: &[f64]| if x[0] < 110.0 { (x[0] - 95.0).max(0.0) } else { 0.0 };
    let bound = 15.0;
    let n5 = price_double_barrier(&model, 90.0, 20.0, &[100.0], f, bound, &plan, 5).unwrap();
    let n10 = price_double_barrier(&model, 90.0, 20.0, &[100.0], f, bound, &plan, 10).unwrap();
    let family = double_barrier_family(1, 90.0, 20.0).unwrap();
    let orc = price_barrier_oracle(&model, &family, &[100.0], f, &plan, Monitoring::Bridge).unwrap();
    let truncation = (n5.mean - n10.mean).abs();
    let a = truncation < 1e-10 * bound && n5.gap_hits == 0 && n10.gap_hits == 0;
    let b = (n5.mean - orc.mean).abs() <= 3.0 * n5.combined_stderr(&orc);
    verdict(a && b, format!("N=5 {} vs N=10 differ by {truncation:e}, gaps {}/{}; bridge oracle {}", show(&n5), n5.gap_hits, n10.gap_hits, show(&orc)))
}

fn family(planes: &[(&[f64], f64)], witness: &[f64]) -> HyperplaneFamily {
    HyperplaneFamily::new(planes.iter().map(|(a, k)| Hyperplane::from_slice(a, *k).unwrap()).collect(), DVector::from_vec(witness.to_vec())).unwrap()
}

fn wedge(angle: f64) -> HyperplaneFamily {
    let mid = 0.5 * angle;
    family(&[(&[0.0, 1.0], 0.0), (&[angle.sin(), -angle.cos()], 0.0)], &[mid.cos(), mid.sin()])
}

/// Order of the group generated by the linear reflections `I - 2 n nᵀ / |n|²`, by closure over words.
fn brute_force_order(normals: &[Vec<f64>], max_len: usize) -> usize {
    let d = normals[0].len();
    let gens: Vec<DMatrix<f64>> = normals
        .iter()
        .map(|n| {
            let n = DVector::from_vec(n.clone());
            DMatrix::identity(d, d) - 2.0 * &n * n.transpose() / n.norm_squared()
        })
        .collect();
    let mut seen = vec![DMatrix::<f64>::identity(d, d)];
    let mut layer = seen.clone();
    for _ in 0..max_len {
        let mut next = Vec::new();
        for g in &layer {
            for s in &gens {
                let h = g * s;
                if !seen.iter().any(|e| (e - &h).amax() < 1e-9) {
                    seen.push(h.clone());
                    next.push(h);
                }
            }
        }
        layer = next;
    }
    seen.len()
}

fn group_checks(g: &ReflectionGroup, notes: &mut Vec<String>) -> bool {
    let mut ok = true;
    let fam = g.family();
    for (i, h) in fam.hyperplanes().iter().enumerate() {
        let s = h.as_isometry();
        if s.compose(&s).unwrap().distance(&symbar_core::AffineIsometry::identity(fam.dim())) > 1e-12 {
            notes.push(format!("s{i} is not an involution"));
            ok = false;
        }
        match g.find(&s) {
            Some(idx) if g.element(idx).eta() == -1 => {}
            _ => {
                notes.push(format!("η(s{i}) != -1"));
                ok = false;
            }
        }
    }
    if g.is_complete() {
        for a in g.elements() {
            for b in g.elements() {
                let ab = a.isometry().compose(b.isometry()).unwrap();
                match g.find(&ab) {
                    Some(idx) if g.element(idx).eta() == a.eta() * b.eta() => {}
                    _ => {
                        notes.push("η is not a homomorphism".into());
                        return false;
                    }
                }
            }
        }
        let rep = g.verify_disjointness(10_000, 99).unwrap();
        if rep.max_cover != 1 || rep.uncovered != 0 {
            notes.push(format!("disjointness failed: {rep:?}"));
            ok = false;
        }
    }
    ok
}

fn criterion_5() -> Check {
    let mut notes = Vec::new();
    let mut ok = true;
    for (m, order) in [(2usize, 4usize), (3, 6), (4, 8)] {
        let fam = wedge(std::f64::consts::PI / m as f64);
        let normals: Vec<Vec<f64>> = fam.hyperplanes().iter().map(|h| h.alpha().iter().copied().collect()).collect();
        let g = ReflectionGroup::generate(fam, DEFAULT_CAP).unwrap();
        let brute = brute_force_order(&normals, 2 * order);
        ok &= g.is_complete() && g.len() == order && brute == order && group_checks(&g, &mut notes);
        notes.push(format!("π/{m}: {} elements (closure {brute})", g.len()));
    }
    let orthant = family(&[(&[1.0, 0.0, 0.0], 0.0), (&[0.0, 1.0, 0.0], 0.0), (&[0.0, 0.0, 1.0], 0.0)], &[1.0, 1.0, 1.0]);
    let g = ReflectionGroup::generate(orthant, DEFAULT_CAP).unwrap();
    ok &= g.len() == 8 && group_checks(&g, &mut notes);
    let interval = family(&[(&[1.0], 0.0), (&[-1.0], -1.0)], &[0.5]);
    let g = ReflectionGroup::generate(interval, 21).unwrap();
    ok &= !g.is_complete() && g.len() == 21 && group_checks(&g, &mut notes);
    match ReflectionGroup::generate(wedge(1.0), DEFAULT_CAP) {
        Err(GroupError::ChamberCollision { point, word_a, word_b }) => {
            notes.push(format!("1-radian wedge rejected ({word_a:?} vs {word_b:?} at {point:.3?})"));
        }
        other => {
            notes.push(format!("1-radian wedge not rejected: {other:?}"));
            ok = false;
        }
    }
    verdict(ok, notes.join("; "))
}

fn rotation(theta: f64) -> DMatrix<f64> {
    let (s, c) = theta.sin_cos();
    DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
}

fn criterion_6() -> Check {
    let omega = 2.0;
    // Non-orthogonal walls at 60 degrees, rotating rigidly.
    let a0 = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 3f64.sqrt() / 2.0]);
    let (a0a, a0b) = (a0.clone(), a0.clone());
    let motion = BoundaryMotion::new(
        move |t| rotation(omega * t) * &a0a,
        move |t| {
            let (s, c) = (omega * t).sin_cos();
            DMatrix::from_row_slice(2, 2, &[-omega * s, -omega * c, omega * c, -omega * s]) * &a0b
        },
        DVector::from_vec(vec![0.0, 0.0]),
    )
    .unwrap();
    let s = straighten_boundary(&motion, 1.0, Some(1e-3), None).unwrap();
    let worst = (0..=10_000).map(|i| i as f64 * 1e-4).map(|t| (s.c(t) * motion.a(t) - &a0).amax()).fold(0.0, f64::max);

    let growth = 0.1;
    let barrier = BoundaryMotion::new(
        move |t| DMatrix::from_element(1, 1, 1.0 / (1.0 + growth * t)),
        move |t| DMatrix::from_element(1, 1, -growth / ((1.0 + growth * t) * (1.0 + growth * t))),
        DVector::from_vec(vec![90.0]),
    )
    .unwrap();
    let model = gbm(0.2, 0.0).unwrap();
    let plan = SimulationPlan::new(100_000, 400, 1.0, 61).unwrap();
    let sym = price_moving_barrier_symmetrized(model.clone(), &barrier, &[100.0], |_| 1.0, 1.0, &plan).unwrap();
    let orc = price_moving_barrier_oracle(&model, &barrier, &[100.0], |_| 1.0, &plan, Monitoring::Bridge).unwrap();
    let discrete = price_moving_barrier_oracle(&model, &barrier, &[100.0], |_| 1.0, &plan, Monitoring::Discrete).unwrap();
    let ok = worst <= 1e-8 && sym.trusted() && (sym.mean - orc.mean).abs() <= 3.0 * sym.combined_stderr(&orc);
    verdict(
        ok,
        format!(
            "max |C(t)A(t) − A(0)| = {worst:.2e}; survival symmetrized {}, bridge oracle {} (discrete-monitoring oracle {})",
            show(&sym),
            show(&orc),
            show(&discrete)
        ),
    )
}

fn moments(values: impl Iterator<Item = f64>) -> [(f64, f64); 2] {
    let v: Vec<f64> = values.collect();
    let n = v.len() as f64;
    let stat = |g: &dyn Fn(f64) -> f64| {
        let mean = v.iter().map(|x| g(*x)).sum::<f64>() / n;
        let var = v.iter().map(|x| (g(*x) - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    };
    [stat(&|x| x), stat(&|x| x * x)]
}

fn criterion_7() -> Check {
    let (nu, r) = (0.2, 0.05);
    let samples: Vec<Vec<f64>> = [20.0, 60.0, 90.0, 100.0, 140.0, 300.0].iter().map(|x| vec![*x]).collect();
    let log = Diffeomorphism::new(1, |x, o| o[0] = x[0].ln(), |x, o| o[0] = 1.0 / x[0], |x, o| o[0] = -1.0 / (x[0] * x[0]), |y, o| o[0] = y[0].exp(), &samples)
        .unwrap();
    let base = gbm(nu, r).unwrap();
    let transformed = symbar_core::transforms::transform_curved(&base, &log).unwrap();
    let want = r - 0.5 * nu * nu;
    let mut worst: f64 = 0.0;
    for i in 0..=200 {
        let y = 2.0 + 0.02 * i as f64;
        worst = worst.max((transformed.drift_at(&[y])[0] - want).abs() / want.abs());
        worst = worst.max((transformed.diffusion_at(&[y])[(0, 0)] - nu).abs() / nu);
    }
    let plan = SimulationPlan::new(100_000, 200, 1.0, 71).unwrap();
    let mapped = simulate(&base, &[100.0], &plan, None).unwrap();
    let direct = simulate(&transformed, &[100f64.ln()], &plan.with_seed(72), None).unwrap();
    let a = moments(mapped.kept().map(|x| x[0].ln()));
    let b = moments(direct.kept().map(|y| y[0]));
    let z: Vec<f64> = a.iter().zip(&b).map(|(p, q)| (p.0 - q.0).abs() / p.1.hypot(q.1)).collect();
    verdict(
        worst <= 1e-14 && z.iter().all(|z| *z <= 4.0),
        format!(
            "max relative coefficient error {worst:.1e}; moments mapped {:.6}/{:.6}, transformed {:.6}/{:.6}, z = {:.2}/{:.2}",
            a[0].0, a[1].0, b[0].0, b[1].0, z[0], z[1]
        ),
    )
}

fn criterion_8(ctx: &Context) -> Check {
    let first = std::fs::read(&ctx.c1_report).map_err(|e| format!("criterion 1 report missing: {e}"))?;
    let workers = std::thread::available_parallelism().map_or(1, usize::from).max(4);
    let second = price_to(&ctx.c1_config, &ctx.dir.join("c1_parallel.csv"), workers);
    verdict(first == second, format!("criterion 1 rerun with {workers} workers vs 1 worker: {} bytes, identical = {}", first.len(), first == second))
}

fn main() -> ExitCode {
    let dir = tempfile::tempdir().unwrap();
    let ctx = Context { dir: dir.path().to_path_buf(), c1_config: dir.path().join("c1.cfg"), c1_report: dir.path().join("c1.csv") };
    let criteria: Vec<Criterion<'_>> = vec![
        ("1 single-barrier identity", Box::new(|| criterion_1(&ctx))),
        ("2 reflection principle", Box::new(criterion_2)),
        ("3 stochastic volatility", Box::new(criterion_3)),
        ("4 double-barrier series", Box::new(criterion_4)),
        ("5 group algebra", Box::new(criterion_5)),
        ("6 straightening", Box::new(criterion_6)),
        ("7 transform consistency", Box::new(criterion_7)),
        ("8 determinism", Box::new(|| criterion_8(&ctx))),
    ];
    let mut failures = 0;
    for (name, check) in &criteria {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS criterion {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failures += 1;
                println!("FAIL criterion {name} ({secs:.1}s): {detail}");
            }
        }
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

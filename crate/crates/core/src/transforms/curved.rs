use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use super::TransformError;
use crate::geometry::MAX_DIM;
use crate::sde::{DiffusionModel, Dynamics as _, Field};

/// Writes the `d` Hessians of the components of `F`, each a row-major `d x d` block.
pub type HessianField = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Round trips worse than this make the transformed coefficients unusable.
pub const INVERSION_TOLERANCE: f64 = 1e-6;
const ROUND_TRIP_TOLERANCE: f64 = 1e-8;
const DERIVATIVE_TOLERANCE: f64 = 1e-5;

/// A smooth map `F` with its inverse and first and second derivatives, all supplied by the caller.
#[derive(Clone)]
pub struct Diffeomorphism {
    dim: usize,
    map: Field,
    jacobian: Field,
    hessians: HessianField,
    inverse: Field,
    samples: Vec<Vec<f64>>,
}

impl fmt::Debug for Diffeomorphism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Diffeomorphism").field("dim", &self.dim).field("samples", &self.samples.len()).finish()
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

impl Diffeomorphism {
    /// Builds the map and checks it at `samples`: the inverse must round-trip
    /// to 1e-8 and the derivatives must agree with central differences.
    pub fn new<F, J, H, I>(dim: usize, map: F, jacobian: J, hessians: H, inverse: I, samples: &[Vec<f64>]) -> Result<Self, TransformError>
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        J: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        H: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        I: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        if dim == 0 || dim > MAX_DIM {
            return Err(TransformError::Invalid(format!("dimension {dim}")));
        }
        if samples.is_empty() {
            return Err(TransformError::Invalid("at least one sample point is needed".into()));
        }
        if let Some(bad) = samples.iter().find(|s| s.len() != dim) {
            return Err(TransformError::Shape { what: "sample point", expected: dim, got: bad.len() });
        }
        let out =
            Self { dim, map: Arc::new(map), jacobian: Arc::new(jacobian), hessians: Arc::new(hessians), inverse: Arc::new(inverse), samples: samples.to_vec() };
        out.validate()?;
        Ok(out)
    }

    pub fn identity(dim: usize, samples: &[Vec<f64>]) -> Result<Self, TransformError> {
        Self::new(
            dim,
            |x, o| o.copy_from_slice(x),
            move |_, o| {
                o.fill(0.0);
                for i in 0..dim {
                    o[i * dim + i] = 1.0;
                }
            },
            |_, o| o.fill(0.0),
            |y, o| o.copy_from_slice(y),
            samples,
        )
    }

    /// `F(x) = L x` for an invertible `L`.
    pub fn linear(l: DMatrix<f64>, samples: &[Vec<f64>]) -> Result<Self, TransformError> {
        let d = l.nrows();
        if l.ncols() != d {
            return Err(TransformError::Shape { what: "matrix columns", expected: d, got: l.ncols() });
        }
        let inv = l.clone().lu().try_inverse().ok_or(TransformError::SingularBoundary { t: 0.0, condition: f64::INFINITY })?;
        let (fwd, jac) = (l.clone(), l);
        Self::new(
            d,
            move |x, o| {
                for i in 0..d {
                    o[i] = (0..d).map(|j| fwd[(i, j)] * x[j]).sum();
                }
            },
            move |_, o| {
                for i in 0..d {
                    for j in 0..d {
                        o[i * d + j] = jac[(i, j)];
                    }
                }
            },
            |_, o| o.fill(0.0),
            move |y, o| {
                for i in 0..d {
                    o[i] = (0..d).map(|j| inv[(i, j)] * y[j]).sum();
                }
            },
            samples,
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        (self.map)(x, &mut out);
        out
    }

    pub fn apply_inverse(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        (self.inverse)(y, &mut out);
        out
    }

    pub fn jacobian_at(&self, x: &[f64]) -> DMatrix<f64> {
        let mut out = vec![0.0; self.dim * self.dim];
        (self.jacobian)(x, &mut out);
        DMatrix::from_row_slice(self.dim, self.dim, &out)
    }

    /// Hessian of component `i`.
    pub fn hessian_at(&self, x: &[f64], i: usize) -> DMatrix<f64> {
        let d = self.dim;
        let mut out = vec![0.0; d * d * d];
        (self.hessians)(x, &mut out);
        DMatrix::from_row_slice(d, d, &out[i * d * d..(i + 1) * d * d])
    }

    fn round_trip_error(&self, x: &[f64]) -> f64 {
        let back = self.apply_inverse(&self.apply(x));
        let err = back.iter().zip(x).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        err / (1.0 + max_abs(x))
    }

    fn validate(&self) -> Result<(), TransformError> {
        let d = self.dim;
        for x in &self.samples {
            let err = self.round_trip_error(x);
            if err.is_nan() || err > ROUND_TRIP_TOLERANCE {
                return Err(TransformError::InversionFailure { point: x.clone(), error: err });
            }
            let jac = self.jacobian_at(x);
            let mut fd = DMatrix::zeros(d, d);
            let mut hess_fd = vec![DMatrix::zeros(d, d); d];
            for j in 0..d {
                let h = 1e-6 * (1.0 + x[j].abs());
                let mut plus = x.clone();
                let mut minus = x.clone();
                plus[j] += h;
                minus[j] -= h;
                let (fp, fm) = (self.apply(&plus), self.apply(&minus));
                let (jp, jm) = (self.jacobian_at(&plus), self.jacobian_at(&minus));
                for i in 0..d {
                    fd[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
                    for k in 0..d {
                        hess_fd[i][(k, j)] = (jp[(i, k)] - jm[(i, k)]) / (2.0 * h);
                    }
                }
            }
            let err = (&jac - &fd).amax() / (1.0 + jac.amax());
            if err.is_nan() || err > DERIVATIVE_TOLERANCE {
                return Err(TransformError::JacobianMismatch { point: x.clone(), error: err });
            }
            for (i, hfd) in hess_fd.iter().enumerate() {
                let hess = self.hessian_at(x, i);
                let err = (&hess - hfd).amax() / (1.0 + hess.amax());
                if err.is_nan() || err > DERIVATIVE_TOLERANCE {
                    return Err(TransformError::HessianMismatch { point: x.clone(), error: err });
                }
            }
        }
        Ok(())
    }
}

/// Coefficients of `Y = F(X)` by Itô's formula, evaluated at `x = F^{-1}(y)`:
///
/// ```text
/// drift_i = <∇F_i, μ> + ½ tr(σσ^T Hess F_i),    diffusion = J_F σ
/// ```
///
/// Where the inverse no longer reproduces `y` to 1e-6 the coefficients are NaN,
/// which excludes the path.
pub fn transform_curved(base: &DiffusionModel, map: &Diffeomorphism) -> Result<DiffusionModel, TransformError> {
    let d = base.dim();
    if map.dim() != d {
        return Err(TransformError::Shape { what: "map dimension", expected: d, got: map.dim() });
    }
    if base.clock().is_some() {
        return Err(TransformError::Invalid("curved transform of a clocked model".into()));
    }
    for x in map.samples() {
        let err = map.round_trip_error(x);
        if err.is_nan() || err > INVERSION_TOLERANCE {
            return Err(TransformError::InversionFailure { point: x.clone(), error: err });
        }
    }

    let (drift_map, drift_base) = (map.clone(), base.clone());
    let (diff_map, diff_base) = (map.clone(), base.clone());
    let model = DiffusionModel::new(
        d,
        format!("curved({})", base.label()),
        move |y, out| {
            let mut x = [0.0; MAX_DIM];
            if !invert(&drift_map, y, &mut x[..d]) {
                out.fill(f64::NAN);
                return;
            }
            let x = &x[..d];
            let mut mu = [0.0; MAX_DIM];
            let mut sigma = [0.0; MAX_DIM * MAX_DIM];
            let mut jac = [0.0; MAX_DIM * MAX_DIM];
            let mut hess = [0.0; MAX_DIM * MAX_DIM * MAX_DIM];
            drift_base.drift_into(x, &mut mu[..d]);
            drift_base.diffusion_into(x, &mut sigma[..d * d]);
            (drift_map.jacobian)(x, &mut jac[..d * d]);
            (drift_map.hessians)(x, &mut hess[..d * d * d]);
            let mut cov = [0.0; MAX_DIM * MAX_DIM];
            for j in 0..d {
                for k in 0..d {
                    cov[j * d + k] = (0..d).map(|l| sigma[j * d + l] * sigma[k * d + l]).sum();
                }
            }
            for i in 0..d {
                let first: f64 = (0..d).map(|j| jac[i * d + j] * mu[j]).sum();
                let block = &hess[i * d * d..(i + 1) * d * d];
                let second: f64 = cov[..d * d].iter().zip(block).map(|(c, h)| c * h).sum();
                out[i] = first + 0.5 * second;
            }
        },
        move |y, out| {
            let mut x = [0.0; MAX_DIM];
            if !invert(&diff_map, y, &mut x[..d]) {
                out.fill(f64::NAN);
                return;
            }
            let x = &x[..d];
            let mut sigma = [0.0; MAX_DIM * MAX_DIM];
            let mut jac = [0.0; MAX_DIM * MAX_DIM];
            diff_base.diffusion_into(x, &mut sigma[..d * d]);
            (diff_map.jacobian)(x, &mut jac[..d * d]);
            for i in 0..d {
                for j in 0..d {
                    out[i * d + j] = (0..d).map(|k| jac[i * d + k] * sigma[k * d + j]).sum();
                }
            }
        },
    )?;
    Ok(model)
}

#[inline]
fn invert(map: &Diffeomorphism, y: &[f64], x: &mut [f64]) -> bool {
    let d = y.len();
    (map.inverse)(y, x);
    let mut fy = [0.0; MAX_DIM];
    (map.map)(x, &mut fy[..d]);
    let err = fy[..d].iter().zip(y).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    err <= INVERSION_TOLERANCE * (1.0 + max_abs(y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::{gbm, simulate, SimulationPlan};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn planar() -> DiffusionModel {
        DiffusionModel::new(
            2,
            "planar",
            |x, o| {
                o[0] = 0.2 - 0.1 * x[0];
                o[1] = 0.05 * x[0] * x[1];
            },
            |x, o| {
                o[0] = 0.3 + 0.1 * x[1].cos();
                o[1] = 0.1;
                o[2] = -0.05 * x[0];
                o[3] = 0.4;
            },
        )
        .unwrap()
    }

    fn grid2() -> Vec<Vec<f64>> {
        (0..5).flat_map(|i| (0..5).map(move |j| vec![-1.0 + 0.5 * i as f64, -1.0 + 0.5 * j as f64])).collect()
    }

    /// F(x) = (sinh x0, x1 + 0.3 x0^2 + 0.1 sin x0).
    fn triangular() -> Diffeomorphism {
        Diffeomorphism::new(
            2,
            |x, o| {
                o[0] = x[0].sinh();
                o[1] = x[1] + 0.3 * x[0] * x[0] + 0.1 * x[0].sin();
            },
            |x, o| {
                o[0] = x[0].cosh();
                o[1] = 0.0;
                o[2] = 0.6 * x[0] + 0.1 * x[0].cos();
                o[3] = 1.0;
            },
            |x, o| {
                o.fill(0.0);
                o[0] = x[0].sinh();
                o[4] = 0.6 - 0.1 * x[0].sin();
            },
            |y, o| {
                o[0] = y[0].asinh();
                o[1] = y[1] - 0.3 * o[0] * o[0] - 0.1 * o[0].sin();
            },
            &grid2(),
        )
        .unwrap()
    }

    fn log_map() -> Diffeomorphism {
        let samples: Vec<Vec<f64>> = [50.0, 90.0, 100.0, 150.0].iter().map(|x| vec![*x]).collect();
        Diffeomorphism::new(1, |x, o| o[0] = x[0].ln(), |x, o| o[0] = 1.0 / x[0], |x, o| o[0] = -1.0 / (x[0] * x[0]), |y, o| o[0] = y[0].exp(), &samples)
            .unwrap()
    }

    #[test]
    fn identity_is_exact() {
        let base = planar();
        let m = transform_curved(&base, &Diffeomorphism::identity(2, &grid2()).unwrap()).unwrap();
        for x in grid2() {
            assert_eq!(m.drift_at(&x), base.drift_at(&x));
            assert_eq!(m.diffusion_at(&x), base.diffusion_at(&x));
        }
    }

    #[test]
    fn linear_map() {
        let l = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, -1.0, 3.0]);
        let base = planar();
        let m = transform_curved(&base, &Diffeomorphism::linear(l.clone(), &grid2()).unwrap()).unwrap();
        for x in grid2() {
            let y = &l * nalgebra::DVector::from_vec(x.clone());
            assert!((m.drift_at(y.as_slice()) - &l * base.drift_at(&x)).amax() < 1e-12);
            assert!((m.diffusion_at(y.as_slice()) - &l * base.diffusion_at(&x)).amax() < 1e-12);
        }
    }

    #[test]
    fn log_of_gbm_has_constant_coefficients() {
        let (nu, r) = (0.2, 0.05);
        let m = transform_curved(&gbm(nu, r).unwrap(), &log_map()).unwrap();
        for y in [3.0, 4.0, 4.5, 4.60517, 5.5] {
            let drift = m.drift_at(&[y])[0];
            let diff = m.diffusion_at(&[y])[(0, 0)];
            let want = r - 0.5 * nu * nu;
            assert!((drift - want).abs() <= 1e-14 * want.abs().max(1.0), "{drift} vs {want}");
            assert!((diff - nu).abs() <= 1e-14 * nu, "{diff}");
        }
    }

    #[test]
    fn bad_derivatives_rejected() {
        let samples = vec![vec![1.0], vec![2.0]];
        let wrong_jac =
            Diffeomorphism::new(1, |x, o| o[0] = x[0].powi(3), |x, o| o[0] = 2.0 * x[0] * x[0], |x, o| o[0] = 6.0 * x[0], |y, o| o[0] = y[0].cbrt(), &samples);
        assert!(matches!(wrong_jac, Err(TransformError::JacobianMismatch { .. })));
        let wrong_hess =
            Diffeomorphism::new(1, |x, o| o[0] = x[0].powi(3), |x, o| o[0] = 3.0 * x[0] * x[0], |x, o| o[0] = 3.0 * x[0], |y, o| o[0] = y[0].cbrt(), &samples);
        assert!(matches!(wrong_hess, Err(TransformError::HessianMismatch { .. })));
        let wrong_inv =
            Diffeomorphism::new(1, |x, o| o[0] = x[0].powi(3), |x, o| o[0] = 3.0 * x[0] * x[0], |x, o| o[0] = 6.0 * x[0], |y, o| o[0] = y[0].sqrt(), &samples);
        assert!(matches!(wrong_inv, Err(TransformError::InversionFailure { .. })));
    }

    #[test]
    fn off_domain_coefficients_are_nan() {
        let samples = vec![vec![0.5], vec![2.0]];
        let square =
            Diffeomorphism::new(1, |x, o| o[0] = x[0] * x[0], |x, o| o[0] = 2.0 * x[0], |_, o| o[0] = 2.0, |y, o| o[0] = y[0].sqrt(), &samples).unwrap();
        let m = transform_curved(&gbm(0.2, 0.0).unwrap(), &square).unwrap();
        assert!(m.drift_at(&[-1.0])[0].is_nan());
        assert!(m.diffusion_at(&[-1.0])[(0, 0)].is_nan());
        assert!(m.drift_at(&[4.0])[0].is_finite());
    }

    #[test]
    fn finite_difference_ito_reconstruction() {
        let map = triangular();
        let base = planar();
        let m = transform_curved(&base, &map).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = |x: &[f64]| map.apply(x);
        for _ in 0..100 {
            let x = [rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)];
            let h = 1e-4;
            let mut jac = DMatrix::zeros(2, 2);
            let mut hess = [DMatrix::zeros(2, 2), DMatrix::zeros(2, 2)];
            let fx = f(&x);
            for j in 0..2 {
                let mut p = x;
                let mut q = x;
                p[j] += h;
                q[j] -= h;
                let (fp, fq) = (f(&p), f(&q));
                for i in 0..2 {
                    jac[(i, j)] = (fp[i] - fq[i]) / (2.0 * h);
                }
                for k in 0..2 {
                    let shift = |a: f64, b: f64| {
                        let mut z = x;
                        z[j] += a;
                        z[k] += b;
                        f(&z)
                    };
                    let (pp, pm, mp, mm) = (shift(h, h), shift(h, -h), shift(-h, h), shift(-h, -h));
                    for i in 0..2 {
                        hess[i][(j, k)] = if j == k { (f(&p)[i] - 2.0 * fx[i] + f(&q)[i]) / (h * h) } else { (pp[i] - pm[i] - mp[i] + mm[i]) / (4.0 * h * h) };
                    }
                }
            }
            let sigma = base.diffusion_at(&x);
            let mu = base.drift_at(&x);
            let cov = &sigma * sigma.transpose();
            let y = map.apply(&x);
            let drift = m.drift_at(&y);
            let diffusion = m.diffusion_at(&y);
            for i in 0..2 {
                let want = (jac.row(i) * &mu)[0] + 0.5 * cov.component_mul(&hess[i]).sum();
                assert!((drift[i] - want).abs() <= 1e-4 * (1.0 + want.abs()), "{} vs {want}", drift[i]);
            }
            let want = &jac * &sigma;
            assert!((diffusion - &want).amax() <= 1e-4 * (1.0 + want.amax()));
        }
    }

    #[test]
    fn mapped_and_transformed_simulations_agree() {
        let (nu, r) = (0.2, 0.05);
        let base = gbm(nu, r).unwrap();
        let plan = SimulationPlan::new(100_000, 100, 1.0, 12).unwrap();
        let direct = simulate(&base, &[100.0], &plan, None).unwrap();
        let mapped: Vec<f64> = direct.kept().map(|x| x[0].ln()).collect();
        let transformed = simulate(&transform_curved(&base, &log_map()).unwrap(), &[100f64.ln()], &plan, None).unwrap();
        let logs: Vec<f64> = transformed.kept().map(|x| x[0]).collect();
        for power in [1, 2] {
            let (ma, sa) = moment(&mapped, power);
            let (mb, sb) = moment(&logs, power);
            assert!((ma - mb).abs() < 4.0 * (sa * sa + sb * sb).sqrt(), "moment {power}: {ma} vs {mb}");
        }
    }

    fn moment(xs: &[f64], power: i32) -> (f64, f64) {
        let n = xs.len() as f64;
        let vals: Vec<f64> = xs.iter().map(|x| x.powi(power)).collect();
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    }
}

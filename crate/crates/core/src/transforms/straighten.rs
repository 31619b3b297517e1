//! Straightening of moving hyperplane boundaries.
//!
//! Walls `<α_i(t), x> = k_i` are collected as the columns of `A(t)`. If
//! `C(t) A(t)` is constant then `<α_i(t), x> = <C(0) α_i(0), M(t) x>` with
//! `M(t) = (C(t)^T)^{-1}`, so `Y_t = M(t) X_t` sees fixed walls.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{augment_time, TimeDependentModel, TransformError};
use crate::geometry::{Hyperplane, MAX_DIM};
use crate::group::HyperplaneFamily;
use crate::sde::DiffusionModel;

pub type MatrixPath = Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>;

/// Largest condition number of `A(t)` accepted while integrating.
pub const MAX_CONDITION: f64 = 1e8;

/// Nodes used when no step is given.
const DEFAULT_NODES: usize = 1024;

#[derive(Clone)]
pub struct BoundaryMotion {
    dim: usize,
    a: MatrixPath,
    a_dot: MatrixPath,
    offsets: DVector<f64>,
}

impl fmt::Debug for BoundaryMotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoundaryMotion").field("dim", &self.dim).field("offsets", &self.offsets.as_slice()).finish()
    }
}

impl BoundaryMotion {
    /// `a(t)` holds the wall normals as columns and `a_dot` is its time derivative.
    pub fn new<A, B>(a: A, a_dot: B, offsets: impl Into<DVector<f64>>) -> Result<Self, TransformError>
    where
        A: Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
        B: Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
    {
        let offsets = offsets.into();
        let dim = offsets.len();
        if dim == 0 || dim > MAX_DIM - 1 {
            return Err(TransformError::Invalid(format!("boundary dimension {dim}")));
        }
        if offsets.iter().any(|k| !k.is_finite()) {
            return Err(TransformError::Invalid("offsets must be finite".into()));
        }
        for (what, m) in [("A(0) rows", a(0.0)), ("A'(0) rows", a_dot(0.0))] {
            if m.nrows() != dim || m.ncols() != dim {
                return Err(TransformError::Shape { what, expected: dim, got: m.nrows().max(m.ncols()) });
            }
        }
        Ok(Self { dim, a: Arc::new(a), a_dot: Arc::new(a_dot), offsets })
    }

    /// Walls that do not move.
    pub fn constant(family: &HyperplaneFamily) -> Result<Self, TransformError> {
        let d = family.dim();
        let hs = family.hyperplanes();
        if hs.len() != d {
            return Err(TransformError::Shape { what: "walls", expected: d, got: hs.len() });
        }
        let a = DMatrix::from_fn(d, d, |i, j| hs[j].alpha()[i]);
        let offsets = DVector::from_iterator(d, hs.iter().map(Hyperplane::offset));
        Self::new(move |_| a.clone(), move |_| DMatrix::zeros(d, d), offsets)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn offsets(&self) -> &DVector<f64> {
        &self.offsets
    }

    pub fn a(&self, t: f64) -> DMatrix<f64> {
        (self.a)(t)
    }

    pub fn a_dot(&self, t: f64) -> DMatrix<f64> {
        (self.a_dot)(t)
    }

    pub fn hyperplanes_at(&self, t: f64) -> Result<Vec<Hyperplane>, TransformError> {
        let a = self.a(t);
        (0..self.dim).map(|i| Ok(Hyperplane::new(a.column(i).into_owned(), self.offsets[i])?)).collect()
    }

    /// Signed distances `(<α_i(t), x> - k_i) / |α_i(t)|` and unit normals (row `i` of `normals`).
    pub(crate) fn distances_into(&self, t: f64, x: &[f64], dist: &mut [f64], normals: &mut [f64]) {
        let d = self.dim;
        let a = self.a(t);
        for i in 0..d {
            let col = a.column(i);
            let norm = col.norm();
            let mut level = 0.0;
            for j in 0..d {
                level += col[j] * x[j];
                normals[i * d + j] = col[j] / norm;
            }
            dist[i] = (level - self.offsets[i]) / norm;
        }
    }

    pub fn condition(&self, t: f64) -> f64 {
        condition_number(&self.a(t))
    }
}

fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min > 0.0 && max.is_finite() {
        max / min
    } else {
        f64::INFINITY
    }
}

/// `C(t)` on a uniform grid with cubic Hermite interpolation between nodes.
#[derive(Debug, Clone)]
pub struct Straightening {
    dim: usize,
    step: f64,
    horizon: f64,
    // Column-major d x d blocks, one per node.
    c: Vec<f64>,
    c_dot: Vec<f64>,
    m: Vec<f64>,
    m_dot: Vec<f64>,
}

/// Integrates `C' = -C A' A^{-1}` by classical RK4 from `C(0) = c0` (identity by default).
///
/// `step` defaults to `horizon / 1024` and is shrunk so the grid ends on the horizon.
pub fn straighten_boundary(motion: &BoundaryMotion, horizon: f64, step: Option<f64>, c0: Option<DMatrix<f64>>) -> Result<Straightening, TransformError> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(TransformError::Invalid("horizon must be positive and finite".into()));
    }
    let nodes = match step {
        None => DEFAULT_NODES,
        Some(h) if h > 0.0 && h.is_finite() => ((horizon / h) - 1e-9).ceil().max(1.0) as usize,
        Some(_) => return Err(TransformError::Invalid("step must be positive".into())),
    };
    let d = motion.dim();
    let c0 = c0.unwrap_or_else(|| DMatrix::identity(d, d));
    if c0.nrows() != d || c0.ncols() != d {
        return Err(TransformError::Shape { what: "C(0)", expected: d, got: c0.nrows() });
    }
    if condition_number(&c0) > MAX_CONDITION {
        return Err(TransformError::SingularBoundary { t: 0.0, condition: condition_number(&c0) });
    }
    let h = horizon / nodes as f64;
    let generator = |t: f64| -> Result<DMatrix<f64>, TransformError> {
        let a = motion.a(t);
        let condition = condition_number(&a);
        if condition > MAX_CONDITION {
            return Err(TransformError::SingularBoundary { t, condition });
        }
        let inv = a.lu().try_inverse().ok_or(TransformError::SingularBoundary { t, condition })?;
        Ok(-motion.a_dot(t) * inv)
    };

    let block = d * d;
    let mut out = Straightening {
        dim: d,
        step: h,
        horizon,
        c: Vec::with_capacity((nodes + 1) * block),
        c_dot: Vec::with_capacity((nodes + 1) * block),
        m: Vec::with_capacity((nodes + 1) * block),
        m_dot: Vec::with_capacity((nodes + 1) * block),
    };
    let mut c = c0;
    let mut g = generator(0.0)?;
    for n in 0..=nodes {
        let t = n as f64 * h;
        let c_dot = &c * &g;
        let m = c.transpose().lu().try_inverse().ok_or(TransformError::SingularBoundary { t, condition: f64::INFINITY })?;
        let m_dot = -(&m * c_dot.transpose() * &m);
        out.c.extend_from_slice(c.as_slice());
        out.c_dot.extend_from_slice(c_dot.as_slice());
        out.m.extend_from_slice(m.as_slice());
        out.m_dot.extend_from_slice(m_dot.as_slice());
        if n == nodes {
            break;
        }
        let g_mid = generator(t + 0.5 * h)?;
        let g_end = generator(t + h)?;
        let k1 = c_dot;
        let k2 = (&c + &k1 * (0.5 * h)) * &g_mid;
        let k3 = (&c + &k2 * (0.5 * h)) * &g_mid;
        let k4 = (&c + &k3 * h) * &g_end;
        c += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        g = g_end;
    }
    Ok(out)
}

impl Straightening {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn nodes(&self) -> usize {
        self.c.len() / (self.dim * self.dim) - 1
    }

    #[inline]
    fn interpolate(&self, values: &[f64], derivs: &[f64], t: f64, out: &mut [f64], out_deriv: Option<&mut [f64]>) {
        let block = self.dim * self.dim;
        let t = t.clamp(0.0, self.horizon);
        let last = self.nodes() - 1;
        let i = ((t / self.step) as usize).min(last);
        let h = self.step;
        let s = (t - i as f64 * h) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let (p0, p1) = (&values[i * block..(i + 1) * block], &values[(i + 1) * block..(i + 2) * block]);
        let (m0, m1) = (&derivs[i * block..(i + 1) * block], &derivs[(i + 1) * block..(i + 2) * block]);
        for k in 0..block {
            out[k] = h00 * p0[k] + h * (h10 * m0[k] + h11 * m1[k]) + h01 * p1[k];
        }
        if let Some(dout) = out_deriv {
            let d00 = (6.0 * s2 - 6.0 * s) / h;
            let d10 = 3.0 * s2 - 4.0 * s + 1.0;
            let d11 = 3.0 * s2 - 2.0 * s;
            for k in 0..block {
                dout[k] = d00 * (p0[k] - p1[k]) + d10 * m0[k] + d11 * m1[k];
            }
        }
    }

    /// Column-major `C(t)` and optionally `C'(t)`.
    pub(crate) fn c_into(&self, t: f64, out: &mut [f64], deriv: Option<&mut [f64]>) {
        self.interpolate(&self.c, &self.c_dot, t, out, deriv)
    }

    /// Column-major `M(t) = (C(t)^T)^{-1}` and optionally `M'(t)`.
    pub(crate) fn m_into(&self, t: f64, out: &mut [f64], deriv: Option<&mut [f64]>) {
        self.interpolate(&self.m, &self.m_dot, t, out, deriv)
    }

    pub fn c(&self, t: f64) -> DMatrix<f64> {
        let mut out = vec![0.0; self.dim * self.dim];
        self.c_into(t, &mut out, None);
        DMatrix::from_vec(self.dim, self.dim, out)
    }

    pub fn c_dot(&self, t: f64) -> DMatrix<f64> {
        let mut out = vec![0.0; self.dim * self.dim];
        let mut deriv = vec![0.0; self.dim * self.dim];
        self.c_into(t, &mut out, Some(&mut deriv));
        DMatrix::from_vec(self.dim, self.dim, deriv)
    }

    /// `C*(t)^{-1}`.
    pub fn m(&self, t: f64) -> DMatrix<f64> {
        let mut out = vec![0.0; self.dim * self.dim];
        self.m_into(t, &mut out, None);
        DMatrix::from_vec(self.dim, self.dim, out)
    }

    pub fn m_dot(&self, t: f64) -> DMatrix<f64> {
        let mut out = vec![0.0; self.dim * self.dim];
        let mut deriv = vec![0.0; self.dim * self.dim];
        self.m_into(t, &mut out, Some(&mut deriv));
        DMatrix::from_vec(self.dim, self.dim, deriv)
    }

    /// `x ↦ C*(t)^{-1} x`.
    pub fn apply(&self, t: f64, x: &[f64]) -> DVector<f64> {
        self.m(t) * DVector::from_column_slice(x)
    }

    /// `y ↦ C(t)^T y`, the inverse of [`Straightening::apply`].
    pub fn apply_inverse(&self, t: f64, y: &[f64]) -> DVector<f64> {
        self.c(t).transpose() * DVector::from_column_slice(y)
    }
}

/// Output of [`moving_boundary_model`].
#[derive(Debug, Clone)]
pub struct MovingBoundary {
    /// Time-augmented model for `Y = M(t) X`; the clock is the last coordinate.
    pub model: DiffusionModel,
    /// Static walls `(C(0) α_i(0), k_i)`, embedded with a zero clock component.
    pub family: HyperplaneFamily,
    pub straightening: Arc<Straightening>,
}

impl MovingBoundary {
    /// Start point `(M(0) x0, 0)` of the straightened process.
    pub fn start(&self, x0: &[f64]) -> Vec<f64> {
        let mut y = self.straightening.apply(0.0, x0).as_slice().to_vec();
        y.push(0.0);
        y
    }
}

pub fn moving_boundary_model(base: impl Into<TimeDependentModel>, motion: &BoundaryMotion, horizon: f64) -> Result<MovingBoundary, TransformError> {
    let straightening = straighten_boundary(motion, horizon, None, None)?;
    moving_boundary_model_with(base, motion, straightening)
}

/// As [`moving_boundary_model`], with a precomputed straightening.
pub fn moving_boundary_model_with(
    base: impl Into<TimeDependentModel>,
    motion: &BoundaryMotion,
    straightening: Straightening,
) -> Result<MovingBoundary, TransformError> {
    let base: TimeDependentModel = base.into();
    let d = motion.dim();
    if base.dim() != d || straightening.dim() != d {
        return Err(TransformError::Shape { what: "model dimension", expected: d, got: base.dim() });
    }
    let s = Arc::new(straightening);

    // Φ* and a witness solving B^T y = k + 1 for B = C(0) A(0).
    let b = s.c(0.0) * motion.a(0.0);
    let rhs = motion.offsets().map(|k| k + 1.0);
    let witness = b.transpose().lu().solve(&rhs).ok_or(TransformError::SingularBoundary { t: 0.0, condition: f64::INFINITY })?;
    let walls = (0..d).map(|i| Hyperplane::new(b.column(i).into_owned(), motion.offsets()[i])).collect::<Result<Vec<_>, _>>()?;
    let family = HyperplaneFamily::new(walls, witness)?.embed(d + 1, &[0.0])?;

    let drift_s = Arc::clone(&s);
    let drift_base = base.clone();
    let diff_s = Arc::clone(&s);
    let diff_base = base.clone();
    let straightened = TimeDependentModel::new(
        d,
        format!("straightened({})", base.label()),
        move |y, t, out| {
            let mut c = [0.0; MAX_DIM * MAX_DIM];
            let mut c_dot = [0.0; MAX_DIM * MAX_DIM];
            let mut m = [0.0; MAX_DIM * MAX_DIM];
            let mut x = [0.0; MAX_DIM];
            let mut mu = [0.0; MAX_DIM];
            drift_s.c_into(t, &mut c[..d * d], Some(&mut c_dot[..d * d]));
            drift_s.m_into(t, &mut m[..d * d], None);
            // x = C^T y
            for i in 0..d {
                x[i] = (0..d).map(|k| c[k + i * d] * y[k]).sum();
            }
            drift_base.drift_into(&x[..d], t, &mut mu[..d]);
            // M' M^{-1} y = -M C'^T y, plus M μ(x).
            for i in 0..d {
                let mut acc = 0.0;
                for j in 0..d {
                    let ct_y: f64 = (0..d).map(|k| c_dot[k + j * d] * y[k]).sum();
                    acc += m[i + j * d] * (mu[j] - ct_y);
                }
                out[i] = acc;
            }
        },
        move |y, t, out| {
            let mut c = [0.0; MAX_DIM * MAX_DIM];
            let mut m = [0.0; MAX_DIM * MAX_DIM];
            let mut x = [0.0; MAX_DIM];
            let mut sigma = [0.0; MAX_DIM * MAX_DIM];
            diff_s.c_into(t, &mut c[..d * d], None);
            diff_s.m_into(t, &mut m[..d * d], None);
            for i in 0..d {
                x[i] = (0..d).map(|k| c[k + i * d] * y[k]).sum();
            }
            diff_base.diffusion_into(&x[..d], t, &mut sigma[..d * d]);
            for i in 0..d {
                for j in 0..d {
                    out[i * d + j] = (0..d).map(|k| m[i + k * d] * sigma[k * d + j]).sum();
                }
            }
        },
    )?;
    let model = augment_time(straightened)?;
    Ok(MovingBoundary { model, family, straightening: s })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::{arithmetic_bm, gbm};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rotation(theta: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()])
    }

    fn rotating(omega: f64) -> BoundaryMotion {
        BoundaryMotion::new(
            move |t| rotation(omega * t),
            move |t| {
                let (s, c) = (omega * t).sin_cos();
                DMatrix::from_row_slice(2, 2, &[-omega * s, -omega * c, omega * c, -omega * s])
            },
            DVector::from_vec(vec![0.0, 0.0]),
        )
        .unwrap()
    }

    #[test]
    fn constant_frame_is_fixed() {
        let m =
            BoundaryMotion::new(|_| DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 1.0]), |_| DMatrix::zeros(2, 2), DVector::from_vec(vec![1.0, 2.0])).unwrap();
        let c0 = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.5, 2.0]);
        let s = straighten_boundary(&m, 1.0, None, Some(c0.clone())).unwrap();
        for t in [0.0, 0.123, 0.5, 0.99, 1.0] {
            assert_eq!(s.c(t), c0);
        }
    }

    #[test]
    fn scalar_linear_growth() {
        let m = BoundaryMotion::new(|t| DMatrix::from_element(1, 1, 1.0 + t), |_| DMatrix::from_element(1, 1, 1.0), DVector::from_vec(vec![0.0])).unwrap();
        let s = straighten_boundary(&m, 2.0, None, None).unwrap();
        for i in 0..=200 {
            let t = i as f64 * 0.01;
            assert!((s.c(t)[(0, 0)] - 1.0 / (1.0 + t)).abs() < 1e-10, "t={t}");
            assert!((s.m(t)[(0, 0)] - (1.0 + t)).abs() < 1e-10);
        }
    }

    #[test]
    fn rotating_frame_invariant() {
        let motion = rotating(2.0);
        let s = straighten_boundary(&motion, 1.0, Some(1e-3), None).unwrap();
        let a0 = motion.a(0.0);
        let mut worst: f64 = 0.0;
        for i in 0..=10_000 {
            let t = i as f64 * 1e-4;
            worst = worst.max((s.c(t) * motion.a(t) - &a0).amax());
        }
        assert!(worst <= 1e-8, "{worst}");
    }

    #[test]
    fn derivative_interpolants() {
        let motion = rotating(1.5);
        let s = straighten_boundary(&motion, 1.0, Some(1e-3), None).unwrap();
        // C(t) = R(-ωt) is orthogonal, so M(t) = C(t) and M' = -ω R(π/2 - ωt).
        for t in [0.0, 0.2345, 0.5, 0.9999] {
            assert!((s.m(t) - rotation(-1.5 * t)).amax() < 1e-9);
            assert!((s.m_dot(t) + rotation(std::f64::consts::FRAC_PI_2 - 1.5 * t) * 1.5).amax() < 1e-6);
            assert!((s.m(t) * s.c(t).transpose() - DMatrix::identity(2, 2)).amax() < 1e-9);
        }
    }

    #[test]
    fn singular_frame_rejected() {
        let m = BoundaryMotion::new(
            |t| DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0 - t]),
            |_| DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, -1.0]),
            DVector::from_vec(vec![0.0, 0.0]),
        )
        .unwrap();
        assert!(matches!(straighten_boundary(&m, 2.0, None, None), Err(TransformError::SingularBoundary { .. })));
        assert!(straighten_boundary(&m, 0.5, None, None).is_ok());
    }

    fn skewed() -> BoundaryMotion {
        BoundaryMotion::new(
            |t| DMatrix::from_row_slice(2, 2, &[1.0 + 0.3 * t, 0.2 * t.sin(), 0.1 * t, 1.0 - 0.2 * t]),
            |t| DMatrix::from_row_slice(2, 2, &[0.3, 0.2 * t.cos(), 0.1, -0.2]),
            DVector::from_vec(vec![0.5, -1.0]),
        )
        .unwrap()
    }

    #[test]
    fn defining_identity() {
        let motion = skewed();
        let mb = moving_boundary_model(crate::sde::brownian(2, 0.1, 0.0).unwrap(), &motion, 1.0).unwrap();
        let s = &mb.straightening;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c0a0 = s.c(0.0) * motion.a(0.0);
        for _ in 0..100 {
            let t = rng.random_range(0.0..1.0);
            let x = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
            let mx = s.apply(t, &x);
            let a = motion.a(t);
            for i in 0..2 {
                let lhs = a[(0, i)] * x[0] + a[(1, i)] * x[1];
                let rhs = c0a0.column(i).dot(&mx);
                assert!((lhs - rhs).abs() < 1e-8);
            }
            let back = s.apply_inverse(t, mx.as_slice());
            assert!((back[0] - x[0]).abs() < 1e-9 && (back[1] - x[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn family_and_witness() {
        let motion = skewed();
        let mb = moving_boundary_model(crate::sde::brownian(2, 1.0, 0.0).unwrap(), &motion, 1.0).unwrap();
        assert_eq!(mb.family.dim(), 3);
        assert!(mb.family.contains_strict(mb.family.witness().as_slice()));
        for (h, k) in mb.family.hyperplanes().iter().zip([0.5, -1.0]) {
            assert_eq!(h.offset(), k);
            assert_eq!(h.alpha()[2], 0.0);
        }
    }

    #[test]
    fn constant_motion_matches_augmented_base() {
        use crate::geometry::Hyperplane;
        let fam = HyperplaneFamily::new(vec![Hyperplane::from_slice(&[1.0], 90.0).unwrap()], DVector::from_vec(vec![100.0])).unwrap();
        let motion = BoundaryMotion::constant(&fam).unwrap();
        let base = gbm(0.2, 0.03).unwrap();
        let mb = moving_boundary_model(base.clone(), &motion, 1.0).unwrap();
        let plain = augment_time(base).unwrap();
        for x in [[80.0, 0.1], [95.0, 0.5], [130.0, 0.99]] {
            assert_eq!(mb.model.drift_at(&x), plain.drift_at(&x));
            assert_eq!(mb.model.diffusion_at(&x), plain.diffusion_at(&x));
        }
        assert_eq!(mb.family.hyperplanes()[0].alpha().as_slice(), &[1.0, 0.0]);
        assert_eq!(mb.family.hyperplanes()[0].offset(), 90.0);
    }

    #[test]
    fn linearly_moving_barrier_coefficients() {
        // Barrier b0 (1 + c t): Y = X / (1 + c t), dY = -c Y / (1 + c t) dt + s / (1 + c t) dW.
        let (b0, c, sig) = (1.0, 0.3, 0.7);
        let motion = BoundaryMotion::new(
            move |t| DMatrix::from_element(1, 1, 1.0 / (1.0 + c * t)),
            move |t| DMatrix::from_element(1, 1, -c / (1.0 + c * t).powi(2)),
            DVector::from_vec(vec![b0]),
        )
        .unwrap();
        let mb = moving_boundary_model(arithmetic_bm(sig, 0.0).unwrap(), &motion, 1.0).unwrap();
        for (y, t) in [(1.5, 0.0), (2.0, 0.37), (0.4, 0.99)] {
            let g = 1.0 + c * t;
            let mu = mb.model.drift_at(&[y, t]);
            let s = mb.model.diffusion_at(&[y, t]);
            assert!((mu[0] + c * y / g).abs() < 1e-9, "{} vs {}", mu[0], -c * y / g);
            assert!((s[(0, 0)] - sig / g).abs() < 1e-10);
            assert_eq!(mu[1], 1.0);
        }
        assert_eq!(mb.start(&[3.0]), vec![3.0, 0.0]);
    }
}

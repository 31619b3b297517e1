//! Hyperplanes, reflections and affine isometries.
//!
//! Normals are stored exactly as supplied. Every formula divides by `|alpha|^2`
//! (or `|alpha|`) so that `(alpha, k)` and `(c * alpha, c * k)` describe the
//! same wall for any `c != 0`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Largest state dimension the library is tuned for.
pub const MAX_DIM: usize = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("hyperplane normal must be nonzero")]
    ZeroNormal,
    #[error("non-finite hyperplane data")]
    NonFinite,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("linear part is not orthogonal (defect {0:e})")]
    NotOrthogonal(f64),
    #[error("dimension {0} exceeds the supported maximum of {MAX_DIM}")]
    DimensionTooLarge(usize),
}

/// Which side of a wall a point lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Positive,
    Boundary,
    Negative,
}

/// The wall `{x : <alpha, x> = k}` with positive side `<alpha, x> > k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperplane {
    alpha: DVector<f64>,
    k: f64,
    norm_sq: f64,
}

impl Hyperplane {
    pub fn new(alpha: impl Into<DVector<f64>>, k: f64) -> Result<Self, GeometryError> {
        let alpha = alpha.into();
        if alpha.len() > MAX_DIM {
            return Err(GeometryError::DimensionTooLarge(alpha.len()));
        }
        if !k.is_finite() || alpha.iter().any(|a| !a.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let norm_sq = alpha.norm_squared();
        if norm_sq == 0.0 {
            return Err(GeometryError::ZeroNormal);
        }
        Ok(Self { alpha, k, norm_sq })
    }

    pub fn from_slice(alpha: &[f64], k: f64) -> Result<Self, GeometryError> {
        Self::new(DVector::from_column_slice(alpha), k)
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn offset(&self) -> f64 {
        self.k
    }

    /// `<alpha, x> - k`.
    #[inline]
    pub fn level(&self, x: &[f64]) -> f64 {
        dot(self.alpha.as_slice(), x) - self.k
    }

    /// Signed Euclidean distance to the wall, positive on the open half-space.
    #[inline]
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        self.level(x) / self.norm_sq.sqrt()
    }

    /// Unit normal pointing into the positive half-space.
    pub fn unit_normal(&self) -> DVector<f64> {
        &self.alpha / self.norm_sq.sqrt()
    }

    /// `x - (<x, alpha> - k) * 2 alpha / |alpha|^2`.
    pub fn reflect(&self, x: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(x.len());
        self.reflect_into(x, out.as_mut_slice());
        out
    }

    #[inline]
    pub fn reflect_into(&self, x: &[f64], out: &mut [f64]) {
        let scale = 2.0 * self.level(x) / self.norm_sq;
        for ((o, xi), ai) in out.iter_mut().zip(x).zip(self.alpha.iter()) {
            *o = xi - scale * ai;
        }
    }

    /// The reflection as `x -> T x + b` with `T = I - 2 a a^T / |a|^2`, `b = 2 k a / |a|^2`.
    pub fn as_isometry(&self) -> AffineIsometry {
        let d = self.dim();
        let linear = DMatrix::identity(d, d) - (&self.alpha * self.alpha.transpose()) * (2.0 / self.norm_sq);
        let translation = &self.alpha * (2.0 * self.k / self.norm_sq);
        AffineIsometry { linear, translation }
    }

    /// Classifies `x` with the default dead-band `1e-12 * (1 + |x|)`.
    pub fn side(&self, x: &[f64]) -> Side {
        self.half_space_side(x, default_tolerance(x))
    }

    pub fn half_space_side(&self, x: &[f64], tol: f64) -> Side {
        let d = self.signed_distance(x);
        if d > tol {
            Side::Positive
        } else if d < -tol {
            Side::Negative
        } else {
            Side::Boundary
        }
    }

    /// The same wall seen in a larger space whose extra coordinates it ignores.
    pub fn embed(&self, total_dim: usize) -> Result<Self, GeometryError> {
        if total_dim < self.dim() {
            return Err(GeometryError::DimensionMismatch { expected: self.dim(), got: total_dim });
        }
        let mut alpha = DVector::zeros(total_dim);
        alpha.rows_mut(0, self.dim()).copy_from(&self.alpha);
        Hyperplane::new(alpha, self.k)
    }
}

/// Boundary dead-band used when the caller does not supply one.
#[inline]
pub fn default_tolerance(x: &[f64]) -> f64 {
    1e-12 * (1.0 + dot(x, x).sqrt())
}

/// `x -> T x + b` with orthogonal `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineIsometry {
    linear: DMatrix<f64>,
    translation: DVector<f64>,
}

impl AffineIsometry {
    pub fn identity(dim: usize) -> Self {
        Self { linear: DMatrix::identity(dim, dim), translation: DVector::zeros(dim) }
    }

    /// Builds an isometry, rejecting linear parts that are not orthogonal to 1e-10.
    pub fn new(linear: DMatrix<f64>, translation: DVector<f64>) -> Result<Self, GeometryError> {
        let d = translation.len();
        if linear.nrows() != d || linear.ncols() != d {
            return Err(GeometryError::DimensionMismatch { expected: d, got: linear.nrows() });
        }
        let iso = Self { linear, translation };
        let defect = iso.orthogonality_defect();
        if defect > 1e-10 {
            return Err(GeometryError::NotOrthogonal(defect));
        }
        Ok(iso)
    }

    pub fn dim(&self) -> usize {
        self.translation.len()
    }

    pub fn linear(&self) -> &DMatrix<f64> {
        &self.linear
    }

    pub fn translation(&self) -> &DVector<f64> {
        &self.translation
    }

    pub fn apply(&self, x: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        self.apply_into(x, out.as_mut_slice());
        out
    }

    #[inline]
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for (i, o) in out.iter_mut().enumerate().take(d) {
            let mut acc = self.translation[i];
            for (j, xj) in x.iter().enumerate().take(d) {
                acc += self.linear[(i, j)] * xj;
            }
            *o = acc;
        }
    }

    /// `g^{-1} x = T^T (x - b)`.
    #[inline]
    pub fn apply_inverse_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for (j, o) in out.iter_mut().enumerate().take(d) {
            let mut acc = 0.0;
            for (i, xi) in x.iter().enumerate().take(d) {
                acc += self.linear[(i, j)] * (xi - self.translation[i]);
            }
            *o = acc;
        }
    }

    pub fn apply_inverse(&self, x: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        self.apply_inverse_into(x, out.as_mut_slice());
        out
    }

    pub fn inverse(&self) -> Self {
        let linear = self.linear.transpose();
        let translation = -(&linear * &self.translation);
        Self { linear, translation }
    }

    /// `self ∘ other`, i.e. `x -> self(other(x))`.
    pub fn compose(&self, other: &Self) -> Result<Self, GeometryError> {
        if self.dim() != other.dim() {
            return Err(GeometryError::DimensionMismatch { expected: self.dim(), got: other.dim() });
        }
        Ok(Self { linear: &self.linear * &other.linear, translation: &self.linear * &other.translation + &self.translation })
    }

    /// Max-norm distance over the entries of `(T, b)`.
    pub fn distance(&self, other: &Self) -> f64 {
        let lin = (&self.linear - &other.linear).amax();
        let tr = (&self.translation - &other.translation).amax();
        lin.max(tr)
    }

    pub fn determinant(&self) -> f64 {
        self.linear.determinant()
    }

    /// `max |T^T T - I|`.
    pub fn orthogonality_defect(&self) -> f64 {
        let d = self.dim();
        (self.linear.transpose() * &self.linear - DMatrix::identity(d, d)).amax()
    }
}

/// Composition as a free function, matching `AffineIsometry::compose`.
pub fn compose(g: &AffineIsometry, h: &AffineIsometry) -> Result<AffineIsometry, GeometryError> {
    g.compose(h)
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

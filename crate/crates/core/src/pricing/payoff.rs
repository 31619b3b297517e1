use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use super::PricingError;
use crate::geometry::default_tolerance;
use crate::group::HyperplaneFamily;

pub type PayoffFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Cap applied to unbounded payoffs unless configured otherwise.
pub const DEFAULT_CAP: f64 = 1e6;

/// A bounded payoff supported in the closed chamber of `support`.
///
/// Evaluation returns 0 outside the chamber and clamps to `±bound`; both
/// events are counted.
pub struct Payoff {
    f: PayoffFn,
    support: HyperplaneFamily,
    bound: f64,
    violations: AtomicU64,
    capped: AtomicU64,
}

impl fmt::Debug for Payoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Payoff").field("bound", &self.bound).field("violations", &self.violations()).field("capped", &self.capped()).finish()
    }
}

impl Clone for Payoff {
    fn clone(&self) -> Self {
        Self::from_parts(self.f.clone(), self.support.clone(), self.bound)
    }
}

impl Payoff {
    pub fn new<F>(f: F, support: HyperplaneFamily, bound: f64) -> Result<Self, PricingError>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        if bound.is_nan() || bound <= 0.0 {
            return Err(PricingError::Domain("payoff bound must be positive".into()));
        }
        Ok(Self::from_parts(Arc::new(f), support, bound))
    }

    fn from_parts(f: PayoffFn, support: HyperplaneFamily, bound: f64) -> Self {
        Self { f, support, bound, violations: AtomicU64::new(0), capped: AtomicU64::new(0) }
    }

    pub fn support(&self) -> &HyperplaneFamily {
        &self.support
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// Non-zero raw values seen outside the support.
    pub fn violations(&self) -> u64 {
        self.violations.load(Ordering::Relaxed)
    }

    /// Values clamped to the bound.
    pub fn capped(&self) -> u64 {
        self.capped.load(Ordering::Relaxed)
    }

    pub fn reset_counters(&self) {
        self.violations.store(0, Ordering::Relaxed);
        self.capped.store(0, Ordering::Relaxed);
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let raw = (self.f)(x);
        if !self.support.contains_closed(x, default_tolerance(x)) {
            if raw != 0.0 {
                self.violations.fetch_add(1, Ordering::Relaxed);
            }
            return 0.0;
        }
        if raw.abs() > self.bound {
            self.capped.fetch_add(1, Ordering::Relaxed);
            return raw.clamp(-self.bound, self.bound);
        }
        raw
    }
}

//! Fixtures shared by the benchmarks.

use nalgebra::DVector;
use symbar_core::sde::gbm;
use symbar_core::{DiffusionModel, Hyperplane, HyperplaneFamily, Payoff, ReflectionGroup, SymmetrizedModel};

/// `x > k` on the first coordinate of a `dim`-dimensional space.
pub fn lower_barrier(dim: usize, k: f64) -> HyperplaneFamily {
    let mut alpha = vec![0.0; dim];
    alpha[0] = 1.0;
    let mut witness = vec![0.0; dim];
    witness[0] = k + 1.0 + k.abs();
    HyperplaneFamily::new(vec![Hyperplane::from_slice(&alpha, k).unwrap()], DVector::from_vec(witness)).unwrap()
}

/// Wedge of opening `π / m` between the x-axis and a rotated wall.
pub fn dihedral(m: usize) -> HyperplaneFamily {
    let angle = std::f64::consts::PI / m as f64;
    let mid = 0.5 * angle;
    HyperplaneFamily::new(
        vec![Hyperplane::from_slice(&[0.0, 1.0], 0.0).unwrap(), Hyperplane::from_slice(&[angle.sin(), -angle.cos()], 0.0).unwrap()],
        DVector::from_vec(vec![mid.cos(), mid.sin()]),
    )
    .unwrap()
}

/// GBM down-and-out call at barrier 90 with strike 100.
pub struct DownAndOut {
    pub base: DiffusionModel,
    pub symmetrized: SymmetrizedModel,
    pub payoff: Payoff,
}

pub fn down_and_out() -> DownAndOut {
    let base = gbm(0.2, 0.0).unwrap();
    let group = ReflectionGroup::generate(lower_barrier(1, 90.0), 8).unwrap();
    let symmetrized = SymmetrizedModel::new(base.clone(), group).unwrap();
    let payoff = Payoff::new(|x| (x[0] - 100.0).max(0.0), lower_barrier(1, 90.0), 1e6).unwrap();
    DownAndOut { base, symmetrized, payoff }
}

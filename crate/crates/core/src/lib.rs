//! Knock-out expectations of diffusions by reflection-group symmetrization.
//!
//! A diffusion killed on the boundary of a chamber `Σ` bounded by hyperplanes
//! has the same expectations as a plain (unkilled) diffusion with symmetrized
//! coefficients, once the payoff is folded over the group generated by the
//! reflections in the walls. This crate enumerates those groups, builds the
//! symmetrized models, simulates them by Euler–Maruyama and prices against
//! closed forms and a path-dependent oracle.

pub mod geometry;
pub mod group;
pub mod pricing;
pub mod sde;
pub mod transforms;

pub use geometry::{AffineIsometry, GeometryError, Hyperplane, Side};
pub use group::{GenerateOptions, GroupElement, GroupError, HyperplaneFamily, ReflectionGroup};
pub use pricing::{Estimate, Monitoring, Payoff, PricingError};
pub use sde::{simulate, DiffusionModel, Dynamics, SdeError, SimulationPlan, SymmetrizedModel};
pub use transforms::{BoundaryMotion, Diffeomorphism, TimeDependentModel, TransformError};

//! Suspension flows of hyperbolic toral automorphisms and the product
//! `R²`-action on a pair of them.

mod orbits;
mod suspension;
mod torus;

pub use orbits::{
    blended_min, dist_to_orbit, find_periodic_orbits, reduce, PeriodicOrbit, DEFAULT_SAMPLE_SPACING,
};
pub use suspension::{
    random_suspension_point, FlowSpec, ProductFlow, ProductPoint, SuspensionPoint,
};
pub use torus::{wrap_centered, wrap_unit, IntMatrix, TorusPoint};

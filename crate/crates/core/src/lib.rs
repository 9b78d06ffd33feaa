//! Numerical laboratory for time changes of products of Anosov flows.
//!
//! The base system is a pair of suspension flows of hyperbolic toral
//! automorphisms acting as the product `R²`-action `α₀`. A cocycle built from
//! bump functions around marked periodic orbits is inverted pointwise to give
//! the time-changed action `α(a)x = α₀(φ(a,x))x`; the remaining modules
//! measure its Lyapunov exponents and probe ergodicity of line subactions.

pub mod cocycle;
pub mod dynamics;
pub mod ergodic;
mod error;
pub mod lyapunov;
mod smooth;
pub mod timechange;

pub use error::{Error, Result};
pub use smooth::{bump_profile, smooth_step};

pub use cocycle::{BumpField, BumpSpec, CocycleSpec, CocycleValue};
pub use dynamics::{
    FlowSpec, IntMatrix, PeriodicOrbit, ProductFlow, ProductPoint, SuspensionPoint, TorusPoint,
};
pub use ergodic::{DecayProbe, DispersionReport, LineSpec, Observable, ProbeThresholds};
pub use lyapunov::{CoarseLabel, ExponentField, MarkedOrbits, MarkedPoint, PointId};
pub use timechange::{Action, InversionResult, InversionStats, TimeChangedAction};

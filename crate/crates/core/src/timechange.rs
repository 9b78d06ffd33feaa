//! The time-changed action `α(a)x = α₀(φ(a,x))x`, where `φ(·,x)` inverts
//! `β(·,x)` by fixed-point iteration.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cocycle::{norm, random_in_disk, CocycleSpec, CocycleValue};
use crate::dynamics::{ProductFlow, ProductPoint};
use crate::error::{Error, Result};

pub const DEFAULT_INV_TOLERANCE: f64 = 1e-12;
pub const DEFAULT_MAX_ITERATIONS: usize = 200;

/// An `R²`-action on the product phase space.
pub trait Action: Sync {
    fn base(&self) -> &ProductFlow;
    fn act(&self, a: [f64; 2], x: &ProductPoint) -> Result<ProductPoint>;
}

impl Action for ProductFlow {
    fn base(&self) -> &ProductFlow {
        self
    }

    fn act(&self, a: [f64; 2], x: &ProductPoint) -> Result<ProductPoint> {
        Ok(self.product_flow(a, x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InversionResult {
    pub phi: CocycleValue,
    /// Number of `β` evaluations.
    pub iterations: usize,
    /// `‖β(phi, x) - a‖`.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeChangedAction {
    base: ProductFlow,
    cocycle: CocycleSpec,
    inv_tolerance: f64,
    max_iterations: usize,
}

impl TimeChangedAction {
    pub fn new(base: ProductFlow, cocycle: CocycleSpec) -> Self {
        TimeChangedAction {
            base,
            cocycle,
            inv_tolerance: DEFAULT_INV_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }

    pub fn with_inversion(mut self, tolerance: f64, max_iterations: usize) -> Result<Self> {
        if !(tolerance > 0.0 && tolerance.is_finite()) || max_iterations == 0 {
            return Err(Error::InvalidArgument(format!(
                "inversion needs a positive tolerance and iteration cap, got {tolerance}, {max_iterations}"
            )));
        }
        self.inv_tolerance = tolerance;
        self.max_iterations = max_iterations;
        Ok(self)
    }

    /// The default counterexample on the default pair of cat-map suspensions.
    pub fn counterexample_default() -> Self {
        let base = ProductFlow::cat_default();
        let cs = CocycleSpec::default_counterexample(&base).expect("default bumps are valid");
        TimeChangedAction::new(base, cs)
    }

    pub fn cocycle(&self) -> &CocycleSpec {
        &self.cocycle
    }

    pub fn inv_tolerance(&self) -> f64 {
        self.inv_tolerance
    }

    pub fn max_iterations(&self) -> usize {
        self.max_iterations
    }

    /// Lipschitz constant of `a ↦ a - β(a,x)` is at most `δ`; the a-priori
    /// budget used throughout is `ε₀ = 2δ`.
    pub fn epsilon0(&self) -> f64 {
        2.0 * self.cocycle.delta()
    }

    pub fn satisfies_contraction(&self) -> bool {
        self.epsilon0() < 1.0
    }

    pub fn beta(&self, a: [f64; 2], x: &ProductPoint) -> CocycleValue {
        self.cocycle.beta(&self.base, a, x)
    }

    /// Stopping tolerance actually used at `a`: the configured tolerance,
    /// floored at the roundoff level of evaluating `β` at that magnitude.
    pub fn effective_tolerance(&self, a: [f64; 2]) -> f64 {
        self.inv_tolerance
            .max(64.0 * f64::EPSILON * (1.0 + norm(a)))
    }

    /// `φ(a, x)`: iterate `φ ← φ + (a - β(φ, x))` from `φ = a`.
    pub fn phi(&self, a: [f64; 2], x: &ProductPoint) -> Result<InversionResult> {
        let tol = self.effective_tolerance(a);
        let mut phi = a;
        let mut residual = f64::INFINITY;
        for it in 1..=self.max_iterations {
            let b = self.beta(phi, x);
            let r = [a[0] - b[0], a[1] - b[1]];
            residual = norm(r);
            if residual <= tol {
                return Ok(InversionResult {
                    phi,
                    iterations: it,
                    residual,
                });
            }
            if !residual.is_finite() {
                break;
            }
            phi = [phi[0] + r[0], phi[1] + r[1]];
        }
        Err(Error::NonConvergence {
            a,
            point: format!("{x:?}"),
            iterations: self.max_iterations,
            residual,
        })
    }

    /// A-priori iteration bound `ceil(log(tol/‖a‖)/log(2δ)) + 2`.
    pub fn iteration_bound(&self, a: [f64; 2]) -> usize {
        let n = norm(a);
        let tol = self.effective_tolerance(a);
        let eps0 = self.epsilon0();
        if n <= tol || eps0 <= 0.0 {
            return 2;
        }
        if eps0 >= 1.0 {
            return usize::MAX;
        }
        ((tol / n).ln() / eps0.ln()).ceil().max(0.0) as usize + 2
    }

    /// Max over random `(a, b, x)`, `‖a‖, ‖b‖ <= 3`, of
    /// `d(α(a)α(b)x, α(a+b)x)`.
    pub fn verify_group_law(&self, samples: usize, seed: u64) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draws: Vec<_> = (0..samples.max(1))
            .map(|_| {
                (
                    random_in_disk(&mut rng, 3.0),
                    random_in_disk(&mut rng, 3.0),
                    self.base.random_point(&mut rng),
                )
            })
            .collect();
        draws
            .par_iter()
            .map(|(a, b, x)| {
                let lhs = self.act(*a, &self.act(*b, x)?)?;
                let rhs = self.act([a[0] + b[0], a[1] + b[1]], x)?;
                Ok(self.base.distance(&lhs, &rhs))
            })
            .try_reduce(|| 0.0, |p, q| Ok(f64::max(p, q)))
    }

    /// `(max ‖β(a,x)-a‖/‖a‖, max ‖β(φ(a,x),x)-a‖)` over random `‖a‖ <= 5`.
    pub fn verify_inversion_bounds(&self, samples: usize, seed: u64) -> Result<(f64, f64)> {
        let s = self.inversion_statistics(samples, seed)?;
        Ok((s.max_ratio, s.max_forward_residual))
    }

    pub fn inversion_statistics(&self, samples: usize, seed: u64) -> Result<InversionStats> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draws: Vec<_> = (0..samples.max(1))
            .map(|_| {
                (
                    random_in_disk(&mut rng, 5.0),
                    self.base.random_point(&mut rng),
                )
            })
            .collect();
        draws
            .par_iter()
            .map(|(a, x)| {
                let b = self.beta(*a, x);
                let n = norm(*a);
                let ratio = if n > 0.0 {
                    norm([b[0] - a[0], b[1] - a[1]]) / n
                } else {
                    0.0
                };
                let fwd = self.phi(*a, x)?;
                let back = self.phi(b, x)?;
                Ok(InversionStats {
                    samples: 1,
                    max_ratio: ratio,
                    max_forward_residual: fwd.residual,
                    max_backward_error: norm([back.phi[0] - a[0], back.phi[1] - a[1]]),
                    max_iterations: fwd.iterations,
                    bound_violations: usize::from(fwd.iterations > self.iteration_bound(*a)),
                })
            })
            .try_reduce(InversionStats::default, |p, q| Ok(p.merge(&q)))
    }
}

impl Action for TimeChangedAction {
    fn base(&self) -> &ProductFlow {
        &self.base
    }

    fn act(&self, a: [f64; 2], x: &ProductPoint) -> Result<ProductPoint> {
        if a == [0.0, 0.0] {
            return Ok(*x);
        }
        let r = self.phi(a, x)?;
        Ok(self.base.product_flow(r.phi, x))
    }
}

/// Aggregate of the inversion checks over a sample.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct InversionStats {
    pub samples: usize,
    /// `‖β(a,x) - a‖ / ‖a‖`
    pub max_ratio: f64,
    /// `‖β(φ(a,x),x) - a‖`
    pub max_forward_residual: f64,
    /// `‖φ(β(a,x),x) - a‖`
    pub max_backward_error: f64,
    pub max_iterations: usize,
    pub bound_violations: usize,
}

impl InversionStats {
    fn merge(&self, o: &InversionStats) -> InversionStats {
        InversionStats {
            samples: self.samples + o.samples,
            max_ratio: self.max_ratio.max(o.max_ratio),
            max_forward_residual: self.max_forward_residual.max(o.max_forward_residual),
            max_backward_error: self.max_backward_error.max(o.max_backward_error),
            max_iterations: self.max_iterations.max(o.max_iterations),
            bound_violations: self.bound_violations + o.bound_violations,
        }
    }
}

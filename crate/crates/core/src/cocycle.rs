//! Bump functions around marked periodic orbits, their flow integrals `θ`,
//! and the combined cocycle `β(s,t;x) = (s - θ₂(t,x₂), t - θ₁(s,x₁))` over
//! the product action.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    blended_min, FlowSpec, PeriodicOrbit, ProductFlow, ProductPoint, SuspensionPoint, TorusPoint,
};
use crate::error::{Error, Result};
use crate::smooth::{bump_profile, smooth_step};

pub type CocycleValue = [f64; 2];

/// Relative slack on the tube-disjointness check, so that tubes which touch
/// only along their closed boundary are accepted.
const DISJOINT_SLACK: f64 = 1e-12;

/// `u = +δ` near `plus`, `-δ` near `minus`, 0 away from both tubes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BumpSpec {
    delta: f64,
    tube_radius: f64,
    plus: PeriodicOrbit,
    minus: PeriodicOrbit,
}

impl BumpSpec {
    pub fn new(
        delta: f64,
        tube_radius: f64,
        plus: PeriodicOrbit,
        minus: PeriodicOrbit,
    ) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidBump(format!(
                "δ must be positive, got {delta}"
            )));
        }
        if !(tube_radius > 0.0 && tube_radius.is_finite()) {
            return Err(Error::InvalidBump(format!(
                "tube radius must be positive, got {tube_radius}"
            )));
        }
        let need = 2.0 * tube_radius * (1.0 - DISJOINT_SLACK);
        let checks = [
            ("plus/minus", plus.separation(&minus)),
            ("plus/plus", plus.separation(&plus)),
            ("minus/minus", minus.separation(&minus)),
        ];
        for (what, sep) in checks {
            if sep < need {
                return Err(Error::InvalidBump(format!(
                    "{what} tubes overlap: orbit separation {sep} < 2R = {}",
                    2.0 * tube_radius
                )));
            }
        }
        Ok(BumpSpec {
            delta,
            tube_radius,
            plus,
            minus,
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn tube_radius(&self) -> f64 {
        self.tube_radius
    }

    pub fn plus_orbit(&self) -> &PeriodicOrbit {
        &self.plus
    }

    pub fn minus_orbit(&self) -> &PeriodicOrbit {
        &self.minus
    }

    pub fn value(&self, spec: &FlowSpec, x: &SuspensionPoint) -> f64 {
        let w = smooth_step(x.phase(spec));
        let dp = blended_min(self.plus.tube_pairs(spec, x.base()), w);
        let dm = blended_min(self.minus.tube_pairs(spec, x.base()), w);
        self.delta * (bump_profile(dp / self.tube_radius) - bump_profile(dm / self.tube_radius))
    }
}

/// Integrand of `θ` for one factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BumpField {
    Tubes(BumpSpec),
    /// `u ≡ c`; `Constant(0.0)` switches the factor's time change off.
    Constant(f64),
}

/// The integrand restricted to one vertical segment over a fixed base point.
enum Segment {
    Const(f64),
    Varying {
        plus: Vec<(f64, f64)>,
        minus: Vec<(f64, f64)>,
        delta: f64,
        radius: f64,
        roof: f64,
    },
}

fn classify(pairs: &[(f64, f64)], radius: f64) -> Option<bool> {
    // Some(false): identically 0, Some(true): identically 1, None: varies
    if pairs.iter().all(|&(a, b)| a.min(b) >= radius) {
        Some(false)
    } else if pairs.iter().any(|&(a, b)| a.max(b) <= 0.5 * radius) {
        Some(true)
    } else {
        None
    }
}

impl Segment {
    fn over(field: &BumpField, spec: &FlowSpec, base: &TorusPoint) -> Segment {
        match field {
            BumpField::Constant(c) => Segment::Const(*c),
            BumpField::Tubes(b) => {
                let plus: Vec<_> = b.plus.tube_pairs(spec, base).collect();
                let minus: Vec<_> = b.minus.tube_pairs(spec, base).collect();
                let r = b.tube_radius;
                match (classify(&plus, r), classify(&minus, r)) {
                    (Some(p), Some(m)) => {
                        Segment::Const(b.delta * (p as u8 as f64 - m as u8 as f64))
                    }
                    _ => Segment::Varying {
                        plus,
                        minus,
                        delta: b.delta,
                        radius: r,
                        roof: spec.roof(base),
                    },
                }
            }
        }
    }

    #[inline]
    fn eval(
        plus: &[(f64, f64)],
        minus: &[(f64, f64)],
        delta: f64,
        radius: f64,
        roof: f64,
        tau: f64,
    ) -> f64 {
        let w = smooth_step(tau / roof);
        let dp = blended_min(plus.iter().copied(), w);
        let dm = blended_min(minus.iter().copied(), w);
        delta * (bump_profile(dp / radius) - bump_profile(dm / radius))
    }

    /// `∫_a^b u dτ` by composite Simpson with step `<= h`.
    fn integrate(&self, a: f64, b: f64, h: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        match self {
            Segment::Const(c) => c * (b - a),
            Segment::Varying {
                plus,
                minus,
                delta,
                radius,
                roof,
            } => {
                let mut n = ((b - a) / h).ceil() as usize;
                n = n.max(2);
                if n % 2 == 1 {
                    n += 1;
                }
                let step = (b - a) / n as f64;
                let f = |tau: f64| Self::eval(plus, minus, *delta, *radius, *roof, tau);
                let mut acc = f(a) + f(b);
                for i in 1..n {
                    let wgt = if i % 2 == 1 { 4.0 } else { 2.0 };
                    acc += wgt * f(a + i as f64 * step);
                }
                acc * step / 3.0
            }
        }
    }
}

impl BumpField {
    pub fn value(&self, spec: &FlowSpec, x: &SuspensionPoint) -> f64 {
        match self {
            BumpField::Tubes(b) => b.value(spec, x),
            BumpField::Constant(c) => *c,
        }
    }

    /// Sup bound `|u| <= delta()`.
    pub fn delta(&self) -> f64 {
        match self {
            BumpField::Tubes(b) => b.delta,
            BumpField::Constant(c) => c.abs(),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, BumpField::Constant(c) if *c == 0.0)
    }

    /// `θ(t, x) = ∫_0^t u(flow(τ, x)) dτ`.
    ///
    /// The orbit is cut at every roof crossing, walking the identification in
    /// exactly the order `FlowSpec::flow` does, and each vertical piece is
    /// integrated with composite Simpson at step `<= h`.
    pub fn theta(&self, spec: &FlowSpec, t: f64, x: &SuspensionPoint, h: f64) -> f64 {
        if t == 0.0 {
            return 0.0;
        }
        if let BumpField::Constant(c) = self {
            return c * t;
        }
        let mut base = *x.base();
        let mut tau = x.tau();
        let mut end = tau + t;
        let mut total = 0.0;
        if t > 0.0 {
            let mut r = spec.roof(&base);
            while end >= r {
                total += Segment::over(self, spec, &base).integrate(tau, r, h);
                end -= r;
                base = base.apply(spec.matrix());
                r = spec.roof(&base);
                tau = 0.0;
            }
            total += Segment::over(self, spec, &base).integrate(tau, end, h);
        } else {
            while end < 0.0 {
                total -= Segment::over(self, spec, &base).integrate(0.0, tau, h);
                base = base.apply(spec.inverse());
                let r = spec.roof(&base);
                end += r;
                tau = r;
            }
            total -= Segment::over(self, spec, &base).integrate(end, tau, h);
        }
        total
    }
}

/// Data of the `R²`-cocycle: one bump field per factor plus the quadrature step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocycleSpec {
    pub bump1: BumpField,
    pub bump2: BumpField,
    pub step: f64,
}

pub const DEFAULT_DELTA: f64 = 0.05;
pub const DEFAULT_TUBE_RADIUS: f64 = 0.1;
pub const DEFAULT_STEP: f64 = 1e-2;

impl CocycleSpec {
    pub fn new(bump1: BumpField, bump2: BumpField, step: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidBump(format!(
                "quadrature step must be positive, got {step}"
            )));
        }
        if let (BumpField::Tubes(a), BumpField::Tubes(b)) = (&bump1, &bump2) {
            if a.delta != b.delta {
                return Err(Error::InvalidBump(format!(
                    "factor bumps must share δ ({} vs {})",
                    a.delta, b.delta
                )));
            }
        }
        Ok(CocycleSpec { bump1, bump2, step })
    }

    /// `β ≡ Id`: the time change is the product action itself.
    pub fn trivial(step: f64) -> Self {
        CocycleSpec {
            bump1: BumpField::Constant(0.0),
            bump2: BumpField::Constant(0.0),
            step,
        }
    }

    /// Tubes of radius `radius` with `u ≡ +δ` on the fixed point orbit and
    /// `u ≡ -δ` on the orbit of `(2/5, 1/5)` in both factors.
    pub fn counterexample(base: &ProductFlow, delta: f64, radius: f64, step: f64) -> Result<Self> {
        let bump = |spec: &FlowSpec| -> Result<BumpField> {
            let spacing = radius / 4.0;
            let plus = PeriodicOrbit::through(spec, [0, 0], 1, spacing);
            let minus = PeriodicOrbit::through(spec, [2, 1], 5, spacing);
            Ok(BumpField::Tubes(BumpSpec::new(delta, radius, plus, minus)?))
        };
        CocycleSpec::new(bump(&base.first)?, bump(&base.second)?, step)
    }

    pub fn default_counterexample(base: &ProductFlow) -> Result<Self> {
        Self::counterexample(base, DEFAULT_DELTA, DEFAULT_TUBE_RADIUS, DEFAULT_STEP)
    }

    pub fn with_step(&self, step: f64) -> Self {
        CocycleSpec {
            step,
            ..self.clone()
        }
    }

    /// Common `δ`, i.e. the sup bound on both bump fields.
    pub fn delta(&self) -> f64 {
        self.bump1.delta().max(self.bump2.delta())
    }

    pub fn bump_value(&self, base: &ProductFlow, factor: usize, x: &SuspensionPoint) -> f64 {
        match factor {
            0 => self.bump1.value(&base.first, x),
            _ => self.bump2.value(&base.second, x),
        }
    }

    pub fn theta1(&self, base: &ProductFlow, s: f64, x1: &SuspensionPoint) -> f64 {
        self.bump1.theta(&base.first, s, x1, self.step)
    }

    pub fn theta2(&self, base: &ProductFlow, t: f64, x2: &SuspensionPoint) -> f64 {
        self.bump2.theta(&base.second, t, x2, self.step)
    }

    pub fn beta(&self, base: &ProductFlow, a: [f64; 2], x: &ProductPoint) -> CocycleValue {
        [
            a[0] - self.theta2(base, a[1], &x.x2),
            a[1] - self.theta1(base, a[0], &x.x1),
        ]
    }

    /// `d_aβ(a, x) = [[1, -u₂(g_t x₂)], [-u₁(f_s x₁), 1]]`.
    pub fn d_a_beta(&self, base: &ProductFlow, a: [f64; 2], x: &ProductPoint) -> [[f64; 2]; 2] {
        let y = base.product_flow(a, x);
        let u1 = self.bump1.value(&base.first, &y.x1);
        let u2 = self.bump2.value(&base.second, &y.x2);
        [[1.0, -u2], [-u1, 1.0]]
    }

    /// Max over random `(a, b, x)`, `‖a‖, ‖b‖ <= 5`, of
    /// `‖β(a+b,x) - β(a,x) - β(b, α₀(a)x)‖`.
    pub fn verify_cocycle_identity(&self, base: &ProductFlow, samples: usize, seed: u64) -> f64 {
        use rayon::prelude::*;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draws: Vec<_> = (0..samples.max(1))
            .map(|_| {
                (
                    random_in_disk(&mut rng, 5.0),
                    random_in_disk(&mut rng, 5.0),
                    base.random_point(&mut rng),
                )
            })
            .collect();
        draws
            .par_iter()
            .map(|(a, b, x)| self.cocycle_residual(base, *a, *b, x))
            .reduce(|| 0.0, f64::max)
    }

    pub fn cocycle_residual(
        &self,
        base: &ProductFlow,
        a: [f64; 2],
        b: [f64; 2],
        x: &ProductPoint,
    ) -> f64 {
        let lhs = self.beta(base, [a[0] + b[0], a[1] + b[1]], x);
        let ba = self.beta(base, a, x);
        let bb = self.beta(base, b, &base.product_flow(a, x));
        norm([lhs[0] - ba[0] - bb[0], lhs[1] - ba[1] - bb[1]])
    }
}

#[inline]
pub(crate) fn norm(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

/// Uniform sample in the closed disk of the given radius.
pub fn random_in_disk<R: Rng + ?Sized>(rng: &mut R, radius: f64) -> [f64; 2] {
    let r = radius * rng.gen::<f64>().sqrt();
    let th = rng.gen::<f64>() * std::f64::consts::TAU;
    [r * th.cos(), r * th.sin()]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{dist_to_orbit, TorusPoint};

    fn setup() -> (ProductFlow, CocycleSpec) {
        let base = ProductFlow::cat_default();
        let cs = CocycleSpec::default_counterexample(&base).unwrap();
        (base, cs)
    }

    fn tubes(cs: &CocycleSpec) -> &BumpSpec {
        match &cs.bump1 {
            BumpField::Tubes(b) => b,
            _ => unreachable!(),
        }
    }

    #[test]
    fn bump_plateaus_and_support() {
        let (base, cs) = setup();
        let spec = &base.first;
        let b = tubes(&cs);
        let on_plus = b.plus_orbit().start(spec);
        assert_eq!(b.value(spec, &on_plus), 0.05);
        let near_plus = SuspensionPoint::new(spec, TorusPoint::new([0.02, 0.01]), 0.1);
        assert!(dist_to_orbit(spec, b.plus_orbit(), &near_plus) <= 0.05);
        assert_eq!(b.value(spec, &near_plus), 0.05);
        for smp in b.minus_orbit().samples() {
            assert_eq!(b.value(spec, smp), -0.05);
        }
        let far = SuspensionPoint::new(spec, TorusPoint::new([0.5, 0.5]), 0.0);
        assert!(dist_to_orbit(spec, b.plus_orbit(), &far) > 0.1);
        assert!(dist_to_orbit(spec, b.minus_orbit(), &far) > 0.1);
        assert_eq!(b.value(spec, &far), 0.0);
    }

    #[test]
    fn bump_bound_on_dense_grid() {
        let (base, cs) = setup();
        let spec = &base.first;
        let mut sup: f64 = 0.0;
        for i in 0..64 {
            for j in 0..64 {
                for k in 0..8 {
                    let u = TorusPoint::new([i as f64 / 64.0, j as f64 / 64.0]);
                    let tau = spec.roof(&u) * k as f64 / 8.0;
                    let x = SuspensionPoint::new(spec, u, tau);
                    sup = sup.max(cs.bump1.value(spec, &x).abs());
                }
            }
        }
        assert!(sup <= 0.05 + 1e-15);
    }

    #[test]
    fn overlapping_tubes_rejected() {
        let spec = FlowSpec::cat_default();
        let p = PeriodicOrbit::through(&spec, [0, 0], 1, 0.025);
        let q = PeriodicOrbit::through(&spec, [2, 1], 5, 0.025);
        assert!(BumpSpec::new(0.05, 0.11, p.clone(), q.clone()).is_err());
        assert!(BumpSpec::new(0.05, 0.1, p.clone(), q.clone()).is_ok());
        assert!(BumpSpec::new(0.0, 0.1, p, q).is_err());
    }

    #[test]
    fn theta_on_marked_orbits_is_linear() {
        let (base, cs) = setup();
        let spec = &base.first;
        let b = tubes(&cs);
        let p = b.plus_orbit().start(spec);
        let q = b.minus_orbit().start(spec);
        for t in [-50.0, -13.7, -1.0, 0.3, 7.25, 50.0] {
            assert!((cs.theta1(&base, t, &p) - 0.05 * t).abs() <= 1e-10);
            assert!((cs.theta1(&base, t, &q) + 0.05 * t).abs() <= 1e-10);
        }
        assert_eq!(cs.theta1(&base, 0.0, &p), 0.0);
    }

    #[test]
    fn theta_bound_and_additivity() {
        let (base, cs) = setup();
        let spec = &base.first;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let x = crate::dynamics::random_suspension_point(spec, &mut rng);
            let t = rng.gen_range(-10.0..10.0);
            let s = rng.gen_range(-10.0..10.0);
            let th = cs.theta1(&base, t, &x);
            assert!(th.abs() <= 2.0 * 0.05 * t.abs() + 1e-12);
            let lhs = cs.theta1(&base, t + s, &x);
            let rhs = th + cs.theta1(&base, s, &spec.flow(t, &x));
            assert!((lhs - rhs).abs() <= 1e-8 * (1.0 + s.abs() + t.abs()));
        }
    }

    #[test]
    fn theta_matches_fine_reference() {
        // independent oracle: trapezoid rule on the pointwise bump along the flow
        let (base, cs) = setup();
        let spec = &base.first;
        let x = SuspensionPoint::new(spec, TorusPoint::new([0.05, 0.93]), 0.4);
        let t = 3.0;
        let n = 60_000;
        let dt = t / n as f64;
        let mut acc = 0.0;
        for i in 0..=n {
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            acc += w * cs.bump1.value(spec, &spec.flow(i as f64 * dt, &x));
        }
        let reference = acc * dt;
        let got = cs.theta1(&base, t, &x);
        assert!(reference.abs() > 1e-3, "test path should cross a tube");
        assert!((got - reference).abs() < 1e-7, "{got} vs {reference}");
    }

    #[test]
    fn beta_closed_forms_on_marked_orbits() {
        let (base, cs) = setup();
        let b1 = tubes(&cs);
        let p1 = b1.plus_orbit().start(&base.first);
        let p2 = b1.minus_orbit().start(&base.first);
        let q1 = p1;
        let q2 = p2;
        let x = ProductPoint::new(p1, q2);
        let y = ProductPoint::new(p2, q1);
        let d = 0.05;
        for (s, t) in [(1.0, 0.0), (0.3, -2.0), (-4.0, 1.5)] {
            let bx = cs.beta(&base, [s, t], &x);
            assert!((bx[0] - (s + d * t)).abs() < 1e-12 && (bx[1] - (t - d * s)).abs() < 1e-12);
            let by = cs.beta(&base, [s, t], &y);
            assert!((by[0] - (s - d * t)).abs() < 1e-12 && (by[1] - (t + d * s)).abs() < 1e-12);
        }
        assert_eq!(cs.beta(&base, [0.0, 0.0], &x), [0.0, 0.0]);
        let m = cs.d_a_beta(&base, [0.0, 0.0], &x);
        assert_eq!(m, [[1.0, 0.05], [-0.05, 1.0]]);
    }

    #[test]
    fn d_a_beta_translation_and_bound() {
        let (base, cs) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let x = base.random_point(&mut rng);
            let b = random_in_disk(&mut rng, 5.0);
            let lhs = cs.d_a_beta(&base, b, &x);
            let rhs = cs.d_a_beta(&base, [0.0, 0.0], &base.product_flow(b, &x));
            for i in 0..2 {
                for j in 0..2 {
                    assert!((lhs[i][j] - rhs[i][j]).abs() <= 1e-10);
                    let id = if i == j { 1.0 } else { 0.0 };
                    assert!((lhs[i][j] - id).abs() <= 2.0 * 0.05);
                }
            }
        }
        let far = ProductPoint::new(
            SuspensionPoint::new(&base.first, TorusPoint::new([0.5, 0.5]), 0.0),
            SuspensionPoint::new(&base.second, TorusPoint::new([0.5, 0.5]), 0.0),
        );
        assert_eq!(
            cs.d_a_beta(&base, [0.0, 0.0], &far),
            [[1.0, 0.0], [0.0, 1.0]]
        );
    }

    #[test]
    fn cocycle_identity_degenerate_cases() {
        let base = ProductFlow::cat_default();
        let lin =
            CocycleSpec::new(BumpField::Constant(0.03), BumpField::Constant(-0.02), 1e-2).unwrap();
        assert!(lin.verify_cocycle_identity(&base, 200, 1) <= 1e-10);
        let (_, cs) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = base.random_point(&mut rng);
        assert_eq!(cs.cocycle_residual(&base, [1.3, -2.0], [0.0, 0.0], &x), 0.0);
    }

    #[test]
    fn cocycle_identity_is_quadrature_limited() {
        let (base, cs) = setup();
        let coarse = cs.verify_cocycle_identity(&base, 300, 17);
        let fine = cs
            .with_step(cs.step / 4.0)
            .verify_cocycle_identity(&base, 300, 17);
        assert!(coarse <= 1e-6, "coarse residual {coarse:e}");
        assert!(fine * 10.0 <= coarse, "coarse {coarse:e}, fine {fine:e}");
    }

    #[test]
    fn beta_is_bi_lipschitz_in_a() {
        let (base, cs) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let d = cs.delta();
        for _ in 0..200 {
            let x = base.random_point(&mut rng);
            let a = random_in_disk(&mut rng, 5.0);
            let b = random_in_disk(&mut rng, 5.0);
            let ba = cs.beta(&base, a, &x);
            let bb = cs.beta(&base, b, &x);
            let dist = norm([a[0] - b[0], a[1] - b[1]]);
            let img = norm([ba[0] - bb[0], ba[1] - bb[1]]);
            assert!(img <= (1.0 + 2.0 * d) * dist + 1e-9);
            assert!(img >= (1.0 - 2.0 * d) * dist - 1e-9);
        }
    }
}

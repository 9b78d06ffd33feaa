use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::torus::{IntMatrix, TorusPoint};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FlowSpecRaw {
    matrix: [[i64; 2]; 2],
    roof_amplitude: f64,
    roof_mode: [i64; 2],
}

/// Suspension flow of a hyperbolic toral automorphism `A` under the roof
/// `r(u) = 1 + ρ cos(2π m·u)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FlowSpecRaw", into = "FlowSpecRaw")]
pub struct FlowSpec {
    matrix: IntMatrix,
    inverse: IntMatrix,
    roof_amplitude: f64,
    roof_mode: [i64; 2],
    eigen_unstable: f64,
    eigen_stable: f64,
    v_unstable: [f64; 2],
    v_stable: [f64; 2],
}

impl TryFrom<FlowSpecRaw> for FlowSpec {
    type Error = Error;
    fn try_from(raw: FlowSpecRaw) -> Result<Self> {
        FlowSpec::new(IntMatrix(raw.matrix), raw.roof_amplitude, raw.roof_mode)
    }
}

impl From<FlowSpec> for FlowSpecRaw {
    fn from(s: FlowSpec) -> Self {
        FlowSpecRaw {
            matrix: s.matrix.0,
            roof_amplitude: s.roof_amplitude,
            roof_mode: s.roof_mode,
        }
    }
}

fn eigenvector(m: &IntMatrix, mu: f64) -> [f64; 2] {
    let [[a, b], [c, d]] = m.0;
    let v = if b != 0 {
        [b as f64, mu - a as f64]
    } else {
        [mu - d as f64, c as f64]
    };
    let n = v[0].hypot(v[1]);
    let v = [v[0] / n, v[1] / n];
    // fix the sign so the largest component is positive
    if v[0].abs() >= v[1].abs() {
        if v[0] < 0.0 {
            [-v[0], -v[1]]
        } else {
            v
        }
    } else if v[1] < 0.0 {
        [-v[0], -v[1]]
    } else {
        v
    }
}

impl FlowSpec {
    pub fn new(matrix: IntMatrix, roof_amplitude: f64, roof_mode: [i64; 2]) -> Result<Self> {
        let det = matrix.det();
        let tr = matrix.trace();
        if det.abs() != 1 {
            return Err(Error::InvalidFlow(format!("|det A| must be 1, got {det}")));
        }
        // eigenvalues are real with product ±1; none on the unit circle
        let hyperbolic = if det == 1 { tr.abs() > 2 } else { tr != 0 };
        if !hyperbolic {
            return Err(Error::InvalidFlow(format!(
                "A must be hyperbolic, got trace {tr} and det {det}"
            )));
        }
        if !roof_amplitude.is_finite() || roof_amplitude.abs() >= 1.0 {
            return Err(Error::InvalidFlow(format!(
                "roof amplitude must satisfy |ρ| < 1, got {roof_amplitude}"
            )));
        }
        let t = tr as f64;
        let disc = (t * t - 4.0 * det as f64).sqrt();
        let eigen_unstable = (t + t.signum() * disc) / 2.0;
        let eigen_stable = det as f64 / eigen_unstable;
        Ok(FlowSpec {
            matrix,
            inverse: matrix.inverse(),
            roof_amplitude,
            roof_mode,
            eigen_unstable,
            eigen_stable,
            v_unstable: eigenvector(&matrix, eigen_unstable),
            v_stable: eigenvector(&matrix, eigen_stable),
        })
    }

    /// `A = [[2,1],[1,1]]`, `ρ = 0.2`, `m = (1,0)`.
    pub fn cat_default() -> Self {
        FlowSpec::new(IntMatrix([[2, 1], [1, 1]]), 0.2, [1, 0]).expect("default flow is valid")
    }

    pub fn matrix(&self) -> &IntMatrix {
        &self.matrix
    }

    pub fn inverse(&self) -> &IntMatrix {
        &self.inverse
    }

    pub fn roof_amplitude(&self) -> f64 {
        self.roof_amplitude
    }

    pub fn roof_mode(&self) -> [i64; 2] {
        self.roof_mode
    }

    /// Signed expanding eigenvalue of `A`.
    pub fn eigen_unstable(&self) -> f64 {
        self.eigen_unstable
    }

    pub fn eigen_stable(&self) -> f64 {
        self.eigen_stable
    }

    /// `λ_A = |expanding eigenvalue| > 1`.
    pub fn expansion(&self) -> f64 {
        self.eigen_unstable.abs()
    }

    pub fn v_unstable(&self) -> [f64; 2] {
        self.v_unstable
    }

    pub fn v_stable(&self) -> [f64; 2] {
        self.v_stable
    }

    pub fn roof(&self, u: &TorusPoint) -> f64 {
        let c = u.coords();
        let m = self.roof_mode;
        1.0 + self.roof_amplitude * (TAU * (m[0] as f64 * c[0] + m[1] as f64 * c[1])).cos()
    }

    /// Advances `x` by time `t`, returning the new point and the signed
    /// number of roof identifications applied.
    pub fn flow_counted(&self, t: f64, x: &SuspensionPoint) -> (SuspensionPoint, i64) {
        let mut base = x.base;
        let mut tau = x.tau + t;
        let mut count = 0i64;
        let mut r = self.roof(&base);
        loop {
            if tau >= r {
                tau -= r;
                base = base.apply(&self.matrix);
                r = self.roof(&base);
                count += 1;
            } else if tau < 0.0 {
                base = base.apply(&self.inverse);
                r = self.roof(&base);
                tau += r;
                count -= 1;
            } else {
                break;
            }
        }
        (SuspensionPoint { base, tau }, count)
    }

    pub fn flow(&self, t: f64, x: &SuspensionPoint) -> SuspensionPoint {
        self.flow_counted(t, x).0
    }

    pub fn crossing_count(&self, t: f64, x: &SuspensionPoint) -> i64 {
        self.flow_counted(t, x).1
    }

    /// `‖df_t|E^u‖(x)` in the quotient by the flow direction: `λ_A^{crossings}`.
    pub fn unstable_growth(&self, t: f64, x: &SuspensionPoint) -> f64 {
        self.expansion().powi(self.crossing_count(t, x) as i32)
    }

    /// Image of `x` lifted one roof up: `(u, τ) ↦ (A u, τ - r(u))`.
    pub fn deck_down(&self, x: &SuspensionPoint) -> (TorusPoint, f64) {
        (x.base.apply(&self.matrix), x.tau - self.roof(&x.base))
    }

    /// `(u, τ) ↦ (A⁻¹ u, τ + r(A⁻¹ u))`.
    pub fn deck_up(&self, x: &SuspensionPoint) -> (TorusPoint, f64) {
        let b = x.base.apply(&self.inverse);
        let r = self.roof(&b);
        (b, x.tau + r)
    }

    /// Representative of `y` in the chart of `x` among `y` and its two deck
    /// images, chosen to be closest to `x`. Returns `(base, tau, distance)`.
    fn nearest_rep(&self, x: &SuspensionPoint, y: &SuspensionPoint) -> (TorusPoint, f64, f64) {
        let reps = [(y.base, y.tau), self.deck_down(y), self.deck_up(y)];
        let mut best = (y.base, y.tau, f64::INFINITY);
        for (b, t) in reps {
            let du = b.diff(&x.base);
            let d = (du[0] * du[0] + du[1] * du[1] + (t - x.tau) * (t - x.tau)).sqrt();
            if d < best.2 {
                best = (b, t, d);
            }
        }
        best
    }

    /// Euclidean distance in `(u, τ)` charts, minimized over deck representatives.
    pub fn distance(&self, x: &SuspensionPoint, y: &SuspensionPoint) -> f64 {
        self.nearest_rep(x, y).2
    }

    /// Transverse (torus-coordinate) displacement of `y` from `x`, measured in
    /// the chart of `x`. This is the image of `y - x` in the quotient by the
    /// flow direction.
    pub fn transverse_diff(&self, x: &SuspensionPoint, y: &SuspensionPoint) -> [f64; 2] {
        let (b, _, _) = self.nearest_rep(x, y);
        b.diff(&x.base)
    }

    /// `x` displaced transversally by `delta` at fixed roof coordinate.
    pub fn displaced(&self, x: &SuspensionPoint, delta: [f64; 2]) -> SuspensionPoint {
        let base = x.base.displaced(delta);
        self.flow(0.0, &SuspensionPoint { base, tau: x.tau })
    }
}

/// Point `(u, τ)` of the suspension with `0 <= τ < r(u)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuspensionPoint {
    base: TorusPoint,
    tau: f64,
}

impl SuspensionPoint {
    /// Normalizes `tau` into `[0, r(base))` by applying the identification.
    pub fn new(spec: &FlowSpec, base: TorusPoint, tau: f64) -> Self {
        spec.flow(0.0, &SuspensionPoint { base, tau })
    }

    pub fn base(&self) -> &TorusPoint {
        &self.base
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Roof phase `τ / r(u)` in `[0, 1)`.
    pub fn phase(&self, spec: &FlowSpec) -> f64 {
        self.tau / spec.roof(&self.base)
    }
}

/// Point of `X = Y₁ × Y₂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProductPoint {
    pub x1: SuspensionPoint,
    pub x2: SuspensionPoint,
}

impl ProductPoint {
    pub fn new(x1: SuspensionPoint, x2: SuspensionPoint) -> Self {
        ProductPoint { x1, x2 }
    }
}

/// The product `R²`-action `α₀(s,t)(x₁,x₂) = (f_s x₁, g_t x₂)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductFlow {
    pub first: FlowSpec,
    pub second: FlowSpec,
}

impl ProductFlow {
    pub fn new(first: FlowSpec, second: FlowSpec) -> Self {
        ProductFlow { first, second }
    }

    pub fn cat_default() -> Self {
        ProductFlow::new(FlowSpec::cat_default(), FlowSpec::cat_default())
    }

    pub fn factor(&self, i: usize) -> &FlowSpec {
        match i {
            0 => &self.first,
            _ => &self.second,
        }
    }

    pub fn product_flow(&self, a: [f64; 2], x: &ProductPoint) -> ProductPoint {
        ProductPoint {
            x1: self.first.flow(a[0], &x.x1),
            x2: self.second.flow(a[1], &x.x2),
        }
    }

    /// Max of the two factor distances.
    pub fn distance(&self, x: &ProductPoint, y: &ProductPoint) -> f64 {
        self.first
            .distance(&x.x1, &y.x1)
            .max(self.second.distance(&x.x2, &y.x2))
    }

    /// Transverse displacement `y - x` as `(du₁, du₂)` in the charts of `x`.
    pub fn transverse_diff(&self, x: &ProductPoint, y: &ProductPoint) -> [f64; 4] {
        let d1 = self.first.transverse_diff(&x.x1, &y.x1);
        let d2 = self.second.transverse_diff(&x.x2, &y.x2);
        [d1[0], d1[1], d2[0], d2[1]]
    }

    pub fn displaced(&self, x: &ProductPoint, delta: [f64; 4]) -> ProductPoint {
        ProductPoint {
            x1: self.first.displaced(&x.x1, [delta[0], delta[1]]),
            x2: self.second.displaced(&x.x2, [delta[2], delta[3]]),
        }
    }

    /// Uniformly distributed point (Lebesgue on torus × uniform phase).
    pub fn random_point<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> ProductPoint {
        ProductPoint {
            x1: random_suspension_point(&self.first, rng),
            x2: random_suspension_point(&self.second, rng),
        }
    }
}

pub fn random_suspension_point<R: rand::Rng + ?Sized>(
    spec: &FlowSpec,
    rng: &mut R,
) -> SuspensionPoint {
    let base = TorusPoint::new([rng.gen::<f64>(), rng.gen::<f64>()]);
    let tau = rng.gen::<f64>() * spec.roof(&base);
    SuspensionPoint::new(spec, base, tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn origin_point(spec: &FlowSpec) -> SuspensionPoint {
        SuspensionPoint::new(spec, TorusPoint::origin(), 0.0)
    }

    #[test]
    fn roof_values() {
        let flat = FlowSpec::new(IntMatrix([[2, 1], [1, 1]]), 0.0, [1, 0]).unwrap();
        assert_eq!(flat.roof(&TorusPoint::new([0.3, 0.9])), 1.0);
        let s = FlowSpec::cat_default();
        assert!((s.roof(&TorusPoint::origin()) - 1.2).abs() < 1e-15);
        assert!((s.roof(&TorusPoint::new([0.25, 0.7])) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(FlowSpec::new(IntMatrix([[1, 1], [0, 1]]), 0.2, [1, 0]).is_err());
        assert!(FlowSpec::new(IntMatrix([[2, 0], [0, 1]]), 0.2, [1, 0]).is_err());
        assert!(FlowSpec::new(IntMatrix([[2, 1], [1, 1]]), 1.0, [1, 0]).is_err());
    }

    #[test]
    fn eigen_splitting() {
        for m in [
            [[2, 1], [1, 1]],
            [[3, 1], [2, 1]],
            [[-2, 1], [1, -1]],
            [[1, 1], [1, 0]],
        ] {
            let s = FlowSpec::new(IntMatrix(m), 0.1, [0, 1]).unwrap();
            let a = s.matrix();
            let vu = s.v_unstable();
            let vs = s.v_stable();
            let au = a.apply_f64(vu);
            let as_ = a.apply_f64(vs);
            let lu = s.eigen_unstable();
            let ls = s.eigen_stable();
            assert!((au[0] - lu * vu[0]).hypot(au[1] - lu * vu[1]) <= 1e-12);
            assert!((as_[0] - ls * vs[0]).hypot(as_[1] - ls * vs[1]) <= 1e-12);
            assert!(s.expansion() > 1.0);
        }
        let s = FlowSpec::cat_default();
        assert!((s.expansion() - (3.0 + 5f64.sqrt()) / 2.0).abs() < 1e-14);
    }

    #[test]
    fn fixed_point_crossing() {
        let s = FlowSpec::cat_default();
        let x = origin_point(&s);
        assert_eq!(s.flow(0.0, &x), x);
        let (y, n) = s.flow_counted(1.2, &x);
        assert_eq!(n, 1);
        assert_eq!(*y.base(), TorusPoint::origin());
        assert!(y.tau().abs() < 1e-15);
        assert_eq!(s.crossing_count(2.5, &x), 2);
        let z = s.flow(2.5, &x);
        assert_eq!(s.crossing_count(-2.5, &z), -2);
        assert!((s.unstable_growth(1.2, &x) - s.expansion()).abs() < 1e-14);
        assert_eq!(s.unstable_growth(0.0, &x), 1.0);
    }

    #[test]
    fn asymptotic_rate_on_fixed_orbit() {
        let s = FlowSpec::cat_default();
        let x = origin_point(&s);
        let expected = s.expansion().ln() / 1.2;
        assert!((expected - 0.8020).abs() < 1e-4);
        let t = 1.0e4;
        let rate = s.crossing_count(t, &x) as f64 * s.expansion().ln() / t;
        assert!((rate - expected).abs() < s.expansion().ln() / t + 1e-12);
    }

    #[test]
    fn flow_is_reversible_and_additive() {
        let s = FlowSpec::cat_default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let x = random_suspension_point(&s, &mut rng);
            let t = rng.gen_range(-10.0..10.0);
            let u = rng.gen_range(-10.0..10.0);
            let back = s.flow(-t, &s.flow(t, &x));
            assert!(s.distance(&back, &x) <= 1e-10);
            let a = s.flow(t + u, &x);
            let b = s.flow(u, &s.flow(t, &x));
            assert!(s.distance(&a, &b) <= 1e-10 * (1.0 + t.abs() + u.abs()));
        }
    }

    #[test]
    fn roof_positive_on_grid() {
        let s = FlowSpec::new(IntMatrix([[2, 1], [1, 1]]), 0.9, [2, 3]).unwrap();
        let mut min = f64::INFINITY;
        for i in 0..512 {
            for j in 0..512 {
                let u = TorusPoint::new([i as f64 / 512.0, j as f64 / 512.0]);
                min = min.min(s.roof(&u));
            }
        }
        assert!(min > 0.0);
    }

    #[test]
    fn distance_sees_across_roof() {
        let s = FlowSpec::cat_default();
        let x = origin_point(&s);
        let below = s.flow(-1e-3, &x);
        assert!(below.tau() > 1.0);
        assert!((s.distance(&x, &below) - 1e-3).abs() < 1e-12);
    }

    #[test]
    fn product_flow_structure() {
        let pf = ProductFlow::cat_default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let x = pf.random_point(&mut rng);
            assert_eq!(pf.product_flow([0.0, 0.0], &x), x);
            let s = rng.gen_range(-5.0..5.0);
            let y = pf.product_flow([s, 0.0], &x);
            assert_eq!(y.x2, x.x2);
            let a = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
            let b = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
            let lhs = pf.product_flow(a, &pf.product_flow(b, &x));
            let rhs = pf.product_flow([a[0] + b[0], a[1] + b[1]], &x);
            assert!(pf.distance(&lhs, &rhs) <= 1e-10);
        }
    }
}

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::suspension::{FlowSpec, SuspensionPoint};
use super::torus::TorusPoint;
use crate::smooth::smooth_step;

/// Default arc-time spacing of stored orbit samples.
pub const DEFAULT_SAMPLE_SPACING: f64 = 0.025;

/// A periodic orbit of the suspension flow through a rational torus point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOrbit {
    seed_num: [i64; 2],
    den: i64,
    /// Base points `A^i seed`, `i = 0..k`, exact.
    points: Vec<TorusPoint>,
    flow_period: f64,
    sample_spacing: f64,
    samples: Vec<SuspensionPoint>,
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Reduces `num / den` to lowest terms with numerators in `[0, den)`.
pub fn reduce(num: [i64; 2], den: i64) -> ([i64; 2], i64) {
    let n = [num[0].rem_euclid(den), num[1].rem_euclid(den)];
    let g = gcd(gcd(n[0], n[1]), den);
    ([n[0] / g, n[1] / g], den / g)
}

impl PeriodicOrbit {
    /// Orbit through the rational point `num / den`, sampled at `spacing`.
    pub fn through(spec: &FlowSpec, num: [i64; 2], den: i64, spacing: f64) -> Self {
        assert!(den > 0, "denominator must be positive");
        assert!(spacing > 0.0, "sample spacing must be positive");
        let (num, den) = reduce(num, den);
        let seed = TorusPoint::rational(num, den);
        let mut points = vec![seed];
        let mut p = seed.apply(spec.matrix());
        while p != seed {
            points.push(p);
            p = p.apply(spec.matrix());
        }
        let flow_period: f64 = points.iter().map(|q| spec.roof(q)).sum();
        let n = (flow_period / spacing).ceil().max(1.0) as usize;
        let step = flow_period / n as f64;
        let start = SuspensionPoint::new(spec, seed, 0.0);
        let samples = (0..n).map(|i| spec.flow(i as f64 * step, &start)).collect();
        PeriodicOrbit {
            seed_num: num,
            den,
            points,
            flow_period,
            sample_spacing: step,
            samples,
        }
    }

    pub fn seed(&self) -> TorusPoint {
        self.points[0]
    }

    pub fn seed_rational(&self) -> ([i64; 2], i64) {
        (self.seed_num, self.den)
    }

    /// The orbit's point at roof coordinate 0 above the seed.
    pub fn start(&self, spec: &FlowSpec) -> SuspensionPoint {
        SuspensionPoint::new(spec, self.seed(), 0.0)
    }

    pub fn map_period(&self) -> usize {
        self.points.len()
    }

    pub fn flow_period(&self) -> f64 {
        self.flow_period
    }

    pub fn points(&self) -> &[TorusPoint] {
        &self.points
    }

    pub fn samples(&self) -> &[SuspensionPoint] {
        &self.samples
    }

    pub fn sample_spacing(&self) -> f64 {
        self.sample_spacing
    }

    /// Unstable exponent per unit flow time, `k log λ_A / P`.
    pub fn exponent(&self, spec: &FlowSpec) -> f64 {
        self.map_period() as f64 * spec.expansion().ln() / self.flow_period
    }

    /// Whether `(num / den)` lies on this orbit.
    pub fn contains(&self, num: [i64; 2], den: i64) -> bool {
        let (n, d) = reduce(num, den);
        let p = TorusPoint::rational(n, d);
        self.points.contains(&p)
    }

    /// Distance pairs `(|u - P_i|, |A u - A P_i|)` for every orbit point.
    pub fn tube_pairs<'a>(
        &'a self,
        spec: &'a FlowSpec,
        u: &'a TorusPoint,
    ) -> impl Iterator<Item = (f64, f64)> + 'a {
        let au = u.apply(spec.matrix());
        let k = self.points.len();
        (0..k).map(move |i| {
            let next = &self.points[(i + 1) % k];
            (u.distance(&self.points[i]), au.distance(next))
        })
    }

    /// Smallest torus distance between base points of two orbits (or the
    /// smallest distance between distinct points of one orbit).
    pub fn separation(&self, other: &PeriodicOrbit) -> f64 {
        let mut best = f64::INFINITY;
        for p in &self.points {
            for q in &other.points {
                if p != q {
                    best = best.min(p.distance(q));
                }
            }
        }
        best
    }
}

/// Combines `(|u - P_i|, |Au - AP_i|)` pairs at roof phase weight `w`.
#[inline]
pub fn blended_min(pairs: impl Iterator<Item = (f64, f64)>, w: f64) -> f64 {
    pairs
        .map(|(d0, d1)| (1.0 - w) * d0 + w * d1)
        .fold(f64::INFINITY, f64::min)
}

/// Tube coordinate of `x` relative to `orbit`.
///
/// In the lower part of the fundamental domain this is the Euclidean chart
/// distance to the orbit (a union of vertical segments over the orbit's base
/// points); towards the roof it blends into the same distance measured in
/// the chart above, `(A u, τ - r(u))`. The blend weight is a flat-ended step
/// in the roof phase, so the result is continuous and smooth across the
/// identification `(u, r(u)) ~ (A u, 0)` and vanishes exactly on the orbit.
pub fn dist_to_orbit(spec: &FlowSpec, orbit: &PeriodicOrbit, x: &SuspensionPoint) -> f64 {
    let w = smooth_step(x.phase(spec));
    blended_min(orbit.tube_pairs(spec, x.base()), w)
}

/// All periodic orbits through rational points with denominator
/// `<= max_denominator`, sorted by map period then seed.
pub fn find_periodic_orbits(spec: &FlowSpec, max_denominator: i64) -> Vec<PeriodicOrbit> {
    assert!(max_denominator >= 1);
    let mut seen: HashSet<([i64; 2], i64)> = HashSet::new();
    let mut out = Vec::new();
    for den in 1..=max_denominator {
        for i in 0..den {
            for j in 0..den {
                let (num, d) = reduce([i, j], den);
                if d != den || seen.contains(&(num, den)) {
                    continue;
                }
                let orbit = PeriodicOrbit::through(spec, num, den, DEFAULT_SAMPLE_SPACING);
                for p in orbit.points() {
                    let (n, d) = p.anchor();
                    seen.insert((n, d));
                }
                out.push(orbit);
            }
        }
    }
    out.sort_by(|a, b| {
        (a.map_period(), a.den, a.seed_num).cmp(&(b.map_period(), b.den, b.seed_num))
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_period(num: [i64; 2], den: i64) -> usize {
        // direct iteration of [[2,1],[1,1]] on integer numerators mod den
        let mut p = num;
        let mut k = 0;
        loop {
            p = [
                (2 * p[0] + p[1]).rem_euclid(den),
                (p[0] + p[1]).rem_euclid(den),
            ];
            k += 1;
            if p == num {
                return k;
            }
        }
    }

    #[test]
    fn enumerates_known_orbits() {
        let s = FlowSpec::cat_default();
        let orbits = find_periodic_orbits(&s, 5);
        assert_eq!(orbits[0].seed(), TorusPoint::origin());
        assert_eq!(orbits[0].map_period(), 1);
        let o = orbits
            .iter()
            .find(|o| o.contains([2, 1], 5))
            .expect("orbit of (2/5, 1/5)");
        assert_eq!(o.map_period(), brute_period([2, 1], 5));
        assert_eq!(o.map_period(), 10);
        // every rational point with denominator <= 5 is covered exactly once
        let total: usize = orbits.iter().map(|o| o.map_period()).sum();
        let expected: usize = (1..=5i64)
            .map(|d| {
                (0..d)
                    .flat_map(|i| (0..d).map(move |j| (i, j)))
                    .filter(|&(i, j)| reduce([i, j], d).1 == d)
                    .count()
            })
            .sum();
        assert_eq!(total, expected);
        for w in orbits.windows(2) {
            assert!(w[0].map_period() <= w[1].map_period());
        }
    }

    #[test]
    fn orbits_close_exactly() {
        let s = FlowSpec::cat_default();
        for o in find_periodic_orbits(&s, 6) {
            let mut p = o.seed();
            for _ in 0..o.map_period() {
                p = p.apply(s.matrix());
            }
            assert_eq!(p, o.seed());
            for smp in o.samples() {
                let img = smp.base().apply(s.matrix());
                assert!(o.points().contains(&img));
            }
            assert!(o.flow_period() > 0.0);
        }
    }

    #[test]
    fn period_of_default_orbit() {
        let s = FlowSpec::cat_default();
        let o = PeriodicOrbit::through(&s, [2, 1], 5, DEFAULT_SAMPLE_SPACING);
        // cos(2π x) over the x-coordinates of the orbit sums to zero
        assert!((o.flow_period() - 10.0).abs() < 1e-12);
        let fixed = PeriodicOrbit::through(&s, [0, 0], 1, DEFAULT_SAMPLE_SPACING);
        assert!((fixed.flow_period() - 1.2).abs() < 1e-15);
        assert!((fixed.exponent(&s) - s.expansion().ln() / 1.2).abs() < 1e-15);
    }

    #[test]
    fn exponent_consistency_over_periods() {
        let s = FlowSpec::cat_default();
        for o in find_periodic_orbits(&s, 5) {
            let x0 = o.start(&s);
            let k = o.map_period() as i64;
            for n in 1..=5i64 {
                let t = n as f64 * o.flow_period();
                // a hair past the n-th return so the landing is not on the roof itself
                let count = s.crossing_count(t + 1e-9, &x0);
                assert_eq!(count, n * k);
                let rate = count as f64 * s.expansion().ln() / t;
                assert!((rate - o.exponent(&s)).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn distance_to_orbit() {
        let s = FlowSpec::cat_default();
        let fixed = PeriodicOrbit::through(&s, [0, 0], 1, DEFAULT_SAMPLE_SPACING);
        for smp in fixed.samples() {
            assert!(dist_to_orbit(&s, &fixed, smp) <= fixed.sample_spacing() / 2.0);
        }
        let far = SuspensionPoint::new(&s, TorusPoint::new([0.5, 0.5]), 0.0);
        let d = dist_to_orbit(&s, &fixed, &far);
        // oracle: dense scan of chart distances to the orbit's vertical segment
        let mut brute = f64::INFINITY;
        for smp in fixed.samples() {
            brute = brute.min(s.distance(&far, smp));
        }
        assert!(d >= 0.4 && brute >= 0.4);
        assert!((d - brute).abs() <= fixed.sample_spacing());

        let o = PeriodicOrbit::through(&s, [2, 1], 5, DEFAULT_SAMPLE_SPACING);
        for smp in o.samples() {
            assert!(dist_to_orbit(&s, &o, smp) <= 1e-12);
        }
    }

    #[test]
    fn tube_distance_is_continuous_across_roof() {
        let s = FlowSpec::cat_default();
        let o = PeriodicOrbit::through(&s, [2, 1], 5, DEFAULT_SAMPLE_SPACING);
        let base = TorusPoint::new([0.43, 0.17]);
        let r = s.roof(&base);
        let below = SuspensionPoint::new(&s, base, r * (1.0 - 1e-9));
        let above = s.flow(2.0 * r * 1e-9, &below);
        assert_eq!(s.crossing_count(2.0 * r * 1e-9, &below), 1);
        let a = dist_to_orbit(&s, &o, &below);
        let b = dist_to_orbit(&s, &o, &above);
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }

    #[test]
    fn default_orbits_are_separated() {
        let s = FlowSpec::cat_default();
        let p1 = PeriodicOrbit::through(&s, [0, 0], 1, DEFAULT_SAMPLE_SPACING);
        let p2 = PeriodicOrbit::through(&s, [2, 1], 5, DEFAULT_SAMPLE_SPACING);
        assert!((p1.separation(&p2) - 0.2).abs() < 1e-15);
        assert!((p2.separation(&p2) - 0.2).abs() < 1e-15);
    }
}

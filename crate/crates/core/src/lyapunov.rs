//! Finite-time Lyapunov exponents of the four coarse directions, zero-line
//! fits, and the rank-one-factor and homogeneity verdicts built on them.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{FlowSpec, PeriodicOrbit, ProductFlow, ProductPoint, DEFAULT_SAMPLE_SPACING};
use crate::error::{Error, Result};
use crate::timechange::{Action, TimeChangedAction};

pub const MIN_HORIZON: f64 = 10.0;
/// Seed and renormalization scale of the two-point separation.
pub const SEPARATION_SCALE: f64 = 1e-8;
/// Below this the tracked separation is considered lost.
pub const COLLAPSE_SCALE: f64 = 1e-14;
const DIRECTION_STEP: f64 = 1e-6;
const DIRECTION_SETTLE: f64 = 1e-9;
const DIRECTION_MAX_STEPS: usize = 100;
const DIRECTION_STEPS: usize = 60;

/// The four coarse directions of the product action. `±χ₁` live in the
/// first factor, `±χ₂` in the second; the `+` labels are the unstable
/// directions of the forward factor flow, `-` the stable ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CoarseLabel {
    #[serde(rename = "+chi1")]
    PlusChi1,
    #[serde(rename = "-chi1")]
    MinusChi1,
    #[serde(rename = "+chi2")]
    PlusChi2,
    #[serde(rename = "-chi2")]
    MinusChi2,
}

impl CoarseLabel {
    pub const ALL: [CoarseLabel; 4] = [
        CoarseLabel::PlusChi1,
        CoarseLabel::MinusChi1,
        CoarseLabel::PlusChi2,
        CoarseLabel::MinusChi2,
    ];

    /// 0 for `±χ₁`, 1 for `±χ₂`.
    pub fn factor(self) -> usize {
        match self {
            CoarseLabel::PlusChi1 | CoarseLabel::MinusChi1 => 0,
            CoarseLabel::PlusChi2 | CoarseLabel::MinusChi2 => 1,
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            CoarseLabel::PlusChi1 | CoarseLabel::PlusChi2 => 1.0,
            CoarseLabel::MinusChi1 | CoarseLabel::MinusChi2 => -1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CoarseLabel::PlusChi1 => "+chi1",
            CoarseLabel::MinusChi1 => "-chi1",
            CoarseLabel::PlusChi2 => "+chi2",
            CoarseLabel::MinusChi2 => "-chi2",
        }
    }

    /// Base-action direction of this label in transverse coordinates.
    pub fn base_direction(self, base: &ProductFlow) -> [f64; 4] {
        let spec = base.factor(self.factor());
        let v = if self.sign() > 0.0 {
            spec.v_unstable()
        } else {
            spec.v_stable()
        };
        match self.factor() {
            0 => [v[0], v[1], 0.0, 0.0],
            _ => [0.0, 0.0, v[0], v[1]],
        }
    }

    /// Element whose forward action makes this label dominant.
    fn dominant_element(self) -> [f64; 2] {
        match self {
            CoarseLabel::PlusChi1 => [1.0, 0.0],
            CoarseLabel::MinusChi1 => [-1.0, 0.0],
            CoarseLabel::PlusChi2 => [0.0, 1.0],
            CoarseLabel::MinusChi2 => [0.0, -1.0],
        }
    }
}

impl fmt::Display for CoarseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PointId {
    /// `(p₁, q₂)`
    X,
    /// `(p₂, q₁)`
    Y,
    Generic(usize),
}

impl fmt::Display for PointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PointId::X => f.write_str("x"),
            PointId::Y => f.write_str("y"),
            PointId::Generic(i) => write!(f, "g{i}"),
        }
    }
}

/// Bump values and orbit exponents at a point lying on marked orbits in both
/// factors. There the cocycle is exactly linear in `a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitData {
    /// `(u₁(x₁), u₂(x₂))`
    pub bump: [f64; 2],
    /// Unstable exponent per unit flow time of each factor's orbit.
    pub rate: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkedPoint {
    pub id: PointId,
    pub point: ProductPoint,
    pub orbit: Option<OrbitData>,
}

impl MarkedPoint {
    pub fn generic(index: usize, point: ProductPoint) -> Self {
        MarkedPoint {
            id: PointId::Generic(index),
            point,
            orbit: None,
        }
    }

    pub fn is_marked(&self) -> bool {
        self.orbit.is_some()
    }
}

/// `p₁, p₂` in the first factor and `q₁, q₂` in the second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkedOrbits {
    pub p1: PeriodicOrbit,
    pub p2: PeriodicOrbit,
    pub q1: PeriodicOrbit,
    pub q2: PeriodicOrbit,
}

impl MarkedOrbits {
    /// Fixed point `(0,0)` and the orbit of `(2/5, 1/5)` in both factors.
    pub fn cat_default(base: &ProductFlow) -> Self {
        let orbit = |spec: &FlowSpec, num, den| {
            PeriodicOrbit::through(spec, num, den, DEFAULT_SAMPLE_SPACING)
        };
        MarkedOrbits {
            p1: orbit(&base.first, [0, 0], 1),
            p2: orbit(&base.first, [2, 1], 5),
            q1: orbit(&base.second, [0, 0], 1),
            q2: orbit(&base.second, [2, 1], 5),
        }
    }

    /// `x = (p₁, q₂)` and `y = (p₂, q₁)`, each at the orbit seeds.
    pub fn points(&self, tca: &TimeChangedAction) -> [MarkedPoint; 2] {
        let base = tca.base();
        let make = |id, o1: &PeriodicOrbit, o2: &PeriodicOrbit| {
            let point = ProductPoint::new(o1.start(&base.first), o2.start(&base.second));
            let cs = tca.cocycle();
            MarkedPoint {
                id,
                point,
                orbit: Some(OrbitData {
                    bump: [
                        cs.bump_value(base, 0, &point.x1),
                        cs.bump_value(base, 1, &point.x2),
                    ],
                    rate: [o1.exponent(&base.first), o2.exponent(&base.second)],
                }),
            }
        };
        [
            make(PointId::X, &self.p1, &self.q2),
            make(PointId::Y, &self.p2, &self.q1),
        ]
    }

    pub fn min_rate(&self, base: &ProductFlow) -> f64 {
        [
            self.p1.exponent(&base.first),
            self.p2.exponent(&base.first),
            self.q1.exponent(&base.second),
            self.q2.exponent(&base.second),
        ]
        .into_iter()
        .fold(f64::INFINITY, f64::min)
    }
}

/// `φ(a)` at a point where `u₁ ≡ c₁`, `u₂ ≡ c₂` along both orbits:
/// inverse of `β(s,t) = (s - c₂t, t - c₁s)`.
pub fn closed_form_phi(bump: [f64; 2], a: [f64; 2]) -> [f64; 2] {
    let [c1, c2] = bump;
    let det = 1.0 - c1 * c2;
    [(a[0] + c2 * a[1]) / det, (a[1] + c1 * a[0]) / det]
}

/// Closed-form exponent at a marked point; `None` at generic points.
pub fn closed_form_exponent(label: CoarseLabel, point: &MarkedPoint, a: [f64; 2]) -> Option<f64> {
    let o = point.orbit?;
    let f = label.factor();
    Some(label.sign() * o.rate[f] * closed_form_phi(o.bump, a)[f])
}

/// Finite-time exponent of `label` under `α(Ta)` at `point`.
///
/// Marked points use the exact route (inverted `φ(Ta)` and integer crossing
/// counts); generic points use two-point separation along the estimated
/// coarse direction, renormalized every unit of `T`.
pub fn finite_time_exponent(
    tca: &TimeChangedAction,
    a: [f64; 2],
    point: &MarkedPoint,
    label: CoarseLabel,
    horizon: f64,
) -> Result<f64> {
    check_horizon(horizon)?;
    if a == [0.0, 0.0] {
        return Ok(0.0);
    }
    if point.is_marked() {
        let phi = tca.phi([horizon * a[0], horizon * a[1]], &point.point)?.phi;
        Ok(exact_exponent(
            tca.base(),
            phi,
            &point.point,
            label,
            horizon,
        ))
    } else {
        let d = coarse_direction_estimate(tca, &point.point, label)?;
        separation_exponent(tca, a, &point.point, label, horizon, d)
    }
}

fn check_horizon(horizon: f64) -> Result<()> {
    if !(horizon >= MIN_HORIZON && horizon.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "horizon must be at least {MIN_HORIZON}, got {horizon}"
        )));
    }
    Ok(())
}

/// `(1/T)·log` of the exact growth of `label` when the factors are flowed
/// for the times `phi`.
pub fn exact_exponent(
    base: &ProductFlow,
    phi: [f64; 2],
    x: &ProductPoint,
    label: CoarseLabel,
    horizon: f64,
) -> f64 {
    let f = label.factor();
    let spec = base.factor(f);
    let xf = if f == 0 { &x.x1 } else { &x.x2 };
    let n = spec.crossing_count(phi[f], xf);
    label.sign() * n as f64 * spec.expansion().ln() / horizon
}

/// Two-point separation estimate seeded along `direction`.
pub fn separation_exponent(
    action: &impl Action,
    a: [f64; 2],
    x: &ProductPoint,
    label: CoarseLabel,
    horizon: f64,
    direction: [f64; 4],
) -> Result<f64> {
    check_horizon(horizon)?;
    let base = action.base();
    let steps = horizon.ceil() as usize;
    let dt = horizon / steps as f64;
    let step = [dt * a[0], dt * a[1]];
    let d = normalize4(direction);
    let mut y = *x;
    let mut log_growth = 0.0;
    for k in 0..steps {
        let seed = base.displaced(&y, scale4(d, SEPARATION_SCALE));
        let next = action.act(step, &y)?;
        let moved = action.act(step, &seed)?;
        let delta = base.transverse_diff(&next, &moved);
        let along = dot4(delta, d);
        if along.abs() < COLLAPSE_SCALE {
            return Err(Error::DegenerateDirection {
                label: label.to_string(),
                step: k,
                size: along.abs(),
            });
        }
        log_growth += (along.abs() / SEPARATION_SCALE).ln();
        y = next;
    }
    Ok(log_growth / horizon)
}

/// Dominant direction of `label` at `x` by power iteration along the
/// pulled-back orbit, starting from a seeded random vector.
pub fn coarse_direction_estimate(
    tca: &TimeChangedAction,
    x: &ProductPoint,
    label: CoarseLabel,
) -> Result<[f64; 4]> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed ^ label as u64);
    let v0 = [
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    ];
    coarse_direction_from(tca, x, label, v0, DIRECTION_STEPS)
}

/// Power iteration from `start`: the vector is pushed by the label's
/// dominant element from `α(-k·a_χ)x`, `k = steps..1`, to `x`.
pub fn coarse_direction_from(
    action: &impl Action,
    x: &ProductPoint,
    label: CoarseLabel,
    start: [f64; 4],
    steps: usize,
) -> Result<[f64; 4]> {
    let base = action.base();
    let e = label.dominant_element();
    let steps = steps.clamp(1, DIRECTION_MAX_STEPS);
    let mut v = canonical_sign(normalize4(start));
    let mut change = f64::INFINITY;
    for k in (1..=steps).rev() {
        let kf = k as f64;
        let y = action.act([-kf * e[0], -kf * e[1]], x)?;
        let next = action.act(e, &y)?;
        let moved = action.act(e, &base.displaced(&y, scale4(v, DIRECTION_STEP)))?;
        let w = canonical_sign(normalize4(base.transverse_diff(&next, &moved)));
        change = norm4([w[0] - v[0], w[1] - v[1], w[2] - v[2], w[3] - v[3]]);
        v = w;
    }
    if change > DIRECTION_SETTLE || !change.is_finite() {
        return Err(Error::DirectionNotSettled {
            label: label.to_string(),
            change,
        });
    }
    Ok(v)
}

/// Fix the sign so that the largest-magnitude component is positive.
fn canonical_sign(v: [f64; 4]) -> [f64; 4] {
    let i = (0..4)
        .max_by(|&i, &j| v[i].abs().total_cmp(&v[j].abs()))
        .unwrap_or(0);
    if v[i] < 0.0 {
        scale4(v, -1.0)
    } else {
        v
    }
}

fn dot4(a: [f64; 4], b: [f64; 4]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

fn norm4(a: [f64; 4]) -> f64 {
    dot4(a, a).sqrt()
}

fn scale4(a: [f64; 4], k: f64) -> [f64; 4] {
    a.map(|c| c * k)
}

fn normalize4(a: [f64; 4]) -> [f64; 4] {
    let n = norm4(a);
    if n > 0.0 {
        scale4(a, 1.0 / n)
    } else {
        a
    }
}

/// `n` unit vectors at angles `2πk/n`.
pub fn unit_directions(n: usize) -> Vec<[f64; 2]> {
    (0..n)
        .map(|k| {
            let th = std::f64::consts::TAU * k as f64 / n as f64;
            [th.cos(), th.sin()]
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentSample {
    pub a: [f64; 2],
    pub point: PointId,
    pub label: CoarseLabel,
    pub horizon: f64,
    pub estimate: f64,
    pub closed_form: Option<f64>,
}

/// Kernel of the least-squares linear functional `a ↦ g·a` fitted to the
/// estimates at one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroLine {
    pub point: PointId,
    pub functional: [f64; 2],
    /// Unit vector spanning the kernel.
    pub direction: [f64; 2],
    /// `ds/dt` for `±χ₁`, `dt/ds` for `±χ₂`.
    pub slope: f64,
    /// RMS misfit relative to `‖g‖`.
    pub misfit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentField {
    pub label: CoarseLabel,
    pub grid: Vec<[f64; 2]>,
    /// Grid-major within each point, points in input order.
    pub samples: Vec<ExponentSample>,
    pub zero_lines: Vec<ZeroLine>,
}

impl ExponentField {
    pub fn samples_at(&self, point: PointId) -> impl Iterator<Item = &ExponentSample> {
        self.samples.iter().filter(move |s| s.point == point)
    }

    pub fn zero_line(&self, point: PointId) -> Option<&ZeroLine> {
        self.zero_lines.iter().find(|z| z.point == point)
    }
}

/// Least-squares fit of `e ≈ g·a`. `None` without a sign change, or when the
/// estimates vanish identically.
pub fn fit_zero_line(
    label: CoarseLabel,
    point: PointId,
    samples: &[(f64, [f64; 2])],
) -> Option<ZeroLine> {
    let pos = samples.iter().any(|(e, _)| *e > 0.0);
    let neg = samples.iter().any(|(e, _)| *e < 0.0);
    if !(pos && neg) {
        return None;
    }
    let (mut ss, mut st, mut tt, mut es, mut et) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(e, [s, t]) in samples {
        ss += s * s;
        st += s * t;
        tt += t * t;
        es += e * s;
        et += e * t;
    }
    let det = ss * tt - st * st;
    if det.abs() < 1e-300 {
        return None;
    }
    let g = [(es * tt - et * st) / det, (et * ss - es * st) / det];
    let gn = g[0].hypot(g[1]);
    if gn == 0.0 {
        return None;
    }
    let mse = samples
        .iter()
        .map(|&(e, [s, t])| (e - g[0] * s - g[1] * t).powi(2))
        .sum::<f64>()
        / samples.len() as f64;
    let slope = match label.factor() {
        0 => -g[1] / g[0],
        _ => -g[0] / g[1],
    };
    Some(ZeroLine {
        point,
        functional: g,
        direction: [-g[1] / gn, g[0] / gn],
        slope,
        misfit: mse.sqrt() / gn,
    })
}

/// One field per label. At marked points `φ(Ta)` is inverted once per grid
/// cell and shared by all labels.
pub fn exponent_fields(
    tca: &TimeChangedAction,
    labels: &[CoarseLabel],
    points: &[MarkedPoint],
    grid: &[[f64; 2]],
    horizon: f64,
) -> Result<Vec<ExponentField>> {
    check_horizon(horizon)?;
    let directions: Vec<Vec<[f64; 4]>> = points
        .iter()
        .map(|p| {
            if p.is_marked() {
                Ok(Vec::new())
            } else {
                labels
                    .iter()
                    .map(|&l| coarse_direction_estimate(tca, &p.point, l))
                    .collect()
            }
        })
        .collect::<Result<_>>()?;
    let cells: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..grid.len()).map(move |g| (p, g)))
        .collect();
    // per cell: one estimate per label
    let estimates: Vec<Vec<f64>> = cells
        .par_iter()
        .map(|&(pi, gi)| {
            let p = &points[pi];
            let a = grid[gi];
            if a == [0.0, 0.0] {
                return Ok(vec![0.0; labels.len()]);
            }
            if p.is_marked() {
                let phi = tca.phi([horizon * a[0], horizon * a[1]], &p.point)?.phi;
                Ok(labels
                    .iter()
                    .map(|&l| exact_exponent(tca.base(), phi, &p.point, l, horizon))
                    .collect())
            } else {
                labels
                    .iter()
                    .zip(&directions[pi])
                    .map(|(&l, &d)| separation_exponent(tca, a, &p.point, l, horizon, d))
                    .collect()
            }
        })
        .collect::<Result<_>>()?;
    Ok(labels
        .iter()
        .enumerate()
        .map(|(li, &label)| {
            let samples: Vec<ExponentSample> = cells
                .iter()
                .zip(&estimates)
                .map(|(&(pi, gi), est)| ExponentSample {
                    a: grid[gi],
                    point: points[pi].id,
                    label,
                    horizon,
                    estimate: est[li],
                    closed_form: closed_form_exponent(label, &points[pi], grid[gi]),
                })
                .collect();
            let zero_lines = points
                .iter()
                .filter_map(|p| {
                    let pts: Vec<_> = samples
                        .iter()
                        .filter(|s| s.point == p.id)
                        .map(|s| (s.estimate, s.a))
                        .collect();
                    fit_zero_line(label, p.id, &pts)
                })
                .collect();
            ExponentField {
                label,
                grid: grid.to_vec(),
                samples,
                zero_lines,
            }
        })
        .collect())
}

pub fn exponent_field(
    tca: &TimeChangedAction,
    label: CoarseLabel,
    points: &[MarkedPoint],
    grid: &[[f64; 2]],
    horizon: f64,
) -> Result<ExponentField> {
    Ok(exponent_fields(tca, &[label], points, grid, horizon)?.remove(0))
}

/// Threshold of the rank-one criterion: `factor·δ·min λ/(1+δ²)`, floored at
/// two crossing quanta `2·log λ_A/T` so that it stays meaningful as `δ → 0`.
pub fn rank_one_threshold(
    delta: f64,
    min_rate: f64,
    max_log_expansion: f64,
    horizon: f64,
    factor: f64,
) -> f64 {
    let c0 = factor * delta * min_rate / (1.0 + delta * delta);
    c0.max(2.0 * max_log_expansion / horizon)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub label: CoarseLabel,
    pub a: [f64; 2],
    /// Point with the largest `|estimate|`, or `None` when even that falls
    /// below the threshold.
    pub point: Option<PointId>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankOneVerdict {
    /// The exponent criterion for absence of rank-one factors holds.
    pub criterion_holds: bool,
    pub threshold: f64,
    pub witnesses: Vec<Witness>,
}

impl RankOneVerdict {
    pub fn missing(&self) -> impl Iterator<Item = &Witness> {
        self.witnesses.iter().filter(|w| w.point.is_none())
    }
}

/// For each label and grid direction, the largest `|estimate|` over the
/// points must reach `threshold`.
pub fn rank_one_verdict(fields: &[ExponentField], threshold: f64) -> RankOneVerdict {
    let mut witnesses = Vec::new();
    for field in fields {
        for &a in &field.grid {
            let best = field
                .samples
                .iter()
                .filter(|s| s.a == a)
                .max_by(|p, q| p.estimate.abs().total_cmp(&q.estimate.abs()));
            let (point, value) = match best {
                Some(s) if s.estimate.abs() >= threshold => (Some(s.point), s.estimate),
                Some(s) => (None, s.estimate),
                None => (None, 0.0),
            };
            witnesses.push(Witness {
                label: field.label,
                a,
                point,
                value,
            });
        }
    }
    RankOneVerdict {
        criterion_holds: witnesses.iter().all(|w| w.point.is_some()),
        threshold,
        witnesses,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelLines {
    pub label: CoarseLabel,
    pub slope_x: Option<f64>,
    pub slope_y: Option<f64>,
    /// Angle in `[0, π/2]` between the two zero lines.
    pub angle: Option<f64>,
    pub distinct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomogeneityVerdict {
    /// `false` once some label has distinct zero lines at `x` and `y`.
    pub consistent_with_homogeneous: bool,
    pub angle_tolerance: f64,
    pub labels: Vec<LabelLines>,
}

/// Compares the zero lines at `x` and `y` label by label; a homogeneous
/// action would force them to agree.
pub fn homogeneity_verdict(fields: &[ExponentField], angle_tolerance: f64) -> HomogeneityVerdict {
    let labels: Vec<LabelLines> = fields
        .iter()
        .map(|f| {
            let zx = f.zero_line(PointId::X);
            let zy = f.zero_line(PointId::Y);
            let angle = match (zx, zy) {
                (Some(p), Some(q)) => {
                    let c = (p.direction[0] * q.direction[0] + p.direction[1] * q.direction[1])
                        .abs()
                        .min(1.0);
                    Some(c.acos())
                }
                _ => None,
            };
            LabelLines {
                label: f.label,
                slope_x: zx.map(|z| z.slope),
                slope_y: zy.map(|z| z.slope),
                angle,
                distinct: angle.is_some_and(|a| a > angle_tolerance),
            }
        })
        .collect();
    HomogeneityVerdict {
        consistent_with_homogeneous: !labels.iter().any(|l| l.distinct),
        angle_tolerance,
        labels,
    }
}

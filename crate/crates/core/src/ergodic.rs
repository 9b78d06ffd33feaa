//! Birkhoff-average probes of line subactions, and the one-factor skew
//! example whose horizontal direction is a skew product.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cocycle::{BumpField, BumpSpec, CocycleSpec};
use crate::dynamics::{FlowSpec, ProductFlow, ProductPoint, SuspensionPoint};
use crate::error::{Error, Result};
use crate::smooth::smooth_step;
use crate::timechange::{Action, TimeChangedAction};

pub const MAX_BIRKHOFF_STEP: f64 = 0.05;
pub const MIN_STARTS: usize = 8;
pub const MIN_LINE_HORIZON: f64 = 50.0;

/// Built-in observables. The torus terms are blended across the roof like
/// the bumps, so they are continuous on the suspension; all non-constant
/// ones have zero mean for the flow-invariant volume of the default flows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    /// `cos 2π u_y` of the first factor.
    X1Torus,
    /// `sin 2πσ`, `σ = τ/r(u)`, of the first factor.
    X1Phase,
    X2Torus,
    X2Phase,
    /// `X1Torus · X2Torus`
    Mixed,
    Constant(f64),
}

impl Observable {
    pub const BUILT_IN: [Observable; 5] = [
        Observable::X1Torus,
        Observable::X1Phase,
        Observable::X2Torus,
        Observable::X2Phase,
        Observable::Mixed,
    ];

    pub fn name(&self) -> String {
        match self {
            Observable::X1Torus => "x1_torus".into(),
            Observable::X1Phase => "x1_phase".into(),
            Observable::X2Torus => "x2_torus".into(),
            Observable::X2Phase => "x2_phase".into(),
            Observable::Mixed => "mixed".into(),
            Observable::Constant(c) => format!("constant_{c}"),
        }
    }

    pub fn from_name(name: &str) -> Option<Observable> {
        Observable::BUILT_IN.into_iter().find(|o| o.name() == name)
    }

    /// Depends on the first factor only.
    pub fn first_factor_only(&self) -> bool {
        matches!(self, Observable::X1Torus | Observable::X1Phase)
    }

    pub fn second_factor_only(&self) -> bool {
        matches!(self, Observable::X2Torus | Observable::X2Phase)
    }

    pub fn eval(&self, base: &ProductFlow, x: &ProductPoint) -> f64 {
        match self {
            Observable::X1Torus => torus_term(&base.first, &x.x1),
            Observable::X1Phase => phase_term(&base.first, &x.x1),
            Observable::X2Torus => torus_term(&base.second, &x.x2),
            Observable::X2Phase => phase_term(&base.second, &x.x2),
            Observable::Mixed => torus_term(&base.first, &x.x1) * torus_term(&base.second, &x.x2),
            Observable::Constant(c) => *c,
        }
    }
}

fn torus_term(spec: &FlowSpec, x: &SuspensionPoint) -> f64 {
    let g = |u: [f64; 2]| (std::f64::consts::TAU * u[1]).cos();
    let w = smooth_step(x.phase(spec));
    let u = x.base();
    (1.0 - w) * g(u.coords()) + w * g(u.apply(spec.matrix()).coords())
}

fn phase_term(spec: &FlowSpec, x: &SuspensionPoint) -> f64 {
    (std::f64::consts::TAU * x.phase(spec)).sin()
}

/// `(1/T)∫₀ᵀ f(α(tℓ)x) dt` by composite Simpson with step `<= 0.05`; the
/// orbit is advanced incrementally by `α(hℓ)`.
pub fn line_birkhoff(
    action: &impl Action,
    direction: [f64; 2],
    f: &Observable,
    x: &ProductPoint,
    horizon: f64,
) -> Result<f64> {
    Ok(line_birkhoff_many(action, direction, std::slice::from_ref(f), x, &[horizon])?[0][0])
}

/// Averages of all observables at each horizon (ascending), from a single
/// pass whenever every horizon falls on an even node of the finest grid.
/// Result is indexed `[horizon][observable]`.
pub fn line_birkhoff_many(
    action: &impl Action,
    direction: [f64; 2],
    fs: &[Observable],
    x: &ProductPoint,
    horizons: &[f64],
) -> Result<Vec<Vec<f64>>> {
    for &t in horizons {
        if !(t >= MIN_LINE_HORIZON && t.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "line horizon must be at least {MIN_LINE_HORIZON}, got {t}"
            )));
        }
    }
    let Some(&t_max) = horizons.iter().max_by(|a, b| a.total_cmp(b)) else {
        return Ok(Vec::new());
    };
    let mut n = (t_max / MAX_BIRKHOFF_STEP).ceil() as usize;
    if n % 2 == 1 {
        n += 1;
    }
    let h = t_max / n as f64;
    let mut checkpoints = Vec::with_capacity(horizons.len());
    for &t in horizons {
        let k = (t / h).round();
        if (k * h - t).abs() > 1e-9 * t || k as usize % 2 == 1 {
            // off-grid horizon: integrate it on its own
            let own = line_birkhoff_many(action, direction, fs, x, &[t])?;
            checkpoints.push(Err(own.into_iter().next().unwrap_or_default()));
        } else {
            checkpoints.push(Ok(k as usize));
        }
    }
    let step = [h * direction[0], h * direction[1]];
    let base = action.base();
    let mut acc = vec![0.0; fs.len()];
    let mut out: Vec<Option<Vec<f64>>> = vec![None; horizons.len()];
    let mut y = *x;
    for k in 0..=n {
        let vals: Vec<f64> = fs.iter().map(|f| f.eval(base, &y)).collect();
        for (slot, cp) in out.iter_mut().zip(&checkpoints) {
            if *cp == Ok(k) {
                let t = k as f64 * h;
                *slot = Some(
                    acc.iter()
                        .zip(&vals)
                        .map(|(a, v)| (a + v) * h / 3.0 / t)
                        .collect(),
                );
            }
        }
        let w = if k == 0 {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        for (a, v) in acc.iter_mut().zip(&vals) {
            *a += w * v;
        }
        if k < n {
            y = action.act(step, &y)?;
        }
    }
    Ok(out
        .into_iter()
        .zip(checkpoints)
        .map(|(o, cp)| match cp {
            Ok(_) => o.unwrap_or_default(),
            Err(own) => own,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineSpec {
    pub direction: [f64; 2],
    pub horizon: f64,
    pub starts: Vec<ProductPoint>,
    pub observables: Vec<Observable>,
}

impl LineSpec {
    pub fn new(
        direction: [f64; 2],
        horizon: f64,
        starts: Vec<ProductPoint>,
        observables: Vec<Observable>,
    ) -> Result<Self> {
        let n = direction[0].hypot(direction[1]);
        if (n - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "line direction must be a unit vector, got norm {n}"
            )));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        if starts.len() < MIN_STARTS {
            return Err(Error::InvalidArgument(format!(
                "need at least {MIN_STARTS} start points, got {}",
                starts.len()
            )));
        }
        Ok(LineSpec {
            direction,
            horizon,
            starts,
            observables,
        })
    }
}

/// Seeded uniform start points.
pub fn random_starts(base: &ProductFlow, count: usize, seed: u64) -> Vec<ProductPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| base.random_point(&mut rng)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeThresholds {
    pub high: f64,
    pub low: f64,
    /// Dispersion ratio between two horizons above which a high dispersion
    /// counts as stalled rather than decaying.
    pub stall: f64,
}

impl Default for ProbeThresholds {
    fn default() -> Self {
        ProbeThresholds {
            high: 0.1,
            low: 0.02,
            stall: 0.9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineVerdict {
    NonErgodic,
    Inconclusive,
    ConsistentWithErgodic,
}

impl LineVerdict {
    pub fn from_dispersion(d: f64, t: &ProbeThresholds) -> Self {
        if d > t.high {
            LineVerdict::NonErgodic
        } else if d < t.low {
            LineVerdict::ConsistentWithErgodic
        } else {
            LineVerdict::Inconclusive
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableDispersion {
    pub observable: String,
    /// Per-start averages, in start order.
    pub averages: Vec<f64>,
    pub dispersion: f64,
    pub space_average: f64,
    pub verdict: LineVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionReport {
    pub direction: [f64; 2],
    pub horizon: f64,
    pub observables: Vec<ObservableDispersion>,
}

impl DispersionReport {
    pub fn flags_non_ergodic(&self) -> bool {
        self.observables
            .iter()
            .any(|o| o.verdict == LineVerdict::NonErgodic)
    }
}

/// Population standard deviation, computed on sorted values so that it does
/// not depend on the order of the starts.
pub fn dispersion(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Unit direction of the irrational line used for the space-average estimate.
const GENERIC_LINE: [f64; 2] = [0.525_731_112_119_133_6, 0.850_650_808_352_039_9];

/// Indexed `[horizon][observable]`.
type Averages = Vec<Vec<f64>>;

fn probe_horizons(
    action: &impl Action,
    direction: [f64; 2],
    starts: &[ProductPoint],
    observables: &[Observable],
    horizons: &[f64],
    thresholds: &ProbeThresholds,
) -> Result<Vec<DispersionReport>> {
    // per start: (on-line, generic-line), each [horizon][observable]
    let per_start: Vec<(Averages, Averages)> = starts
        .par_iter()
        .map(|x| {
            Ok((
                line_birkhoff_many(action, direction, observables, x, horizons)?,
                line_birkhoff_many(action, GENERIC_LINE, observables, x, horizons)?,
            ))
        })
        .collect::<Result<_>>()?;
    Ok(horizons
        .iter()
        .enumerate()
        .map(|(hi, &horizon)| {
            let observables = observables
                .iter()
                .enumerate()
                .map(|(i, f)| {
                    let averages: Vec<f64> = per_start.iter().map(|(l, _)| l[hi][i]).collect();
                    let mut generic: Vec<f64> = per_start.iter().map(|(_, g)| g[hi][i]).collect();
                    generic.sort_by(f64::total_cmp);
                    let d = dispersion(&averages);
                    ObservableDispersion {
                        observable: f.name(),
                        averages,
                        dispersion: d,
                        space_average: generic.iter().sum::<f64>() / generic.len() as f64,
                        verdict: LineVerdict::from_dispersion(d, thresholds),
                    }
                })
                .collect();
            DispersionReport {
                direction,
                horizon,
                observables,
            }
        })
        .collect())
}

/// Per-start line averages and their dispersion for each observable. The
/// space average is estimated by the mean over the same starts of averages
/// along an irrational line, a stand-in for the full `R²`-orbit average.
pub fn ergodicity_probe(
    action: &impl Action,
    line: &LineSpec,
    thresholds: ProbeThresholds,
) -> Result<DispersionReport> {
    let mut r = probe_horizons(
        action,
        line.direction,
        &line.starts,
        &line.observables,
        &[line.horizon],
        &thresholds,
    )?;
    Ok(r.remove(0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableDecay {
    pub observable: String,
    pub short: f64,
    pub long: f64,
    /// `long / short`
    pub ratio: f64,
    pub verdict: LineVerdict,
}

/// The same line probed at two horizons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayProbe {
    pub direction: [f64; 2],
    pub horizons: [f64; 2],
    pub reports: [DispersionReport; 2],
    pub decay: Vec<ObservableDecay>,
}

impl DecayProbe {
    pub fn flags_non_ergodic(&self) -> bool {
        self.decay
            .iter()
            .any(|d| d.verdict == LineVerdict::NonErgodic)
    }
}

/// Dispersion at a short and a long horizon. A line is flagged non-ergodic
/// only if the long-horizon dispersion is above `high` and has stalled
/// (`ratio > stall`); a slowly decaying high dispersion is inconclusive.
pub fn dispersion_decay(
    action: &impl Action,
    direction: [f64; 2],
    starts: &[ProductPoint],
    observables: &[Observable],
    horizons: [f64; 2],
    thresholds: ProbeThresholds,
) -> Result<DecayProbe> {
    let line = LineSpec::new(
        direction,
        horizons[1],
        starts.to_vec(),
        observables.to_vec(),
    )?;
    let mut r = probe_horizons(
        action,
        direction,
        &line.starts,
        observables,
        &horizons,
        &thresholds,
    )?;
    let long = r.pop().expect("two horizons");
    let short = r.pop().expect("two horizons");
    let decay = short
        .observables
        .iter()
        .zip(&long.observables)
        .map(|(s, l)| {
            let ratio = if s.dispersion > 0.0 {
                l.dispersion / s.dispersion
            } else {
                1.0
            };
            let verdict = match LineVerdict::from_dispersion(l.dispersion, &thresholds) {
                LineVerdict::NonErgodic if ratio <= thresholds.stall => LineVerdict::Inconclusive,
                v => v,
            };
            ObservableDecay {
                observable: s.observable.clone(),
                short: s.dispersion,
                long: l.dispersion,
                ratio,
                verdict,
            }
        })
        .collect();
    Ok(DecayProbe {
        direction,
        horizons,
        reports: [short, long],
        decay,
    })
}

/// Time change by `β(s,t;x) = (s, t - θ₁(s,x₁))`: only the first factor's
/// bump is active.
pub fn build_skew_example(
    base: ProductFlow,
    bump1: BumpSpec,
    step: f64,
) -> Result<TimeChangedAction> {
    let cs = CocycleSpec::new(BumpField::Tubes(bump1), BumpField::Constant(0.0), step)?;
    Ok(TimeChangedAction::new(base, cs))
}

/// Closed form `φ(s,t;x) = (s, t + θ₁(s,x₁))` of a one-factor time change.
pub fn skew_phi(tca: &TimeChangedAction, a: [f64; 2], x: &ProductPoint) -> [f64; 2] {
    [a[0], a[1] + tca.cocycle().theta1(tca.base(), a[0], &x.x1)]
}

/// Livšic-type diagnostic: the orbit integrals `∫ u₁` over the marked orbits
/// differ, so `θ₁` is not cohomologous to a constant.
pub fn orbit_integrals(tca: &TimeChangedAction) -> Option<(f64, f64)> {
    let BumpField::Tubes(b) = &tca.cocycle().bump1 else {
        return None;
    };
    let spec = &tca.base().first;
    let plus = b.plus_orbit();
    let minus = b.minus_orbit();
    let cs = tca.cocycle();
    let ip = cs.theta1(tca.base(), plus.flow_period(), &plus.start(spec)) / plus.flow_period();
    let im = cs.theta1(tca.base(), minus.flow_period(), &minus.start(spec)) / minus.flow_period();
    Some((ip, im))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cocycle::random_in_disk;
    use crate::dynamics::PeriodicOrbit;

    fn skew() -> TimeChangedAction {
        let base = ProductFlow::cat_default();
        let p = PeriodicOrbit::through(&base.first, [0, 0], 1, 0.025);
        let q = PeriodicOrbit::through(&base.first, [2, 1], 5, 0.025);
        let bump = BumpSpec::new(0.05, 0.1, p, q).unwrap();
        build_skew_example(base, bump, 1e-2).unwrap()
    }

    #[test]
    fn constant_observable_averages_to_itself() {
        let tca = TimeChangedAction::counterexample_default();
        let x = random_starts(tca.base(), 1, 1)[0];
        let v = line_birkhoff(&tca, [0.6, 0.8], &Observable::Constant(1.0), &x, 50.0).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn frozen_factor_average_is_the_start_value() {
        let base = ProductFlow::cat_default();
        for x in random_starts(&base, 8, 2) {
            for f in [Observable::X1Torus, Observable::X1Phase] {
                let v = line_birkhoff(&base, [0.0, 1.0], &f, &x, 50.0).unwrap();
                assert!((v - f.eval(&base, &x)).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn observables_are_continuous_across_the_roof() {
        let base = ProductFlow::cat_default();
        for x in random_starts(&base, 20, 3) {
            let r = base.first.roof(x.x1.base());
            let below = base.first.flow(r - x.x1.tau() - 1e-9, &x.x1);
            let above = base.first.flow(2e-9, &below);
            let pb = ProductPoint::new(below, x.x2);
            let pa = ProductPoint::new(above, x.x2);
            for f in Observable::BUILT_IN {
                assert!((f.eval(&base, &pb) - f.eval(&base, &pa)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn observables_have_small_mean() {
        // Monte Carlo over the invariant volume du·dτ
        let base = ProductFlow::cat_default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 200_000;
        let mut sums = [0.0; 5];
        let mut weight = 0.0;
        for _ in 0..n {
            let x = base.random_point(&mut rng);
            let w = base.first.roof(x.x1.base()) * base.second.roof(x.x2.base());
            weight += w;
            for (s, f) in sums.iter_mut().zip(Observable::BUILT_IN) {
                *s += w * f.eval(&base, &x);
            }
        }
        for s in sums {
            assert!((s / weight).abs() < 0.01, "{}", s / weight);
        }
    }

    #[test]
    fn skew_phi_matches_inverter() {
        let tca = skew();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let x = tca.base().random_point(&mut rng);
            let a = random_in_disk(&mut rng, 5.0);
            let got = tca.phi(a, &x).unwrap().phi;
            let want = skew_phi(&tca, a, &x);
            assert!((got[0] - want[0]).abs() <= 1e-12 && (got[1] - want[1]).abs() <= 1e-12);
            let moved = tca.act([a[0], 0.0], &x).unwrap();
            assert_eq!(moved.x1, tca.base().first.flow(a[0], &x.x1));
        }
    }

    #[test]
    fn zero_bump_gives_base_action() {
        let base = ProductFlow::cat_default();
        let tca = TimeChangedAction::new(base.clone(), CocycleSpec::trivial(1e-2));
        for x in random_starts(&base, 10, 6) {
            assert_eq!(
                tca.act([1.3, -0.4], &x).unwrap(),
                base.product_flow([1.3, -0.4], &x)
            );
        }
    }

    #[test]
    fn probe_is_order_independent() {
        let base = ProductFlow::cat_default();
        let starts = random_starts(&base, 8, 7);
        let mut rev = starts.clone();
        rev.reverse();
        let obs = vec![Observable::X1Torus, Observable::Mixed];
        let a = ergodicity_probe(
            &base,
            &LineSpec::new([1.0, 0.0], 50.0, starts, obs.clone()).unwrap(),
            ProbeThresholds::default(),
        )
        .unwrap();
        let b = ergodicity_probe(
            &base,
            &LineSpec::new([1.0, 0.0], 50.0, rev, obs).unwrap(),
            ProbeThresholds::default(),
        )
        .unwrap();
        for (p, q) in a.observables.iter().zip(&b.observables) {
            assert_eq!(p.dispersion, q.dispersion);
            assert_eq!(p.verdict, q.verdict);
        }
    }

    #[test]
    fn product_vertical_line_is_flagged() {
        let base = ProductFlow::cat_default();
        let line = LineSpec::new(
            [0.0, 1.0],
            50.0,
            random_starts(&base, 16, 8),
            vec![Observable::X1Torus],
        )
        .unwrap();
        let r = ergodicity_probe(&base, &line, ProbeThresholds::default()).unwrap();
        assert!(r.observables[0].dispersion > 0.1);
        assert!(r.flags_non_ergodic());
    }

    #[test]
    fn checkpoints_match_separate_runs() {
        let tca = TimeChangedAction::counterexample_default();
        let x = random_starts(tca.base(), 1, 10)[0];
        let fs = [Observable::X1Torus, Observable::Mixed];
        let both = line_birkhoff_many(&tca, [0.6, 0.8], &fs, &x, &[50.0, 100.0]).unwrap();
        let short = line_birkhoff_many(&tca, [0.6, 0.8], &fs, &x, &[50.0]).unwrap();
        for i in 0..2 {
            assert!((both[0][i] - short[0][i]).abs() < 1e-12);
        }
        // off-grid horizon falls back to its own pass
        let odd = line_birkhoff_many(&tca, [0.6, 0.8], &fs, &x, &[50.025, 100.0]).unwrap();
        let own = line_birkhoff_many(&tca, [0.6, 0.8], &fs, &x, &[50.025]).unwrap();
        assert_eq!(odd[0], own[0]);
    }

    #[test]
    fn stalled_and_decaying_lines() {
        let base = ProductFlow::cat_default();
        let starts = random_starts(&base, 16, 11);
        let obs = [Observable::X1Torus];
        let frozen = dispersion_decay(
            &base,
            [0.0, 1.0],
            &starts,
            &obs,
            [50.0, 100.0],
            ProbeThresholds::default(),
        )
        .unwrap();
        assert!((frozen.decay[0].ratio - 1.0).abs() < 1e-9);
        assert!(frozen.flags_non_ergodic());
        let moving = dispersion_decay(
            &base,
            [1.0, 0.0],
            &starts,
            &obs,
            [50.0, 100.0],
            ProbeThresholds::default(),
        )
        .unwrap();
        assert!(moving.decay[0].ratio < 1.0);
        assert!(!moving.flags_non_ergodic());
    }

    #[test]
    fn line_spec_validation() {
        let base = ProductFlow::cat_default();
        let s = random_starts(&base, 8, 9);
        assert!(LineSpec::new([1.0, 1.0], 100.0, s.clone(), vec![]).is_err());
        assert!(LineSpec::new([1.0, 0.0], 100.0, s[..4].to_vec(), vec![]).is_err());
        assert!(LineSpec::new([1.0, 0.0], 0.0, s.clone(), vec![]).is_err());
        assert!(LineSpec::new([0.0, -1.0], 100.0, s, vec![]).is_ok());
    }

    #[test]
    fn marked_orbit_integrals_differ() {
        let (ip, im) = orbit_integrals(&skew()).unwrap();
        assert!((ip - 0.05).abs() < 1e-12 && (im + 0.05).abs() < 1e-12);
    }
}

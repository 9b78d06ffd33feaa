//! The four subcommands. Each writes its files into the output directory
//! and returns what it wrote.

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use tclab_core::ergodic::{dispersion_decay, random_starts, ProbeThresholds};
use tclab_core::lyapunov::{
    exponent_fields, homogeneity_verdict, rank_one_threshold, rank_one_verdict, unit_directions,
    HomogeneityVerdict, RankOneVerdict, Witness,
};
use tclab_core::{
    Action, CoarseLabel, DecayProbe, ExponentField, MarkedPoint, PointId, ProductFlow, ProductPoint,
};

use crate::config::{Mode, RunConfig};
use crate::error::{exit, CliError};
use crate::report::{
    csv_writer, fmt_f64, write_json, Check, Comparison, Status, VerificationReport,
};

// Seed offsets of the independent random streams.
const COCYCLE_STREAM: u64 = 0;
const INVERSION_STREAM: u64 = 1;
const GROUP_STREAM: u64 = 2;
const STARTS_STREAM: u64 = 3;

/// Bump values `(c₁, c₂)` at `x = (p₁, q₂)` and `y = (p₂, q₁)` implied by
/// the configuration alone.
pub fn configured_bumps(config: &RunConfig) -> [[f64; 2]; 2] {
    let d = config.cocycle.delta.0;
    let (on1, on2) = match config.cocycle.mode {
        Mode::TwoFactor => (d, d),
        Mode::Skew => (d, 0.0),
        Mode::Product => (0.0, 0.0),
    };
    [[on1, -on2], [-on1, on2]]
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let v = f();
    (v, start.elapsed().as_secs_f64())
}

pub fn run_verify(config: &RunConfig, out: &Path) -> Result<VerificationReport, CliError> {
    let setup = config.setup()?;
    fs::create_dir_all(out)?;
    let v = &config.verify;
    let tca = &setup.action;
    let base = tca.base();
    let cs = tca.cocycle();
    let delta = setup.delta;
    let mut report = VerificationReport::default();

    report.push(
        Check::compare("contraction", 2.0 * delta, Comparison::Below, 1.0),
        0.0,
    );
    report.push(
        Check::compare("delta_budget", delta, Comparison::Below, v.delta_budget.0),
        0.0,
    );

    let seed = config.seed;
    let (coarse, t_coarse) =
        timed(|| cs.verify_cocycle_identity(base, v.cocycle_samples, seed + COCYCLE_STREAM));
    report.push(
        Check::compare(
            "cocycle_identity",
            coarse,
            Comparison::AtMost,
            v.cocycle_tolerance.0,
        ),
        t_coarse,
    );
    let refined = cs.with_step(cs.step / v.refinement_divisor.0);
    let (fine, t_fine) =
        timed(|| refined.verify_cocycle_identity(base, v.cocycle_samples, seed + COCYCLE_STREAM));
    // Exact quadrature (a vanishing residual) leaves nothing to refine.
    let gain = if fine > 0.0 {
        Some(coarse / fine)
    } else {
        None
    };
    report.push(
        Check {
            name: "cocycle_refinement_gain".into(),
            status: Status::from_bool(gain.is_none_or(|g| g >= v.refinement_gain.0)),
            value: gain,
            comparison: Comparison::AtLeast,
            tolerance: v.refinement_gain.0,
        },
        t_fine,
    );

    let (stats, t_inv) =
        timed(|| tca.inversion_statistics(v.inversion_samples, seed + INVERSION_STREAM));
    let stats = stats?;
    let share = t_inv / 4.0;
    report.push(
        Check::compare(
            "inversion_forward_residual",
            stats.max_forward_residual,
            Comparison::AtMost,
            tca.inv_tolerance(),
        ),
        share,
    );
    report.push(
        Check::compare(
            "inversion_backward_error",
            stats.max_backward_error,
            Comparison::AtMost,
            v.backward_tolerance.0,
        ),
        share,
    );
    report.push(
        Check::compare(
            "inversion_iterations",
            stats.max_iterations as f64,
            Comparison::AtMost,
            v.iteration_cap as f64,
        ),
        share,
    );
    report.push(
        Check::compare(
            "inversion_iteration_bound_violations",
            stats.bound_violations as f64,
            Comparison::AtMost,
            0.0,
        ),
        share,
    );
    report.push(
        Check::compare(
            "epsilon0_bound",
            stats.max_ratio,
            Comparison::AtMost,
            tca.epsilon0(),
        ),
        0.0,
    );

    let (defect, t_group) = timed(|| tca.verify_group_law(v.group_samples, seed + GROUP_STREAM));
    report.push(
        Check::compare(
            "group_law",
            defect?,
            Comparison::AtMost,
            v.group_tolerance.0,
        ),
        t_group,
    );

    // On the marked orbits β is linear: ‖β(a) − a‖ = ‖(c₂t, c₁s)‖.
    let (dev, t_marked) = timed(|| {
        let expected = configured_bumps(config);
        let points = setup.orbits.points(tca);
        let mut worst: f64 = 0.0;
        for (p, [c1, c2]) in points.iter().zip(expected) {
            for a in unit_directions(v.marked_directions) {
                let b = tca.beta(a, &p.point);
                let ratio = (b[0] - a[0]).hypot(b[1] - a[1]);
                let want = (c2 * a[1]).hypot(c1 * a[0]);
                worst = worst.max((ratio - want).abs());
            }
        }
        worst
    });
    report.push(
        Check::compare(
            "marked_orbit_deviation",
            dev,
            Comparison::AtMost,
            v.marked_tolerance.0,
        ),
        t_marked,
    );

    report.write(out)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeRecord {
    pub label: CoarseLabel,
    pub point: String,
    pub slope: Option<f64>,
    pub expected_slope: f64,
    pub misfit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdicts {
    pub rank_one: bool,
    pub homogeneous: bool,
    pub rank_one_threshold: f64,
    pub horizon: f64,
    pub slopes: Vec<SlopeRecord>,
    pub homogeneity: HomogeneityVerdict,
    /// Labels with at least one grid direction lacking a witness.
    pub missing_witness_labels: Vec<CoarseLabel>,
    pub witnesses: Vec<Witness>,
    pub checks: Vec<Check>,
}

impl Verdicts {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.status == Status::Pass)
    }

    pub fn slope(&self, label: CoarseLabel, point: PointId) -> Option<&SlopeRecord> {
        let name = point.to_string();
        self.slopes
            .iter()
            .find(|s| s.label == label && s.point == name)
    }
}

#[derive(Debug, Clone)]
pub struct ExponentsOutcome {
    pub fields: Vec<ExponentField>,
    pub rank_one: RankOneVerdict,
    pub verdicts: Verdicts,
}

pub fn run_exponents(config: &RunConfig, out: &Path) -> Result<ExponentsOutcome, CliError> {
    let setup = config.setup()?;
    fs::create_dir_all(out)?;
    let l = &config.lyapunov;
    let tca = &setup.action;
    let base = tca.base();
    let horizon = l.horizon.0;
    let points: Vec<MarkedPoint> = setup.orbits.points(tca).to_vec();
    let grid = unit_directions(l.directions);
    let fields = exponent_fields(tca, &CoarseLabel::ALL, &points, &grid, horizon)?;

    let max_log = base
        .first
        .expansion()
        .ln()
        .max(base.second.expansion().ln());
    let min_rate = setup.orbits.min_rate(base);
    let threshold = rank_one_threshold(
        setup.delta,
        min_rate,
        max_log,
        horizon,
        l.threshold_factor.0,
    );
    let rank_one = rank_one_verdict(&fields, threshold);
    let homogeneity = homogeneity_verdict(&fields, l.line_tolerance.0);

    let mut w = csv_writer(&out.join("exponent_field.csv"))?;
    w.write_record([
        "label",
        "point_id",
        "s",
        "t",
        "T",
        "estimate",
        "closed_form",
        "abs_error",
    ])?;
    let mut worst_cf: f64 = 0.0;
    for f in &fields {
        for s in &f.samples {
            let err = s.closed_form.map(|c| (s.estimate - c).abs());
            if let Some(e) = err {
                worst_cf = worst_cf.max(e);
            }
            w.write_record([
                s.label.name(),
                &s.point.to_string(),
                &fmt_f64(s.a[0]),
                &fmt_f64(s.a[1]),
                &fmt_f64(s.horizon),
                &fmt_f64(s.estimate),
                &s.closed_form.map(fmt_f64).unwrap_or_default(),
                &err.map(fmt_f64).unwrap_or_default(),
            ])?;
        }
    }
    w.flush()?;

    let rate_scale = points
        .iter()
        .filter_map(|p| p.orbit)
        .flat_map(|o| o.rate)
        .fold(0.0, f64::max);
    let bumps = configured_bumps(config);
    let mut slopes = Vec::new();
    let mut worst_slope: f64 = 0.0;
    for f in &fields {
        for (p, c) in points.iter().zip(bumps) {
            // zero line of λ·φ_f(a) with φ ∝ (s + c₂t, t + c₁s)
            let expected = match f.label.factor() {
                0 => -c[1],
                _ => -c[0],
            };
            let z = f.zero_line(p.id);
            match z {
                Some(z) => worst_slope = worst_slope.max((z.slope - expected).abs()),
                None => worst_slope = f64::INFINITY,
            }
            slopes.push(SlopeRecord {
                label: f.label,
                point: p.id.to_string(),
                slope: z.map(|z| z.slope),
                expected_slope: expected,
                misfit: z.map(|z| z.misfit),
            });
        }
    }
    let checks = vec![
        Check::compare(
            "closed_form_exponents",
            worst_cf,
            Comparison::AtMost,
            l.closed_form_fraction.0 * rate_scale,
        ),
        Check {
            name: "zero_line_slopes".into(),
            status: Status::from_bool(worst_slope <= l.slope_tolerance.0),
            value: worst_slope.is_finite().then_some(worst_slope),
            comparison: Comparison::AtMost,
            tolerance: l.slope_tolerance.0,
        },
    ];
    let mut missing: Vec<CoarseLabel> = rank_one.missing().map(|w| w.label).collect();
    missing.dedup();
    let verdicts = Verdicts {
        rank_one: rank_one.criterion_holds,
        homogeneous: homogeneity.consistent_with_homogeneous,
        rank_one_threshold: threshold,
        horizon,
        slopes,
        homogeneity,
        missing_witness_labels: missing,
        witnesses: rank_one.witnesses.clone(),
        checks,
    };
    write_json(&out.join("verdicts.json"), &verdicts)?;
    Ok(ExponentsOutcome {
        fields,
        rank_one,
        verdicts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineProbe {
    pub line_index: usize,
    pub flagged_non_ergodic: bool,
    pub averages_file: String,
    pub probe: DecayProbe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErgodicOutcome {
    pub thresholds: ProbeThresholds,
    pub starts: usize,
    pub lines: Vec<LineProbe>,
}

impl ErgodicOutcome {
    pub fn flagged(&self) -> impl Iterator<Item = &LineProbe> {
        self.lines.iter().filter(|l| l.flagged_non_ergodic)
    }
}

/// The seeded start points the ergodic probes use.
pub fn ergodic_starts(config: &RunConfig, base: &ProductFlow) -> Vec<ProductPoint> {
    random_starts(base, config.ergodic.starts, config.seed + STARTS_STREAM)
}

pub fn run_ergodic(config: &RunConfig, out: &Path) -> Result<ErgodicOutcome, CliError> {
    let setup = config.setup()?;
    let e = &config.ergodic;
    let observables = config.observables()?;
    let thresholds = config.probe_thresholds();
    let horizons = [e.horizons[0].0, e.horizons[1].0];
    if !(horizons[0] > 0.0 && horizons[0] < horizons[1]) {
        return Err(CliError::Config(format!(
            "ergodic horizons must satisfy 0 < T1 < T2, got {horizons:?}"
        )));
    }
    let mut directions = Vec::new();
    for (i, [dx, dy]) in e.lines.iter().enumerate() {
        let n = dx.0.hypot(dy.0);
        if n == 0.0 {
            return Err(CliError::Config(format!(
                "ergodic line {i} has zero direction"
            )));
        }
        directions.push([dx.0 / n, dy.0 / n]);
    }
    fs::create_dir_all(out)?;
    let tca = &setup.action;
    let starts = ergodic_starts(config, tca.base());
    let mut lines = Vec::new();
    for (i, &dir) in directions.iter().enumerate() {
        let probe = dispersion_decay(tca, dir, &starts, &observables, horizons, thresholds)
            .map_err(|err| match err {
                tclab_core::Error::InvalidArgument(m) => CliError::Config(m),
                other => CliError::Numeric(other),
            })?;
        let file = format!("averages_line_{i}.csv");
        let mut w = csv_writer(&out.join(&file))?;
        w.write_record([
            "line_dx",
            "line_dy",
            "observable",
            "start_id",
            "T",
            "average",
        ])?;
        for r in &probe.reports {
            for o in &r.observables {
                for (j, avg) in o.averages.iter().enumerate() {
                    w.write_record([
                        &fmt_f64(dir[0]),
                        &fmt_f64(dir[1]),
                        o.observable.as_str(),
                        &j.to_string(),
                        &fmt_f64(r.horizon),
                        &fmt_f64(*avg),
                    ])?;
                }
            }
        }
        w.flush()?;
        lines.push(LineProbe {
            line_index: i,
            flagged_non_ergodic: probe.flags_non_ergodic(),
            averages_file: file,
            probe,
        });
    }
    let outcome = ErgodicOutcome {
        thresholds,
        starts: starts.len(),
        lines,
    };
    write_json(&out.join("dispersion.json"), &outcome)?;
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifySummary {
    pub all_pass: bool,
    pub failed: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentsSummary {
    pub rank_one: bool,
    pub homogeneous: bool,
    pub missing_witness_labels: Vec<CoarseLabel>,
    pub failed: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErgodicSummary {
    pub lines: Vec<[f64; 2]>,
    pub flagged_non_ergodic: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub verify: Option<VerifySummary>,
    pub exponents: Option<ExponentsSummary>,
    pub ergodic: Option<ErgodicSummary>,
}

impl Summary {
    pub fn exit_code(&self) -> i32 {
        let verify_ok = self.verify.as_ref().is_none_or(|v| v.all_pass);
        let exp_ok = self.exponents.as_ref().is_none_or(|e| e.failed.is_empty());
        if verify_ok && exp_ok {
            exit::OK
        } else {
            exit::CHECK_FAILURE
        }
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Option<T>, CliError> {
    match fs::read_to_string(path) {
        Ok(text) => Ok(Some(serde_json::from_str(&text)?)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn failed(checks: &[Check]) -> Vec<String> {
    checks
        .iter()
        .filter(|c| c.status != Status::Pass)
        .map(|c| c.name.clone())
        .collect()
}

/// Concatenates whatever earlier subcommands left in `out`.
pub fn run_report(out: &Path) -> Result<Summary, CliError> {
    let report: Option<VerificationReport> = read_json(&out.join("report.json"))?;
    let verdicts: Option<Verdicts> = read_json(&out.join("verdicts.json"))?;
    let ergodic: Option<ErgodicOutcome> = read_json(&out.join("dispersion.json"))?;
    if report.is_none() && verdicts.is_none() && ergodic.is_none() {
        return Err(CliError::Config(format!(
            "no reports found in {}; run verify, exponents or ergodic first",
            out.display()
        )));
    }
    let summary = Summary {
        verify: report.map(|r| VerifySummary {
            all_pass: r.all_pass(),
            failed: failed(&r.checks),
        }),
        exponents: verdicts.map(|v| ExponentsSummary {
            rank_one: v.rank_one,
            homogeneous: v.homogeneous,
            missing_witness_labels: v.missing_witness_labels,
            failed: failed(&v.checks),
        }),
        ergodic: ergodic.map(|e| ErgodicSummary {
            lines: e.lines.iter().map(|l| l.probe.direction).collect(),
            flagged_non_ergodic: e.flagged().map(|l| l.probe.direction).collect(),
        }),
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

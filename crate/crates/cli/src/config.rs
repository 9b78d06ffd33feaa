//! TOML run configuration. Every default and tolerance lives here.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tclab_core::cocycle::{DEFAULT_DELTA, DEFAULT_STEP, DEFAULT_TUBE_RADIUS};
use tclab_core::dynamics::{find_periodic_orbits, reduce};
use tclab_core::ergodic::ProbeThresholds;
use tclab_core::timechange::{DEFAULT_INV_TOLERANCE, DEFAULT_MAX_ITERATIONS};
use tclab_core::{
    BumpField, BumpSpec, CocycleSpec, FlowSpec, IntMatrix, MarkedOrbits, Observable, PeriodicOrbit,
    ProductFlow, TimeChangedAction,
};

use crate::error::CliError;

/// A decimal read from either a string (`"0.05"`) or a TOML number, and
/// written back as a string.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DecimalRepr", into = "String")]
pub struct Decimal(pub f64);

#[derive(Deserialize)]
#[serde(untagged)]
enum DecimalRepr {
    Str(String),
    Float(f64),
    Int(i64),
}

impl TryFrom<DecimalRepr> for Decimal {
    type Error = String;

    fn try_from(r: DecimalRepr) -> Result<Self, Self::Error> {
        let v = match r {
            DecimalRepr::Str(s) => s
                .trim()
                .parse::<f64>()
                .map_err(|e| format!("bad decimal {s:?}: {e}"))?,
            DecimalRepr::Float(f) => f,
            DecimalRepr::Int(i) => i as f64,
        };
        if v.is_finite() {
            Ok(Decimal(v))
        } else {
            Err(format!("decimal must be finite, got {v}"))
        }
    }
}

impl From<Decimal> for String {
    fn from(d: Decimal) -> String {
        d.0.to_string()
    }
}

impl From<f64> for Decimal {
    fn from(v: f64) -> Self {
        Decimal(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Bumps in both factors: the counterexample.
    TwoFactor,
    /// Bump in the first factor only: `β = (s, t - θ₁(s,x₁))`.
    Skew,
    /// No time change.
    Product,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub matrix: [[i64; 2]; 2],
    pub roof_amplitude: Decimal,
    pub roof_mode: [i64; 2],
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            matrix: [[2, 1], [1, 1]],
            roof_amplitude: Decimal(0.2),
            roof_mode: [1, 0],
        }
    }
}

/// A periodic orbit named by a rational point on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitRef {
    pub seed: [i64; 2],
    pub den: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CocycleConfig {
    pub mode: Mode,
    pub delta: Decimal,
    pub tube_radius: Decimal,
    pub quadrature_step: Decimal,
    pub p1: OrbitRef,
    pub p2: OrbitRef,
    pub q1: OrbitRef,
    pub q2: OrbitRef,
}

impl Default for CocycleConfig {
    fn default() -> Self {
        let fixed = OrbitRef {
            seed: [0, 0],
            den: 1,
        };
        let ten = OrbitRef {
            seed: [2, 1],
            den: 5,
        };
        CocycleConfig {
            mode: Mode::TwoFactor,
            delta: Decimal(DEFAULT_DELTA),
            tube_radius: Decimal(DEFAULT_TUBE_RADIUS),
            quadrature_step: Decimal(DEFAULT_STEP),
            p1: fixed,
            p2: ten,
            q1: fixed,
            q2: ten,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeChangeConfig {
    pub inv_tolerance: Decimal,
    pub max_iterations: usize,
}

impl Default for TimeChangeConfig {
    fn default() -> Self {
        TimeChangeConfig {
            inv_tolerance: Decimal(DEFAULT_INV_TOLERANCE),
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub cocycle_samples: usize,
    pub inversion_samples: usize,
    pub group_samples: usize,
    pub cocycle_tolerance: Decimal,
    /// The refined run uses `quadrature_step / refinement_divisor`.
    pub refinement_divisor: Decimal,
    pub refinement_gain: Decimal,
    pub group_tolerance: Decimal,
    pub backward_tolerance: Decimal,
    pub iteration_cap: usize,
    pub delta_budget: Decimal,
    pub marked_tolerance: Decimal,
    pub marked_directions: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            cocycle_samples: 1000,
            inversion_samples: 500,
            group_samples: 500,
            cocycle_tolerance: Decimal(1e-6),
            refinement_divisor: Decimal(4.0),
            refinement_gain: Decimal(10.0),
            group_tolerance: Decimal(1e-6),
            backward_tolerance: Decimal(1e-10),
            iteration_cap: 14,
            delta_budget: Decimal(0.125),
            marked_tolerance: Decimal(1e-12),
            marked_directions: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LyapunovConfig {
    pub directions: usize,
    pub horizon: Decimal,
    /// Allowed `|estimate - closed form|` as a fraction of the largest rate.
    pub closed_form_fraction: Decimal,
    pub slope_tolerance: Decimal,
    pub threshold_factor: Decimal,
    /// Zero lines closer than this angle (radians) count as coincident.
    pub line_tolerance: Decimal,
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        LyapunovConfig {
            directions: 64,
            horizon: Decimal(200.0),
            closed_form_fraction: Decimal(0.02),
            slope_tolerance: Decimal(0.005),
            threshold_factor: Decimal(0.5),
            line_tolerance: Decimal(0.01),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErgodicConfig {
    pub lines: Vec<[Decimal; 2]>,
    pub starts: usize,
    pub horizons: [Decimal; 2],
    pub observables: Vec<String>,
    pub high_threshold: Decimal,
    pub low_threshold: Decimal,
    pub stall_ratio: Decimal,
}

impl Default for ErgodicConfig {
    fn default() -> Self {
        let t = ProbeThresholds::default();
        ErgodicConfig {
            lines: vec![[Decimal(1.0), Decimal(0.0)], [Decimal(0.0), Decimal(1.0)]],
            starts: 64,
            horizons: [Decimal(100.0), Decimal(400.0)],
            observables: Observable::BUILT_IN.iter().map(|o| o.name()).collect(),
            high_threshold: Decimal(t.high),
            low_threshold: Decimal(t.low),
            stall_ratio: Decimal(t.stall),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub max_denominator: i64,
    pub output_dir: PathBuf,
    pub flow1: FlowConfig,
    pub flow2: FlowConfig,
    pub cocycle: CocycleConfig,
    pub timechange: TimeChangeConfig,
    pub verify: VerifyConfig,
    pub lyapunov: LyapunovConfig,
    pub ergodic: ErgodicConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 20240917,
            max_denominator: 5,
            output_dir: PathBuf::from("out"),
            flow1: FlowConfig::default(),
            flow2: FlowConfig::default(),
            cocycle: CocycleConfig::default(),
            timechange: TimeChangeConfig::default(),
            verify: VerifyConfig::default(),
            lyapunov: LyapunovConfig::default(),
            ergodic: ErgodicConfig::default(),
        }
    }
}

/// Everything a pipeline needs, built and validated from a `RunConfig`.
#[derive(Debug, Clone)]
pub struct Setup {
    pub action: TimeChangedAction,
    pub orbits: MarkedOrbits,
    /// `δ` as configured, also in product mode.
    pub delta: f64,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn probe_thresholds(&self) -> ProbeThresholds {
        ProbeThresholds {
            high: self.ergodic.high_threshold.0,
            low: self.ergodic.low_threshold.0,
            stall: self.ergodic.stall_ratio.0,
        }
    }

    pub fn observables(&self) -> Result<Vec<Observable>, CliError> {
        self.ergodic
            .observables
            .iter()
            .map(|n| {
                Observable::from_name(n)
                    .ok_or_else(|| CliError::Config(format!("unknown observable {n:?}")))
            })
            .collect()
    }

    /// Validates the configuration and builds the action and marked orbits.
    pub fn setup(&self) -> Result<Setup, CliError> {
        if self.max_denominator < 1 {
            return Err(CliError::Config(format!(
                "max_denominator must be positive, got {}",
                self.max_denominator
            )));
        }
        let flow = |name: &str, f: &FlowConfig| {
            FlowSpec::new(IntMatrix(f.matrix), f.roof_amplitude.0, f.roof_mode)
                .map_err(|e| CliError::Config(format!("{name}: {e}")))
        };
        let base = ProductFlow::new(flow("flow1", &self.flow1)?, flow("flow2", &self.flow2)?);
        let c = &self.cocycle;
        if c.tube_radius.0 <= 0.0 || c.tube_radius.0.is_nan() {
            return Err(CliError::Config(format!(
                "tube_radius must be positive, got {}",
                c.tube_radius.0
            )));
        }
        let spacing = c.tube_radius.0 / 4.0;
        let p1 = self.orbit("p1", &base.first, c.p1, spacing)?;
        let p2 = self.orbit("p2", &base.first, c.p2, spacing)?;
        let q1 = self.orbit("q1", &base.second, c.q1, spacing)?;
        let q2 = self.orbit("q2", &base.second, c.q2, spacing)?;
        let step = c.quadrature_step.0;
        let delta = c.delta.0;
        if delta < 0.0 {
            return Err(CliError::Config(format!(
                "delta must be non-negative, got {delta}"
            )));
        }
        let tubes = |plus: &PeriodicOrbit, minus: &PeriodicOrbit, which: &str| {
            BumpSpec::new(delta, c.tube_radius.0, plus.clone(), minus.clone())
                .map(BumpField::Tubes)
                .map_err(|e| CliError::Config(format!("{which}: {e}")))
        };
        let zero = BumpField::Constant(0.0);
        let (b1, b2) = match c.mode {
            Mode::Product => (zero.clone(), zero),
            _ if delta == 0.0 => (zero.clone(), zero),
            Mode::Skew => (tubes(&p1, &p2, "bump1")?, zero),
            Mode::TwoFactor => (tubes(&p1, &p2, "bump1")?, tubes(&q1, &q2, "bump2")?),
        };
        let cs = CocycleSpec::new(b1, b2, step).map_err(|e| CliError::Config(e.to_string()))?;
        let action = TimeChangedAction::new(base, cs)
            .with_inversion(
                self.timechange.inv_tolerance.0,
                self.timechange.max_iterations,
            )
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(Setup {
            action,
            orbits: MarkedOrbits { p1, p2, q1, q2 },
            delta,
        })
    }

    fn orbit(
        &self,
        name: &str,
        spec: &FlowSpec,
        r: OrbitRef,
        spacing: f64,
    ) -> Result<PeriodicOrbit, CliError> {
        let bad = |why: String| {
            CliError::Config(format!("orbit {name} (seed {:?}/{}): {why}", r.seed, r.den))
        };
        if r.den < 1 || r.seed.iter().any(|&n| n < 0 || n >= r.den) {
            return Err(bad("seed must satisfy 0 <= num < den".into()));
        }
        let (num, den) = reduce(r.seed, r.den);
        if den > self.max_denominator {
            return Err(bad(format!(
                "no such orbit at max_denominator {}",
                self.max_denominator
            )));
        }
        let known = find_periodic_orbits(spec, self.max_denominator)
            .into_iter()
            .any(|o| o.contains(num, den));
        if !known {
            return Err(bad("not found among the periodic orbits".into()));
        }
        Ok(PeriodicOrbit::through(spec, num, den, spacing))
    }
}

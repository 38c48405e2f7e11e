//! Experiment configuration. Files are TOML; keys a file leaves out are
//! taken from the preset named by its `experiment` key, and unknown keys are
//! rejected.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::catalog::{catalog, law_by_name};
use crate::error::{LabError, Result};
use crate::ops::StencilOrder;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    DualityEqualSigma,
    DualityUnequalSigma,
    DilationUnequalSigma,
    UniformDecay,
    PlaneWave,
    TwoSolution,
    OneSolutionInvariant,
    AlgebraicIdentities,
    Custom,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 9] = [
        Self::DualityEqualSigma,
        Self::DualityUnequalSigma,
        Self::DilationUnequalSigma,
        Self::UniformDecay,
        Self::PlaneWave,
        Self::TwoSolution,
        Self::OneSolutionInvariant,
        Self::AlgebraicIdentities,
        Self::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::DualityEqualSigma => "duality_equal_sigma",
            Self::DualityUnequalSigma => "duality_unequal_sigma",
            Self::DilationUnequalSigma => "dilation_unequal_sigma",
            Self::UniformDecay => "uniform_decay",
            Self::PlaneWave => "plane_wave",
            Self::TwoSolution => "two_solution",
            Self::OneSolutionInvariant => "one_solution_invariant",
            Self::AlgebraicIdentities => "algebraic_identities",
            Self::Custom => "custom",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Self::DualityEqualSigma => "duality law with equal conductivities, random data, exponential adjoint",
            Self::DualityUnequalSigma => "duality law outside its condition; residual against the predicted defect",
            Self::DilationUnequalSigma => "dilation law with unequal conductivities",
            Self::UniformDecay => "spatially uniform fields against their exponential decay",
            Self::PlaneWave => "exact damped plane wave: discrete field-equation residual and duality law",
            Self::TwoSolution => "adjoint from a time-reversed closed-form solution, two-solution laws",
            Self::OneSolutionInvariant => "one solution paired with its own time reversal, global invariant drift",
            Self::AlgebraicIdentities => "admittance, generic-vs-catalog, discrete identities, exponential-adjoint reductions",
            Self::Custom => "user-defined; defaults as duality_equal_sigma",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| LabError::UnknownExperiment(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialCondition {
    RandomModes,
    Uniform,
    PlaneWave,
    WaveSuperposition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForwardSource {
    /// Runge-Kutta integration of the semi-discrete system.
    #[default]
    Integrated,
    /// Sampled closed form with analytic time derivatives.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjointSource {
    /// `V = (e^{σ_m t}, 0, 0)`, `W = (e^{σ_e t}, 0, 0)`.
    #[default]
    Exponential,
    /// `V = B'(−t)`, `W = E'(−t)` from a second forward solution.
    TimeReversal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimedSolution {
    /// Same family, next seed.
    #[default]
    Independent,
    /// The forward solution itself.
    Identical,
}

/// One level of a refinement ladder on a cubic box of side `n·dx`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rung {
    pub n: usize,
    pub dx: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub order_target: f64,
    pub order_tolerance: f64,
    /// Finest-rung `‖r‖ / (‖D_t τ‖ + ‖div χ‖)`; unchecked when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalized_residual: Option<f64>,
    /// Residual bound when the ladder is too short for an order fit.
    pub residual_absolute: f64,
    /// Relative global-invariant drift at the coarsest rung.
    pub drift: f64,
    /// `‖r − f‖ / ‖f‖` at the finest rung for a law outside its condition.
    pub defect_relative: f64,
    pub decay_relative: f64,
    pub identity_relative: f64,
    pub generic_relative: f64,
    /// Minimum admittance defect, as a fraction of `|σ_m − σ_e|·scale`.
    pub admittance_floor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            order_target: 2.0,
            order_tolerance: 0.3,
            normalized_residual: None,
            residual_absolute: 1e-8,
            drift: 1e-3,
            defect_relative: 5e-2,
            decay_relative: 1e-10,
            identity_relative: 1e-12,
            generic_relative: 1e-13,
            admittance_floor: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub ladder: Vec<Rung>,
    pub sigma_e: f64,
    pub sigma_m: f64,
    pub order: StencilOrder,
    pub horizon: f64,
    pub seed: u64,
    pub laws: Vec<String>,
    pub initial_condition: InitialCondition,
    pub forward: ForwardSource,
    pub adjoint: AdjointSource,
    pub primed: PrimedSolution,
    /// Evaluate laws even where their condition fails.
    pub override_condition: bool,
    pub modes_per_component: usize,
    pub kmax: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub snapshots: bool,
    pub tolerances: Tolerances,
}

/// Rungs on a `2π` box with `dt = horizon / (2n)`, so `dt / h` is the same
/// on every rung.
pub fn box_ladder(sizes: &[usize], horizon: f64) -> Vec<Rung> {
    sizes
        .iter()
        .map(|&n| Rung {
            n,
            dx: 2.0 * PI / n as f64,
            dt: horizon / (2 * n) as f64,
        })
        .collect()
}

pub const ACCEPTANCE_SIZES: [usize; 3] = [16, 24, 32];

impl ExperimentConfig {
    pub fn preset(kind: ExperimentKind) -> Self {
        let base = Self {
            experiment: kind,
            ladder: box_ladder(&ACCEPTANCE_SIZES, 1.0),
            sigma_e: 0.3,
            sigma_m: 0.3,
            order: StencilOrder::Second,
            horizon: 1.0,
            seed: 20240501,
            laws: vec!["duality".into()],
            initial_condition: InitialCondition::RandomModes,
            forward: ForwardSource::Integrated,
            adjoint: AdjointSource::Exponential,
            primed: PrimedSolution::Independent,
            override_condition: false,
            modes_per_component: 4,
            kmax: 1,
            output_dir: None,
            snapshots: false,
            tolerances: Tolerances {
                normalized_residual: Some(1e-3),
                ..Tolerances::default()
            },
        };
        match kind {
            ExperimentKind::DualityEqualSigma | ExperimentKind::Custom => base,
            ExperimentKind::DualityUnequalSigma => Self {
                sigma_e: 0.1,
                sigma_m: 0.5,
                override_condition: true,
                ..base
            },
            ExperimentKind::DilationUnequalSigma => Self {
                sigma_e: 0.1,
                sigma_m: 0.5,
                laws: vec!["dilation".into()],
                ..base
            },
            ExperimentKind::UniformDecay => Self {
                ladder: vec![Rung {
                    n: 4,
                    dx: PI / 2.0,
                    dt: 1e-3,
                }],
                sigma_e: 0.1,
                sigma_m: 0.5,
                laws: vec!["dilation".into()],
                initial_condition: InitialCondition::Uniform,
                ..base
            },
            ExperimentKind::PlaneWave => Self {
                initial_condition: InitialCondition::PlaneWave,
                forward: ForwardSource::Exact,
                ..base
            },
            ExperimentKind::TwoSolution => Self {
                laws: vec!["duality".into(), "time_translation".into()],
                initial_condition: InitialCondition::WaveSuperposition,
                forward: ForwardSource::Exact,
                adjoint: AdjointSource::TimeReversal,
                tolerances: Tolerances {
                    normalized_residual: None,
                    ..base.tolerances
                },
                ..base
            },
            ExperimentKind::OneSolutionInvariant => Self {
                adjoint: AdjointSource::TimeReversal,
                primed: PrimedSolution::Identical,
                tolerances: Tolerances {
                    normalized_residual: None,
                    ..base.tolerances
                },
                ..base
            },
            ExperimentKind::AlgebraicIdentities => Self {
                ladder: box_ladder(&[16], 1.0),
                sigma_e: 0.1,
                sigma_m: 0.5,
                laws: catalog().iter().map(|l| l.name.to_string()).collect(),
                override_condition: true,
                ..base
            },
        }
    }

    /// Parses TOML, filling absent keys from the named preset.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| LabError::Config(e.to_string()))?;
        let kind = match table.get("experiment") {
            Some(toml::Value::String(s)) => s.parse::<ExperimentKind>()?,
            Some(other) => return Err(LabError::Config(format!("`experiment` must be a string, got {other}"))),
            None => return Err(LabError::Config("missing key `experiment`".into())),
        };
        let preset = toml::Table::try_from(Self::preset(kind)).map_err(|e| LabError::Config(e.to_string()))?;
        let mut merged = preset;
        for (key, value) in table {
            match (merged.get_mut(&key), value) {
                (Some(toml::Value::Table(base)), toml::Value::Table(over)) if key == "tolerances" => {
                    base.extend(over);
                }
                (_, value) => {
                    merged.insert(key, value);
                }
            }
        }
        let config: Self = merged.try_into().map_err(|e: toml::de::Error| LabError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| LabError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(LabError::Config(msg));
        if self.laws.is_empty() {
            return bad("laws must not be empty".into());
        }
        for name in &self.laws {
            law_by_name(name)?;
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        for s in [self.sigma_e, self.sigma_m] {
            if !(s >= 0.0 && s.is_finite()) {
                return bad(format!("conductivities must be finite and non-negative, got {s}"));
            }
        }
        if self.ladder.is_empty() {
            return bad("ladder must have at least one rung".into());
        }
        for r in &self.ladder {
            if r.n < 4 || !(r.dx > 0.0 && r.dx.is_finite()) || !(r.dt > 0.0 && r.dt.is_finite()) {
                return bad(format!("invalid rung {r:?}"));
            }
            if steps_for(self.horizon, r.dt) < 2 {
                return bad(format!("horizon {} allows fewer than two steps of {}", self.horizon, r.dt));
            }
        }
        let first = self.ladder[0];
        for pair in self.ladder.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if !(b.dx < a.dx && b.dt < a.dt) {
                return bad(format!("rungs must strictly refine h and dt: {a:?} then {b:?}"));
            }
            let ratio = |r: Rung| r.dt / r.dx;
            if (ratio(b) - ratio(first)).abs() > 1e-6 * ratio(first) {
                return bad(format!("dt/h must be the same on every rung: {a:?} then {b:?}"));
            }
            let side = |r: Rung| r.n as f64 * r.dx;
            if (side(b) - side(first)).abs() > 1e-9 * side(first) {
                return bad(format!("every rung must cover the same box: {a:?} then {b:?}"));
            }
        }
        if !(1..=crate::dynamics::MAX_RANDOM_MODES).contains(&self.modes_per_component) || self.kmax < 1 {
            return bad(format!(
                "modes_per_component must be in 1..={} and kmax at least 1",
                crate::dynamics::MAX_RANDOM_MODES
            ));
        }
        let equal = self.sigma_e == self.sigma_m;
        let needs_equal = matches!(
            self.initial_condition,
            InitialCondition::PlaneWave | InitialCondition::WaveSuperposition
        );
        if needs_equal && !equal {
            return bad(format!("{:?} initial data needs sigma_e == sigma_m", self.initial_condition));
        }
        if self.forward == ForwardSource::Exact && self.initial_condition == InitialCondition::RandomModes {
            return bad("random_modes has no closed form; use forward = \"integrated\"".into());
        }
        Ok(())
    }

    pub fn params(&self) -> crate::model::MediumParams {
        crate::model::MediumParams {
            sigma_e: self.sigma_e,
            sigma_m: self.sigma_m,
        }
    }
}

/// Number of steps of `dt` closest to `horizon`.
pub fn steps_for(horizon: f64, dt: f64) -> usize {
    (horizon / dt).round() as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_is_valid() {
        for kind in ExperimentKind::ALL {
            ExperimentConfig::preset(kind).validate().unwrap();
            assert_eq!(kind.name().parse::<ExperimentKind>().unwrap(), kind);
        }
    }

    #[test]
    fn file_keys_override_preset() {
        let c = ExperimentConfig::from_toml_str(
            "experiment = \"duality_equal_sigma\"\nseed = 5\norder = 4\n[tolerances]\ndrift = 1e-4\n",
        )
        .unwrap();
        assert_eq!(c.seed, 5);
        assert_eq!(c.order, StencilOrder::Fourth);
        assert_eq!(c.tolerances.drift, 1e-4);
        assert_eq!(c.tolerances.order_tolerance, 0.3);
        assert_eq!(c.ladder.len(), 3);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::from_toml_str("experiment = \"plane_wave\"\ncolour = 3\n").unwrap_err();
        assert!(matches!(err, LabError::Config(_)));
        let err = ExperimentConfig::from_toml_str("experiment = \"plane_wave\"\n[tolerances]\nfoo = 1\n").unwrap_err();
        assert!(matches!(err, LabError::Config(_)));
    }

    #[test]
    fn empty_law_list_is_rejected() {
        let err = ExperimentConfig::from_toml_str("experiment = \"custom\"\nlaws = []\n").unwrap_err();
        assert!(err.to_string().contains("laws"));
    }

    #[test]
    fn ladder_must_refine() {
        let text = "experiment = \"custom\"\nladder = [{ n = 16, dx = 0.5, dt = 0.05 }, { n = 16, dx = 0.5, dt = 0.05 }]\n";
        assert!(ExperimentConfig::from_toml_str(text).is_err());
        let uneven = "experiment = \"custom\"\nladder = [{ n = 8, dx = 1.0, dt = 0.1 }, { n = 16, dx = 0.5, dt = 0.04 }]\n";
        assert!(ExperimentConfig::from_toml_str(uneven).is_err());
        let good = "experiment = \"custom\"\nladder = [{ n = 8, dx = 1.0, dt = 0.1 }, { n = 16, dx = 0.5, dt = 0.05 }]\n";
        assert!(ExperimentConfig::from_toml_str(good).is_ok());
    }

    #[test]
    fn config_round_trips_through_toml() {
        let c = ExperimentConfig::preset(ExperimentKind::TwoSolution);
        let text = c.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), c);
    }

    #[test]
    fn box_ladder_keeps_ratio() {
        let l = box_ladder(&ACCEPTANCE_SIZES, 1.0);
        let r0 = l[0].dt / l[0].dx;
        assert!(l.iter().all(|r| (r.dt / r.dx - r0).abs() < 1e-15));
        assert_eq!(steps_for(1.0, l[2].dt), 64);
    }
}

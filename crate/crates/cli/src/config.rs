//! Scenario configuration files.
//!
//! Every value not given in the file is filled from a documented default and
//! the resolved [`ScenarioConfig`] is what gets echoed into run manifests.
//! Geometry defaults scale with `sigma0`: `k0 = 10/σ0`, arm length `20σ0`,
//! source distance `5σ0`, exit length `20σ0`, detector gap `0.5σ0`. These
//! are artifact choices for desk-scale runs, not physical inputs.

use std::fmt;
use std::path::{Path, PathBuf};

use bohm_core::analysis::ScenarioKind;
use bohm_core::optics::GeometryParams;
use bohm_core::{PhysicalConstants, ScenarioParams, Tolerances};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Read { path: PathBuf, message: String },
    Parse { path: PathBuf, message: String },
    Invalid(Vec<String>),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Read { path, message } => write!(f, "cannot read {}: {message}", path.display()),
            ConfigError::Parse { path, message } => write!(f, "cannot parse {}: {message}", path.display()),
            ConfigError::Invalid(problems) => {
                write!(f, "invalid configuration:")?;
                for p in problems {
                    write!(f, "\n  - {p}")?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scenario: Option<ScenarioKind>,
    seed: Option<u64>,
    #[serde(default)]
    units: RawUnits,
    #[serde(default)]
    geometry: RawGeometry,
    #[serde(default)]
    ensemble: RawEnsemble,
    #[serde(default)]
    tolerances: RawTolerances,
    #[serde(default)]
    oracle: RawOracle,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawUnits {
    hbar: Option<f64>,
    mass: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGeometry {
    sigma0: Option<f64>,
    k0: Option<f64>,
    arm_length: Option<f64>,
    incidence_angle_deg: Option<f64>,
    source_distance: Option<f64>,
    exit_length: Option<f64>,
    tag_fraction: Option<f64>,
    arm_imbalance: Option<f64>,
    detector_gap: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnsemble {
    n: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTolerances {
    tol_step: Option<f64>,
    node_threshold: Option<f64>,
    h_min: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOracle {
    enabled: Option<bool>,
    scan_samples: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    root: Option<PathBuf>,
    name: Option<String>,
    plots: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Units {
    pub hbar: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    pub sigma0: f64,
    pub k0: f64,
    pub arm_length: f64,
    pub incidence_angle_deg: f64,
    pub source_distance: f64,
    pub exit_length: f64,
    pub tag_fraction: f64,
    pub arm_imbalance: f64,
    pub detector_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ensemble {
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Oracle {
    pub enabled: bool,
    pub scan_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    pub root: PathBuf,
    pub name: Option<String>,
    pub plots: bool,
}

/// Fully resolved configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub seed: u64,
    pub units: Units,
    pub geometry: Geometry,
    pub ensemble: Ensemble,
    pub tolerances: Tolerances,
    pub oracle: Oracle,
    pub output: Output,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub scenario: Option<ScenarioKind>,
    pub no_oracle: bool,
}

pub fn parse_scenario_kind(s: &str) -> Option<ScenarioKind> {
    match s.to_ascii_lowercase().as_str() {
        "simple" => Some(ScenarioKind::Simple),
        "ww" | "which-way" => Some(ScenarioKind::Ww),
        _ => None,
    }
}

pub fn parse_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    load_config(path, &Overrides::default())
}

pub fn load_config(path: &Path, overrides: &Overrides) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read { path: path.to_owned(), message: e.to_string() })?;
    parse_config_str(&text, overrides).map_err(|e| match e {
        ConfigError::Parse { message, .. } => ConfigError::Parse { path: path.to_owned(), message },
        other => other,
    })
}

pub fn parse_config_str(text: &str, overrides: &Overrides) -> Result<ScenarioConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse { path: PathBuf::from("<config>"), message: e.to_string() })?;
    resolve(raw, overrides)
}

fn resolve(raw: RawConfig, o: &Overrides) -> Result<ScenarioConfig, ConfigError> {
    let mut problems = Vec::new();
    let seed = o.seed.or(raw.seed);
    if seed.is_none() {
        problems.push("seed: required (no entropy-based default)".to_string());
    }
    let g = raw.geometry;
    let sigma0 = g.sigma0.unwrap_or(1.0);
    let cfg = ScenarioConfig {
        scenario: o.scenario.or(raw.scenario).unwrap_or(ScenarioKind::Simple),
        seed: seed.unwrap_or(0),
        units: Units { hbar: raw.units.hbar.unwrap_or(1.0), mass: raw.units.mass.unwrap_or(1.0) },
        geometry: Geometry {
            sigma0,
            k0: g.k0.unwrap_or(10.0 / sigma0),
            arm_length: g.arm_length.unwrap_or(20.0 * sigma0),
            incidence_angle_deg: g.incidence_angle_deg.unwrap_or(45.0),
            source_distance: g.source_distance.unwrap_or(5.0 * sigma0),
            exit_length: g.exit_length.unwrap_or(20.0 * sigma0),
            tag_fraction: g.tag_fraction.unwrap_or(0.8),
            arm_imbalance: g.arm_imbalance.unwrap_or(0.0),
            detector_gap: g.detector_gap.unwrap_or(0.5 * sigma0),
        },
        ensemble: Ensemble { n: o.n.or(raw.ensemble.n).unwrap_or(200) },
        tolerances: {
            let d = Tolerances::default();
            Tolerances {
                tol_step: raw.tolerances.tol_step.unwrap_or(d.tol_step),
                node_threshold: raw.tolerances.node_threshold.unwrap_or(d.node_threshold),
                h_min: raw.tolerances.h_min.unwrap_or(d.h_min),
            }
        },
        oracle: Oracle { enabled: !o.no_oracle && raw.oracle.enabled.unwrap_or(true), scan_samples: raw.oracle.scan_samples.unwrap_or(257) },
        output: Output { root: raw.output.root.unwrap_or_else(|| PathBuf::from("runs")), name: raw.output.name, plots: raw.output.plots.unwrap_or(true) },
    };
    problems.extend(cfg.problems());
    if problems.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError::Invalid(problems))
    }
}

impl ScenarioConfig {
    /// Violated invariants, one message per field.
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        let mut positive = |name: &str, v: f64| {
            if !(v > 0.0 && v.is_finite()) {
                p.push(format!("{name}: must be positive and finite, got {v}"));
            }
        };
        positive("units.hbar", self.units.hbar);
        positive("units.mass", self.units.mass);
        let g = &self.geometry;
        positive("geometry.sigma0", g.sigma0);
        positive("geometry.k0", g.k0);
        positive("geometry.arm_length", g.arm_length);
        positive("geometry.source_distance", g.source_distance);
        positive("geometry.exit_length", g.exit_length);
        positive("geometry.detector_gap", g.detector_gap);
        positive("tolerances.tol_step", self.tolerances.tol_step);
        positive("tolerances.node_threshold", self.tolerances.node_threshold);
        positive("tolerances.h_min", self.tolerances.h_min);
        if !(g.incidence_angle_deg > 0.0 && g.incidence_angle_deg < 90.0) {
            p.push(format!("geometry.incidence_angle_deg: must lie in (0, 90), got {}", g.incidence_angle_deg));
        }
        if !(g.tag_fraction > 0.0 && g.tag_fraction < 1.0) {
            p.push(format!("geometry.tag_fraction: must lie in (0, 1), got {}", g.tag_fraction));
        }
        if !(g.arm_imbalance > -1.0 && g.arm_imbalance.is_finite()) {
            p.push(format!("geometry.arm_imbalance: must exceed -1, got {}", g.arm_imbalance));
        }
        if self.oracle.scan_samples < 16 {
            p.push(format!("oracle.scan_samples: need at least 16, got {}", self.oracle.scan_samples));
        }
        if self.output.name.as_deref().is_some_and(|n| n.is_empty() || n.contains(['/', '\\'])) {
            p.push("output.name: must be a non-empty single path component".to_string());
        }
        p
    }

    pub fn which_way(&self) -> bool {
        self.scenario == ScenarioKind::Ww
    }

    pub fn scenario_params(&self) -> ScenarioParams {
        let g = &self.geometry;
        ScenarioParams {
            geometry: GeometryParams {
                constants: PhysicalConstants { hbar: self.units.hbar, mass: self.units.mass },
                sigma0: g.sigma0,
                k0: g.k0,
                arm_length: g.arm_length,
                incidence_angle: g.incidence_angle_deg.to_radians(),
                source_distance: g.source_distance,
                exit_length: g.exit_length,
                tag_fraction: g.tag_fraction,
                which_way: self.which_way(),
                arm_imbalance: g.arm_imbalance,
                detector_gap: g.detector_gap,
            },
            tolerances: self.tolerances,
        }
    }

    pub fn run_name(&self) -> String {
        self.output.name.clone().unwrap_or_else(|| {
            let kind = match self.scenario {
                ScenarioKind::Simple => "simple",
                ScenarioKind::Ww => "ww",
            };
            format!("{kind}-seed{}", self.seed)
        })
    }

    /// Canonical JSON of the resolved configuration.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}

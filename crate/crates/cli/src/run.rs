//! Scenario orchestration: ensemble, diagnostics and pass/fail checks.

use std::time::{Duration, Instant};

use bohm_core::analysis::{
    build_projection_picture, check_flux_antisymmetry, check_reflection_symmetry, compute_visibility, fringe_minima, quantum_potential_contrast, sample_polygon, single_packet_excess,
    support_samples, ProjectionPicture, QpContrast, QpProbe, ScenarioKind, SymmetryReport, VisibilityReport,
};
use bohm_core::grid::{run_oracle, FringeProfile, LegReport, OracleOptions};
use bohm_core::trajectories::{detect_bs_plane_crossings, min_same_sheet_distance, resample, run_ensemble, RESAMPLE_INTERVALS};
use bohm_core::wavefield::interference_identity_check;
use bohm_core::{EnsembleResult, EnsembleRun, Error as CoreError, EventKind, Scenario, WwLabel};
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;

pub const SYMMETRY_LIMIT: f64 = 1e-9;
pub const FLUX_LIMIT: f64 = 1e-9;
pub const QP_FREE_LIMIT: f64 = 1e-9;
pub const QP_CONTRAST_FACTOR: f64 = 100.0;
pub const IDENTITY_LIMIT: f64 = 1e-10;
pub const ORACLE_L2_LIMIT: f64 = 1e-6;
pub const ORACLE_VELOCITY_LIMIT: f64 = 1e-4;
pub const NORM_LIMIT: f64 = 1e-12;
pub const SIMPLE_VISIBILITY_MIN: f64 = 0.9;
pub const WW_VISIBILITY_MAX: f64 = 0.05;
pub const UNDETECTED_FRACTION: f64 = 0.01;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{context}: {source}")]
    Core { context: String, source: CoreError },
}

fn ctx<T>(context: &str, r: Result<T, CoreError>) -> Result<T, RunError> {
    r.map_err(|source| RunError::Core { context: context.to_string(), source })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpSummary {
    pub contrast: QpContrast,
    pub free_time: f64,
    pub region_time: f64,
    /// Which-way runs: deviation of each sheet's potential from its single packet in region I.
    pub region_branch_excess: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSummary {
    pub max_l2_error: f64,
    pub max_velocity_error: f64,
    pub legs: Vec<LegReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: ScenarioKind,
    pub seed: u64,
    pub config_hash: String,
    pub ensemble: EnsembleResult,
    pub min_plane_crossings_per_detected: Option<usize>,
    pub min_same_sheet_distance: Option<f64>,
    /// `None` when the geometry is not balanced (symmetry is not expected).
    pub symmetry: Option<SymmetryReport>,
    pub quantum_potential: QpSummary,
    pub max_identity_residual: Option<f64>,
    pub max_norm_deviation: f64,
    pub oracle: Option<OracleSummary>,
    pub visibility: Option<VisibilityReport>,
    pub fringe: Option<FringeProfile>,
    pub checks: Vec<CheckOutcome>,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl RunSummary {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub struct RunOutput {
    pub summary: RunSummary,
    pub scenario: Scenario,
    pub ensemble: EnsembleRun,
    pub picture: ProjectionPicture,
}

struct Checks(Vec<CheckOutcome>);

impl Checks {
    fn add(&mut self, name: &str, passed: bool, detail: String) {
        self.0.push(CheckOutcome { name: name.to_string(), passed, detail });
    }
}

fn symmetry_report(s: &Scenario) -> Result<SymmetryReport, RunError> {
    let plane = s.geometry.beam_splitter;
    let mut report: Option<SymmetryReport> = None;
    let mut worst = 0.0f64;
    for t in [s.split_time() + 0.35 * (s.overlap_time() - s.split_time()), s.overlap_time(), 0.5 * (s.overlap_time() + s.final_time())] {
        let f = ctx("symmetry field", s.timeline.field_at(t))?;
        let r = ctx("reflection symmetry", check_reflection_symmetry(f, &plane, t, 200))?;
        worst = worst.max(r.max_field_asymmetry.unwrap_or(0.0));
        report = Some(match report {
            None => r,
            Some(prev) => SymmetryReport { sampled_points: prev.sampled_points + r.sampled_points, ..prev },
        });
    }
    let t = s.overlap_time();
    let f = ctx("flux field", s.timeline.field_at(t))?;
    let flux = ctx("flux antisymmetry", check_flux_antisymmetry(f, &plane, &[t - 0.3, t, t + 0.3], 50))?;
    let mut r = report.expect("three samples").merge(flux);
    r.max_field_asymmetry = Some(worst);
    Ok(r)
}

/// Free-region probe just before the first mirror; region-I probe shortly
/// before exact coincidence so the fringe minima are deep but not exact nodes.
fn qp_summary(s: &Scenario) -> Result<QpSummary, RunError> {
    let mirror = s.trace.events.iter().find(|e| e.kind == EventKind::Mirror).map(|e| e.time).unwrap_or(s.overlap_time());
    let t_free = s.split_time() + 0.95 * (mirror - s.split_time());
    let free_field = ctx("free field", s.timeline.field_at(t_free))?;
    let free_pts = support_samples(free_field, t_free, 100, 3.0);
    let t = s.pre_overlap_time(0.5 * s.geometry.source.sigma0);
    let field = ctx("region-I field", s.timeline.field_at(t))?;
    let mid = (s.trace.arrival_points[0] + s.trace.arrival_points[1]) * 0.5;
    let half = 0.6 * s.geometry.source.width(t, &s.geometry.constants);
    let mut pts = Vec::new();
    for w in field.labels() {
        pts.extend(fringe_minima(field, w, mid, s.geometry.beam_splitter.unit_normal, half, t, 301));
    }
    if pts.is_empty() {
        pts.push(mid);
    }
    let contrast = ctx("quantum potential", quantum_potential_contrast(QpProbe { field: free_field, points: &free_pts, t: t_free }, QpProbe { field, points: &pts, t }))?;
    let region_branch_excess = if s.which_way() {
        let region_pts = support_samples(field, t, 100, 2.0);
        Some(single_packet_excess(field, &region_pts, t).0)
    } else {
        None
    };
    Ok(QpSummary { contrast, free_time: t_free, region_time: t, region_branch_excess })
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutput, RunError> {
    let start = Instant::now();
    let scenario = ctx("scenario", Scenario::new(cfg.scenario_params()))?;
    let ww = scenario.which_way();
    let n = cfg.ensemble.n;
    let coincidence = 10.0 * cfg.tolerances.tol_step;
    let ensemble = ctx("ensemble", run_ensemble(&scenario, n, cfg.seed))?;
    let picture = ctx("projection picture", build_projection_picture(&ensemble.trajectories, coincidence))?;
    let res = &ensemble.result;
    let mut checks = Checks(Vec::new());
    // The arm/detector rules and the plane arguments rest on mirror symmetry.
    let balanced = scenario.geometry.is_balanced(1e-12);

    if n > 0 {
        let c = res.counts;
        if balanced {
            let (pass, rule) = if ww { (c[0][0] == 0 && c[1][1] == 0, "r→D2, t→D1") } else { (c[0][1] == 0 && c[1][0] == 0, "r→D1, t→D2") };
            checks.add("arm_detector_correspondence", pass, format!("{rule}; counts [r: {:?}, t: {:?}]", c[0], c[1]));
        }
        let limit = UNDETECTED_FRACTION * n as f64;
        checks.add("undetected_fraction", (res.undetected as f64) < limit, format!("{} undetected, limit < {limit}", res.undetected));
        let totals = res.detector_totals();
        let detected = (totals[0] + totals[1]) as f64;
        let slack = 4.0 * (n as f64 / 4.0).sqrt();
        checks.add("born_statistics", (totals[0] as f64 - detected / 2.0).abs() <= slack, format!("D1 {} / D2 {}, allowed deviation {slack:.2}", totals[0], totals[1]));
    }

    let window = (scenario.split_time(), scenario.final_time());
    let detected: Vec<usize> = ensemble
        .trajectories
        .iter()
        .filter(|t| t.failure.is_none() && t.endpoint != bohm_core::Endpoint::Undetected)
        .map(|t| detect_bs_plane_crossings(t, &scenario.geometry.beam_splitter, window))
        .collect();
    let min_per = detected.iter().copied().min();
    if balanced && ww {
        if let Some(m) = min_per {
            checks.add("plane_crossing_per_detected", m >= 1, format!("minimum {m} crossings per detected trajectory"));
        }
        if n >= 2 {
            checks.add("projected_pair_crossings", res.projected_pair_crossings >= 1, format!("{} projected crossings", res.projected_pair_crossings));
        }
    } else if balanced {
        checks.add("no_plane_crossing", res.crossings_of_bs_plane == 0, format!("{} post-split crossings", res.crossings_of_bs_plane));
        checks.add("no_projected_crossing", res.projected_pair_crossings == 0, format!("{} projected crossings", res.projected_pair_crossings));
    }
    let complete: Vec<_> = ensemble.trajectories.iter().filter(|t| t.failure.is_none()).cloned().collect();
    let min_same = if complete.len() >= 2 {
        let rs = ctx("resampling", resample(&complete, RESAMPLE_INTERVALS))?;
        let d = min_same_sheet_distance(&rs);
        checks.add("same_sheet_separation", d > coincidence, format!("min equal-time distance {d:e} (limit > {coincidence:e})"));
        Some(d)
    } else {
        None
    };

    let symmetry = if balanced {
        let r = symmetry_report(&scenario)?;
        let a = r.max_field_asymmetry.unwrap_or(f64::INFINITY);
        let f = r.max_flux_symmetry_violation.unwrap_or(f64::INFINITY);
        checks.add("reflection_symmetry", a < SYMMETRY_LIMIT, format!("max residual {a:e} (limit {SYMMETRY_LIMIT:e}), sign {}", r.global_sign));
        checks.add("flux_antisymmetry", f < FLUX_LIMIT, format!("max violation {f:e} (limit {FLUX_LIMIT:e})"));
        Some(r)
    } else {
        None
    };

    let qp = qp_summary(&scenario)?;
    let qc = &qp.contrast;
    checks.add("qp_free_region", qc.free_excess < QP_FREE_LIMIT, format!("max |U - U_single| = {:e}", qc.free_excess));
    if let Some(e) = qp.region_branch_excess {
        checks.add("qp_region_i_single_branch", e < QP_FREE_LIMIT, format!("max per-sheet excess {e:e}"));
    } else if balanced {
        let ratio = qc.region_i_max / qc.kinetic_scale;
        checks.add("qp_region_i_contrast", ratio >= QP_CONTRAST_FACTOR, format!("max |U| = {:.4e} = {ratio:.3e} × ħ²k²/2m", qc.region_i_max));
    }

    let t_overlap = scenario.overlap_time();
    let identity = if ww {
        None
    } else {
        let field = ctx("identity field", scenario.timeline.field_at(t_overlap))?;
        let pts = ctx("region-I samples", sample_polygon(&scenario.geometry.region_i, 100, cfg.seed))?;
        let mut worst = 0.0f64;
        for x in &pts {
            match interference_identity_check(field, x, t_overlap) {
                Ok(r) => worst = worst.max(r),
                Err(CoreError::Precondition(_)) => {}
                Err(e) => return Err(RunError::Core { context: "interference identity".into(), source: e }),
            }
        }
        checks.add("interference_identity", worst < IDENTITY_LIMIT, format!("max residual {worst:e}"));
        Some(worst)
    };

    let mut norm_dev = 0.0f64;
    for (t0, f) in scenario.timeline.segments() {
        for dt in [0.0, 0.5, 1.5] {
            norm_dev = norm_dev.max((f.norm_at(t0 + dt) - 1.0).abs());
        }
    }
    checks.add("analytic_norm", norm_dev < NORM_LIMIT, format!("max |norm - 1| = {norm_dev:e}"));

    let (oracle, visibility, fringe) = if cfg.oracle.enabled {
        let opts = OracleOptions { scan_samples: cfg.oracle.scan_samples, ..OracleOptions::default() };
        let rep = ctx("grid oracle", run_oracle(&scenario, &opts))?;
        checks.add("oracle_l2", rep.max_l2_error < ORACLE_L2_LIMIT, format!("max relative L2 error {:e} over {} legs", rep.max_l2_error, rep.legs.len()));
        checks.add("oracle_velocity", rep.max_velocity_error < ORACLE_VELOCITY_LIMIT, format!("max relative velocity error {:e}", rep.max_velocity_error));
        let drift = rep.legs.iter().map(|l| l.norm_drift).fold(0.0, f64::max);
        checks.add("oracle_norm", drift < 1e-10, format!("max norm drift per leg {drift:e}"));
        let v = ctx("visibility", compute_visibility(&rep.fringe.samples))?;
        let kind = if ww { ScenarioKind::Ww } else { ScenarioKind::Simple };
        if ww {
            checks.add("visibility", v < WW_VISIBILITY_MAX, format!("{v:.6} (limit < {WW_VISIBILITY_MAX})"));
        } else if balanced {
            checks.add("visibility", v > SIMPLE_VISIBILITY_MIN, format!("{v:.6} (limit > {SIMPLE_VISIBILITY_MIN})"));
        }
        let vis = VisibilityReport { visibility: v, scan_time: rep.fringe.time, scenario: kind };
        (Some(OracleSummary { max_l2_error: rep.max_l2_error, max_velocity_error: rep.max_velocity_error, legs: rep.legs }), Some(vis), Some(rep.fringe))
    } else {
        (None, None, None)
    };

    let summary = RunSummary {
        scenario: cfg.scenario,
        seed: cfg.seed,
        config_hash: cfg.hash(),
        ensemble: ensemble.result.clone(),
        min_plane_crossings_per_detected: min_per,
        min_same_sheet_distance: min_same,
        symmetry,
        quantum_potential: qp,
        max_identity_residual: identity,
        max_norm_deviation: norm_dev,
        oracle,
        visibility,
        fringe,
        checks: checks.0,
        wall_time: start.elapsed(),
    };
    Ok(RunOutput { summary, scenario, ensemble, picture })
}

/// Which sheets a picture has, in plotting order.
pub fn sheet_labels(picture: &ProjectionPicture) -> Vec<WwLabel> {
    let mut labels: Vec<WwLabel> = picture.sheets.iter().map(|s| s.label).collect();
    labels.sort();
    labels.dedup();
    labels
}

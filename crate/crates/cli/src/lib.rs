//! Library side of the `bohm-mz` command: configuration, the check pipeline,
//! file export and figures.

pub mod config;
pub mod export;
pub mod plot;
pub mod run;

use std::path::{Path, PathBuf};

use config::ScenarioConfig;
use export::{Manifest, OmittedPlot};
use run::{RunError, RunOutput};

#[derive(Debug, thiserror::Error)]
pub enum ExecuteError {
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("writing {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn io_at<T>(path: &Path, r: std::io::Result<T>) -> Result<T, ExecuteError> {
    r.map_err(|source| ExecuteError::Io { path: path.to_path_buf(), source })
}

/// Builds the figure input for a finished run.
pub fn plot_input<'a>(cfg: &ScenarioConfig, out: &'a RunOutput) -> plot::PlotInput<'a> {
    plot::PlotInput {
        title: format!("{} (seed {}, n = {})", cfg.run_name(), cfg.seed, out.summary.ensemble.n),
        geometry: &out.scenario.geometry,
        trajectories: &out.ensemble.trajectories,
        picture: &out.picture,
        fringe: out.summary.fringe.as_ref(),
        visibility: out.summary.visibility.as_ref().map(|v| v.visibility),
    }
}

/// Writes figures and returns their relative names plus any omitted ones.
pub fn write_plots(dir: &Path, input: &plot::PlotInput<'_>) -> Result<(Vec<String>, Vec<OmittedPlot>), ExecuteError> {
    let files = io_at(dir, plot::render_plots(input, dir))?;
    let names = files.iter().map(|p| export::relative(dir, p)).collect();
    let mut omitted = Vec::new();
    if input.fringe.is_none() {
        omitted.push(OmittedPlot { name: format!("{}/{}", plot::PLOT_DIR, plot::FRINGE_PLOT), reason: "grid oracle disabled; no fringe scan available".into() });
    }
    Ok((names, omitted))
}

/// Runs the pipeline and writes the run directory. The manifest goes last so
/// its presence marks a complete export.
pub fn execute_run(cfg: &ScenarioConfig, dir: &Path) -> Result<(RunOutput, Manifest), ExecuteError> {
    let out = run::run_scenario(cfg)?;
    io_at(dir, export::ensure_dir(dir))?;
    let stale = dir.join(export::MANIFEST_FILE);
    if stale.exists() {
        io_at(&stale, std::fs::remove_file(&stale))?;
    }
    let mut manifest = Manifest::new(cfg);
    manifest.n_trajectories = out.ensemble.trajectories.len();
    manifest.trajectory_files = io_at(dir, export::export_trajectories(&out.ensemble.trajectories, dir))?;
    let summary_path = dir.join(export::SUMMARY_FILE);
    io_at(&summary_path, export::write_json(&out.summary, &summary_path))?;
    manifest.summary_file = Some(export::SUMMARY_FILE.into());
    if cfg.output.plots {
        let (plots, omitted) = write_plots(dir, &plot_input(cfg, &out))?;
        manifest.plots = plots;
        manifest.omitted_plots = omitted;
    } else {
        manifest.omitted_plots.push(OmittedPlot { name: plot::PLOT_DIR.into(), reason: "plots disabled in configuration".into() });
    }
    manifest.all_checks_passed = Some(out.summary.all_passed());
    let manifest_path = dir.join(export::MANIFEST_FILE);
    io_at(&manifest_path, export::write_json(&manifest, &manifest_path))?;
    Ok((out, manifest))
}

/// Environment variable naming the root directory for run outputs.
pub const OUT_ENV: &str = "BOHM_MZ_OUT";

/// `--out` wins; otherwise `<root>/<run name>` where the root comes from
/// [`OUT_ENV`] when set and from the configuration otherwise.
pub fn resolve_output_dir(cfg: &ScenarioConfig, out: Option<&Path>, env_root: Option<&std::ffi::OsStr>) -> PathBuf {
    if let Some(p) = out {
        return p.to_path_buf();
    }
    let root = env_root.filter(|s| !s.is_empty()).map(PathBuf::from).unwrap_or_else(|| cfg.output.root.clone());
    root.join(cfg.run_name())
}

#[derive(Debug, thiserror::Error)]
pub enum ReplotError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{0}")]
    Core(#[from] bohm_core::Error),
    #[error(transparent)]
    Write(#[from] ExecuteError),
}

/// Regenerates the figures of an exported run from its files alone.
pub fn replot(dir: &Path) -> Result<Vec<String>, ReplotError> {
    let io = |path: PathBuf| move |source| ReplotError::Io { path, source };
    let manifest = export::read_manifest(dir).map_err(io(dir.join(export::MANIFEST_FILE)))?;
    let cfg = manifest.config;
    let scenario = bohm_core::Scenario::new(cfg.scenario_params())?;
    let trajectories = export::read_trajectories(dir).map_err(io(dir.join(export::TRAJECTORY_DIR)))?;
    let picture = bohm_core::analysis::build_projection_picture(&trajectories, 10.0 * cfg.tolerances.tol_step)?;
    let summary_path = dir.join(export::SUMMARY_FILE);
    let text = std::fs::read_to_string(&summary_path).map_err(io(summary_path.clone()))?;
    let summary: run::RunSummary = serde_json::from_str(&text).map_err(|e| ReplotError::Format { path: summary_path, message: e.to_string() })?;
    let input = plot::PlotInput {
        title: format!("{} (seed {}, n = {})", cfg.run_name(), cfg.seed, trajectories.len()),
        geometry: &scenario.geometry,
        trajectories: &trajectories,
        picture: &picture,
        fringe: summary.fringe.as_ref(),
        visibility: summary.visibility.as_ref().map(|v| v.visibility),
    };
    Ok(write_plots(dir, &input)?.0)
}

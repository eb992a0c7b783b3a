use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bohm_cli::config::{load_config, parse_scenario_kind, Overrides, ScenarioConfig};
use bohm_cli::run::{run_scenario, RunSummary};
use bohm_cli::{execute_run, replot, resolve_output_dir, OUT_ENV};
use bohm_core::analysis::ScenarioKind;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bohm-mz", version, about = "Bohmian trajectories in a Mach-Zehnder interferometer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and export trajectories, summary and figures.
    Run {
        config: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
        /// Output directory (overrides the configured root and the environment).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario and report the checks without writing files.
    Check {
        config: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Regenerate figures of an exported run directory.
    Plot { run_dir: PathBuf },
}

#[derive(Args)]
struct RunOpts {
    #[arg(long)]
    seed: Option<u64>,
    /// Ensemble size.
    #[arg(long)]
    n: Option<usize>,
    /// `simple` or `ww`.
    #[arg(long, value_parser = parse_kind)]
    scenario: Option<ScenarioKind>,
    /// Skip the grid oracle and the fringe scan.
    #[arg(long)]
    no_oracle: bool,
}

fn parse_kind(s: &str) -> Result<ScenarioKind, String> {
    parse_scenario_kind(s).ok_or_else(|| format!("unknown scenario `{s}` (expected simple or ww)"))
}

fn load(path: &Path, o: &RunOpts) -> Result<ScenarioConfig, String> {
    let overrides = Overrides { seed: o.seed, n: o.n, scenario: o.scenario, no_oracle: o.no_oracle };
    load_config(path, &overrides).map_err(|e| e.to_string())
}

fn report(summary: &RunSummary) -> ExitCode {
    for c in &summary.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let failed = summary.checks.iter().filter(|c| !c.passed).count();
    println!("{} checks, {failed} failed, {:.2} s", summary.checks.len(), summary.wall_time.as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, opts, out } => load(&config, &opts).and_then(|cfg| {
            let dir = resolve_output_dir(&cfg, out.as_deref(), std::env::var_os(OUT_ENV).as_deref());
            let (run, _) = execute_run(&cfg, &dir).map_err(|e| e.to_string())?;
            println!("run directory: {}", dir.display());
            Ok(report(&run.summary))
        }),
        Command::Check { config, opts } => load(&config, &opts).and_then(|cfg| run_scenario(&cfg).map(|r| report(&r.summary)).map_err(|e| e.to_string())),
        Command::Plot { run_dir } => replot(&run_dir).map_err(|e| e.to_string()).map(|files| {
            for f in files {
                println!("{}", run_dir.join(f).display());
            }
            ExitCode::SUCCESS
        }),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(2)
    })
}

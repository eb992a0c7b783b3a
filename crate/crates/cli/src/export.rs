//! Run directory layout:
//!
//! ```text
//! <run>/manifest.json         seed, config hash, resolved config, file list
//! <run>/summary.json          checks and diagnostics
//! <run>/trajectories/index.csv
//! <run>/trajectories/traj_00000.csv ...
//! <run>/plots/*.svg
//! ```

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use bohm_core::trajectories::{Arm, Endpoint, Trajectory, TrajectoryPoint};
use bohm_core::{Vec2, WwLabel};
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const TRAJECTORY_DIR: &str = "trajectories";
pub const INDEX_FILE: &str = "index.csv";
pub const TRAJECTORY_HEADER: &str = "t,x,y,w,vx,vy,near_node";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmittedPlot {
    pub name: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    /// Resolved configuration, defaults included.
    pub config: ScenarioConfig,
    pub n_trajectories: usize,
    pub trajectory_files: Vec<String>,
    pub summary_file: Option<String>,
    pub plots: Vec<String>,
    pub omitted_plots: Vec<OmittedPlot>,
    pub all_checks_passed: Option<bool>,
}

impl Manifest {
    pub fn new(cfg: &ScenarioConfig) -> Self {
        Self {
            tool: "bohm-mz".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: cfg.seed,
            config_hash: cfg.hash(),
            config: cfg.clone(),
            n_trajectories: 0,
            trajectory_files: Vec::new(),
            summary_file: None,
            plots: Vec::new(),
            omitted_plots: Vec::new(),
            all_checks_passed: None,
        }
    }
}

pub fn trajectory_file_name(i: usize) -> String {
    format!("traj_{i:05}.csv")
}

fn arm_str(a: Option<Arm>) -> &'static str {
    match a {
        Some(Arm::R) => "r",
        Some(Arm::T) => "t",
        None => "none",
    }
}

fn endpoint_str(e: Endpoint) -> &'static str {
    match e {
        Endpoint::D1 => "D1",
        Endpoint::D2 => "D2",
        Endpoint::Undetected => "undetected",
    }
}

pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, mut out: W) -> io::Result<()> {
    writeln!(out, "{TRAJECTORY_HEADER}")?;
    for p in &traj.points {
        writeln!(out, "{},{},{},{},{},{},{}", p.t, p.x.x, p.x.y, p.w.as_str(), p.v.x, p.v.y, u8::from(p.near_node))?;
    }
    Ok(())
}

fn bad(msg: String) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg)
}

pub fn read_trajectory_csv(text: &str) -> io::Result<Vec<TrajectoryPoint>> {
    let mut lines = text.lines();
    if lines.next() != Some(TRAJECTORY_HEADER) {
        return Err(bad("missing trajectory header".into()));
    }
    let num = |s: &str, line: usize| s.parse::<f64>().map_err(|e| bad(format!("line {line}: {e}")));
    lines
        .enumerate()
        .map(|(i, l)| {
            let line = i + 2;
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 7 {
                return Err(bad(format!("line {line}: expected 7 fields, found {}", f.len())));
            }
            Ok(TrajectoryPoint {
                t: num(f[0], line)?,
                x: Vec2::new(num(f[1], line)?, num(f[2], line)?),
                w: WwLabel::parse(f[3]).ok_or_else(|| bad(format!("line {line}: unknown label {}", f[3])))?,
                v: Vec2::new(num(f[4], line)?, num(f[5], line)?),
                near_node: f[6] == "1",
            })
        })
        .collect()
}

/// Writes one CSV per trajectory plus `index.csv` (origin arm, endpoint,
/// failure reason). Stale `traj_*.csv` files from earlier runs are removed.
pub fn export_trajectories(trajs: &[Trajectory], dir: &Path) -> io::Result<Vec<String>> {
    let tdir = dir.join(TRAJECTORY_DIR);
    fs::create_dir_all(&tdir)?;
    for entry in fs::read_dir(&tdir)? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if (name.starts_with("traj_") && name.ends_with(".csv")) || name == INDEX_FILE {
            fs::remove_file(&path)?;
        }
    }
    if trajs.is_empty() {
        return Ok(Vec::new());
    }
    let mut names = Vec::with_capacity(trajs.len() + 1);
    let mut index = BufWriter::new(fs::File::create(tdir.join(INDEX_FILE))?);
    writeln!(index, "id,file,origin_arm,endpoint,failure")?;
    for (i, tr) in trajs.iter().enumerate() {
        let name = trajectory_file_name(i);
        let mut f = BufWriter::new(fs::File::create(tdir.join(&name))?);
        write_trajectory_csv(tr, &mut f)?;
        f.flush()?;
        let failure = tr.failure.as_deref().unwrap_or("").replace([',', '\n'], ";");
        writeln!(index, "{i},{name},{},{},{failure}", arm_str(tr.origin_arm), endpoint_str(tr.endpoint))?;
        names.push(format!("{TRAJECTORY_DIR}/{name}"));
    }
    index.flush()?;
    names.insert(0, format!("{TRAJECTORY_DIR}/{INDEX_FILE}"));
    Ok(names)
}

/// Loads trajectories written by [`export_trajectories`].
pub fn read_trajectories(dir: &Path) -> io::Result<Vec<Trajectory>> {
    let tdir = dir.join(TRAJECTORY_DIR);
    let index_path = tdir.join(INDEX_FILE);
    if !index_path.exists() {
        return Ok(Vec::new());
    }
    let index = fs::read_to_string(&index_path)?;
    let mut out = Vec::new();
    for (i, line) in index.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.splitn(5, ',').collect();
        if f.len() != 5 {
            return Err(bad(format!("{}: line {}: expected 5 fields", index_path.display(), i + 1)));
        }
        let points = read_trajectory_csv(&fs::read_to_string(tdir.join(f[1]))?)?;
        if points.is_empty() {
            return Err(bad(format!("{}: no points", f[1])));
        }
        let origin_arm = match f[2] {
            "r" => Some(Arm::R),
            "t" => Some(Arm::T),
            _ => None,
        };
        let endpoint = match f[3] {
            "D1" => Endpoint::D1,
            "D2" => Endpoint::D2,
            _ => Endpoint::Undetected,
        };
        let failure = (!f[4].is_empty()).then(|| f[4].to_string());
        out.push(Trajectory { points, origin_arm, endpoint, failure });
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| bad(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)
}

pub fn read_manifest(dir: &Path) -> io::Result<Manifest> {
    let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    serde_json::from_str(&text).map_err(|e| bad(format!("{}: {e}", dir.join(MANIFEST_FILE).display())))
}

pub fn relative(dir: &Path, path: &Path) -> String {
    path.strip_prefix(dir).unwrap_or(path).to_string_lossy().replace('\\', "/")
}

pub fn ensure_dir(dir: &Path) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    Ok(dir.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(n: usize) -> Trajectory {
        Trajectory {
            points: (0..n)
                .map(|i| TrajectoryPoint { t: i as f64 * 0.1, x: Vec2::new(1.0 / 3.0, -2.5e-17 * i as f64), w: if i > 1 { WwLabel::R } else { WwLabel::None }, v: Vec2::new(7.0, 0.1), near_node: i == 2 })
                .collect(),
            origin_arm: Some(Arm::R),
            endpoint: Endpoint::D2,
            failure: None,
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let t = traj(5);
        let mut buf = Vec::new();
        write_trajectory_csv(&t, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,x,y,w,vx,vy,near_node\n"));
        assert_eq!(read_trajectory_csv(&text).unwrap(), t.points);
        assert!(read_trajectory_csv("t,x\n1,2\n").is_err());
    }

    #[test]
    fn ten_trajectories_give_ten_files_and_index() {
        let dir = tempfile::tempdir().unwrap();
        let trajs: Vec<Trajectory> = (0..10).map(|i| traj(3 + i)).collect();
        let names = export_trajectories(&trajs, dir.path()).unwrap();
        assert_eq!(names.len(), 11);
        let csvs = fs::read_dir(dir.path().join(TRAJECTORY_DIR)).unwrap().filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("traj_")).count();
        assert_eq!(csvs, 10);
        assert_eq!(read_trajectories(dir.path()).unwrap(), trajs);
        // A smaller re-export leaves no stale files behind.
        export_trajectories(&trajs[..2], dir.path()).unwrap();
        assert_eq!(read_trajectories(dir.path()).unwrap().len(), 2);
        assert_eq!(fs::read_dir(dir.path().join(TRAJECTORY_DIR)).unwrap().count(), 3);
    }

    #[test]
    fn empty_ensemble_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        assert!(export_trajectories(&[], dir.path()).unwrap().is_empty());
        assert!(read_trajectories(dir.path()).unwrap().is_empty());
    }

    proptest::proptest! {
        #[test]
        fn csv_round_trip_holds_for_any_finite_values(rows in proptest::collection::vec((-1e6f64..1e6, -1e300f64..1e300, 0u8..3, proptest::num::f64::NORMAL, proptest::bool::ANY), 1..20)) {
            let points: Vec<TrajectoryPoint> = rows
                .iter()
                .map(|&(t, x, w, v, near)| TrajectoryPoint { t, x: Vec2::new(x, -x / 3.0), w: [WwLabel::None, WwLabel::R, WwLabel::T][w as usize], v: Vec2::new(v, 1.0 / v), near_node: near })
                .collect();
            let tr = Trajectory { points, origin_arm: None, endpoint: Endpoint::Undetected, failure: None };
            let mut buf = Vec::new();
            write_trajectory_csv(&tr, &mut buf).unwrap();
            proptest::prop_assert_eq!(read_trajectory_csv(std::str::from_utf8(&buf).unwrap()).unwrap(), tr.points);
        }
    }
}

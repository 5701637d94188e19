//! Trajectory CSV files and dataset manifests.
//!
//! A trajectory file has the header `t,x` and one row `t_i,x_i` per
//! observation, with `t_i = i·dt`. Values are written in scientific notation
//! with 17 significant digits, which round-trips every `f64` exactly.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{OuError, Result};
use crate::process::{trajectory_seed, GridSpec, OUParams, SimConfig, Trajectory};

/// 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn trajectory_csv(traj: &Trajectory) -> String {
    let grid = traj.grid();
    let mut out = String::with_capacity(48 * traj.len() + 4);
    out.push_str("t,x\n");
    for (i, x) in traj.values().iter().enumerate() {
        out.push_str(&fmt_f64(grid.time(i)));
        out.push(',');
        out.push_str(&fmt_f64(*x));
        out.push('\n');
    }
    out
}

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    fs::write(path, trajectory_csv(traj))?;
    Ok(())
}

/// Parses a `t,x` file. The grid spacing is `t_1 - t_0` unless `dt` is given.
pub fn parse_trajectory(text: &str, dt: Option<f64>) -> Result<Trajectory> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "t" || &headers[1] != "x" {
        return Err(OuError::Parse(format!(
            "expected header `t,x`, found `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut ts = Vec::new();
    let mut xs = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != 2 {
            return Err(OuError::Parse(format!("row {}: expected 2 fields, found {}", line + 1, rec.len())));
        }
        let t: f64 = rec[0].parse().map_err(|_| OuError::Parse(format!("row {}: bad time `{}`", line + 1, &rec[0])))?;
        let x: f64 =
            rec[1].parse().map_err(|_| OuError::Parse(format!("row {}: bad value `{}`", line + 1, &rec[1])))?;
        ts.push(t);
        xs.push(x);
    }
    if xs.len() < 2 {
        return Err(OuError::TooShort { needed: 2, got: xs.len() });
    }
    let dt = dt.unwrap_or(ts[1] - ts[0]);
    Trajectory::from_values(xs, dt)
}

pub fn read_trajectory(path: &Path, dt: Option<f64>) -> Result<Trajectory> {
    parse_trajectory(&fs::read_to_string(path)?, dt)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub param_index: usize,
    pub traj_index: usize,
    pub seed: u64,
    pub theta: f64,
    pub sigma_sq: f64,
    pub sha256: String,
}

/// Describes a simulated dataset directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub master_seed: u64,
    pub grid: GridSpec,
    pub sim: SimConfig,
    pub params: Vec<OUParams>,
    pub count_per_params: usize,
    pub files: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes every trajectory plus `manifest.json` into `dir`. `dataset` must be
/// the output of `simulate_batch(params, grid, sim, count)`.
pub fn write_dataset(
    dir: &Path,
    dataset: &[(Trajectory, OUParams)],
    params: &[OUParams],
    grid: &GridSpec,
    sim: &SimConfig,
    count: usize,
) -> Result<Manifest> {
    if dataset.len() != params.len() * count {
        return Err(OuError::DimensionMismatch { expected: params.len() * count, got: dataset.len() });
    }
    fs::create_dir_all(dir)?;
    let mut files = Vec::with_capacity(dataset.len());
    for (k, (traj, p)) in dataset.iter().enumerate() {
        let (pi, ti) = (k / count, k % count);
        let name = format!("traj_p{pi}_{ti:05}.csv");
        let text = trajectory_csv(traj);
        fs::write(dir.join(&name), &text)?;
        files.push(ManifestEntry {
            file: name,
            param_index: pi,
            traj_index: ti,
            seed: trajectory_seed(sim.seed, p, ti),
            theta: p.theta(),
            sigma_sq: p.sigma_sq(),
            sha256: sha256_hex(text.as_bytes()),
        });
    }
    let manifest = Manifest {
        master_seed: sim.seed,
        grid: *grid,
        sim: *sim,
        params: params.to_vec(),
        count_per_params: count,
        files,
    };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    Ok(serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?)
}

/// One input path, loaded or not.
#[derive(Debug)]
pub struct LoadedPath {
    pub path: PathBuf,
    pub truth: Option<OUParams>,
    pub trajectory: Result<Trajectory>,
}

/// Loads the trajectories of a dataset directory. With a manifest, files are
/// taken in manifest order, labeled, and checked against their checksums;
/// without one, every `*.csv` file is taken in name order. Per-file failures
/// are returned in place rather than aborting the whole load.
pub fn load_paths(dir: &Path, dt: Option<f64>) -> Result<Vec<LoadedPath>> {
    if dir.join(MANIFEST_FILE).exists() {
        let m = read_manifest(dir)?;
        let dt = dt.or(Some(m.grid.dt));
        return Ok(m
            .files
            .iter()
            .map(|e| {
                let path = dir.join(&e.file);
                let trajectory = fs::read(&path).map_err(OuError::from).and_then(|bytes| {
                    if sha256_hex(&bytes) != e.sha256 {
                        return Err(OuError::Parse(format!("{}: checksum mismatch", e.file)));
                    }
                    let text = String::from_utf8(bytes).map_err(|_| OuError::Parse("not UTF-8".into()))?;
                    parse_trajectory(&text, dt)
                });
                LoadedPath { truth: OUParams::new(e.theta, e.sigma_sq).ok(), path, trajectory }
            })
            .collect());
    }
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    entries.sort();
    Ok(entries
        .into_iter()
        .map(|path| {
            let trajectory = read_trajectory(&path, dt);
            LoadedPath { path, truth: None, trajectory }
        })
        .collect())
}

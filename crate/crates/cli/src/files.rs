//! On-disk formats: CSV pools and densities, the PDE field, and the run manifest.
//!
//! Numbers are written with 17 significant digits so they read back to the
//! same `f64`. Every file is written to a temporary sibling and renamed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use cqrt_core::fpe::{FpGrid, FpSolution, VelocityCap};
use cqrt_core::sde::{Crossing, EnsembleDiagnostics, SimulationConfig, Trajectory};
use cqrt_core::stats::EmpiricalDensity;
use cqrt_core::wavefield::ComplexPoint;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const CROSSINGS_HEADER: &str = "traj_id,t,x";
pub const POINTS_HEADER: &str = "traj_id,t,x,y";
pub const DENSITY_HEADER: &str = "bin_center,density,stderr";

/// Decimal with 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

/// First 16 hex digits of SHA-256 over `command` and the canonical JSON of `config`.
pub fn run_id<T: Serialize>(command: &str, config: &T) -> String {
    let json = serde_json::to_string(config).expect("config serialises");
    let digest = Sha256::new()
        .chain_update(command.as_bytes())
        .chain_update([0u8])
        .chain_update(json.as_bytes())
        .finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

pub fn crossings_csv(trajectories: &[Trajectory]) -> String {
    let mut s = String::from(CROSSINGS_HEADER);
    s.push('\n');
    for t in trajectories {
        for c in &t.crossings {
            let _ = writeln!(s, "{},{},{}", t.id, num(c.t), num(c.x));
        }
    }
    s
}

/// Rows `traj_id,t,x,y` for the recorded points selected by `keep(t)`.
pub fn points_csv(trajectories: &[Trajectory], keep: impl Fn(f64) -> bool) -> String {
    let mut s = String::from(POINTS_HEADER);
    s.push('\n');
    for t in trajectories {
        for (time, z) in t.times.iter().zip(&t.points) {
            if keep(*time) {
                let _ = writeln!(s, "{},{},{},{}", t.id, num(*time), num(z.re), num(z.im));
            }
        }
    }
    s
}

pub fn density_csv(density: &EmpiricalDensity) -> String {
    let mut s = String::from(DENSITY_HEADER);
    s.push('\n');
    for ((c, d), e) in density.centers().iter().zip(&density.densities).zip(&density.stderr) {
        let _ = writeln!(s, "{},{},{}", num(*c), num(*d), num(*e));
    }
    s
}

/// Header `y\x,<x centres>`, then one row per y centre.
pub fn field_csv(solution: &FpSolution) -> String {
    let g = solution.grid;
    let mut s = String::from("y\\x");
    for i in 0..g.nx {
        s.push(',');
        s.push_str(&num(g.x_center(i)));
    }
    s.push('\n');
    for j in 0..g.ny {
        s.push_str(&num(g.y_center(j)));
        for i in 0..g.nx {
            s.push(',');
            s.push_str(&num(solution.at(i, j)));
        }
        s.push('\n');
    }
    s
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Data rows of a CSV with the expected header, split into fields.
fn rows<'a>(
    path: &'a Path,
    text: &'a str,
    header: &'a str,
) -> Result<impl Iterator<Item = (usize, Vec<&'a str>)> + 'a, CliError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == header => {}
        _ => return Err(CliError::malformed(path, 1, format!("expected header '{header}'"))),
    }
    let width = header.split(',').count();
    let mut out = Vec::new();
    for (k, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width {
            return Err(CliError::malformed(path, k + 2, format!("expected {width} fields")));
        }
        out.push((k + 2, fields));
    }
    Ok(out.into_iter())
}

fn field<T: std::str::FromStr>(path: &Path, line: usize, s: &str) -> Result<T, CliError> {
    s.trim()
        .parse()
        .map_err(|_| CliError::malformed(path, line, format!("cannot parse '{s}'")))
}

/// Reads a density file; bin edges are rebuilt from the (uniform) centres.
pub fn read_density(path: &Path) -> Result<EmpiricalDensity, CliError> {
    let text = read_text(path)?;
    let (mut centers, mut densities, mut stderr) = (Vec::new(), Vec::new(), Vec::new());
    for (line, f) in rows(path, &text, DENSITY_HEADER)? {
        centers.push(field::<f64>(path, line, f[0])?);
        densities.push(field::<f64>(path, line, f[1])?);
        stderr.push(field::<f64>(path, line, f[2])?);
    }
    if centers.len() < 2 {
        return Err(CliError::malformed(path, 1, "need at least two bins"));
    }
    let width = (centers[centers.len() - 1] - centers[0]) / (centers.len() - 1) as f64;
    if width.is_nan() || width <= 0.0 {
        return Err(CliError::malformed(path, 2, "bin centres must increase"));
    }
    let lo = centers[0] - 0.5 * width;
    let edges = (0..=centers.len()).map(|k| lo + k as f64 * width).collect();
    let mut density = EmpiricalDensity::from_values(edges, densities);
    density.stderr = stderr;
    Ok(density)
}

fn trajectory(id: usize) -> Trajectory {
    Trajectory {
        id,
        times: Vec::new(),
        points: Vec::new(),
        crossings: Vec::new(),
        capped_steps: 0,
    }
}

/// Crossing rows regrouped into trajectories `0..count`.
pub fn read_crossings(path: &Path, count: usize) -> Result<Vec<Trajectory>, CliError> {
    let text = read_text(path)?;
    let mut out: Vec<Trajectory> = (0..count).map(trajectory).collect();
    for (line, f) in rows(path, &text, CROSSINGS_HEADER)? {
        let id: usize = field(path, line, f[0])?;
        let slot = out
            .get_mut(id)
            .ok_or_else(|| CliError::malformed(path, line, format!("trajectory {id} out of range")))?;
        slot.crossings.push(Crossing {
            t: field(path, line, f[1])?,
            x: field(path, line, f[2])?,
        });
    }
    Ok(out)
}

/// Point rows regrouped into trajectories `0..count`.
pub fn read_points(path: &Path, count: usize) -> Result<Vec<Trajectory>, CliError> {
    let text = read_text(path)?;
    let mut out: Vec<Trajectory> = (0..count).map(trajectory).collect();
    for (line, f) in rows(path, &text, POINTS_HEADER)? {
        let id: usize = field(path, line, f[0])?;
        let slot = out
            .get_mut(id)
            .ok_or_else(|| CliError::malformed(path, line, format!("trajectory {id} out of range")))?;
        slot.times.push(field(path, line, f[1])?);
        slot.points.push(ComplexPoint::new(field(path, line, f[2])?, field(path, line, f[3])?));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpeRun {
    pub n: u32,
    pub grid: FpGrid,
    pub t_final: f64,
    pub cap: VelocityCap,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunDiagnostics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleDiagnostics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub capped_cells: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clipped_mass: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mass_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pde_steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Arguments that reproduce the run exactly.
    pub argv: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fpe: Option<FpeRun>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    pub wall_seconds: f64,
    pub diagnostics: RunDiagnostics,
    /// Output files by role, relative to the manifest's directory.
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str, run_id: String, argv: Vec<String>) -> Self {
        RunManifest {
            run_id,
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            argv,
            simulation: None,
            fpe: None,
            master_seed: None,
            wall_seconds: 0.0,
            diagnostics: RunDiagnostics::default(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn file_name(run_id: &str) -> String {
        format!("{run_id}.manifest.json")
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join(Self::file_name(&self.run_id));
        let mut json = serde_json::to_string_pretty(self).expect("manifest serialises");
        json.push('\n');
        write_atomic(&path, json.as_bytes())?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = read_text(path)?;
        serde_json::from_str(&text).map_err(|e| CliError::malformed(path, e.line(), e.to_string()))
    }

    /// Path of the output registered under `role`, resolved next to `manifest_path`.
    pub fn output(&self, manifest_path: &Path, role: &str) -> Option<PathBuf> {
        let dir = manifest_path.parent().unwrap_or(Path::new("."));
        self.outputs.get(role).map(|name| dir.join(name))
    }
}

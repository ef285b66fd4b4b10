use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cqrt_core::wavefield::{eigenstate_peaks, ComplexPoint, ModelSpec};

use crate::error::{usage, CliError};

#[derive(Debug, Parser)]
#[command(
    name = "cqrt",
    version,
    about = "Complex quantum random trajectories: simulate ensembles, build point-set densities, solve the Fokker-Planck equation and plot"
)]
pub struct Cli {
    /// Worker threads (0 = one per core). Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate an ensemble and write crossing, snapshot and path pools.
    Simulate(SimulateArgs),
    /// Histogram a point set from a simulation run and score it against a reference.
    Analyze(AnalyzeArgs),
    /// Solve the Fokker-Planck equation for an eigenstate.
    Fpe(FpeArgs),
    /// Render density files and reference curves as SVG.
    Plot(PlotArgs),
    /// Correlate a density file with another density or a reference.
    Compare(CompareArgs),
}

/// Every flag may also come from `--config`, one `key=value` per line with
/// the flag's long name as key. Flags win.
#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `eigenstate:N` or `gaussian:p0=V[,drift=exact|simplified]`.
    #[arg(long)]
    pub model: Option<String>,
    /// Launch points `x,y` separated by `;`; `±` expands a component, `peaks`
    /// uses the maxima of |ψ_n|².
    #[arg(long, allow_hyphen_values = true)]
    pub init: Option<String>,
    /// Number of trajectories.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// Final time.
    #[arg(long = "t")]
    pub t: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated snapshot times.
    #[arg(long)]
    pub snapshots: Option<String>,
    #[arg(long)]
    pub drift_cap: Option<f64>,
    /// Also write every step of every path (needed for point set B).
    #[arg(long)]
    pub trajectories: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PointSet {
    A,
    B,
    Snapshot,
}

impl PointSet {
    pub fn label(self) -> &'static str {
        match self {
            PointSet::A => "set_a",
            PointSet::B => "set_b",
            PointSet::Snapshot => "snapshot",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum ReferenceKind {
    QuantumEigenstate,
    QuantumGaussian,
    Classical,
}

impl ReferenceKind {
    pub fn label(self) -> &'static str {
        match self {
            ReferenceKind::QuantumEigenstate => "quantum_eigenstate",
            ReferenceKind::QuantumGaussian => "quantum_gaussian",
            ReferenceKind::Classical => "classical",
        }
    }
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Manifest written by `simulate`.
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long, value_enum)]
    pub set: PointSet,
    /// Time window `t_min,t_max` (default: the whole run).
    #[arg(long, allow_hyphen_values = true)]
    pub window: Option<String>,
    /// Snapshot time (default: the final time).
    #[arg(long)]
    pub time: Option<f64>,
    /// Defaults to the quantum density of the run's model.
    #[arg(long, value_enum)]
    pub reference: Option<ReferenceKind>,
    #[arg(long)]
    pub bins: Option<usize>,
    /// Histogram range `lo,hi`.
    #[arg(long, allow_hyphen_values = true)]
    pub range: Option<String>,
    /// Output directory (default: next to the manifest).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FpeArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Eigenstate index.
    #[arg(long)]
    pub n: Option<u32>,
    /// Half-width of the square domain.
    #[arg(long = "L")]
    pub half_width: Option<f64>,
    /// Grid lines per axis; the solver uses `grid − 1` cells.
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long = "t")]
    pub t: Option<f64>,
    /// PDE time step (default: half the stability limit).
    #[arg(long)]
    pub dt: Option<f64>,
    /// Drift cap shared with the trajectory integrator.
    #[arg(long)]
    pub drift_cap: Option<f64>,
    /// Trajectory step the cap refers to.
    #[arg(long)]
    pub sde_dt: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Density CSV files (`bin_center,density,stderr`), drawn as markers.
    #[arg(long = "density")]
    pub densities: Vec<PathBuf>,
    /// Analytic curves to overlay; needs `--model`.
    #[arg(long = "reference", value_enum)]
    pub references: Vec<ReferenceKind>,
    #[arg(long)]
    pub model: Option<String>,
    /// Time for the Gaussian packet density.
    #[arg(long)]
    pub time: Option<f64>,
    /// x range `lo,hi` (default: the first density's range, else the model's).
    #[arg(long, allow_hyphen_values = true)]
    pub range: Option<String>,
    #[arg(long)]
    pub title: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Density CSV to score.
    pub density: PathBuf,
    /// Second density CSV, interpolated onto the first one's bins.
    pub other: Option<PathBuf>,
    #[arg(long, value_enum, conflicts_with = "other")]
    pub reference: Option<ReferenceKind>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub time: Option<f64>,
    /// Write the report as JSON here as well as to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// `key=value` lines; blank lines and `#` comments are skipped.
pub fn read_config(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut map = BTreeMap::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::malformed(path, k + 1, "expected key=value"))?;
        map.insert(key.trim().replace('_', "-"), value.trim().to_string());
    }
    Ok(map)
}

/// Flag values layered over a config file.
pub struct Layered {
    file: BTreeMap<String, String>,
}

impl Layered {
    pub fn new(config: Option<&Path>, known: &[&str]) -> Result<Self, CliError> {
        let file = match config {
            Some(path) => read_config(path)?,
            None => BTreeMap::new(),
        };
        if let Some(key) = file.keys().find(|k| !known.contains(&k.as_str())) {
            return Err(usage(format!("unknown config key '{key}'")));
        }
        Ok(Layered { file })
    }

    pub fn get<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.file.get(key) {
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| usage(format!("config key '{key}': cannot parse '{raw}'"))),
            None => Ok(None),
        }
    }

    pub fn flag(&self, flag: bool, key: &str) -> Result<bool, CliError> {
        Ok(flag || self.get::<bool>(None, key)?.unwrap_or(false))
    }
}

pub fn parse_model(s: &str) -> Result<ModelSpec, CliError> {
    s.parse().map_err(|e| usage(format!("--model: {e}")))
}

fn parse_f64(s: &str, what: &str) -> Result<f64, CliError> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| usage(format!("{what}: '{s}' is not a number")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(usage(format!("{what}: '{s}' is not finite")))
    }
}

/// Comma-separated numbers.
pub fn parse_list(s: &str, what: &str) -> Result<Vec<f64>, CliError> {
    s.split(',').map(|p| parse_f64(p, what)).collect()
}

pub fn parse_pair(s: &str, what: &str) -> Result<(f64, f64), CliError> {
    match parse_list(s, what)?.as_slice() {
        &[a, b] => Ok((a, b)),
        _ => Err(usage(format!("{what}: expected two numbers 'a,b', got '{s}'"))),
    }
}

/// `±v` gives `[v, −v]`; anything else one value.
fn signed_component(s: &str, what: &str) -> Result<Vec<f64>, CliError> {
    let s = s.trim();
    let rest = s.strip_prefix('±').or_else(|| s.strip_prefix("+-"));
    match rest {
        Some(r) => {
            let v = parse_f64(r, what)?;
            Ok(vec![v, -v])
        }
        None => Ok(vec![parse_f64(s, what)?]),
    }
}

/// Launch points: `x,y` items separated by `;`, where either component may
/// carry `±`; a bare `x` means `y = 0`. `peaks` picks the maxima of |ψ_n|².
pub fn parse_init(s: &str, model: &ModelSpec) -> Result<Vec<ComplexPoint>, CliError> {
    if s.trim() == "peaks" {
        return match model {
            ModelSpec::Eigenstate { n } => Ok(eigenstate_peaks(*n)
                .into_iter()
                .map(|x| ComplexPoint::new(x, 0.0))
                .collect()),
            _ => Err(usage("--init peaks needs an eigenstate model")),
        };
    }
    let mut points = Vec::new();
    for item in s.split(';').map(str::trim).filter(|i| !i.is_empty()) {
        let (xs, ys) = match item.split_once(',') {
            Some((x, y)) => (signed_component(x, "--init")?, signed_component(y, "--init")?),
            None => (signed_component(item, "--init")?, vec![0.0]),
        };
        for &x in &xs {
            for &y in &ys {
                points.push(ComplexPoint::new(x, y));
            }
        }
    }
    if points.is_empty() {
        return Err(usage("--init: no launch points"));
    }
    Ok(points)
}

/// The inverse of [`parse_init`] for explicit points (shortest round-trip decimals).
pub fn format_init(points: &[ComplexPoint]) -> String {
    points
        .iter()
        .map(|p| format!("{},{}", p.re, p.im))
        .collect::<Vec<_>>()
        .join(";")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> ComplexPoint {
        ComplexPoint::new(re, im)
    }

    #[test]
    fn init_expands_signs() {
        let m = ModelSpec::eigenstate(1);
        assert_eq!(parse_init("±0.95,0", &m).unwrap(), vec![c(0.95, 0.0), c(-0.95, 0.0)]);
        assert_eq!(
            parse_init("±1,0;±2,0;0,0", &m).unwrap(),
            vec![c(1.0, 0.0), c(-1.0, 0.0), c(2.0, 0.0), c(-2.0, 0.0), c(0.0, 0.0)]
        );
        assert_eq!(parse_init("+-1,±2", &m).unwrap().len(), 4);
        assert_eq!(parse_init("-0.5", &m).unwrap(), vec![c(-0.5, 0.0)]);
        assert!(parse_init("a,b", &m).is_err());
        assert!(parse_init(" ; ", &m).is_err());
    }

    #[test]
    fn init_peaks() {
        let pts = parse_init("peaks", &ModelSpec::eigenstate(1)).unwrap();
        assert_eq!(pts.len(), 2);
        assert!((pts[1].re - 1.0).abs() < 1e-12);
        assert!(parse_init("peaks", &ModelSpec::gaussian(1.0)).is_err());
    }

    #[test]
    fn init_round_trips() {
        let pts = vec![c(0.1 + 0.2, -1e-300), c(-3.0, 2.5)];
        assert_eq!(parse_init(&format_init(&pts), &ModelSpec::eigenstate(0)).unwrap(), pts);
    }

    #[test]
    fn lists_and_pairs() {
        assert_eq!(parse_list("1, 2,3", "x").unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(parse_pair("-5,5", "x").unwrap(), (-5.0, 5.0));
        assert!(parse_pair("1", "x").is_err());
        assert!(parse_list("1,inf", "x").is_err());
    }
}

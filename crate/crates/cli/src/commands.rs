use std::path::{Path, PathBuf};
use std::time::Instant;

use cqrt_core::fpe::{drift_field, fp_marginal_x, fp_solve, FpGrid, VelocityCap, DEFAULT_HALF_WIDTH};
use cqrt_core::sde::{
    simulate_ensemble, Ensemble, EnsembleDiagnostics, RecordMode, SimulationConfig, DEFAULT_DRIFT_CAP,
    DEFAULT_DT,
};
use cqrt_core::stats::{
    build_density, eigenstate_binning, extract_point_set_a, extract_point_set_b, gaussian_binning,
    pearson, pearson_vectors, snapshot_positions, ClassicalDensity, ComparisonReport,
    EigenstateDensity, EmpiricalDensity, GaussianDensity, Reference,
};
use cqrt_core::wavefield::ModelSpec;
use serde::Serialize;

use crate::args::{
    format_init, parse_init, parse_list, parse_model, parse_pair, AnalyzeArgs, CompareArgs, FpeArgs,
    Layered, PlotArgs, PointSet, ReferenceKind, SimulateArgs,
};
use crate::error::{usage, CliError};
use crate::files::{
    crossings_csv, density_csv, field_csv, points_csv, read_crossings, read_density, read_points,
    run_id, write_atomic, FpeRun, RunManifest,
};
use crate::svg::{self, Plot, Series, Style};

const SIMULATE_KEYS: &[&str] = &[
    "model", "init", "n", "dt", "t", "seed", "snapshots", "drift-cap", "trajectories", "out",
];
const FPE_KEYS: &[&str] = &["n", "L", "grid", "t", "dt", "drift-cap", "sde-dt", "out"];

pub const DEFAULT_TRAJECTORIES: usize = 100_000;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_GRID_LINES: usize = 201;
const CURVE_POINTS: usize = 400;

fn out_dir(out: Option<PathBuf>) -> PathBuf {
    out.unwrap_or_else(|| PathBuf::from("."))
}

fn write_output(dir: &Path, name: String, contents: &str) -> Result<String, CliError> {
    write_atomic(&dir.join(&name), contents.as_bytes())?;
    Ok(name)
}

pub fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let cfg = Layered::new(args.config.as_deref(), SIMULATE_KEYS)?;
    let model_text: String = cfg
        .get(args.model, "model")?
        .ok_or_else(|| usage("--model is required"))?;
    let model = parse_model(&model_text)?;
    let init: String = cfg.get(args.init, "init")?.unwrap_or_else(|| "0,0".into());
    let points = parse_init(&init, &model)?;
    let count = cfg.get(args.n, "n")?.unwrap_or(DEFAULT_TRAJECTORIES);
    let dt = cfg.get(args.dt, "dt")?.unwrap_or(DEFAULT_DT);
    let t_final = cfg.get(args.t, "t")?.unwrap_or(1.0);
    let seed = cfg.get(args.seed, "seed")?.unwrap_or(DEFAULT_SEED);
    let drift_cap = cfg.get(args.drift_cap, "drift-cap")?.unwrap_or(DEFAULT_DRIFT_CAP);
    let snapshots = match cfg.get::<String>(args.snapshots, "snapshots")? {
        Some(s) => parse_list(&s, "--snapshots")?,
        None => Vec::new(),
    };
    let keep_paths = cfg.flag(args.trajectories, "trajectories")?;
    let dir = out_dir(cfg.get(args.out, "out")?);

    let mut config = SimulationConfig::new(model, points, count, t_final)
        .with_dt(dt)
        .with_seed(seed)
        .with_drift_cap(drift_cap);
    config.validate()?;
    let final_time = config.effective_t_final();
    let mut wanted = snapshots.clone();
    wanted.push(final_time);
    config.record_mode = if keep_paths {
        RecordMode::FullPath
    } else if snapshots.is_empty() {
        RecordMode::CrossingsAndFinal
    } else {
        RecordMode::SnapshotTimes(wanted.clone())
    };

    let ensemble = simulate_ensemble(&config)?;
    let id = run_id("simulate", &config);

    let mut manifest = RunManifest::new("simulate", id.clone(), simulate_argv(&config, &snapshots, keep_paths));
    let crossings = write_output(&dir, format!("{id}.crossings.csv"), &crossings_csv(&ensemble.trajectories))?;
    manifest.outputs.insert("crossings".into(), crossings);
    let snapshot_steps: Vec<usize> = wanted.iter().filter_map(|t| config.step_index(*t)).collect();
    let at_snapshot = |t: f64| config.step_index(t).is_some_and(|k| snapshot_steps.contains(&k));
    let snaps = write_output(&dir, format!("{id}.snapshots.csv"), &points_csv(&ensemble.trajectories, at_snapshot))?;
    manifest.outputs.insert("snapshots".into(), snaps);
    if keep_paths {
        let paths = write_output(&dir, format!("{id}.paths.csv"), &points_csv(&ensemble.trajectories, |_| true))?;
        manifest.outputs.insert("paths".into(), paths);
    }
    manifest.master_seed = Some(seed);
    manifest.diagnostics.ensemble = Some(ensemble.diagnostics.clone());
    manifest.simulation = Some(config);
    manifest.wall_seconds = start.elapsed().as_secs_f64();
    let path = manifest.write(&dir)?;

    let crossing_count: usize = ensemble.trajectories.iter().map(|t| t.crossings.len()).sum();
    println!(
        "run {id}: {} trajectories, {crossing_count} crossings, {} diverged, {} capped steps -> {}",
        ensemble.trajectories.len(),
        ensemble.diagnostics.diverged.len(),
        ensemble.diagnostics.capped_steps,
        path.display()
    );
    Ok(())
}

fn simulate_argv(config: &SimulationConfig, snapshots: &[f64], keep_paths: bool) -> Vec<String> {
    let mut argv: Vec<String> = vec![
        "simulate".into(),
        "--model".into(),
        config.model.to_string(),
        "--init".into(),
        format_init(&config.initial_points),
        "--n".into(),
        config.n_trajectories.to_string(),
        "--dt".into(),
        config.dt.to_string(),
        "--t".into(),
        config.t_final.to_string(),
        "--seed".into(),
        config.master_seed.to_string(),
        "--drift-cap".into(),
        config.drift_cap.to_string(),
    ];
    if !snapshots.is_empty() {
        argv.push("--snapshots".into());
        argv.push(snapshots.iter().map(f64::to_string).collect::<Vec<_>>().join(","));
    }
    if keep_paths {
        argv.push("--trajectories".into());
    }
    argv
}

pub fn reference(
    kind: ReferenceKind,
    model: &ModelSpec,
    t: Option<f64>,
) -> Result<Box<dyn Reference>, CliError> {
    match (kind, model) {
        (ReferenceKind::QuantumEigenstate, ModelSpec::Eigenstate { n }) => {
            Ok(Box::new(EigenstateDensity { n: *n }))
        }
        (ReferenceKind::Classical, ModelSpec::Eigenstate { n }) => Ok(Box::new(ClassicalDensity { n: *n })),
        (ReferenceKind::QuantumGaussian, ModelSpec::GaussianPacket { p0, .. }) => {
            let t = t.ok_or_else(|| usage("the Gaussian packet density needs a time (--time)"))?;
            Ok(Box::new(GaussianDensity { p0: *p0, t }))
        }
        _ => Err(usage(format!("reference {} does not apply to model {model}", kind.label()))),
    }
}

fn default_reference(model: &ModelSpec) -> ReferenceKind {
    match model {
        ModelSpec::Eigenstate { .. } => ReferenceKind::QuantumEigenstate,
        ModelSpec::GaussianPacket { .. } => ReferenceKind::QuantumGaussian,
    }
}

fn default_binning(model: &ModelSpec, t: f64) -> (usize, (f64, f64)) {
    match model {
        ModelSpec::Eigenstate { n } => eigenstate_binning(*n),
        ModelSpec::GaussianPacket { p0, .. } => gaussian_binning(*p0, t),
    }
}

#[derive(Serialize)]
struct AnalysisReport<'a> {
    run_id: &'a str,
    point_set: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    window: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    time: Option<f64>,
    out_of_range: u64,
    #[serde(flatten)]
    comparison: &'a ComparisonReport,
}

pub fn analyze(args: AnalyzeArgs) -> Result<(), CliError> {
    let manifest = RunManifest::read(&args.run)?;
    let mut config = manifest
        .simulation
        .clone()
        .ok_or_else(|| usage(format!("{} is not a simulate manifest", args.run.display())))?;
    let count = config.n_trajectories;
    let role = match args.set {
        PointSet::A => "crossings",
        PointSet::B => "paths",
        PointSet::Snapshot => "snapshots",
    };
    let input = manifest.output(&args.run, role).ok_or_else(|| {
        usage(match args.set {
            PointSet::B => "the run kept no paths; rerun simulate with --trajectories".to_string(),
            _ => format!("the manifest lists no {role} file"),
        })
    })?;
    let trajectories = match args.set {
        PointSet::A => read_crossings(&input, count)?,
        _ => read_points(&input, count)?,
    };
    if args.set == PointSet::B {
        config.record_mode = RecordMode::FullPath;
    }
    let t_final = config.effective_t_final();
    let model = config.model;
    let ensemble = Ensemble {
        config,
        trajectories,
        diagnostics: EnsembleDiagnostics::default(),
    };

    let window = match &args.window {
        Some(w) => parse_pair(w, "--window")?,
        None => (0.0, t_final),
    };
    let time = args.time.unwrap_or(t_final);
    let (samples, window, time) = match args.set {
        PointSet::A => (extract_point_set_a(&ensemble, window)?, Some(window), None),
        PointSet::B => (extract_point_set_b(&ensemble, window)?, Some(window), None),
        PointSet::Snapshot => (snapshot_positions(&ensemble, time)?, None, Some(time)),
    };
    let kind = args.reference.unwrap_or_else(|| default_reference(&model));
    let reference_time = time.unwrap_or(t_final);
    let reference = reference(kind, &model, Some(reference_time))?;
    let (mut bins, mut range) = default_binning(&model, reference_time);
    if let Some(b) = args.bins {
        bins = b;
    }
    if let Some(r) = &args.range {
        range = parse_pair(r, "--range")?;
    }
    let density = build_density(&samples, bins, range)?;
    let comparison = pearson(&density, reference.as_ref())?;

    let dir = match args.out {
        Some(d) => d,
        None => args.run.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(".")),
    };
    let stem = format!("{}.{}", manifest.run_id, args.set.label());
    write_output(&dir, format!("{stem}.density.csv"), &density_csv(&density))?;
    let report = AnalysisReport {
        run_id: &manifest.run_id,
        point_set: args.set.label(),
        window,
        time,
        out_of_range: density.out_of_range,
        comparison: &comparison,
    };
    let mut json = serde_json::to_string_pretty(&report).expect("report serialises");
    json.push('\n');
    write_output(&dir, format!("{stem}.{}.report.json", kind.label()), &json)?;
    println!(
        "Γ = {:.6} ({} vs {}, {} samples, {} out of range) -> {}",
        comparison.gamma,
        args.set.label(),
        comparison.reference_name,
        density.sample_count,
        density.out_of_range,
        dir.join(format!("{stem}.density.csv")).display()
    );
    Ok(())
}

pub fn fpe(args: FpeArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let cfg = Layered::new(args.config.as_deref(), FPE_KEYS)?;
    let n: u32 = cfg.get(args.n, "n")?.ok_or_else(|| usage("--n is required"))?;
    let half_width = cfg.get(args.half_width, "L")?.unwrap_or(DEFAULT_HALF_WIDTH);
    let lines = cfg.get(args.grid, "grid")?.unwrap_or(DEFAULT_GRID_LINES);
    let t_final = cfg.get(args.t, "t")?.unwrap_or(1.0);
    let dt = cfg.get(args.dt, "dt")?;
    let cap = VelocityCap {
        drift_cap: cfg.get(args.drift_cap, "drift-cap")?.unwrap_or(DEFAULT_DRIFT_CAP),
        sde_dt: cfg.get(args.sde_dt, "sde-dt")?.unwrap_or(DEFAULT_DT),
    };
    let dir = out_dir(cfg.get(args.out, "out")?);
    if lines < 3 {
        return Err(usage("--grid needs at least 3 lines"));
    }
    if !(cap.drift_cap > 0.0 && cap.sde_dt > 0.0) {
        return Err(usage("--drift-cap and --sde-dt must be positive"));
    }
    let cells = lines - 1;
    if cells % 2 == 1 {
        return Err(usage(format!(
            "--grid {lines} gives {cells} cells per axis and puts a cell centre on the origin; use an odd number of grid lines"
        )));
    }
    let model = ModelSpec::eigenstate(n);
    let grid = match dt {
        Some(dt) => FpGrid::new(half_width, cells, cells, dt)?,
        None => FpGrid::with_stable_dt(half_width, cells, &model, cap)?,
    };
    let run = FpeRun {
        n,
        grid,
        t_final,
        cap,
    };
    let id = run_id("fpe", &run);
    let solution = fp_solve(&model, &grid, t_final, cap)?;
    let marginal = fp_marginal_x(&solution)?;
    let capped_cells = drift_field(&model, &grid, cap)?.capped_cells;

    let argv = vec![
        "fpe".into(),
        "--n".into(),
        n.to_string(),
        "--L".into(),
        half_width.to_string(),
        "--grid".into(),
        lines.to_string(),
        "--t".into(),
        t_final.to_string(),
        "--dt".into(),
        grid.dt.to_string(),
        "--drift-cap".into(),
        cap.drift_cap.to_string(),
        "--sde-dt".into(),
        cap.sde_dt.to_string(),
    ];
    let mut manifest = RunManifest::new("fpe", id.clone(), argv);
    let field = write_output(&dir, format!("{id}.field.csv"), &field_csv(&solution))?;
    manifest.outputs.insert("field".into(), field);
    let marginal_name = write_output(&dir, format!("{id}.marginal.csv"), &density_csv(&marginal))?;
    manifest.outputs.insert("marginal".into(), marginal_name);
    manifest.diagnostics.capped_cells = Some(capped_cells);
    manifest.diagnostics.clipped_mass = Some(solution.clipped_mass);
    manifest.diagnostics.mass_loss = Some(solution.mass_loss());
    manifest.diagnostics.pde_steps = Some(solution.steps);
    manifest.fpe = Some(run);
    manifest.wall_seconds = start.elapsed().as_secs_f64();
    let path = manifest.write(&dir)?;
    println!(
        "run {id}: n={n}, {cells}x{cells} cells, {} steps to t={t_final}, mass {:.6} (initial {:.6}), clipped {:.3e} -> {}",
        solution.steps,
        solution.total_mass,
        solution.initial_mass,
        solution.clipped_mass,
        path.display()
    );
    Ok(())
}

pub fn compare(args: CompareArgs) -> Result<(), CliError> {
    let density = read_density(&args.density)?;
    let report = match (&args.other, args.reference) {
        (Some(other), _) => pearson(&density, &read_density(other)?)?,
        (None, Some(kind)) => {
            let model = parse_model(args.model.as_deref().ok_or_else(|| usage("--reference needs --model"))?)?;
            pearson(&density, reference(kind, &model, args.time)?.as_ref())?
        }
        (None, None) => return Err(usage("compare needs a second density file or --reference")),
    };
    let mut json = serde_json::to_string_pretty(&report).expect("report serialises");
    json.push('\n');
    if let Some(out) = &args.out {
        write_atomic(out, json.as_bytes())?;
    }
    print!("{json}");
    Ok(())
}

fn stem(path: &Path) -> String {
    path.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Reference values on `CURVE_POINTS` small bins across `range`.
fn sample_curve(reference: &dyn Reference, (lo, hi): (f64, f64)) -> (Vec<f64>, Vec<f64>) {
    let h = (hi - lo) / CURVE_POINTS as f64;
    (0..CURVE_POINTS)
        .map(|k| {
            let a = lo + k as f64 * h;
            (a + 0.5 * h, reference.bin_value(a, a + h))
        })
        .unzip()
}

pub fn plot(args: PlotArgs) -> Result<(), CliError> {
    if args.densities.is_empty() && args.references.is_empty() {
        return Err(usage("plot needs at least one --density or --reference"));
    }
    let densities: Vec<(String, EmpiricalDensity)> = args
        .densities
        .iter()
        .map(|p| Ok((stem(p), read_density(p)?)))
        .collect::<Result<_, CliError>>()?;
    let model = args.model.as_deref().map(parse_model).transpose()?;
    let references: Vec<Box<dyn Reference>> = args
        .references
        .iter()
        .map(|k| {
            let m = model.as_ref().ok_or_else(|| usage("--reference needs --model"))?;
            reference(*k, m, args.time)
        })
        .collect::<Result<_, CliError>>()?;
    let range = match (&args.range, densities.first(), &model) {
        (Some(r), _, _) => parse_pair(r, "--range")?,
        (None, Some((_, d)), _) => d.range(),
        (None, None, Some(m)) => default_binning(m, args.time.unwrap_or(0.0)).1,
        (None, None, None) => unreachable!("references imply a model"),
    };

    let mut series = Vec::new();
    for (name, d) in &densities {
        series.push(Series {
            name: name.clone(),
            xs: d.centers(),
            ys: d.densities.clone(),
            style: Style::Markers,
        });
    }
    let curves: Vec<(String, Vec<f64>)> = references
        .iter()
        .map(|r| {
            let (xs, ys) = sample_curve(r.as_ref(), range);
            series.push(Series {
                name: r.name(),
                xs,
                ys: ys.clone(),
                style: Style::Line,
            });
            (r.name(), ys)
        })
        .collect();

    let mut notes = Vec::new();
    if let Some((base_name, base)) = densities.first() {
        for (name, d) in densities.iter().skip(1) {
            notes.push(format!("Γ({base_name}, {name}) = {:.4}", pearson(base, d)?.gamma));
        }
        for r in &references {
            notes.push(format!("Γ({base_name}, {}) = {:.4}", r.name(), pearson(base, r.as_ref())?.gamma));
        }
    } else if let Some((base_name, base)) = curves.first() {
        for (name, ys) in curves.iter().skip(1) {
            notes.push(format!("Γ({base_name}, {name}) = {:.4}", pearson_vectors(base, ys)?));
        }
    }

    let plot = Plot {
        title: args.title.unwrap_or_else(|| "probability density".into()),
        x_label: "x".into(),
        y_label: "density".into(),
        series,
        notes,
    };
    write_atomic(&args.out, svg::render(&plot).as_bytes())?;
    println!("wrote {}", args.out.display());
    Ok(())
}

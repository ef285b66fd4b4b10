//! Euler-Maruyama integration of the complex Langevin equation
//!
//! ```text
//! z_{j+1} = z_j − i ∂ln Ψ/∂z (t_j, z_j) Δt + ((−1 + i)/√2) ξ_j √Δt
//! ```
//!
//! with `ξ_j ~ N(0, 1)`. The noise factor squares to `−i`, the dimensionless
//! diffusion coefficient.
//!
//! Every trajectory draws from its own ChaCha8 stream seeded by
//! [`derive_seed`]`(master_seed, index)`, so an ensemble is a pure function
//! of its configuration regardless of how many workers run it.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::wavefield::{ComplexPoint, ModelSpec};

/// `(−1 + i)/√2`.
pub const NOISE_FACTOR: Complex64 = Complex64::new(-FRAC_1_SQRT_2, FRAC_1_SQRT_2);

/// Paths whose modulus exceeds this are treated as diverged.
pub const BLOWUP_RADIUS: f64 = 1e6;

/// Largest tolerated fraction of diverged paths in an ensemble.
pub const MAX_DIVERGED_FRACTION: f64 = 0.01;

pub const DEFAULT_DRIFT_CAP: f64 = 10.0;
pub const DEFAULT_DT: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("time step must be positive and finite, got {0}")]
    TimeStep(f64),
    #[error("t_final = {t_final} must be at least dt = {dt}")]
    Duration { t_final: f64, dt: f64 },
    #[error("at least one initial point and one trajectory are required")]
    Empty,
    #[error("initial point {0} is not finite")]
    NonFinitePoint(ComplexPoint),
    #[error("drift cap must be positive and finite, got {0}")]
    DriftCap(f64),
    #[error("snapshot time {0} is not a step time within [0, t_final]")]
    SnapshotTime(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SdeError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{diverged} of {total} trajectories diverged (limit 1%)")]
    TooManyDiverged { diverged: usize, total: usize },
    #[error("could not build worker pool: {0}")]
    ThreadPool(String),
}

/// A path left the disc of radius [`BLOWUP_RADIUS`] or became non-finite.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("trajectory {id} diverged at step {step}")]
pub struct NumericalBlowup {
    pub id: usize,
    pub step: usize,
}

/// What each trajectory keeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordMode {
    /// Every step, `t = 0` included.
    FullPath,
    /// Axis crossings plus the final point.
    CrossingsAndFinal,
    /// Axis crossings plus the points at the listed times.
    SnapshotTimes(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub model: ModelSpec,
    pub dt: f64,
    pub t_final: f64,
    /// Trajectory `k` starts at `initial_points[k % len]`.
    pub initial_points: Vec<ComplexPoint>,
    pub n_trajectories: usize,
    pub master_seed: u64,
    pub record_mode: RecordMode,
    pub drift_cap: f64,
}

impl SimulationConfig {
    pub fn new(
        model: ModelSpec,
        initial_points: Vec<ComplexPoint>,
        n_trajectories: usize,
        t_final: f64,
    ) -> Self {
        SimulationConfig {
            model,
            dt: DEFAULT_DT,
            t_final,
            initial_points,
            n_trajectories,
            master_seed: 0,
            record_mode: RecordMode::FullPath,
            drift_cap: DEFAULT_DRIFT_CAP,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_record_mode(mut self, mode: RecordMode) -> Self {
        self.record_mode = mode;
        self
    }

    pub fn with_drift_cap(mut self, cap: f64) -> Self {
        self.drift_cap = cap;
        self
    }

    /// `round(t_final / dt)`.
    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    /// `n_steps · dt`, the end time actually integrated to.
    pub fn effective_t_final(&self) -> f64 {
        self.n_steps() as f64 * self.dt
    }

    /// Step index whose time is `t`, if `t` lands on one.
    pub fn step_index(&self, t: f64) -> Option<usize> {
        if !t.is_finite() || t < -STEP_TIME_SLACK {
            return None;
        }
        let k = (t / self.dt).round();
        let on_grid = (k * self.dt - t).abs() <= STEP_TIME_SLACK * t.abs().max(1.0);
        (on_grid && k as usize <= self.n_steps()).then_some(k as usize)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(ConfigError::TimeStep(self.dt));
        }
        if !(self.t_final.is_finite() && self.t_final >= self.dt) || self.n_steps() == 0 {
            return Err(ConfigError::Duration {
                t_final: self.t_final,
                dt: self.dt,
            });
        }
        if self.initial_points.is_empty() || self.n_trajectories == 0 {
            return Err(ConfigError::Empty);
        }
        if let Some(p) = self.initial_points.iter().find(|p| !p.is_finite()) {
            return Err(ConfigError::NonFinitePoint(*p));
        }
        if !(self.drift_cap > 0.0 && self.drift_cap.is_finite()) {
            return Err(ConfigError::DriftCap(self.drift_cap));
        }
        if let RecordMode::SnapshotTimes(times) = &self.record_mode {
            if let Some(t) = times.iter().find(|t| self.step_index(**t).is_none()) {
                return Err(ConfigError::SnapshotTime(*t));
            }
        }
        Ok(())
    }
}

/// Relative slack when matching a requested time to a step time.
const STEP_TIME_SLACK: f64 = 1e-9;

/// `((−1 + i)/√2) ξ √dt`.
pub fn noise_increment(xi: f64, dt: f64) -> Complex64 {
    NOISE_FACTOR * (xi * dt.sqrt())
}

/// The deterministic part of one step, `−i ∂ln Ψ/∂z · dt`, after capping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftDisplacement {
    pub value: Complex64,
    pub capped: bool,
}

/// Euler-Maruyama stepper for one model at a fixed step.
///
/// Drift displacements longer than `drift_cap · √dt` are shortened to that
/// length. At a numerical node, where the log-derivative has no finite value,
/// the displacement takes the full capped length along the last finite drift
/// direction the caller remembers, or is zero when there is none.
#[derive(Debug, Clone, Copy)]
pub struct EulerMaruyama {
    pub model: ModelSpec,
    pub dt: f64,
    pub drift_cap: f64,
    sqrt_dt: f64,
}

impl EulerMaruyama {
    pub fn new(model: ModelSpec, dt: f64, drift_cap: f64) -> Self {
        EulerMaruyama {
            model,
            dt,
            drift_cap,
            sqrt_dt: dt.sqrt(),
        }
    }

    /// `last_direction` is updated with the unit direction of every finite drift.
    pub fn drift(
        &self,
        t: f64,
        z: ComplexPoint,
        last_direction: &mut Option<Complex64>,
    ) -> DriftDisplacement {
        let limit = self.drift_cap * self.sqrt_dt;
        match self.model.log_derivative(t, z) {
            Ok(f) if f.is_finite() => {
                let value = Complex64::new(f.im * self.dt, -f.re * self.dt);
                let length = value.norm();
                if length > 0.0 && length.is_finite() {
                    *last_direction = Some(value / length);
                }
                if length > limit {
                    let value = if length.is_finite() {
                        value * (limit / length)
                    } else {
                        last_direction.map_or(Complex64::new(0.0, 0.0), |u| u * limit)
                    };
                    DriftDisplacement {
                        value,
                        capped: true,
                    }
                } else {
                    DriftDisplacement {
                        value,
                        capped: false,
                    }
                }
            }
            _ => DriftDisplacement {
                value: last_direction.map_or(Complex64::new(0.0, 0.0), |u| u * limit),
                capped: true,
            },
        }
    }

    pub fn step(
        &self,
        t: f64,
        z: ComplexPoint,
        xi: f64,
        last_direction: &mut Option<Complex64>,
    ) -> (ComplexPoint, bool) {
        let drift = self.drift(t, z, last_direction);
        (z + drift.value + noise_increment(xi, self.dt), drift.capped)
    }

    /// The same step written on the real and imaginary parts separately.
    pub fn split(
        &self,
        t: f64,
        x: f64,
        y: f64,
        xi: f64,
        last_direction: &mut Option<Complex64>,
    ) -> (f64, f64) {
        let drift = self.drift(t, Complex64::new(x, y), last_direction);
        let noise = noise_increment(xi, self.dt);
        (x + drift.value.re + noise.re, y + drift.value.im + noise.im)
    }
}

/// One stateless Euler-Maruyama step.
pub fn em_step(
    model: &ModelSpec,
    t: f64,
    z: ComplexPoint,
    dt: f64,
    xi: f64,
    drift_cap: f64,
) -> ComplexPoint {
    EulerMaruyama::new(*model, dt, drift_cap)
        .step(t, z, xi, &mut None)
        .0
}

/// [`em_step`] on components: `x' = x + Im(f) dt − ξ√(dt/2)`,
/// `y' = y − Re(f) dt + ξ√(dt/2)` with `f = ∂ln Ψ/∂z`.
pub fn split_step(
    model: &ModelSpec,
    t: f64,
    x: f64,
    y: f64,
    dt: f64,
    xi: f64,
    drift_cap: f64,
) -> (f64, f64) {
    EulerMaruyama::new(*model, dt, drift_cap).split(t, x, y, xi, &mut None)
}

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finaliser.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trajectory `index`: `mix64(master ⊕ mix64((index + 1) · γ))`
/// with SplitMix64's `mix64` and golden-ratio increment `γ`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    mix64(master ^ mix64(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Standard-normal draws from a ChaCha8 stream (ziggurat sampling).
#[derive(Debug, Clone)]
pub struct NormalStream {
    rng: ChaCha8Rng,
}

impl NormalStream {
    pub fn new(seed: u64) -> Self {
        NormalStream {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn for_trajectory(master_seed: u64, index: usize) -> Self {
        Self::new(derive_seed(master_seed, index as u64))
    }

    pub fn next_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }
}

/// Where a path met the real axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub t: f64,
    pub x: f64,
}

/// Crossing inside the segment `(t0, z0) → (t0 + dt, z1)`, if the imaginary
/// part changes sign strictly. Linear interpolation in `y`.
pub fn segment_crossing(t0: f64, z0: ComplexPoint, dt: f64, z1: ComplexPoint) -> Option<Crossing> {
    if z0.im * z1.im < 0.0 {
        let frac = z0.im / (z0.im - z1.im);
        Some(Crossing {
            t: t0 + dt * frac,
            x: z0.re + (z1.re - z0.re) * frac,
        })
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: usize,
    /// Times of the recorded points; uniform spacing `dt` in full-path mode.
    pub times: Vec<f64>,
    pub points: Vec<ComplexPoint>,
    /// Every meeting with the real axis: strict sign changes of `y` between
    /// steps, plus recorded-or-not steps that sit exactly on `y = 0`.
    pub crossings: Vec<Crossing>,
    pub capped_steps: u64,
}

/// Integrates trajectory `index` of `config`.
pub fn simulate_trajectory(
    config: &SimulationConfig,
    index: usize,
) -> Result<Trajectory, NumericalBlowup> {
    let stepper = EulerMaruyama::new(config.model, config.dt, config.drift_cap);
    let n_steps = config.n_steps();
    let mut noise = NormalStream::for_trajectory(config.master_seed, index);
    let mut z = config.initial_points[index % config.initial_points.len()];

    let snapshot_steps: Vec<usize> = match &config.record_mode {
        RecordMode::SnapshotTimes(times) => {
            let mut steps: Vec<usize> = times.iter().filter_map(|t| config.step_index(*t)).collect();
            steps.sort_unstable();
            steps.dedup();
            steps
        }
        _ => Vec::new(),
    };
    let keep = |step: usize| match &config.record_mode {
        RecordMode::FullPath => true,
        RecordMode::CrossingsAndFinal => step == n_steps,
        RecordMode::SnapshotTimes(_) => snapshot_steps.binary_search(&step).is_ok(),
    };
    let capacity = match &config.record_mode {
        RecordMode::FullPath => n_steps + 1,
        RecordMode::CrossingsAndFinal => 1,
        RecordMode::SnapshotTimes(_) => snapshot_steps.len(),
    };

    let mut trajectory = Trajectory {
        id: index,
        times: Vec::with_capacity(capacity),
        points: Vec::with_capacity(capacity),
        crossings: Vec::new(),
        capped_steps: 0,
    };
    let mut last_direction = None;
    for step in 0..=n_steps {
        let t = step as f64 * config.dt;
        if keep(step) {
            trajectory.times.push(t);
            trajectory.points.push(z);
        }
        if z.im == 0.0 {
            trajectory.crossings.push(Crossing { t, x: z.re });
        }
        if step == n_steps {
            break;
        }
        let (next, capped) = stepper.step(t, z, noise.next_normal(), &mut last_direction);
        if !next.is_finite() || next.norm() > BLOWUP_RADIUS {
            return Err(NumericalBlowup {
                id: index,
                step: step + 1,
            });
        }
        trajectory.capped_steps += u64::from(capped);
        if let Some(c) = segment_crossing(t, z, config.dt, next) {
            trajectory.crossings.push(c);
        }
        z = next;
    }
    Ok(trajectory)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnsembleDiagnostics {
    /// Steps whose drift displacement hit the cap, over kept trajectories.
    pub capped_steps: u64,
    /// Ids of trajectories dropped because they diverged.
    pub diverged: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub config: SimulationConfig,
    /// Surviving trajectories in ascending id order.
    pub trajectories: Vec<Trajectory>,
    pub diagnostics: EnsembleDiagnostics,
}

impl Ensemble {
    pub fn effective_t_final(&self) -> f64 {
        self.config.effective_t_final()
    }
}

/// Runs every trajectory on the current rayon pool.
pub fn simulate_ensemble(config: &SimulationConfig) -> Result<Ensemble, SdeError> {
    config.validate()?;
    let results: Vec<Result<Trajectory, NumericalBlowup>> = (0..config.n_trajectories)
        .into_par_iter()
        .map(|index| simulate_trajectory(config, index))
        .collect();

    let mut trajectories = Vec::with_capacity(results.len());
    let mut diagnostics = EnsembleDiagnostics::default();
    for result in results {
        match result {
            Ok(t) => {
                diagnostics.capped_steps += t.capped_steps;
                trajectories.push(t);
            }
            Err(blowup) => diagnostics.diverged.push(blowup.id),
        }
    }
    let total = config.n_trajectories;
    if diagnostics.diverged.len() as f64 > MAX_DIVERGED_FRACTION * total as f64 {
        return Err(SdeError::TooManyDiverged {
            diverged: diagnostics.diverged.len(),
            total,
        });
    }
    Ok(Ensemble {
        config: config.clone(),
        trajectories,
        diagnostics,
    })
}

/// [`simulate_ensemble`] on a dedicated pool; `threads = 0` picks the core count.
pub fn simulate_ensemble_with_threads(
    config: &SimulationConfig,
    threads: usize,
) -> Result<Ensemble, SdeError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| SdeError::ThreadPool(e.to_string()))?;
    pool.install(|| simulate_ensemble(config))
}

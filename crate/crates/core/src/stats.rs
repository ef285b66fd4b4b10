//! Point sets, histograms and correlation against reference densities.
//!
//! Point set A is where trajectories meet the real axis; point set B is the
//! real part of every recorded point. Both are histogrammed into
//! [`EmpiricalDensity`] values and scored with a Pearson coefficient against
//! a [`Reference`] evaluated bin by bin.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sde::{Ensemble, RecordMode};
use crate::wavefield::{
    classical_bin_density, quantum_density_eigenstate, quantum_density_gaussian, turning_point,
};

/// Absolute slack when deciding whether a time lies inside a window.
const TIME_SLACK: f64 = 1e-9;

pub const DEFAULT_BINS: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("no samples in the requested window")]
    EmptyResult,
    #[error("window [{0}, {1}] is not inside [0, t_final]")]
    Window(f64, f64),
    #[error("time {0} was not recorded")]
    TimeNotRecorded(f64),
    #[error("record mode {0:?} keeps no path points for point set B")]
    PointsNotRecorded(RecordMode),
    #[error("need at least one bin and lo < hi, got {bins} bins on [{lo}, {hi}]")]
    Binning { bins: usize, lo: f64, hi: f64 },
    #[error("no samples to histogram")]
    NoSamples,
    #[error("all {0} samples fall outside the histogram range")]
    AllOutOfRange(usize),
    #[error("a compared vector has zero variance")]
    DegenerateVariance,
}

fn check_window(ensemble: &Ensemble, (t_min, t_max): (f64, f64)) -> Result<(), StatsError> {
    let t_final = ensemble.effective_t_final();
    if !(t_min <= t_max && t_min >= -TIME_SLACK && t_max <= t_final + TIME_SLACK) {
        return Err(StatsError::Window(t_min, t_max));
    }
    Ok(())
}

fn in_window(t: f64, (t_min, t_max): (f64, f64)) -> bool {
    t >= t_min - TIME_SLACK && t <= t_max + TIME_SLACK
}

/// Real-axis crossings whose (interpolated) time falls in `window`.
pub fn extract_point_set_a(ensemble: &Ensemble, window: (f64, f64)) -> Result<Vec<f64>, StatsError> {
    check_window(ensemble, window)?;
    let xs: Vec<f64> = ensemble
        .trajectories
        .iter()
        .flat_map(|t| t.crossings.iter())
        .filter(|c| in_window(c.t, window))
        .map(|c| c.x)
        .collect();
    if xs.is_empty() {
        return Err(StatsError::EmptyResult);
    }
    Ok(xs)
}

/// Real parts of every recorded point whose time falls in `window`.
pub fn extract_point_set_b(ensemble: &Ensemble, window: (f64, f64)) -> Result<Vec<f64>, StatsError> {
    check_window(ensemble, window)?;
    if ensemble.config.record_mode == RecordMode::CrossingsAndFinal {
        return Err(StatsError::PointsNotRecorded(RecordMode::CrossingsAndFinal));
    }
    let xs: Vec<f64> = ensemble
        .trajectories
        .iter()
        .flat_map(|t| t.times.iter().zip(&t.points))
        .filter(|(t, _)| in_window(**t, window))
        .map(|(_, z)| z.re)
        .collect();
    if xs.is_empty() {
        return Err(StatsError::EmptyResult);
    }
    Ok(xs)
}

/// `Re z(t)` of every trajectory at a recorded time `t`.
pub fn snapshot_positions(ensemble: &Ensemble, t: f64) -> Result<Vec<f64>, StatsError> {
    let step = ensemble
        .config
        .step_index(t)
        .ok_or(StatsError::TimeNotRecorded(t))?;
    let step_time = step as f64 * ensemble.config.dt;
    let mut xs = Vec::with_capacity(ensemble.trajectories.len());
    for trajectory in &ensemble.trajectories {
        let k = trajectory
            .times
            .iter()
            .position(|s| (s - step_time).abs() <= TIME_SLACK)
            .ok_or(StatsError::TimeNotRecorded(t))?;
        xs.push(trajectory.points[k].re);
    }
    if xs.is_empty() {
        return Err(StatsError::EmptyResult);
    }
    Ok(xs)
}

/// Integer bin counts over a uniform grid; partial histograms merge by addition.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    lo: f64,
    hi: f64,
    counts: Vec<u64>,
    out_of_range: u64,
}

impl Histogram {
    pub fn new(bins: usize, (lo, hi): (f64, f64)) -> Result<Self, StatsError> {
        if bins == 0 || lo >= hi || !lo.is_finite() || !hi.is_finite() {
            return Err(StatsError::Binning { bins, lo, hi });
        }
        Ok(Histogram {
            lo,
            hi,
            counts: vec![0; bins],
            out_of_range: 0,
        })
    }

    /// Samples outside `[lo, hi]` are counted separately, never clamped.
    pub fn add(&mut self, x: f64) {
        if !(x >= self.lo && x <= self.hi) {
            self.out_of_range += 1;
            return;
        }
        let bins = self.counts.len();
        let k = ((x - self.lo) / (self.hi - self.lo) * bins as f64) as usize;
        self.counts[k.min(bins - 1)] += 1;
    }

    pub fn merge(mut self, other: &Histogram) -> Self {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.out_of_range += other.out_of_range;
        self
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn out_of_range(&self) -> u64 {
        self.out_of_range
    }

    pub fn normalize(&self) -> Result<EmpiricalDensity, StatsError> {
        let bins = self.counts.len();
        let in_range: u64 = self.counts.iter().sum();
        if in_range == 0 {
            return Err(StatsError::AllOutOfRange(self.out_of_range as usize));
        }
        let width = (self.hi - self.lo) / bins as f64;
        let mut bin_edges: Vec<f64> = (0..=bins).map(|i| self.lo + i as f64 * width).collect();
        bin_edges[bins] = self.hi;
        let n = in_range as f64;
        let densities = self.counts.iter().map(|&c| c as f64 / (n * width)).collect();
        let stderr = self
            .counts
            .iter()
            .map(|&c| {
                let p = c as f64 / n;
                (p * (1.0 - p) / n).sqrt() / width
            })
            .collect();
        Ok(EmpiricalDensity {
            bin_edges,
            densities,
            stderr,
            sample_count: in_range,
            out_of_range: self.out_of_range,
        })
    }
}

/// A normalised histogram: `Σ density · width = 1` over in-range samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDensity {
    pub bin_edges: Vec<f64>,
    pub densities: Vec<f64>,
    /// Binomial standard error of each bin's density.
    pub stderr: Vec<f64>,
    pub sample_count: u64,
    pub out_of_range: u64,
}

impl EmpiricalDensity {
    pub fn bins(&self) -> usize {
        self.densities.len()
    }

    pub fn bin_width(&self) -> f64 {
        (self.bin_edges[self.bins()] - self.bin_edges[0]) / self.bins() as f64
    }

    pub fn range(&self) -> (f64, f64) {
        (self.bin_edges[0], self.bin_edges[self.bins()])
    }

    pub fn centers(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// `Σ density · width`.
    pub fn total(&self) -> f64 {
        self.densities.iter().sum::<f64>() * self.bin_width()
    }

    /// Builds a density from values on uniform bins (e.g. a PDE marginal).
    pub fn from_values(bin_edges: Vec<f64>, densities: Vec<f64>) -> Self {
        let stderr = vec![0.0; densities.len()];
        EmpiricalDensity {
            bin_edges,
            densities,
            stderr,
            sample_count: 0,
            out_of_range: 0,
        }
    }
}

/// Uniform-width histogram of `samples` over `range`, normalised over the
/// in-range samples. Partial histograms are built per rayon task and summed.
pub fn build_density(
    samples: &[f64],
    bins: usize,
    range: (f64, f64),
) -> Result<EmpiricalDensity, StatsError> {
    let empty = Histogram::new(bins, range)?;
    if samples.is_empty() {
        return Err(StatsError::NoSamples);
    }
    let histogram = samples
        .par_chunks(1 << 16)
        .map(|chunk| {
            let mut h = empty.clone();
            chunk.iter().for_each(|&x| h.add(x));
            h
        })
        .reduce(|| empty.clone(), |a, b| a.merge(&b));
    histogram.normalize()
}

/// A density to compare against, evaluated per histogram bin.
pub trait Reference: Sync {
    fn name(&self) -> String;

    fn value(&self, x: f64) -> f64;

    /// Value assigned to the bin `[lo, hi]`; the centre value unless overridden.
    fn bin_value(&self, lo: f64, hi: f64) -> f64 {
        self.value(0.5 * (lo + hi))
    }
}

/// `|ψ_n|²`.
#[derive(Debug, Clone, Copy)]
pub struct EigenstateDensity {
    pub n: u32,
}

impl Reference for EigenstateDensity {
    fn name(&self) -> String {
        format!("quantum_eigenstate(n={})", self.n)
    }

    fn value(&self, x: f64) -> f64 {
        quantum_density_eigenstate(self.n, x)
    }
}

/// Gaussian packet density at time `t`.
#[derive(Debug, Clone, Copy)]
pub struct GaussianDensity {
    pub p0: f64,
    pub t: f64,
}

impl Reference for GaussianDensity {
    fn name(&self) -> String {
        format!("quantum_gaussian(p0={},t={})", self.p0, self.t)
    }

    fn value(&self, x: f64) -> f64 {
        quantum_density_gaussian(self.p0, self.t, x)
    }
}

/// Classical sojourn density, clamped to the bin average near turning points.
#[derive(Debug, Clone, Copy)]
pub struct ClassicalDensity {
    pub n: u32,
}

impl Reference for ClassicalDensity {
    fn name(&self) -> String {
        format!("classical(n={})", self.n)
    }

    fn value(&self, x: f64) -> f64 {
        crate::wavefield::classical_density(self.n, x)
    }

    fn bin_value(&self, lo: f64, hi: f64) -> f64 {
        classical_bin_density(self.n, lo, hi)
    }
}

/// Another density used as a reference: linear between bin centres,
/// flat out to the outer edges, zero beyond them.
impl Reference for EmpiricalDensity {
    fn name(&self) -> String {
        format!("empirical({} bins)", self.bins())
    }

    fn value(&self, x: f64) -> f64 {
        let (lo, hi) = self.range();
        if !(x >= lo && x <= hi) {
            return 0.0;
        }
        let width = self.bin_width();
        let pos = (x - lo) / width - 0.5;
        let last = self.bins() - 1;
        if pos <= 0.0 {
            return self.densities[0];
        }
        if pos >= last as f64 {
            return self.densities[last];
        }
        let k = pos.floor() as usize;
        let frac = pos - k as f64;
        self.densities[k] * (1.0 - frac) + self.densities[k + 1] * frac
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub gamma: f64,
    pub bins: usize,
    pub range: (f64, f64),
    pub reference_name: String,
    pub sample_count: u64,
}

/// Pearson correlation coefficient of two equal-length vectors.
pub fn pearson_vectors(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    assert_eq!(a.len(), b.len(), "pearson needs equal lengths");
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - mean_a, y - mean_b);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 || !(saa * sbb).is_finite() {
        return Err(StatsError::DegenerateVariance);
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Γ between `empirical` and `reference` sampled bin by bin.
pub fn pearson(
    empirical: &EmpiricalDensity,
    reference: &dyn Reference,
) -> Result<ComparisonReport, StatsError> {
    let reference_values: Vec<f64> = empirical
        .bin_edges
        .windows(2)
        .map(|w| reference.bin_value(w[0], w[1]))
        .collect();
    let gamma = pearson_vectors(&empirical.densities, &reference_values)?;
    Ok(ComparisonReport {
        gamma,
        bins: empirical.bins(),
        range: empirical.range(),
        reference_name: reference.name(),
        sample_count: empirical.sample_count,
    })
}

/// 100 bins over `[−(A + 2), A + 2]`.
pub fn eigenstate_binning(n: u32) -> (usize, (f64, f64)) {
    let half = turning_point(n) + 2.0;
    (DEFAULT_BINS, (-half, half))
}

/// 100 bins over the packet centre ± 5σ with `σ² = (1 + t²)/2`.
pub fn gaussian_binning(p0: f64, t: f64) -> (usize, (f64, f64)) {
    let sigma = ((1.0 + t * t) / 2.0).sqrt();
    let centre = p0 * t;
    (DEFAULT_BINS, (centre - 5.0 * sigma, centre + 5.0 * sigma))
}

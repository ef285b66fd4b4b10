//! Finite-difference solution of the Fokker-Planck equation of the
//! trajectory process for an oscillator eigenstate:
//!
//! ```text
//! ∂ρ/∂t = −∂(u_x ρ)/∂x − ∂(u_y ρ)/∂y + ¼(ρ_xx − 2ρ_xy + ρ_yy)
//! ```
//!
//! with `u_x = Im ∂ln ψ_n/∂z`, `u_y = −Re ∂ln ψ_n/∂z` and `ρ = 0` on the
//! edges of `[−L, L]²`. The diffusion tensor comes from the step noise:
//! each axis has variance `dt/2` and the two are perfectly anticorrelated.
//!
//! The march is explicit: conservative central fluxes for advection, central
//! second differences, and the four-corner stencil for `ρ_xy`. Cells are
//! centred, so with an even cell count no centre sits on the origin where the
//! odd-state drift is singular. Negative undershoot is clipped after every
//! step and the clipped mass is reported.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sde::{EulerMaruyama, DEFAULT_DRIFT_CAP, DEFAULT_DT};
use crate::stats::EmpiricalDensity;
use crate::wavefield::{ln_eigenstate_norm, ln_hermite_modulus, ComplexPoint, ModelSpec, NearNode};

/// `D_xx = D_yy`; the cross coefficient is `−D_xx`.
pub const DIFFUSION: f64 = 0.25;

pub const DEFAULT_HALF_WIDTH: f64 = 5.0;

/// One step may grow `max ρ` by at most this factor.
const INSTABILITY_GROWTH: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FpeError {
    #[error("grid needs positive half-width and at least two cells per axis")]
    Shape,
    #[error("a cell centre falls on the origin ({0}×{1} cells); use an even count")]
    OriginOnGrid(usize, usize),
    #[error("dt_pde = {dt} exceeds the diffusion stability bound {bound}")]
    Unstable { dt: f64, bound: f64 },
    #[error("the Fokker-Planck solver needs an eigenstate model, got {0}")]
    NotEigenstate(ModelSpec),
    #[error("max |ρ| grew from {before:e} to {after:e} in one step at t = {t}")]
    InstabilityDetected { before: f64, after: f64, t: f64 },
    #[error("density has no mass")]
    ZeroMass,
    #[error("t_final must be finite and non-negative, got {0}")]
    Duration(f64),
}

/// Square domain `[−L, L]²` split into `nx × ny` cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FpGrid {
    pub half_width: f64,
    pub nx: usize,
    pub ny: usize,
    /// Largest time step of the march.
    pub dt: f64,
}

impl FpGrid {
    pub fn new(half_width: f64, nx: usize, ny: usize, dt: f64) -> Result<Self, FpeError> {
        if !(half_width > 0.0 && half_width.is_finite()) || nx < 2 || ny < 2 {
            return Err(FpeError::Shape);
        }
        if nx % 2 == 1 && ny % 2 == 1 {
            return Err(FpeError::OriginOnGrid(nx, ny));
        }
        let grid = FpGrid {
            half_width,
            nx,
            ny,
            dt,
        };
        let bound = grid.diffusion_dt_bound();
        if !(dt > 0.0 && dt <= bound) {
            return Err(FpeError::Unstable { dt, bound });
        }
        Ok(grid)
    }

    /// Square grid whose step also respects the advective limit of `drift`:
    /// `dt = ½ min(h², h / (2 max|u|))`.
    pub fn with_stable_dt(
        half_width: f64,
        cells: usize,
        model: &ModelSpec,
        cap: VelocityCap,
    ) -> Result<Self, FpeError> {
        let probe = FpGrid {
            half_width,
            nx: cells,
            ny: cells,
            dt: f64::MIN_POSITIVE,
        };
        FpGrid::new(half_width, cells, cells, f64::MIN_POSITIVE)?;
        let drift = drift_field(model, &probe, cap)?;
        let h = probe.hx().min(probe.hy());
        let mut dt = h * h;
        if drift.max_speed > 0.0 {
            dt = dt.min(h / (2.0 * drift.max_speed));
        }
        FpGrid::new(half_width, cells, cells, 0.5 * dt)
    }

    pub fn hx(&self) -> f64 {
        2.0 * self.half_width / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        2.0 * self.half_width / self.ny as f64
    }

    /// `x_i = −L + (i + ½) h`, written so mirrored cells are exact negatives.
    pub fn x_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5 - self.nx as f64 / 2.0) * self.hx()
    }

    pub fn y_center(&self, j: usize) -> f64 {
        (j as f64 + 0.5 - self.ny as f64 / 2.0) * self.hy()
    }

    pub fn x_edges(&self) -> Vec<f64> {
        let mut edges: Vec<f64> = (0..=self.nx)
            .map(|i| (i as f64 - self.nx as f64 / 2.0) * self.hx())
            .collect();
        edges[0] = -self.half_width;
        edges[self.nx] = self.half_width;
        edges
    }

    /// `h² / (2 (D_xx + D_yy))` with the smaller spacing.
    pub fn diffusion_dt_bound(&self) -> f64 {
        let h = self.hx().min(self.hy());
        h * h / (2.0 * (DIFFUSION + DIFFUSION))
    }

    pub fn cell_area(&self) -> f64 {
        self.hx() * self.hy()
    }

    fn len(&self) -> usize {
        self.nx * self.ny
    }
}

/// The trajectory drift cap expressed as a velocity bound:
/// `|u| ≤ drift_cap / √sde_dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityCap {
    pub drift_cap: f64,
    pub sde_dt: f64,
}

impl Default for VelocityCap {
    fn default() -> Self {
        VelocityCap {
            drift_cap: DEFAULT_DRIFT_CAP,
            sde_dt: DEFAULT_DT,
        }
    }
}

/// Cell-centred drift components, row-major (`j · nx + i`).
#[derive(Debug, Clone, PartialEq)]
pub struct DriftField {
    pub ux: Vec<f64>,
    pub uy: Vec<f64>,
    pub capped_cells: usize,
    pub max_speed: f64,
}

impl DriftField {
    pub fn zero(grid: &FpGrid) -> Self {
        DriftField {
            ux: vec![0.0; grid.len()],
            uy: vec![0.0; grid.len()],
            capped_cells: 0,
            max_speed: 0.0,
        }
    }
}

/// `(u_x, u_y) = (Im, −Re) ∂ln ψ_n/∂z` at every centre, capped exactly as a
/// trajectory step of length `sde_dt` would be.
pub fn drift_field(model: &ModelSpec, grid: &FpGrid, cap: VelocityCap) -> Result<DriftField, FpeError> {
    if !matches!(model, ModelSpec::Eigenstate { .. }) {
        return Err(FpeError::NotEigenstate(*model));
    }
    let stepper = EulerMaruyama::new(*model, cap.sde_dt, cap.drift_cap);
    let mut field = DriftField::zero(grid);
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let z = ComplexPoint::new(grid.x_center(i), grid.y_center(j));
            let d = stepper.drift(0.0, z, &mut None);
            let k = j * grid.nx + i;
            field.ux[k] = d.value.re / cap.sde_dt;
            field.uy[k] = d.value.im / cap.sde_dt;
            field.capped_cells += usize::from(d.capped);
            field.max_speed = field.max_speed.max(field.ux[k].abs()).max(field.uy[k].abs());
        }
    }
    Ok(field)
}

/// Coefficients of the expanded (non-conservative) equation
/// `ρ_t = a ρ_x + b ρ_y + c ρ + diffusion` for eigenstate `n` at `(x, y)`:
/// `a = −u_x`, `b = −u_y`, `c = −div u = −2 Im f'(z)` with
/// `f' = z² − (2n + 1) − f²` from the oscillator equation. Uncapped.
pub fn expanded_coefficients(n: u32, x: f64, y: f64) -> Result<[f64; 3], NearNode> {
    let z = ComplexPoint::new(x, y);
    let f = crate::wavefield::eigenstate_log_derivative(n, z)?;
    let f_prime = z * z - (2.0 * f64::from(n) + 1.0) - f * f;
    Ok([-f.im, f.re, -2.0 * f_prime.im])
}

/// `|H_n(x + iy)|² e^{−x²−y²} / (2ⁿ n! √π)` at every centre; for `n = 1` this
/// is `(2/√π)(x² + y²) e^{−x²−y²}`.
pub fn fp_initial(n: u32, grid: &FpGrid) -> Vec<f64> {
    let ln_norm = ln_eigenstate_norm(n);
    let mut rho = vec![0.0; grid.len()];
    for j in 0..grid.ny {
        let y = grid.y_center(j);
        for i in 0..grid.nx {
            let x = grid.x_center(i);
            let ln_h = ln_hermite_modulus(n, ComplexPoint::new(x, y));
            rho[j * grid.nx + i] = if ln_h == f64::NEG_INFINITY {
                0.0
            } else {
                (2.0 * ln_h - x * x - y * y + ln_norm).exp()
            };
        }
    }
    rho
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpSolution {
    pub grid: FpGrid,
    pub t: f64,
    /// Row-major density (`j · nx + i`), non-negative.
    pub rho: Vec<f64>,
    pub total_mass: f64,
    pub initial_mass: f64,
    /// Mass added by clipping negative undershoot to zero.
    pub clipped_mass: f64,
    /// Most negative value seen before clipping.
    pub max_undershoot: f64,
    pub steps: usize,
}

impl FpSolution {
    pub fn new(grid: FpGrid, rho: Vec<f64>) -> Self {
        let mass = rho.iter().sum::<f64>() * grid.cell_area();
        FpSolution {
            grid,
            t: 0.0,
            rho,
            total_mass: mass,
            initial_mass: mass,
            clipped_mass: 0.0,
            max_undershoot: 0.0,
            steps: 0,
        }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.rho[j * self.grid.nx + i]
    }

    /// Fractional mass change since `t = 0`.
    pub fn mass_loss(&self) -> f64 {
        1.0 - self.total_mass / self.initial_mass
    }

    /// One explicit update of length `dt`.
    pub fn advance(&mut self, drift: &DriftField, dt: f64) -> Result<(), FpeError> {
        let g = self.grid;
        let (nx, ny) = (g.nx, g.ny);
        let (hx, hy) = (g.hx(), g.hy());
        let rho = &self.rho;
        let (ux, uy) = (&drift.ux, &drift.uy);

        // Antisymmetric ghost layer: the interpolated edge value is zero.
        let ghost = |i: isize, j: isize| -> f64 {
            let (mut sign, mut ii, mut jj) = (1.0, i, j);
            if ii < 0 {
                ii = 0;
                sign = -sign;
            } else if ii >= nx as isize {
                ii = nx as isize - 1;
                sign = -sign;
            }
            if jj < 0 {
                jj = 0;
                sign = -sign;
            } else if jj >= ny as isize {
                jj = ny as isize - 1;
                sign = -sign;
            }
            sign * rho[jj as usize * nx + ii as usize]
        };

        let d_xx = DIFFUSION / (hx * hx);
        let d_yy = DIFFUSION / (hy * hy);
        let d_xy = 2.0 * DIFFUSION / (4.0 * hx * hy);

        let mut next = vec![0.0; nx * ny];
        // (clipped mass, most negative value, max value) per row.
        let row_stats: Vec<(f64, f64, f64)> = next
            .par_chunks_mut(nx)
            .enumerate()
            .map(|(j, row)| {
                let mut clipped = 0.0;
                let mut undershoot = 0.0f64;
                let mut peak = 0.0f64;
                let jj = j as isize;
                for (i, out) in row.iter_mut().enumerate() {
                    let k = j * nx + i;
                    let ii = i as isize;
                    let c = rho[k];
                    let (w, e) = (ghost(ii - 1, jj), ghost(ii + 1, jj));
                    let (s, n) = (ghost(ii, jj - 1), ghost(ii, jj + 1));

                    // Zero flux through the domain edges, where ρ vanishes.
                    let flux_e = if i + 1 < nx {
                        0.25 * (ux[k] + ux[k + 1]) * (c + e)
                    } else {
                        0.0
                    };
                    let flux_w = if i > 0 {
                        0.25 * (ux[k - 1] + ux[k]) * (w + c)
                    } else {
                        0.0
                    };
                    let flux_n = if j + 1 < ny {
                        0.25 * (uy[k] + uy[k + nx]) * (c + n)
                    } else {
                        0.0
                    };
                    let flux_s = if j > 0 {
                        0.25 * (uy[k - nx] + uy[k]) * (s + c)
                    } else {
                        0.0
                    };
                    let advection = -(flux_e - flux_w) / hx - (flux_n - flux_s) / hy;

                    let cross = ghost(ii + 1, jj + 1) - ghost(ii + 1, jj - 1)
                        - ghost(ii - 1, jj + 1)
                        + ghost(ii - 1, jj - 1);
                    let diffusion =
                        d_xx * (e - 2.0 * c + w) + d_yy * (n - 2.0 * c + s) - d_xy * cross;

                    let mut value = c + dt * (advection + diffusion);
                    if value < 0.0 {
                        undershoot = undershoot.min(value);
                        clipped -= value;
                        value = 0.0;
                    }
                    peak = peak.max(value);
                    *out = value;
                }
                (clipped, undershoot, peak)
            })
            .collect();

        let before = rho.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut after = 0.0f64;
        let mut finite = true;
        for &(clipped, undershoot, peak) in &row_stats {
            self.clipped_mass += clipped * g.cell_area();
            self.max_undershoot = self.max_undershoot.min(undershoot);
            after = after.max(peak);
            finite &= peak.is_finite();
        }
        let t = self.t + dt;
        if !finite || (before > 0.0 && after > INSTABILITY_GROWTH * before) {
            return Err(FpeError::InstabilityDetected { before, after, t });
        }
        self.rho = next;
        self.t = t;
        self.steps += 1;
        self.total_mass = self.rho.iter().sum::<f64>() * g.cell_area();
        Ok(())
    }
}

/// Advances `solution` by the grid's `dt`.
pub fn fp_step(solution: &FpSolution, drift: &DriftField) -> Result<FpSolution, FpeError> {
    let mut next = solution.clone();
    next.advance(drift, solution.grid.dt)?;
    Ok(next)
}

/// Marches the initial condition of `model` to `t_final` in equal steps no
/// longer than `grid.dt`.
pub fn fp_solve(
    model: &ModelSpec,
    grid: &FpGrid,
    t_final: f64,
    cap: VelocityCap,
) -> Result<FpSolution, FpeError> {
    let n = match model {
        ModelSpec::Eigenstate { n } => *n,
        other => return Err(FpeError::NotEigenstate(*other)),
    };
    if !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(FpeError::Duration(t_final));
    }
    let drift = drift_field(model, grid, cap)?;
    let mut solution = FpSolution::new(*grid, fp_initial(n, grid));
    if t_final == 0.0 {
        return Ok(solution);
    }
    let steps = (t_final / grid.dt * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let dt = t_final / steps as f64;
    for k in 0..steps {
        solution.advance(&drift, dt)?;
        solution.t = (k + 1) as f64 * dt;
    }
    solution.t = t_final;
    Ok(solution)
}

/// `P(x_i) = Σ_j ρ(x_i, y_j) h_y`, renormalised to unit integral, on the
/// grid's x cells as histogram bins.
pub fn fp_marginal_x(solution: &FpSolution) -> Result<EmpiricalDensity, FpeError> {
    let g = solution.grid;
    let mut marginal = vec![0.0; g.nx];
    for j in 0..g.ny {
        for (i, m) in marginal.iter_mut().enumerate() {
            *m += solution.at(i, j) * g.hy();
        }
    }
    let total: f64 = marginal.iter().sum::<f64>() * g.hx();
    if !(total > 0.0 && total.is_finite()) {
        return Err(FpeError::ZeroMass);
    }
    marginal.iter_mut().for_each(|m| *m /= total);
    Ok(EmpiricalDensity::from_values(g.x_edges(), marginal))
}

//! Complex quantum random trajectories for the harmonic oscillator and a
//! free Gaussian packet.
//!
//! * [`wavefield`]: wavefunctions, log-derivatives and reference densities.
//! * [`sde`]: Euler-Maruyama ensembles of the complex trajectory equation.
//! * [`stats`]: point-set extraction, histograms and Pearson comparison.
//! * [`fpe`]: a finite-difference Fokker-Planck solver for cross-checks.

pub mod fpe;
pub mod sde;
pub mod stats;
pub mod wavefield;

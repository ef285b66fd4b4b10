//! Wavefunctions that drive the trajectories, their logarithmic derivatives,
//! and the analytic densities the trajectory statistics are compared against.
//!
//! Everything is dimensionless (ħ = m = ω = 1). Two models are supported:
//!
//! * the harmonic-oscillator eigenstate `ψ_n(z) ∝ H_n(z) e^{-z²/2}`, and
//! * a free Gaussian packet launched from the origin with momentum `p0`.
//!
//! Hermite polynomials are never formed directly. `H_70` exceeds the range of
//! an `f64` by hundreds of orders of magnitude for moderate `|z|`, so the
//! three-term recurrence is carried with a running power-of-ten scale and only
//! ratios (for the drift) or logarithms (for the densities) leave this module.

use std::f64::consts::{LN_10, LN_2, PI};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A position `x + iy` in the complex configuration plane.
pub type ComplexPoint = Complex64;

/// Mantissas are renormalised once they exceed this magnitude.
const RESCALE_ABOVE: f64 = 1e100;
const RESCALE_EXPONENT: i32 = 100;

/// `|H_n|` below this fraction of the cancelling recurrence terms is a node.
pub const NODE_TOLERANCE: f64 = 1e-12;

/// The evaluation point is numerically a zero of `H_n`.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("z = {z} is numerically a zero of H_{n}")]
pub struct NearNode {
    pub n: u32,
    pub z: ComplexPoint,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelParseError {
    #[error("unknown model `{0}` (expected eigenstate:<n> or gaussian:p0=<p0>[,drift=exact|simplified])")]
    Unknown(String),
    #[error("invalid model parameter `{0}`")]
    Parameter(String),
}

/// How the Gaussian-packet drift is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftForm {
    /// `∂ ln Ψ/∂z = i p0 − (z − p0 t)/(1 + i t)`, differentiated from the packet itself.
    #[default]
    Exact,
    /// `∂ ln Ψ/∂z = (z − p0 t)/(1 + t²)`: drops the momentum term and the
    /// imaginary part of the spreading denominator.
    Simplified,
}

/// Which wavefunction drives the drift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Eigenstate { n: u32 },
    GaussianPacket { p0: f64, drift_form: DriftForm },
}

impl ModelSpec {
    pub fn eigenstate(n: u32) -> Self {
        ModelSpec::Eigenstate { n }
    }

    pub fn gaussian(p0: f64) -> Self {
        ModelSpec::GaussianPacket {
            p0,
            drift_form: DriftForm::Exact,
        }
    }

    /// `∂ ln Ψ/∂z` at time `t`.
    pub fn log_derivative(&self, t: f64, z: ComplexPoint) -> Result<Complex64, NearNode> {
        match *self {
            ModelSpec::Eigenstate { n } => eigenstate_log_derivative(n, z),
            ModelSpec::GaussianPacket { p0, drift_form } => {
                Ok(gaussian_log_derivative(p0, t, z, drift_form))
            }
        }
    }

    /// `|Ψ(t, x)|²` on the real axis.
    pub fn quantum_density(&self, t: f64, x: f64) -> f64 {
        match *self {
            ModelSpec::Eigenstate { n } => quantum_density_eigenstate(n, x),
            ModelSpec::GaussianPacket { p0, .. } => quantum_density_gaussian(p0, t, x),
        }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelSpec::Eigenstate { n } => write!(f, "eigenstate:{n}"),
            ModelSpec::GaussianPacket { p0, drift_form } => {
                write!(f, "gaussian:p0={p0}")?;
                if *drift_form == DriftForm::Simplified {
                    write!(f, ",drift=simplified")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for ModelSpec {
    type Err = ModelParseError;

    /// Accepts `eigenstate:<n>` and `gaussian:p0=<p0>[,drift=exact|simplified]`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| ModelParseError::Unknown(s.to_string()))?;
        match kind {
            "eigenstate" => rest
                .trim()
                .parse::<u32>()
                .map(ModelSpec::eigenstate)
                .map_err(|_| ModelParseError::Parameter(rest.to_string())),
            "gaussian" => {
                let mut p0 = None;
                let mut drift_form = DriftForm::Exact;
                for part in rest.split(',') {
                    let (key, value) = part
                        .split_once('=')
                        .ok_or_else(|| ModelParseError::Parameter(part.to_string()))?;
                    match key.trim() {
                        "p0" => {
                            let v: f64 = value
                                .trim()
                                .parse()
                                .map_err(|_| ModelParseError::Parameter(part.to_string()))?;
                            if !v.is_finite() {
                                return Err(ModelParseError::Parameter(part.to_string()));
                            }
                            p0 = Some(v);
                        }
                        "drift" => {
                            drift_form = match value.trim() {
                                "exact" => DriftForm::Exact,
                                "simplified" => DriftForm::Simplified,
                                _ => return Err(ModelParseError::Parameter(part.to_string())),
                            }
                        }
                        _ => return Err(ModelParseError::Parameter(part.to_string())),
                    }
                }
                let p0 = p0.ok_or_else(|| ModelParseError::Parameter(rest.to_string()))?;
                Ok(ModelSpec::GaussianPacket { p0, drift_form })
            }
            _ => Err(ModelParseError::Unknown(s.to_string())),
        }
    }
}

/// `H_n`, `H_{n-1}` and `H_{n-2}` sharing the factor `10^exponent`.
#[derive(Debug, Clone, Copy)]
struct ScaledHermite {
    top: Complex64,
    prev: Complex64,
    prev2: Complex64,
    exponent: i32,
}

impl ScaledHermite {
    fn ln_scale(&self) -> f64 {
        f64::from(self.exponent) * LN_10
    }

    /// `|H_n|` lost all digits to cancellation in its last recurrence step.
    fn cancelled(&self, n: u32, z: ComplexPoint) -> bool {
        let scale = if n == 1 {
            max_abs(self.top)
        } else {
            max_abs(2.0 * z * self.prev).max(2.0 * f64::from(n - 1) * max_abs(self.prev2))
        };
        max_abs(self.top) <= NODE_TOLERANCE * scale
    }
}

fn max_abs(z: Complex64) -> f64 {
    z.re.abs().max(z.im.abs())
}

/// Runs `H_{k+1} = 2z H_k − 2k H_{k-1}` up to `k + 1 = n` (requires `n ≥ 1`).
fn scaled_hermite(n: u32, z: ComplexPoint) -> ScaledHermite {
    debug_assert!(n >= 1);
    let two_z = 2.0 * z;
    let shrink = 10f64.powi(-RESCALE_EXPONENT);
    let mut prev2 = Complex64::new(0.0, 0.0);
    let mut prev = Complex64::new(1.0, 0.0);
    let mut top = two_z;
    let mut exponent = 0;
    for k in 1..n {
        let next = two_z * top - prev * (2.0 * f64::from(k));
        prev2 = prev;
        prev = top;
        top = next;
        if max_abs(top) > RESCALE_ABOVE {
            top *= shrink;
            prev *= shrink;
            prev2 *= shrink;
            exponent += RESCALE_EXPONENT;
        }
    }
    ScaledHermite {
        top,
        prev,
        prev2,
        exponent,
    }
}

/// `H_{n-1}(z) / H_n(z)` for `n ≥ 1`.
///
/// Fails with [`NearNode`] when `|H_n|` is below [`NODE_TOLERANCE`] times the
/// larger of the two recurrence terms it was formed from; past that point the
/// cancellation leaves no correct digits in the ratio.
pub fn hermite_ratio(n: u32, z: ComplexPoint) -> Result<Complex64, NearNode> {
    assert!(n >= 1, "hermite_ratio needs n >= 1");
    let h = scaled_hermite(n, z);
    if h.cancelled(n, z) {
        return Err(NearNode { n, z });
    }
    let ratio = h.prev / h.top;
    if ratio.is_finite() {
        Ok(ratio)
    } else {
        Err(NearNode { n, z })
    }
}

/// `∂ ln ψ_n/∂z = −z + 2n H_{n-1}(z)/H_n(z)`; the stationary phase drops out.
pub fn eigenstate_log_derivative(n: u32, z: ComplexPoint) -> Result<Complex64, NearNode> {
    if n == 0 {
        return Ok(-z);
    }
    Ok(-z + 2.0 * f64::from(n) * hermite_ratio(n, z)?)
}

/// `∂ ln Ψ/∂z` for the Gaussian packet with momentum `p0` at time `t`.
pub fn gaussian_log_derivative(p0: f64, t: f64, z: ComplexPoint, form: DriftForm) -> Complex64 {
    let shifted = z - p0 * t;
    match form {
        DriftForm::Exact => Complex64::new(0.0, p0) - shifted / Complex64::new(1.0, t),
        DriftForm::Simplified => shifted / (1.0 + t * t),
    }
}

fn ln_factorial(n: u32) -> f64 {
    (2..=n).map(|k| f64::from(k).ln()).sum()
}

/// `ln |H_n(z)|`; `−∞` at an exact zero.
pub fn ln_hermite_modulus(n: u32, z: ComplexPoint) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let h = scaled_hermite(n, z);
    h.top.norm().ln() + h.ln_scale()
}

/// `−ln(2ⁿ n! √π)`, the log of the squared eigenfunction normalisation.
pub fn ln_eigenstate_norm(n: u32) -> f64 {
    -(f64::from(n) * LN_2) - ln_factorial(n) - 0.5 * PI.ln()
}

/// `|ψ_n(x)|²` for the unit-normalised oscillator eigenfunction.
///
/// Evaluated in log space: `2 ln|H_n| − x² − n ln 2 − ln n! − ½ ln π`.
/// Exactly zero at a node, i.e. wherever [`hermite_ratio`] reports one.
pub fn quantum_density_eigenstate(n: u32, x: f64) -> f64 {
    if n == 0 {
        return (-x * x + ln_eigenstate_norm(0)).exp();
    }
    let z = Complex64::new(x, 0.0);
    let h = scaled_hermite(n, z);
    if h.cancelled(n, z) {
        return 0.0;
    }
    (2.0 * (h.top.norm().ln() + h.ln_scale()) - x * x + ln_eigenstate_norm(n)).exp()
}

/// `|Ψ(t, x)|² = (π(1+t²))^{-1/2} exp[−(x − p0 t)²/(1+t²)]`.
pub fn quantum_density_gaussian(p0: f64, t: f64, x: f64) -> f64 {
    let spread = 1.0 + t * t;
    let d = x - p0 * t;
    (-d * d / spread).exp() / (PI * spread).sqrt()
}

/// Classical amplitude `A = √(2n + 1)` at energy `n + ½`.
pub fn turning_point(n: u32) -> f64 {
    (2.0 * f64::from(n) + 1.0).sqrt()
}

/// Sojourn density `1/(π √(A² − x²))` of a classical oscillator with the
/// energy of level `n`; zero outside the turning points (including at `±A`).
pub fn classical_density(n: u32, x: f64) -> f64 {
    let a = turning_point(n);
    if x.abs() >= a {
        return 0.0;
    }
    1.0 / (PI * (a * a - x * x).sqrt())
}

/// Classical probability of `x < upper`.
pub fn classical_cdf(n: u32, upper: f64) -> f64 {
    let a = turning_point(n);
    0.5 + (upper / a).clamp(-1.0, 1.0).asin() / PI
}

/// Exact average of the classical density over `[lo, hi]`.
pub fn classical_bin_average(n: u32, lo: f64, hi: f64) -> f64 {
    (classical_cdf(n, hi) - classical_cdf(n, lo)) / (hi - lo)
}

/// Classical density at the bin centre, clamped to the bin average so the
/// inverse-square-root edge singularity cannot dominate a single bin.
pub fn classical_bin_density(n: u32, lo: f64, hi: f64) -> f64 {
    let centre = classical_density(n, 0.5 * (lo + hi));
    centre.min(classical_bin_average(n, lo, hi))
}

/// Sign of `H_n(x)` and of `ψ_n'(x)`, both from one scaled recurrence.
fn real_signs(n: u32, x: f64) -> (f64, f64) {
    let h = scaled_hermite(n, Complex64::new(x, 0.0));
    let slope = 2.0 * f64::from(n) * h.prev.re - x * h.top.re;
    (h.top.re, slope)
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let mut f_lo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if (f_mid < 0.0) == (f_lo < 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// The `n` real zeros of `H_n` (the nodes of `ψ_n`), ascending.
///
/// The positive zeros are bracketed and bisected; the rest follow from
/// parity, so odd orders have an exact zero at the origin.
pub fn hermite_zeros(n: u32) -> Vec<f64> {
    let a = turning_point(n);
    let positive = (n / 2) as usize;
    let sign = |x: f64| real_signs(n, x).0;
    // Adjacent zeros are never closer than ~π/A; scan well below that.
    let mut cells = (a / (0.05 * PI / a)).ceil() as usize + 2;
    let mut found = Vec::with_capacity(positive);
    while found.len() < positive {
        let step = a / cells as f64;
        found.clear();
        // Start past the origin so the odd-order zero there is not revisited.
        let mut lo = 0.5 * step;
        let mut f_lo = sign(lo);
        for k in 1..=cells {
            let hi = k as f64 * step;
            let f_hi = sign(hi);
            if f_hi == 0.0 {
                found.push(hi);
            } else if f_lo != 0.0 && (f_hi < 0.0) != (f_lo < 0.0) {
                found.push(bisect(lo, hi, sign));
            }
            lo = hi;
            f_lo = f_hi;
        }
        cells *= 4;
    }
    let mut zeros: Vec<f64> = found.iter().rev().map(|x| -x).collect();
    if n % 2 == 1 {
        zeros.push(0.0);
    }
    zeros.extend(found);
    zeros
}

/// The `n + 1` local maxima of `|ψ_n(x)|²` on the real axis, ascending.
///
/// One lies between each pair of adjacent nodes and one beyond each outer node.
pub fn eigenstate_peaks(n: u32) -> Vec<f64> {
    if n == 0 {
        return vec![0.0];
    }
    let zeros = hermite_zeros(n);
    let far = turning_point(n) + 3.0;
    let slope = |x: f64| real_signs(n, x).1;
    let mut brackets = Vec::with_capacity(zeros.len() + 1);
    brackets.push((-far, zeros[0]));
    brackets.extend(zeros.windows(2).map(|w| (w[0], w[1])));
    brackets.push((zeros[zeros.len() - 1], far));
    brackets
        .into_iter()
        .map(|(lo, hi)| bisect(lo, hi, slope))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol * b.norm().max(1.0)
    }

    #[test]
    fn hermite_ratio_low_orders() {
        assert_eq!(hermite_ratio(1, c(1.0, 0.0)).unwrap(), c(0.5, 0.0));
        assert_eq!(hermite_ratio(2, c(1.0, 0.0)).unwrap(), c(1.0, 0.0));
    }

    #[test]
    fn hermite_ratio_survives_overflowing_orders() {
        // |H_200(15 - 7i)| ~ 1e290 passes the rescale threshold twice over.
        let r = hermite_ratio(70, c(0.0, 20.0)).unwrap();
        assert!(r.is_finite());
        let r = hermite_ratio(200, c(15.0, -7.0)).unwrap();
        assert!(r.is_finite());
    }

    #[test]
    fn log_derivative_examples() {
        assert_eq!(eigenstate_log_derivative(0, c(2.0, -3.0)).unwrap(), c(-2.0, 3.0));
        assert!(close(
            eigenstate_log_derivative(1, c(0.0, 1.0)).unwrap(),
            c(0.0, -2.0),
            1e-15
        ));
        assert!(close(
            eigenstate_log_derivative(2, c(1.0, 0.0)).unwrap(),
            c(3.0, 0.0),
            1e-15
        ));
    }

    #[test]
    fn origin_is_a_node_of_odd_states() {
        for n in [1, 3, 5, 71] {
            assert_eq!(
                eigenstate_log_derivative(n, c(0.0, 0.0)),
                Err(NearNode { n, z: c(0.0, 0.0) })
            );
        }
        assert!(eigenstate_log_derivative(2, c(0.0, 0.0)).is_ok());
    }

    #[test]
    fn density_vanishes_at_computed_nodes() {
        for n in 1..=10 {
            for x in hermite_zeros(n) {
                assert_eq!(quantum_density_eigenstate(n, x), 0.0, "n={n} x={x}");
                assert!(eigenstate_log_derivative(n, c(x, 0.0)).is_err());
            }
        }
        assert!(quantum_density_eigenstate(4, 0.0) > 0.0);
    }

    #[test]
    fn gaussian_examples() {
        assert_eq!(
            gaussian_log_derivative(1.0, 0.0, c(0.0, 0.0), DriftForm::Exact),
            c(0.0, 1.0)
        );
        assert_eq!(
            gaussian_log_derivative(0.0, 0.0, c(1.0, 0.0), DriftForm::Exact),
            c(-1.0, 0.0)
        );
        assert_eq!(
            gaussian_log_derivative(1.0, 1.0, c(1.0, 0.0), DriftForm::Simplified),
            c(0.0, 0.0)
        );
    }

    #[test]
    fn gaussian_exact_form_expanded() {
        // p0 + (z − p0 t)(t + i)/(1 + t²) is −i times the drift; check the identity.
        let (p0, t, z) = (0.7, 1.3, c(0.4, -0.9));
        let f = gaussian_log_derivative(p0, t, z, DriftForm::Exact);
        let drift = -Complex64::i() * f;
        let expected = p0 + (z - p0 * t) * c(t, 1.0) / (1.0 + t * t);
        assert!(close(drift, expected, 1e-15));
    }

    #[test]
    fn density_examples() {
        assert_eq!(quantum_density_eigenstate(1, 0.0), 0.0);
        let inv_sqrt_pi = 1.0 / PI.sqrt();
        assert!((quantum_density_eigenstate(0, 0.0) - inv_sqrt_pi).abs() < 1e-15);
        assert!((quantum_density_gaussian(1.0, 0.0, 0.0) - inv_sqrt_pi).abs() < 1e-15);
        assert!((quantum_density_gaussian(1.0, 1.0, 1.0) - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-15);
        assert!((classical_density(0, 0.0) - 1.0 / PI).abs() < 1e-15);
        assert!((turning_point(25) - 51f64.sqrt()).abs() < 1e-15);
        assert_eq!(classical_density(25, turning_point(25)), 0.0);
        assert_eq!(classical_density(25, -turning_point(25)), 0.0);
    }

    #[test]
    fn gaussian_density_peaks_at_packet_centre() {
        for (p0, t) in [(1.0, 1.0), (-2.0, 0.5), (0.3, 3.0)] {
            let centre = p0 * t;
            let peak = quantum_density_gaussian(p0, t, centre);
            for dx in [-0.1, -1e-3, 1e-3, 0.1] {
                assert!(quantum_density_gaussian(p0, t, centre + dx) < peak);
            }
        }
    }

    #[test]
    fn n25_density_oscillates_25_times() {
        let zeros = hermite_zeros(25);
        assert_eq!(zeros.len(), 25);
        for z in &zeros {
            assert!(quantum_density_eigenstate(25, *z) < 1e-20);
        }
        assert_eq!(eigenstate_peaks(25).len(), 26);
    }

    #[test]
    fn classical_bin_density_clamps_edge_bins() {
        let a = turning_point(3);
        let (lo, hi) = (a - 0.05, a + 0.05);
        let clamped = classical_bin_density(3, lo, hi);
        assert!(clamped <= classical_bin_average(3, lo, hi));
        // Interior bins keep the point value.
        assert_eq!(classical_bin_density(3, -0.05, 0.05), classical_density(3, 0.0));
    }

    #[test]
    fn peaks_match_launch_positions_of_low_states() {
        let peaks = eigenstate_peaks(1);
        assert!((peaks[1] - 1.0).abs() < 1e-12 && (peaks[0] + 1.0).abs() < 1e-12);
        let peaks = eigenstate_peaks(4);
        assert_eq!(peaks.len(), 5);
        assert!(peaks[2].abs() < 1e-12);
    }

    #[test]
    fn model_round_trips_through_text() {
        for m in [
            ModelSpec::eigenstate(7),
            ModelSpec::gaussian(1.0),
            ModelSpec::GaussianPacket {
                p0: -0.5,
                drift_form: DriftForm::Simplified,
            },
        ] {
            assert_eq!(m.to_string().parse::<ModelSpec>().unwrap(), m);
        }
        assert!("harmonic:1".parse::<ModelSpec>().is_err());
        assert!("gaussian:p0=x".parse::<ModelSpec>().is_err());
        assert!("gaussian:drift=exact".parse::<ModelSpec>().is_err());
    }
}

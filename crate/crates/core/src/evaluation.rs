//! Channel quality metrics for an optimized SIM.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::linalg::CMat;

pub const BOLTZMANN: f64 = 1.380649e-23;

/// Transmit power and receiver noise parameters. Noise figure is linear.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    /// Watts radiated by each transmit antenna.
    pub per_antenna_tx_power: f64,
    pub noise_figure: f64,
    pub temperature: f64,
    pub bandwidth: f64,
}

impl Default for LinkBudget {
    fn default() -> Self {
        Self {
            per_antenna_tx_power: 0.05,
            noise_figure: 10.0,
            temperature: 290.0,
            bandwidth: 100e6,
        }
    }
}

impl LinkBudget {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.per_antenna_tx_power) || !positive(self.temperature) || !positive(self.bandwidth) {
            return Err(SimError::arg("link budget power, temperature and bandwidth must be positive"));
        }
        if !(self.noise_figure.is_finite() && self.noise_figure >= 1.0) {
            return Err(SimError::arg(format!("noise figure must be >= 1, got {}", self.noise_figure)));
        }
        Ok(())
    }

    pub fn with_bandwidth(self, bandwidth: f64) -> Self {
        Self { bandwidth, ..self }
    }
}

/// Converts a decibel value to a linear power ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Ratio of diagonal to off-diagonal energy in dB; `+∞` when nothing leaks
/// off the diagonal.
pub fn diagonality_db(h: &CMat) -> Result<f64> {
    if !h.is_square() {
        return Err(SimError::arg(format!("diagonality needs a square matrix, got {}x{}", h.nrows(), h.ncols())));
    }
    let mut on = 0.0;
    let mut off = 0.0;
    for ((i, j), z) in h.iter().enumerate().map(|(idx, z)| ((idx % h.nrows(), idx / h.nrows()), z)) {
        if i == j {
            on += z.norm_sqr();
        } else {
            off += z.norm_sqr();
        }
    }
    if on == 0.0 && off == 0.0 {
        return Err(SimError::UndefinedMetric("diagonality of a zero matrix".into()));
    }
    if off == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (on / off).log10())
}

/// Thermal noise power `(F − 1) k_B T₀ B` at each receive antenna, in watts.
pub fn noise_power(budget: &LinkBudget) -> f64 {
    (budget.noise_figure - 1.0) * BOLTZMANN * budget.temperature * budget.bandwidth
}

/// Per-stream SINR when stream `i` is decoded from receive antenna `i` and
/// the other streams are interference.
pub fn stream_sinr(h: &CMat, budget: &LinkBudget) -> Result<Vec<f64>> {
    if h.nrows() != h.ncols() {
        return Err(SimError::arg(format!(
            "paired streams need M = L, got {}x{}",
            h.nrows(),
            h.ncols()
        )));
    }
    budget.validate()?;
    let p = budget.per_antenna_tx_power;
    let sigma2 = noise_power(budget);
    Ok((0..h.nrows())
        .map(|i| {
            let row = h.row(i);
            let useful = row[i].norm_sqr() * p;
            let leak: f64 = row.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, z)| z.norm_sqr()).sum();
            let denom = leak * p + sigma2;
            if useful == 0.0 {
                0.0
            } else {
                useful / denom
            }
        })
        .collect())
}

/// `Σ log₂(1 + SINR_i)` in bits/s/Hz.
pub fn sum_spectral_efficiency(h: &CMat, budget: &LinkBudget) -> Result<f64> {
    Ok(stream_sinr(h, budget)?.into_iter().map(|s| (1.0 + s).log2()).sum())
}

/// `log₂ det(I + (P/σ²) H Hᴴ)`: joint-decoding capacity of the same channel,
/// reported alongside the per-stream figure for comparison.
pub fn log_det_capacity(h: &CMat, budget: &LinkBudget) -> Result<f64> {
    budget.validate()?;
    let snr = budget.per_antenna_tx_power / noise_power(budget);
    let m = h.nrows();
    let gram = CMat::identity(m, m) + (h * h.adjoint()) * Complex64::new(snr, 0.0);
    let det = gram.determinant();
    if !(det.re.is_finite() && det.re > 0.0) {
        return Err(SimError::Numerical(format!("log-det capacity: determinant {det}")));
    }
    Ok(det.re.log2())
}

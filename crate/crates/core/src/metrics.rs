//! Phase dispersion across the array and the synchronization test.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oscillator::ErrorComponents;

/// Coherent-gain threshold: 18 degrees keeps at least 90% of ideal gain.
pub const ETA_COHERENT_GAIN_DEG: f64 = 18.0;
/// Default synchronization threshold, degrees.
pub const ETA_DEFAULT_DEG: f64 = 1.0;

/// Sum of a node's per-interval phase error contributions:
/// `2 pi df T + 2 pi e_f T - pi T df + d_theta + e_theta`.
pub fn total_phase_error(c: &ErrorComponents, update_interval: f64) -> f64 {
    let t = update_interval;
    TAU * c.drift * t + TAU * c.freq_meas_err * t - PI * t * c.drift + c.jitter + c.phase_meas_err
}

/// Phase a node's signal reaches at the end of the interval,
/// `2 pi f T + theta`, with `f` the carrier offset.
pub fn end_of_interval_phase(freq: f64, phase: f64, update_interval: f64) -> f64 {
    TAU * freq * update_interval + phase
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (denominator `N - 1`), two-pass.
pub fn sigma_phi(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::TooFewValues {
            needed: 2,
            got: values.len(),
        });
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m).powi(2)).sum();
    Ok((ss / (values.len() - 1) as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseErrorReport {
    pub per_node_total_phase: Vec<f64>,
    /// Radians.
    pub sigma_phi: f64,
    pub mean_phase: f64,
    pub converged: bool,
    /// Radians.
    pub eta: f64,
}

impl PhaseErrorReport {
    pub fn sigma_phi_deg(&self) -> f64 {
        self.sigma_phi.to_degrees()
    }
}

/// Dispersion of `values` (radians) against threshold `eta` (radians).
pub fn check_convergence(values: &[f64], eta: f64) -> Result<PhaseErrorReport> {
    let sigma = sigma_phi(values)?;
    Ok(PhaseErrorReport {
        per_node_total_phase: values.to_vec(),
        sigma_phi: sigma,
        mean_phase: mean(values),
        converged: sigma <= eta,
        eta,
    })
}

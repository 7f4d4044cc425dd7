//! Pulsed single-photon source: biexciton-exciton cascade, temporal gating,
//! lifetime histograms with bi-exponential fits, and HBT `g2(0)` estimates.

mod calibrate;
mod emission;
mod fit;
mod hbt;
mod lifetime;

pub use calibrate::{calibrate_biexciton_yield, gated_g2, CalibrationSettings};
pub use emission::{apply_gate, simulate_coherent, simulate_emission, Origin, PhotonEvent};
pub use fit::{fit_biexponential, BiexpFit};
pub use hbt::{g2_zero, hbt_coincidences, hbt_coincidences_with, G2Estimate, HbtHistogram, HbtSettings};
pub use lifetime::{lifetime_histogram, DecayCurve};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SourceError {
    #[error("invalid source parameters: {0}")]
    InvalidParams(String),
    #[error("insufficient statistics: {0}")]
    InsufficientStatistics(String),
    #[error("bi-exponential fit did not converge after {iterations} iterations")]
    FitFailed { iterations: usize, best: Box<BiexpFit> },
    #[error("target g2(0) = {target} is unreachable; maximum over the yield range is {max}")]
    Unreachable { target: f64, max: f64 },
}

/// Emitter and detection parameters. Times are in nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceParams {
    /// Excitation pulses per second.
    pub rep_rate: f64,
    /// Exciton lifetime.
    pub tau_x: f64,
    /// Biexciton lifetime.
    pub tau_bx: f64,
    /// Probability of an exciton photon per pulse.
    pub p_x: f64,
    /// Probability of a biexciton photon per pulse.
    pub q_bx: f64,
    /// End-to-end collection and detection efficiency.
    pub eta: f64,
    /// Detector dark counts per second.
    pub dark_rate: f64,
}

impl Default for SourceParams {
    fn default() -> Self {
        Self { rep_rate: 2.0e6, tau_x: 25.0, tau_bx: 4.0, p_x: 1.0, q_bx: 0.0, eta: 0.1, dark_rate: 100.0 }
    }
}

impl SourceParams {
    pub fn period_ns(&self) -> f64 {
        1e9 / self.rep_rate
    }

    pub fn with_q_bx(self, q_bx: f64) -> Self {
        Self { q_bx, ..self }
    }

    pub fn validate(&self) -> Result<(), SourceError> {
        let bad = |m: String| Err(SourceError::InvalidParams(m));
        for (name, p) in [("p_x", self.p_x), ("q_bx", self.q_bx), ("eta", self.eta)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} is not a probability"));
            }
        }
        if !(self.tau_x > 0.0 && self.tau_x.is_finite() && self.tau_bx > 0.0) {
            return bad(format!("lifetimes must be positive (tau_x = {}, tau_bx = {})", self.tau_x, self.tau_bx));
        }
        if self.tau_bx >= self.tau_x {
            return bad(format!("tau_bx = {} must be shorter than tau_x = {}", self.tau_bx, self.tau_x));
        }
        if !(self.rep_rate > 0.0 && self.rep_rate.is_finite()) {
            return bad(format!("rep_rate = {} must be positive", self.rep_rate));
        }
        if self.period_ns() <= 5.0 * self.tau_x {
            return bad(format!("pulse period {} ns must exceed 5·tau_x = {} ns", self.period_ns(), 5.0 * self.tau_x));
        }
        if !(self.dark_rate >= 0.0 && self.dark_rate.is_finite()) {
            return bad(format!("dark_rate = {} must be non-negative", self.dark_rate));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let p = SourceParams::default();
        p.validate().unwrap();
        assert_eq!(p.period_ns(), 500.0);
    }

    #[test]
    fn rejects_invalid_parameters() {
        let p = SourceParams::default();
        assert!(p.with_q_bx(1.5).validate().is_err());
        assert!(SourceParams { eta: -0.1, ..p }.validate().is_err());
        assert!(SourceParams { tau_bx: 30.0, ..p }.validate().is_err());
        assert!(SourceParams { rep_rate: 1e8, ..p }.validate().is_err());
        assert!(SourceParams { tau_x: 0.0, ..p }.validate().is_err());
        assert!(SourceParams { dark_rate: f64::NAN, ..p }.validate().is_err());
    }
}

use serde::{Deserialize, Serialize};

use super::{apply_gate, g2_zero, hbt_coincidences_with, simulate_emission};
use super::{G2Estimate, HbtSettings, SourceError, SourceParams};

/// Monte Carlo budget for yield calibration. Every bisection step reuses the
/// same seed (common random numbers), so the simulated response is smooth in
/// `q_bx` and the search is deterministic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSettings {
    pub n_pulses: u64,
    pub seed: u64,
    pub max_iterations: usize,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        Self { n_pulses: 1_000_000, seed: 0x6732_6361_6c69_6221, max_iterations: 40 }
    }
}

/// Simulates `n_pulses`, gates, and estimates `g2(0)` with default HBT binning.
pub fn gated_g2(params: &SourceParams, gate_ns: f64, n_pulses: u64, seed: u64) -> Result<G2Estimate, SourceError> {
    let events = simulate_emission(params, n_pulses, seed)?;
    let gated = apply_gate(&events, gate_ns)?;
    let settings = HbtSettings { gate_ns, ..HbtSettings::default() };
    g2_zero(&hbt_coincidences_with(&gated, params, seed, &settings))
}

/// Finds the biexciton yield whose gated `g2(0)` matches `target_g2`.
///
/// Bisects `q_bx` on `[0, 1]` until the simulated estimate lies within one
/// standard error of the target.
pub fn calibrate_biexciton_yield(
    target_g2: f64,
    gate_ns: f64,
    base: &SourceParams,
    settings: &CalibrationSettings,
) -> Result<f64, SourceError> {
    if !(target_g2 >= 0.0 && target_g2.is_finite()) {
        return Err(SourceError::InvalidParams(format!("target g2 = {target_g2} must be non-negative")));
    }
    base.validate()?;
    if target_g2 == 0.0 {
        return Ok(0.0);
    }
    let eval = |q: f64| gated_g2(&base.with_q_bx(q), gate_ns, settings.n_pulses, settings.seed);

    let top = eval(1.0)?;
    if top.g2_zero + top.stderr < target_g2 {
        return Err(SourceError::Unreachable { target: target_g2, max: top.g2_zero });
    }
    if (top.g2_zero - target_g2).abs() <= top.stderr {
        return Ok(1.0);
    }

    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..settings.max_iterations {
        let mid = 0.5 * (lo + hi);
        let est = eval(mid)?;
        if (est.g2_zero - target_g2).abs() <= est.stderr {
            return Ok(mid);
        }
        if est.g2_zero < target_g2 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

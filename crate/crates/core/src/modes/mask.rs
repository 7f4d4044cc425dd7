use std::f64::consts::PI;

use num_complex::Complex64;

use super::field::ideal_angular;
use super::{ComplexField, Grid, ModeLabel, ModesError};

/// Wraps a phase into `(-π, π]`.
pub fn wrap_phase(p: f64) -> f64 {
    let mut w = (p + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w += 2.0 * PI;
    }
    w
}

/// Pointwise phase-only transmission `exp(i·phase)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMask {
    grid: Grid,
    phases: Vec<f64>,
}

impl PhaseMask {
    pub fn zeros(grid: Grid) -> Self {
        Self { grid, phases: vec![0.0; grid.len()] }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let phases = grid.points().map(|(_, _, x, y)| wrap_phase(f(x, y))).collect();
        Self { grid, phases }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn negated(&self) -> Self {
        Self { grid: self.grid, phases: self.phases.iter().map(|p| wrap_phase(-p)).collect() }
    }
}

/// Bob's decoding hologram: the conjugate of the ideal state's phase.
pub fn decode_mask(grid: Grid, label: ModeLabel) -> PhaseMask {
    PhaseMask::from_fn(grid, |x, y| -ideal_angular(label, x, y).arg())
}

pub fn apply_mask(field: &ComplexField, mask: &PhaseMask) -> Result<ComplexField, ModesError> {
    if field.grid() != mask.grid() {
        return Err(ModesError::GridMismatch);
    }
    let mut out = field.clone();
    for (v, &p) in out.data_mut().iter_mut().zip(mask.phases()) {
        *v *= Complex64::from_polar(1.0, p);
    }
    Ok(out)
}

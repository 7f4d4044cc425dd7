use super::field::envelope;
use super::{ComplexField, Grid, ModesError};

const NORMALIZATION_TOL: f64 = 1e-6;

/// Normalized fundamental Gaussian of the given waist on `grid`.
pub fn gaussian_mode(grid: Grid, waist: f64) -> ComplexField {
    ComplexField::from_fn(grid, |x, y| envelope(waist, x, y).into()).normalized()
}

/// `|⟨mode|field⟩|²` for two fields on the same grid.
pub fn mode_overlap(mode: &ComplexField, field: &ComplexField) -> Result<f64, ModesError> {
    Ok(mode.inner(field)?.norm_sqr())
}

/// Probability that a unit-power field couples into a single-mode fiber whose
/// fundamental mode has waist `smf_waist` in the same plane.
pub fn smf_coupling(field: &ComplexField, smf_waist: f64) -> Result<f64, ModesError> {
    if !smf_waist.is_finite() || smf_waist <= 0.0 {
        return Err(ModesError::InvalidWaist(smf_waist));
    }
    let power = field.power();
    if (power - 1.0).abs() > NORMALIZATION_TOL {
        return Err(ModesError::NotNormalized { power });
    }
    let mode = gaussian_mode(*field.grid(), smf_waist);
    Ok(mode_overlap(&mode, field)?.clamp(0.0, 1.0))
}

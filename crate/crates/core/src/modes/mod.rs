//! Spatial modes of the two d=3 mutually unbiased OAM bases.
//!
//! All states share one Gaussian envelope `exp(-r²/w²)`; they differ only in
//! their azimuthal structure. The first basis carries helical phases
//! `exp(i·l·φ)` with `l = -1, 0, +1`; the second basis holds coherent
//! superpositions of those three. A phase-only SLM cannot write the amplitude
//! structure of the superpositions, so the `PhaseOnly` encoding keeps their
//! phase over the plain Gaussian envelope.
//!
//! Far-field coordinates use the scaling `λf = π` in waist units, under
//! which a unit-waist Gaussian is its own far-field image.

mod coupling;
mod crosstalk;
mod field;
mod grid;
mod image;
mod mask;
mod mub;
mod propagate;

pub use coupling::{gaussian_mode, mode_overlap, smf_coupling};
pub use crosstalk::{crosstalk_matrix, decoded_far_field, CrosstalkMatrix, Waists};
pub use field::{synthesize_state, ComplexField, Encoding};
pub use grid::{Centering, Grid};
pub use image::{intensity_image, write_pgm16, IntensityImage};
pub use mask::{apply_mask, decode_mask, wrap_phase, PhaseMask};
pub use mub::{mub_coefficients, ModeLabel, MubBasis, MubCoefficients};
pub use propagate::{far_field, far_field_window, FAR_FIELD_SCALE};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModesError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid waist {0}: must be finite and positive")]
    InvalidWaist(f64),
    #[error("mode index {0} out of range (expected 0..3)")]
    InvalidIndex(u8),
    #[error("grid too small for the mode: {leak:.3e} of the power falls outside the window")]
    PowerLeak { leak: f64 },
    #[error("field and mask are defined on different grids")]
    GridMismatch,
    #[error("field is not normalized (power {power})")]
    NotNormalized { power: f64 },
    #[error("crosstalk column has zero total coupling")]
    DegenerateColumn,
}

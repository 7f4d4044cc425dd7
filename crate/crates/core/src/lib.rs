//! Simulation core for a three-dimensional orbital-angular-momentum QKD link.
//!
//! The crate is split along the physical chain of the experiment:
//!
//! * [`modes`]: the six spatial states of two mutually unbiased bases, phase
//!   masks, far-field propagation and single-mode-fiber projection.
//! * [`source`]: Monte Carlo model of a pulsed biexciton-exciton emitter with
//!   temporal gating, lifetime fitting and HBT `g2(0)` estimation.
//! * [`protocol`]: prepare-and-measure rounds, sifting, error estimation and
//!   the asymptotic secret key rate.
//! * [`wire`]: framed classical channel and the two-party session state
//!   machines.

pub mod modes;
pub mod protocol;
pub mod seed;
pub mod source;
pub mod wire;

pub use modes::{
    crosstalk_matrix, decode_mask, far_field, mub_coefficients, synthesize_state, ComplexField, CrosstalkMatrix,
    Encoding, Grid, ModeLabel, ModesError, MubBasis, PhaseMask, Waists,
};
pub use protocol::{
    max_tolerated_error, secure_key_rate, shannon_entropy_d, ChannelModel, KeyRateReport, ProtocolConfig,
    ProtocolError, QberReport,
};
pub use source::{G2Estimate, SourceError, SourceParams};
pub use wire::{Message, Role, SessionError, WireError};

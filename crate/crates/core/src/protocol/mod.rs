//! Prepare-and-measure QKD in dimension `d` with two mutually unbiased bases:
//! random state preparation, a crosstalk-plus-dark-click channel, sifting,
//! error estimation on a disclosed sample and the asymptotic key rate.
//!
//! Symbols `0, 1, 2` stand for `a, b, c` in the first basis and `α, β, γ` in
//! the second.

mod channel;
mod entropy;
mod records;
mod run;
mod sift;

pub use channel::{ChannelModel, DarkClickTargets};
pub use entropy::{max_tolerated_error, secure_key_rate, shannon_entropy_d};
pub use records::{alice_prepare, bob_bases, bob_measure, measure_round, transcript_csv, AliceRecord, BobRecord};
pub use run::{run_protocol, KeyRateReport, ProtocolRun};
pub use sift::{disclosure_rounds, estimate_qber, sift, wilson_interval, QberReport, SiftedKey, SiftedSymbol};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Rounds simulated per seeded block.
pub const ROUND_BLOCK: u64 = 1 << 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("dimension {0} is below 2")]
    InvalidDimension(usize),
    #[error("{0} is not a probability")]
    Domain(f64),
    #[error("invalid protocol configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid channel: {0}")]
    InvalidChannel(String),
    #[error("transcripts are misaligned at round {0}")]
    Misaligned(u64),
    #[error("only {available} disclosed samples in basis {basis}; at least {required} needed")]
    InsufficientSamples { basis: usize, available: u64, required: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub d: usize,
    pub n_rounds: u64,
    /// Fraction of each basis' sifted rounds sacrificed for error estimation.
    pub disclosure_fraction: f64,
    /// Error rate in either basis above which the session aborts.
    pub abort_threshold: f64,
    /// Minimum disclosed rounds per basis for a usable estimate.
    pub min_disclosed: u64,
}

impl ProtocolConfig {
    /// Defaults: 10% disclosure and abort at the tolerated-error threshold.
    pub fn new(d: usize, n_rounds: u64) -> Result<Self, ProtocolError> {
        let cfg =
            Self { d, n_rounds, disclosure_fraction: 0.1, abort_threshold: max_tolerated_error(d)?, min_disclosed: 10 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.d < 2 {
            return Err(ProtocolError::InvalidDimension(self.d));
        }
        if self.d > u8::MAX as usize {
            return Err(ProtocolError::InvalidConfig(format!("d = {} does not fit a symbol byte", self.d)));
        }
        if self.n_rounds == 0 {
            return Err(ProtocolError::InvalidConfig("n_rounds must be at least 1".into()));
        }
        if !(self.disclosure_fraction > 0.0 && self.disclosure_fraction < 1.0) {
            return Err(ProtocolError::InvalidConfig(format!(
                "disclosure_fraction = {} must lie in (0, 1)",
                self.disclosure_fraction
            )));
        }
        let e_max = max_tolerated_error(self.d)?;
        if !(self.abort_threshold >= 0.0 && self.abort_threshold <= e_max + 1e-9) {
            return Err(ProtocolError::InvalidConfig(format!(
                "abort_threshold = {} must lie in [0, {e_max:.6}]",
                self.abort_threshold
            )));
        }
        Ok(())
    }
}

use serde::{Deserialize, Serialize};

/// Why a session was abandoned. The discriminant is the wire code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum AbortReason {
    /// Peer speaks a different protocol version.
    Version = 1,
    /// Dimension or round count differs between the parties.
    ConfigMismatch = 2,
    /// Message arrived in a phase that does not expect it.
    ProtocolOrder = 3,
    /// Message content is inconsistent with the session.
    InvalidMessage = 4,
    /// The two independently computed key reports differ.
    KeyMismatch = 5,
    /// Too few sifted rounds to estimate the error rate.
    InsufficientSamples = 6,
    /// Error rate in a basis exceeds the abort threshold.
    QberThreshold = 7,
    /// The byte stream failed or closed mid-session.
    Transport = 8,
}

impl AbortReason {
    pub const ALL: [AbortReason; 8] = [
        AbortReason::Version,
        AbortReason::ConfigMismatch,
        AbortReason::ProtocolOrder,
        AbortReason::InvalidMessage,
        AbortReason::KeyMismatch,
        AbortReason::InsufficientSamples,
        AbortReason::QberThreshold,
        AbortReason::Transport,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.code() == code)
    }
}

/// Classical post-processing messages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Message {
    Hello {
        d: u16,
        n_rounds: u64,
        protocol_version: u16,
    },
    /// Bob's bases (`true` = second basis) and click flags for rounds
    /// `start..start + bases.len()`.
    BasisAnnounce {
        start: u64,
        bases: Vec<bool>,
        detected: Vec<bool>,
    },
    /// Rounds kept after sifting, for `start..start + kept.len()`.
    SiftMask {
        start: u64,
        kept: Vec<bool>,
    },
    /// Sifted rounds whose outcomes Bob must reveal, strictly increasing.
    DiscloseRequest {
        rounds: Vec<u64>,
    },
    /// Bob's outcomes for the requested rounds, in request order.
    DiscloseReply {
        symbols: Vec<u8>,
    },
    QberResult {
        e_b1: f64,
        e_b2: f64,
        disclosed: [u64; 2],
        mismatches: [u64; 2],
    },
    KeyReport {
        key_rate: f64,
        secret_bits: u64,
    },
    Abort {
        reason: AbortReason,
    },
}

impl Message {
    pub fn type_code(&self) -> u8 {
        match self {
            Message::Hello { .. } => 0x01,
            Message::BasisAnnounce { .. } => 0x02,
            Message::SiftMask { .. } => 0x03,
            Message::DiscloseRequest { .. } => 0x04,
            Message::DiscloseReply { .. } => 0x05,
            Message::QberResult { .. } => 0x06,
            Message::KeyReport { .. } => 0x07,
            Message::Abort { .. } => 0x08,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Message::Hello { .. } => "Hello",
            Message::BasisAnnounce { .. } => "BasisAnnounce",
            Message::SiftMask { .. } => "SiftMask",
            Message::DiscloseRequest { .. } => "DiscloseRequest",
            Message::DiscloseReply { .. } => "DiscloseReply",
            Message::QberResult { .. } => "QberResult",
            Message::KeyReport { .. } => "KeyReport",
            Message::Abort { .. } => "Abort",
        }
    }
}

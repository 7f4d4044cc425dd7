//! Framed classical channel and the two-party post-processing sessions.
//!
//! Frames are `"HQKD" | version | type | len (u32 BE) | payload | crc32 (BE)`.
//! The message flow is Hello → BasisAnnounce → SiftMask → DiscloseRequest →
//! DiscloseReply → QberResult → KeyReport. The channel is assumed to be
//! authenticated out of band.

mod frame;
mod message;
mod session;
mod transport;

pub use frame::{
    decode_frame, encode_frame, read_frame, write_frame, CRC_LEN, FRAME_VERSION, HEADER_LEN, MAGIC, MAX_PAYLOAD,
};
pub use message::{AbortReason, Message};
pub use session::{
    session_step, AbortInfo, Event, Phase, Role, SessionState, ANNOUNCE_CHUNK, KEY_RATE_TOLERANCE, PROTOCOL_VERSION,
};
pub use transport::{finish_session, loopback, prepare_party, run_over_stream, PartyConfig, PipeEnd, SessionOutcome};

use std::io;

use thiserror::Error;

use crate::protocol::ProtocolError;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("bad frame magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported frame version {0}")]
    UnsupportedVersion(u8),
    #[error("CRC mismatch: frame says {expected:#010x}, content gives {actual:#010x}")]
    BadCrc { expected: u32, actual: u32 },
    #[error("truncated frame: expected {expected} bytes, got {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("unknown message type {0:#04x}")]
    UnknownType(u8),
    #[error("payload length {0} exceeds the 16 MiB limit")]
    LengthExceeded(u64),
    #[error("malformed payload: {0}")]
    Malformed(String),
    #[error("peer closed the connection")]
    Disconnected,
    #[error("i/o error ({kind:?}): {message}")]
    Io { kind: io::ErrorKind, message: String },
}

impl From<io::Error> for WireError {
    fn from(e: io::Error) -> Self {
        WireError::Io { kind: e.kind(), message: e.to_string() }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("session aborted ({reason:?}){}", if *by_peer { " by peer" } else { "" })]
    Aborted { reason: AbortReason, by_peer: bool },
    #[error(transparent)]
    Transport(#[from] WireError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("session ended before completion")]
    Incomplete,
}

impl SessionError {
    /// Reason code reported for this failure.
    pub fn reason(&self) -> AbortReason {
        match self {
            SessionError::Aborted { reason, .. } => *reason,
            SessionError::Transport(_) | SessionError::Incomplete => AbortReason::Transport,
            SessionError::Protocol(_) => AbortReason::InvalidMessage,
        }
    }
}

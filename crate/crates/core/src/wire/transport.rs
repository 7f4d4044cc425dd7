use std::io::{self, Read, Write};
use std::sync::mpsc::{channel, Receiver, Sender};

use serde::{Deserialize, Serialize};

use super::session::{session_step, Event, Phase, Role, SessionState};
use super::{read_frame, write_frame, Message, SessionError};
use crate::protocol::{alice_prepare, bob_measure, ChannelModel, KeyRateReport, ProtocolConfig};

/// One end of an in-memory, ordered, reliable byte pipe. Dropping an end
/// closes the pipe: the other end then reads end-of-stream and fails writes.
pub struct PipeEnd {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
    pending: Vec<u8>,
    pos: usize,
}

/// Connected pair of in-process pipe ends.
pub fn loopback() -> (PipeEnd, PipeEnd) {
    let (a_tx, b_rx) = channel();
    let (b_tx, a_rx) = channel();
    let end = |tx, rx| PipeEnd { tx, rx, pending: Vec::new(), pos: 0 };
    (end(a_tx, a_rx), end(b_tx, b_rx))
}

impl Read for PipeEnd {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        if self.pos == self.pending.len() {
            match self.rx.recv() {
                Ok(chunk) => {
                    self.pending = chunk;
                    self.pos = 0;
                }
                Err(_) => return Ok(0),
            }
        }
        let n = buf.len().min(self.pending.len() - self.pos);
        buf[..n].copy_from_slice(&self.pending[self.pos..self.pos + n]);
        self.pos += n;
        Ok(n)
    }
}

impl Write for PipeEnd {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.tx.send(buf.to_vec()).map_err(|_| io::Error::new(io::ErrorKind::BrokenPipe, "peer closed the pipe"))?;
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// Everything one party needs to run a session.
///
/// The quantum channel is emulated: Bob regenerates Alice's prepared states
/// from the shared `seed` solely to sample his detector outcomes, which
/// stands in for receiving her photons. Nothing derived from those states
/// crosses the classical channel except disclosed outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct PartyConfig {
    pub protocol: ProtocolConfig,
    pub channel: ChannelModel,
    pub seed: u64,
}

/// Result of a session that reached error estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionOutcome {
    pub role: Role,
    pub report: KeyRateReport,
    /// This party's undisclosed sifted symbols; empty when the error rate
    /// forced an abort.
    pub key: Vec<u8>,
}

/// Initial state and local events for `role`.
pub fn prepare_party(role: Role, config: &PartyConfig) -> Result<(SessionState, Event), SessionError> {
    config.protocol.validate()?;
    let alice = alice_prepare(&config.protocol, config.seed);
    Ok(match role {
        Role::Alice => (SessionState::alice(config.protocol, config.seed, alice), Event::Start),
        Role::Bob => {
            let bob = bob_measure(&config.protocol, &alice, &config.channel, config.seed)?;
            (SessionState::bob(config.protocol, config.seed), Event::MeasurementDone(bob))
        }
    })
}

/// Turns a terminal state into the session result.
pub fn finish_session(state: &SessionState) -> Result<SessionOutcome, SessionError> {
    match (state.phase(), state.report(), state.abort_info()) {
        (Phase::Done, Some(report), _) => {
            Ok(SessionOutcome { role: state.role(), report: *report, key: state.key().to_vec() })
        }
        // Exceeding the error threshold still yields a complete report.
        (Phase::Aborted, Some(report), Some(info)) if report.abort && !info.by_peer => {
            Ok(SessionOutcome { role: state.role(), report: *report, key: Vec::new() })
        }
        (_, _, Some(info)) => Err(SessionError::Aborted { reason: info.reason, by_peer: info.by_peer }),
        _ => Err(SessionError::Incomplete),
    }
}

/// Runs one party's session over a reliable, ordered byte stream until it
/// completes or aborts.
///
/// A protocol violation sends `Abort` before returning; a transport failure
/// abandons the session with no key.
pub fn run_over_stream<S: Read + Write>(
    role: Role,
    config: &PartyConfig,
    mut stream: S,
) -> Result<SessionOutcome, SessionError> {
    let (mut state, local) = prepare_party(role, config)?;
    let mut events = vec![local];
    loop {
        for event in events.drain(..) {
            let (next, out) = session_step(state, event);
            state = next;
            for msg in &out {
                let sent = write_frame(&mut stream, msg);
                // The peer may hang up right after an abort we are reporting.
                if matches!(msg, Message::Abort { .. }) {
                    break;
                }
                sent?;
            }
        }
        if state.is_terminal() {
            return finish_session(&state);
        }
        events.push(Event::Received(read_frame(&mut stream)?));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pipe_carries_bytes_in_order_and_reports_hangup() {
        let (mut a, mut b) = loopback();
        a.write_all(b"hello ").unwrap();
        a.write_all(b"world").unwrap();
        let mut buf = [0u8; 11];
        b.read_exact(&mut buf).unwrap();
        assert_eq!(&buf, b"hello world");
        drop(a);
        assert_eq!(b.read(&mut buf).unwrap(), 0);
        assert!(b.write_all(b"x").is_err());
    }
}

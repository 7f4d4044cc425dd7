use serde::{Deserialize, Serialize};

use super::{AbortReason, Message};
use crate::modes::MubBasis;
use crate::protocol::{disclosure_rounds, AliceRecord, BobRecord, KeyRateReport, ProtocolConfig, QberReport};

/// Version carried in `Hello`; distinct from the frame format version.
pub const PROTOCOL_VERSION: u16 = 1;
/// Rounds per `BasisAnnounce` / `SiftMask` chunk.
pub const ANNOUNCE_CHUNK: usize = 1 << 20;
/// Largest accepted difference between the parties' key rates.
pub const KEY_RATE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Alice,
    Bob,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Alice => "alice",
            Role::Bob => "bob",
        }
    }
}

/// Session phases, always traversed in this order; `Aborted` can be entered
/// from any phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Init,
    Announced,
    Sifted,
    Estimated,
    Done,
    Aborted,
}

/// Inputs to [`session_step`].
#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    /// Alice opens the session.
    Start,
    /// Bob's detectors have recorded every round.
    MeasurementDone(Vec<BobRecord>),
    Received(Message),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AbortInfo {
    pub reason: AbortReason,
    /// Whether the peer sent the abort.
    pub by_peer: bool,
}

/// One party's view of a session. Advanced only by [`session_step`].
#[derive(Debug, Clone, PartialEq)]
pub struct SessionState {
    role: Role,
    phase: Phase,
    config: ProtocolConfig,
    seed: u64,
    alice: Vec<AliceRecord>,
    bob: Vec<BobRecord>,
    started: bool,
    hello_seen: bool,
    /// Alice: Bob's announced bases and click flags.
    peer_bases: Vec<bool>,
    peer_detected: Vec<bool>,
    kept: Vec<bool>,
    disclosed: Vec<u64>,
    qber: Option<QberReport>,
    report: Option<KeyRateReport>,
    key: Vec<u8>,
    abort: Option<AbortInfo>,
}

impl SessionState {
    fn new(role: Role, config: ProtocolConfig, seed: u64, alice: Vec<AliceRecord>) -> Self {
        Self {
            role,
            phase: Phase::Init,
            config,
            seed,
            alice,
            bob: Vec::new(),
            started: false,
            hello_seen: false,
            peer_bases: Vec::new(),
            peer_detected: Vec::new(),
            kept: Vec::new(),
            disclosed: Vec::new(),
            qber: None,
            report: None,
            key: Vec::new(),
            abort: None,
        }
    }

    /// Alice's session over her prepared states. `seed` drives the choice of
    /// disclosed rounds.
    pub fn alice(config: ProtocolConfig, seed: u64, records: Vec<AliceRecord>) -> Self {
        Self::new(Role::Alice, config, seed, records)
    }

    pub fn bob(config: ProtocolConfig, seed: u64) -> Self {
        Self::new(Role::Bob, config, seed, Vec::new())
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self.phase, Phase::Done | Phase::Aborted)
    }

    pub fn qber(&self) -> Option<&QberReport> {
        self.qber.as_ref()
    }

    pub fn report(&self) -> Option<&KeyRateReport> {
        self.report.as_ref()
    }

    /// This party's undisclosed sifted symbols, available once estimation is
    /// complete and the session did not abort.
    pub fn key(&self) -> &[u8] {
        &self.key
    }

    pub fn abort_info(&self) -> Option<AbortInfo> {
        self.abort
    }

    fn n(&self) -> usize {
        self.config.n_rounds as usize
    }

    fn abort(mut self, reason: AbortReason) -> (Self, Vec<Message>) {
        self.phase = Phase::Aborted;
        self.abort = Some(AbortInfo { reason, by_peer: false });
        self.key.clear();
        (self, vec![Message::Abort { reason }])
    }

    /// Key-rate comparison shared by both parties.
    fn reports_agree(&self, key_rate: f64, secret_bits: u64) -> bool {
        self.report.is_some_and(|r| (r.key_rate - key_rate).abs() <= KEY_RATE_TOLERANCE && r.secret_bits == secret_bits)
    }

    /// Records the error estimate and key report; aborts past the threshold.
    fn finish_estimate(mut self, qber: QberReport, sifted: u64, own_key: Vec<u8>) -> Self {
        let report = KeyRateReport::new(&self.config, &qber, sifted).expect("rates come from counts");
        self.qber = Some(qber);
        self.report = Some(report);
        if report.abort {
            self.phase = Phase::Aborted;
            self.abort = Some(AbortInfo { reason: AbortReason::QberThreshold, by_peer: false });
        } else {
            self.key = own_key;
            self.phase = Phase::Estimated;
        }
        self
    }

    fn alice_step(mut self, event: Event) -> (Self, Vec<Message>) {
        match (self.phase, event) {
            (Phase::Init, Event::Start) if !self.started => {
                self.started = true;
                let hello = Message::Hello {
                    d: self.config.d as u16,
                    n_rounds: self.config.n_rounds,
                    protocol_version: PROTOCOL_VERSION,
                };
                (self, vec![hello])
            }
            (Phase::Init | Phase::Announced, Event::Received(Message::BasisAnnounce { start, bases, detected }))
                if self.started =>
            {
                if start != self.peer_bases.len() as u64
                    || bases.len() != detected.len()
                    || self.peer_bases.len() + bases.len() > self.n()
                {
                    return self.abort(AbortReason::InvalidMessage);
                }
                self.phase = Phase::Announced;
                self.peer_bases.extend(bases);
                self.peer_detected.extend(detected);
                if self.peer_bases.len() < self.n() {
                    return (self, Vec::new());
                }
                self.alice_sift()
            }
            (Phase::Sifted, Event::Received(Message::DiscloseReply { symbols })) => {
                if symbols.len() != self.disclosed.len() || symbols.iter().any(|&s| s as usize >= self.config.d) {
                    return self.abort(AbortReason::InvalidMessage);
                }
                let (mut n, mut m) = ([0u64; 2], [0u64; 2]);
                for (&r, &s) in self.disclosed.iter().zip(&symbols) {
                    let a = self.alice[r as usize];
                    n[a.basis.index()] += 1;
                    m[a.basis.index()] += (a.symbol != s) as u64;
                }
                let qber = QberReport::from_counts(n, m);
                let sifted = self.kept.iter().filter(|&&k| k).count() as u64;
                let key = self.remaining(|r| self.alice[r].symbol);
                let result = Message::QberResult { e_b1: qber.e_b1, e_b2: qber.e_b2, disclosed: n, mismatches: m };
                (self.finish_estimate(qber, sifted, key), vec![result])
            }
            (Phase::Estimated, Event::Received(Message::KeyReport { key_rate, secret_bits })) => {
                if !self.reports_agree(key_rate, secret_bits) {
                    return self.abort(AbortReason::KeyMismatch);
                }
                let r = self.report.expect("estimated");
                self.phase = Phase::Done;
                (self, vec![Message::KeyReport { key_rate: r.key_rate, secret_bits: r.secret_bits }])
            }
            (_, other) => self.unexpected(other),
        }
    }

    /// Undisclosed kept rounds mapped through `f`, in round order.
    fn remaining(&self, f: impl Fn(usize) -> u8) -> Vec<u8> {
        let mut next = self.disclosed.iter().peekable();
        let mut out = Vec::new();
        for (r, _) in self.kept.iter().enumerate().filter(|(_, &k)| k) {
            if next.peek() == Some(&&(r as u64)) {
                next.next();
            } else {
                out.push(f(r));
            }
        }
        out
    }

    fn alice_sift(mut self) -> (Self, Vec<Message>) {
        let mut sifted = Vec::new();
        self.kept = self
            .alice
            .iter()
            .enumerate()
            .map(|(r, a)| {
                let bob_basis = if self.peer_bases[r] { MubBasis::Mub2 } else { MubBasis::Mub1 };
                let keep = self.peer_detected[r] && a.basis == bob_basis;
                if keep {
                    sifted.push((r as u64, a.basis));
                }
                keep
            })
            .collect();
        self.disclosed = disclosure_rounds(&sifted, self.config.disclosure_fraction, self.seed);
        let mut per_basis = [0u64; 2];
        for &r in &self.disclosed {
            per_basis[self.alice[r as usize].basis.index()] += 1;
        }
        if per_basis.iter().any(|&c| c < self.config.min_disclosed) {
            return self.abort(AbortReason::InsufficientSamples);
        }
        let mut out: Vec<Message> = self
            .kept
            .chunks(ANNOUNCE_CHUNK)
            .enumerate()
            .map(|(i, c)| Message::SiftMask { start: (i * ANNOUNCE_CHUNK) as u64, kept: c.to_vec() })
            .collect();
        out.push(Message::DiscloseRequest { rounds: self.disclosed.clone() });
        self.phase = Phase::Sifted;
        (self, out)
    }

    fn bob_announce(mut self) -> (Self, Vec<Message>) {
        let out = self
            .bob
            .chunks(ANNOUNCE_CHUNK)
            .enumerate()
            .map(|(i, c)| Message::BasisAnnounce {
                start: (i * ANNOUNCE_CHUNK) as u64,
                bases: c.iter().map(|r| r.basis == MubBasis::Mub2).collect(),
                detected: c.iter().map(|r| r.outcome.is_some()).collect(),
            })
            .collect();
        self.phase = Phase::Announced;
        (self, out)
    }

    fn bob_step(mut self, event: Event) -> (Self, Vec<Message>) {
        match (self.phase, event) {
            (Phase::Init, Event::Received(Message::Hello { d, n_rounds, protocol_version })) if !self.hello_seen => {
                if protocol_version != PROTOCOL_VERSION {
                    return self.abort(AbortReason::Version);
                }
                if d as usize != self.config.d || n_rounds != self.config.n_rounds {
                    return self.abort(AbortReason::ConfigMismatch);
                }
                self.hello_seen = true;
                if self.bob.is_empty() {
                    (self, Vec::new())
                } else {
                    self.bob_announce()
                }
            }
            (Phase::Init, Event::MeasurementDone(records)) if self.bob.is_empty() => {
                if records.len() != self.n() || records.iter().enumerate().any(|(i, r)| r.round != i as u64) {
                    return self.abort(AbortReason::InvalidMessage);
                }
                self.bob = records;
                if self.hello_seen {
                    self.bob_announce()
                } else {
                    (self, Vec::new())
                }
            }
            (Phase::Announced, Event::Received(Message::SiftMask { start, kept })) => {
                if start != self.kept.len() as u64 || self.kept.len() + kept.len() > self.n() {
                    return self.abort(AbortReason::InvalidMessage);
                }
                let offset = self.kept.len();
                if kept.iter().enumerate().any(|(i, &k)| k && self.bob[offset + i].outcome.is_none()) {
                    return self.abort(AbortReason::InvalidMessage);
                }
                self.kept.extend(kept);
                if self.kept.len() == self.n() {
                    self.phase = Phase::Sifted;
                }
                (self, Vec::new())
            }
            (Phase::Sifted, Event::Received(Message::DiscloseRequest { rounds })) if self.disclosed.is_empty() => {
                let valid = !rounds.is_empty()
                    && rounds.windows(2).all(|w| w[0] < w[1])
                    && rounds.iter().all(|&r| (r as usize) < self.n() && self.kept[r as usize]);
                if !valid {
                    return self.abort(AbortReason::InvalidMessage);
                }
                let symbols = rounds.iter().map(|&r| self.bob[r as usize].outcome.expect("kept")).collect();
                self.disclosed = rounds;
                (self, vec![Message::DiscloseReply { symbols }])
            }
            (Phase::Sifted, Event::Received(Message::QberResult { e_b1, e_b2, disclosed, mismatches }))
                if !self.disclosed.is_empty() =>
            {
                let mut n = [0u64; 2];
                for &r in &self.disclosed {
                    n[self.bob[r as usize].basis.index()] += 1;
                }
                let qber = QberReport::from_counts(disclosed, mismatches);
                let consistent = n == disclosed
                    && mismatches[0] <= disclosed[0]
                    && mismatches[1] <= disclosed[1]
                    && qber.e_b1.to_bits() == e_b1.to_bits()
                    && qber.e_b2.to_bits() == e_b2.to_bits();
                if !consistent {
                    return self.abort(AbortReason::InvalidMessage);
                }
                if qber.check_samples(self.config.min_disclosed).is_err() {
                    return self.abort(AbortReason::InsufficientSamples);
                }
                let sifted = self.kept.iter().filter(|&&k| k).count() as u64;
                let key = self.remaining(|r| self.bob[r].outcome.expect("kept"));
                let s = self.finish_estimate(qber, sifted, key);
                match s.report {
                    Some(r) if s.phase == Phase::Estimated => {
                        (s, vec![Message::KeyReport { key_rate: r.key_rate, secret_bits: r.secret_bits }])
                    }
                    _ => (s, Vec::new()),
                }
            }
            (Phase::Estimated, Event::Received(Message::KeyReport { key_rate, secret_bits })) => {
                if !self.reports_agree(key_rate, secret_bits) {
                    return self.abort(AbortReason::KeyMismatch);
                }
                self.phase = Phase::Done;
                (self, Vec::new())
            }
            (_, other) => self.unexpected(other),
        }
    }

    fn unexpected(mut self, event: Event) -> (Self, Vec<Message>) {
        match event {
            Event::Received(Message::Abort { reason }) => {
                self.phase = Phase::Aborted;
                self.abort = Some(AbortInfo { reason, by_peer: true });
                self.key.clear();
                (self, Vec::new())
            }
            _ => self.abort(AbortReason::ProtocolOrder),
        }
    }
}

/// Advances a session by one event, returning the new state and the messages
/// to send. Terminal states ignore further events.
pub fn session_step(state: SessionState, event: Event) -> (SessionState, Vec<Message>) {
    if state.is_terminal() {
        return (state, Vec::new());
    }
    match state.role {
        Role::Alice => state.alice_step(event),
        Role::Bob => state.bob_step(event),
    }
}

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ChannelModel, ProtocolConfig, ProtocolError, ROUND_BLOCK};
use crate::modes::MubBasis;
use crate::seed::{block_rng, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AliceRecord {
    pub round: u64,
    pub basis: MubBasis,
    pub symbol: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BobRecord {
    pub round: u64,
    pub basis: MubBasis,
    /// `None` when no detector clicked.
    pub outcome: Option<u8>,
}

fn random_basis<R: Rng + ?Sized>(rng: &mut R) -> MubBasis {
    if rng.random::<bool>() {
        MubBasis::Mub2
    } else {
        MubBasis::Mub1
    }
}

/// Runs `f` over seeded blocks of `ROUND_BLOCK` rounds in parallel and
/// concatenates the results in round order.
fn per_block<T: Send>(
    n_rounds: u64,
    f: impl Fn(u64, std::ops::Range<u64>) -> Result<Vec<T>, ProtocolError> + Sync,
) -> Result<Vec<T>, ProtocolError> {
    let blocks = n_rounds.div_ceil(ROUND_BLOCK);
    let parts: Vec<Vec<T>> = (0..blocks)
        .into_par_iter()
        .map(|b| f(b, b * ROUND_BLOCK..((b + 1) * ROUND_BLOCK).min(n_rounds)))
        .collect::<Result<_, _>>()?;
    Ok(parts.into_iter().flatten().collect())
}

/// Uniform, independent basis and symbol for every round.
pub fn alice_prepare(config: &ProtocolConfig, seed: u64) -> Vec<AliceRecord> {
    let d = config.d as u8;
    per_block(config.n_rounds, |b, rounds| {
        let mut rng = block_rng(seed, stream::ALICE, b);
        Ok(rounds
            .map(|round| {
                let basis = random_basis(&mut rng);
                AliceRecord { round, basis, symbol: rng.random_range(0..d) }
            })
            .collect())
    })
    .expect("preparation is infallible")
}

/// Bob's uniform basis choice for every round.
pub fn bob_bases(config: &ProtocolConfig, seed: u64) -> Vec<MubBasis> {
    per_block(config.n_rounds, |b, rounds| {
        let mut rng = block_rng(seed, stream::BOB_BASIS, b);
        Ok(rounds.map(|_| random_basis(&mut rng)).collect())
    })
    .expect("basis choice is infallible")
}

/// One round of transmission and detection.
pub fn measure_round<R: Rng + ?Sized>(
    alice: &AliceRecord,
    bob_basis: MubBasis,
    channel: &ChannelModel,
    rng: &mut R,
) -> Result<BobRecord, ProtocolError> {
    if alice.symbol as usize >= channel.d() {
        return Err(ProtocolError::InvalidChannel(format!(
            "symbol {} outside a d = {} channel",
            alice.symbol,
            channel.d()
        )));
    }
    let outcome = channel.sample(alice.basis, alice.symbol, bob_basis, rng);
    Ok(BobRecord { round: alice.round, basis: bob_basis, outcome })
}

/// Measures every round of `alice` in Bob's bases drawn from `seed`.
pub fn bob_measure(
    config: &ProtocolConfig,
    alice: &[AliceRecord],
    channel: &ChannelModel,
    seed: u64,
) -> Result<Vec<BobRecord>, ProtocolError> {
    if channel.d() != config.d {
        return Err(ProtocolError::InvalidChannel(format!(
            "channel dimension {} differs from protocol dimension {}",
            channel.d(),
            config.d
        )));
    }
    if alice.len() as u64 != config.n_rounds {
        return Err(ProtocolError::Misaligned(alice.len() as u64));
    }
    let bases = bob_bases(config, seed);
    per_block(config.n_rounds, |b, rounds| {
        let mut rng = block_rng(seed, stream::CHANNEL, b);
        rounds
            .map(|r| {
                let a = &alice[r as usize];
                if a.round != r {
                    return Err(ProtocolError::Misaligned(r));
                }
                measure_round(a, bases[r as usize], channel, &mut rng)
            })
            .collect()
    })
}

fn basis_number(b: MubBasis) -> usize {
    b.index() + 1
}

/// Per-party transcript, one `round,basis,value` line per round. Bases are
/// numbered 1 and 2; Bob's missing clicks are written as `none`.
pub fn transcript_csv(alice: Option<&[AliceRecord]>, bob: Option<&[BobRecord]>) -> String {
    let mut out = String::new();
    if let Some(records) = alice {
        out.push_str("round,basis,symbol\n");
        for r in records {
            out.push_str(&format!("{},{},{}\n", r.round, basis_number(r.basis), r.symbol));
        }
    }
    if let Some(records) = bob {
        out.push_str("round,basis,outcome\n");
        for r in records {
            match r.outcome {
                Some(o) => out.push_str(&format!("{},{},{o}\n", r.round, basis_number(r.basis))),
                None => out.push_str(&format!("{},{},none\n", r.round, basis_number(r.basis))),
            }
        }
    }
    out
}

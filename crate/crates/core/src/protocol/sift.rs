use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{AliceRecord, BobRecord, ProtocolError};
use crate::modes::MubBasis;
use crate::seed::{block_rng, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiftedSymbol {
    pub round: u64,
    pub basis: MubBasis,
    pub alice: u8,
    pub bob: u8,
}

/// Rounds where both parties chose the same basis and Bob clicked, in round
/// order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiftedKey {
    pub symbols: Vec<SiftedSymbol>,
}

impl SiftedKey {
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn alice_symbols(&self) -> Vec<u8> {
        self.symbols.iter().map(|s| s.alice).collect()
    }

    pub fn bob_symbols(&self) -> Vec<u8> {
        self.symbols.iter().map(|s| s.bob).collect()
    }

    pub fn mismatches(&self) -> usize {
        self.symbols.iter().filter(|s| s.alice != s.bob).count()
    }
}

pub fn sift(alice: &[AliceRecord], bob: &[BobRecord]) -> Result<SiftedKey, ProtocolError> {
    if alice.len() != bob.len() {
        return Err(ProtocolError::Misaligned(alice.len().min(bob.len()) as u64));
    }
    let mut symbols = Vec::new();
    for (a, b) in alice.iter().zip(bob) {
        if a.round != b.round {
            return Err(ProtocolError::Misaligned(a.round));
        }
        if let (true, Some(o)) = (a.basis == b.basis, b.outcome) {
            symbols.push(SiftedSymbol { round: a.round, basis: a.basis, alice: a.symbol, bob: o });
        }
    }
    Ok(SiftedKey { symbols })
}

/// Number of rounds disclosed out of `n` sifted rounds of one basis.
fn disclosed_count(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction).round() as usize).min(n)
}

/// Rounds to disclose, chosen per basis as a uniformly random subset of
/// `round(fraction · n_basis)` sifted rounds. Returned in increasing order.
///
/// Both parties can evaluate this from the sifted round list alone, but only
/// the party holding `seed` decides the subset.
pub fn disclosure_rounds(sifted: &[(u64, MubBasis)], fraction: f64, seed: u64) -> Vec<u64> {
    let mut out = Vec::new();
    for basis in [MubBasis::Mub1, MubBasis::Mub2] {
        let mut rounds: Vec<u64> = sifted.iter().filter(|(_, b)| *b == basis).map(|(r, _)| *r).collect();
        let k = disclosed_count(rounds.len(), fraction);
        let mut rng = block_rng(seed, stream::DISCLOSURE, basis.index() as u64);
        // Partial Fisher-Yates: the first k slots become the sample.
        for i in 0..k {
            let j = rng.random_range(i..rounds.len());
            rounds.swap(i, j);
        }
        out.extend_from_slice(&rounds[..k]);
    }
    out.sort_unstable();
    out
}

/// 95% Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: u64, n: u64) -> [f64; 2] {
    if n == 0 {
        return [0.0, 1.0];
    }
    let z = 1.959_963_984_540_054_f64;
    let (k, n) = (k as f64, n as f64);
    let p = k / n;
    let denom = 1.0 + z * z / n;
    let center = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    [(center - half).max(0.0), (center + half).min(1.0)]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QberReport {
    pub e_b1: f64,
    pub e_b2: f64,
    /// 95% Wilson intervals.
    pub ci_b1: [f64; 2],
    pub ci_b2: [f64; 2],
    /// Disclosed rounds per basis.
    pub disclosed: [u64; 2],
    pub mismatches: [u64; 2],
}

impl QberReport {
    pub fn from_counts(disclosed: [u64; 2], mismatches: [u64; 2]) -> Self {
        let rate = |m: u64, n: u64| if n == 0 { 0.0 } else { m as f64 / n as f64 };
        Self {
            e_b1: rate(mismatches[0], disclosed[0]),
            e_b2: rate(mismatches[1], disclosed[1]),
            ci_b1: wilson_interval(mismatches[0], disclosed[0]),
            ci_b2: wilson_interval(mismatches[1], disclosed[1]),
            disclosed,
            mismatches,
        }
    }

    pub fn rate(&self, basis: MubBasis) -> f64 {
        match basis {
            MubBasis::Mub1 => self.e_b1,
            MubBasis::Mub2 => self.e_b2,
        }
    }

    pub(crate) fn check_samples(&self, min: u64) -> Result<(), ProtocolError> {
        for (basis, &n) in self.disclosed.iter().enumerate() {
            if n < min {
                return Err(ProtocolError::InsufficientSamples { basis: basis + 1, available: n, required: min });
            }
        }
        Ok(())
    }
}

/// Discloses a random `fraction` of each basis' sifted rounds and returns the
/// per-basis error report together with the undisclosed remainder.
pub fn estimate_qber(
    sifted: &SiftedKey,
    fraction: f64,
    min_disclosed: u64,
    seed: u64,
) -> Result<(QberReport, SiftedKey), ProtocolError> {
    let rounds: Vec<(u64, MubBasis)> = sifted.symbols.iter().map(|s| (s.round, s.basis)).collect();
    let disclosed = disclosure_rounds(&rounds, fraction, seed);

    let (mut n, mut m) = ([0u64; 2], [0u64; 2]);
    let mut remaining = Vec::with_capacity(sifted.len() - disclosed.len());
    let mut next = disclosed.iter().peekable();
    for s in &sifted.symbols {
        if next.peek() == Some(&&s.round) {
            next.next();
            n[s.basis.index()] += 1;
            m[s.basis.index()] += (s.alice != s.bob) as u64;
        } else {
            remaining.push(*s);
        }
    }
    let report = QberReport::from_counts(n, m);
    report.check_samples(min_disclosed)?;
    Ok((report, SiftedKey { symbols: remaining }))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Alternating-basis key; every `err_every`-th symbol is wrong.
    fn key(n: u64, err_every: Option<u64>) -> SiftedKey {
        SiftedKey {
            symbols: (0..n)
                .map(|r| SiftedSymbol {
                    round: 2 * r,
                    basis: if r % 2 == 0 { MubBasis::Mub1 } else { MubBasis::Mub2 },
                    alice: (r % 3) as u8,
                    bob: if err_every.is_some_and(|k| r % k == 0) { ((r + 1) % 3) as u8 } else { (r % 3) as u8 },
                })
                .collect(),
        }
    }

    #[test]
    fn sift_keeps_matching_detected_rounds() {
        let alice: Vec<AliceRecord> =
            (0..4).map(|r| AliceRecord { round: r, basis: MubBasis::Mub1, symbol: 1 }).collect();
        let bob = vec![
            BobRecord { round: 0, basis: MubBasis::Mub1, outcome: Some(1) },
            BobRecord { round: 1, basis: MubBasis::Mub2, outcome: Some(1) },
            BobRecord { round: 2, basis: MubBasis::Mub1, outcome: None },
            BobRecord { round: 3, basis: MubBasis::Mub1, outcome: Some(0) },
        ];
        let k = sift(&alice, &bob).unwrap();
        assert_eq!(k.symbols.iter().map(|s| s.round).collect::<Vec<_>>(), vec![0, 3]);
        assert_eq!(k.mismatches(), 1);
        assert!(sift(&alice, &bob[..3]).is_err());
    }

    #[test]
    fn disclosure_is_a_per_basis_fraction() {
        let k = key(10_000, None);
        let rounds: Vec<_> = k.symbols.iter().map(|s| (s.round, s.basis)).collect();
        let d = disclosure_rounds(&rounds, 0.1, 3);
        assert_eq!(d.len(), 1000);
        assert!(d.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(d, disclosure_rounds(&rounds, 0.1, 3));
        assert_ne!(d, disclosure_rounds(&rounds, 0.1, 4));
    }

    #[test]
    fn estimate_removes_disclosed_rounds() {
        // Multiples of 5 alternate in parity, so both bases see 20% errors.
        let k = key(10_000, Some(5));
        let (rep, rest) = estimate_qber(&k, 0.2, 10, 1).unwrap();
        assert_eq!(rep.disclosed, [1000, 1000]);
        assert_eq!(rest.len(), 8000);
        assert!((rep.e_b1 - 0.2).abs() < 0.04 && (rep.e_b2 - 0.2).abs() < 0.04, "{rep:?}");
        assert!(rep.ci_b1[0] <= rep.e_b1 && rep.e_b1 <= rep.ci_b1[1]);
    }

    #[test]
    fn noiseless_key_has_zero_error() {
        let k = key(1000, None);
        let (rep, _) = estimate_qber(&k, 0.1, 10, 1).unwrap();
        assert_eq!((rep.e_b1, rep.e_b2), (0.0, 0.0));
        assert!(rep.ci_b1[0] < 1e-15);
    }

    #[test]
    fn too_few_samples_is_an_error() {
        let k = key(40, Some(10));
        assert!(matches!(estimate_qber(&k, 0.1, 10, 1), Err(ProtocolError::InsufficientSamples { .. })));
    }

    #[test]
    fn wilson_interval_reference_values() {
        // k = 5, n = 100: closed-form Wilson score interval.
        let [lo, hi] = wilson_interval(5, 100);
        assert!((lo - 0.021_543_7).abs() < 1e-6 && (hi - 0.111_750_5).abs() < 1e-6, "{lo} {hi}");
        assert_eq!(wilson_interval(0, 0), [0.0, 1.0]);
    }
}

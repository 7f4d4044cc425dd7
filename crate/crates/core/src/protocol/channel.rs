use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{secure_key_rate, ProtocolError};
use crate::modes::{CrosstalkMatrix, MubBasis};

/// Measurement statistics of the quantum channel.
///
/// For every (Alice basis, symbol, Bob basis) the channel holds the normalized
/// distribution of Bob's outcome given that the photon arrives. A photon
/// arrives with probability `transmittance`; independently, each of Bob's `d`
/// outcomes fires a spurious click with probability `dark_click_prob`. When
/// several outcomes click, one of them is chosen uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    d: usize,
    /// Flattened `[alice_basis][symbol][bob_basis][outcome]`.
    columns: Vec<f64>,
    transmittance: f64,
    dark_click_prob: f64,
}

/// Reference error rates (mean, standard uncertainty) that a dark-click
/// probability is fitted to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DarkClickTargets {
    pub e_b1: (f64, f64),
    pub e_b2: (f64, f64),
    pub key_rate: (f64, f64),
}

impl Default for DarkClickTargets {
    fn default() -> Self {
        Self { e_b1: (0.036, 0.016), e_b2: (0.040, 0.008), key_rate: (1.0, 0.1) }
    }
}

impl ChannelModel {
    /// Builds a channel from per-setting outcome distributions, laid out as
    /// `[alice_basis][symbol][bob_basis][outcome]`. Each distribution must be
    /// non-negative and sum to one.
    pub fn from_columns(
        d: usize,
        columns: Vec<f64>,
        transmittance: f64,
        dark_click_prob: f64,
    ) -> Result<Self, ProtocolError> {
        if !(2..=u8::MAX as usize).contains(&d) {
            return Err(ProtocolError::InvalidDimension(d));
        }
        if columns.len() != 4 * d * d {
            return Err(ProtocolError::InvalidChannel(format!(
                "expected {} column entries for d = {d}, got {}",
                4 * d * d,
                columns.len()
            )));
        }
        if !(0.0..=1.0).contains(&transmittance) {
            return Err(ProtocolError::InvalidChannel(format!("transmittance {transmittance} is not a probability")));
        }
        if !(0.0..1.0).contains(&dark_click_prob) {
            return Err(ProtocolError::InvalidChannel(format!("dark_click_prob {dark_click_prob} must lie in [0, 1)")));
        }
        for (k, col) in columns.chunks(d).enumerate() {
            let sum: f64 = col.iter().sum();
            if col.iter().any(|&p| p.is_nan() || p < 0.0) || (sum - 1.0).abs() > 1e-9 {
                return Err(ProtocolError::InvalidChannel(format!(
                    "outcome distribution {k} is not normalized (sum {sum})"
                )));
            }
        }
        Ok(Self { d, columns, transmittance, dark_click_prob })
    }

    /// Perfect same-basis correlations, uniform cross-basis outcomes.
    pub fn ideal(d: usize, transmittance: f64, dark_click_prob: f64) -> Result<Self, ProtocolError> {
        let mut columns = Vec::with_capacity(4 * d * d);
        for ab in 0..2 {
            for s in 0..d {
                for bb in 0..2 {
                    for o in 0..d {
                        columns.push(match (ab == bb, s == o) {
                            (true, true) => 1.0,
                            (true, false) => 0.0,
                            (false, _) => 1.0 / d as f64,
                        });
                    }
                }
            }
        }
        Self::from_columns(d, columns, transmittance, dark_click_prob)
    }

    /// Every outcome equally likely regardless of preparation.
    pub fn depolarizing(d: usize, transmittance: f64, dark_click_prob: f64) -> Result<Self, ProtocolError> {
        Self::from_columns(d, vec![1.0 / d.max(1) as f64; 4 * d * d], transmittance, dark_click_prob)
    }

    /// Three-dimensional channel whose outcome distributions are the
    /// block-normalized columns of a simulated crosstalk matrix.
    pub fn from_crosstalk(
        crosstalk: &CrosstalkMatrix,
        transmittance: f64,
        dark_click_prob: f64,
    ) -> Result<Self, ProtocolError> {
        let d = 3;
        let mut columns = Vec::with_capacity(36);
        for ab in 0..2 {
            for s in 0..d {
                for bb in 0..2 {
                    // Renormalize so the distribution sums to one exactly.
                    let col: Vec<f64> = (0..d).map(|o| crosstalk.values[bb * d + o][ab * d + s]).collect();
                    let sum: f64 = col.iter().sum();
                    columns.extend(col.iter().map(|p| p / sum));
                }
            }
        }
        Self::from_columns(d, columns, transmittance, dark_click_prob)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn transmittance(&self) -> f64 {
        self.transmittance
    }

    pub fn dark_click_prob(&self) -> f64 {
        self.dark_click_prob
    }

    pub fn with_dark_click_prob(&self, p: f64) -> Result<Self, ProtocolError> {
        Self::from_columns(self.d, self.columns.clone(), self.transmittance, p)
    }

    pub fn with_transmittance(&self, t: f64) -> Result<Self, ProtocolError> {
        Self::from_columns(self.d, self.columns.clone(), t, self.dark_click_prob)
    }

    /// Bob's outcome distribution for an arriving photon.
    pub fn column(&self, alice_basis: MubBasis, symbol: u8, bob_basis: MubBasis) -> &[f64] {
        let d = self.d;
        let k = ((alice_basis.index() * d + symbol as usize) * 2 + bob_basis.index()) * d;
        &self.columns[k..k + d]
    }

    /// Probability of each outcome `0..d`, followed by the no-click
    /// probability, including photon loss and dark clicks.
    pub fn outcome_distribution(&self, alice_basis: MubBasis, symbol: u8, bob_basis: MubBasis) -> Vec<f64> {
        let (d, t, p) = (self.d, self.transmittance, self.dark_click_prob);
        // With `m` other outcomes dark, the photon's outcome wins with
        // probability 1/(1+m); a dark outcome competing with the photon wins
        // with probability 1/(2+m).
        let alone = mean_inverse(d - 1, p, 1);
        let against = mean_inverse(d.saturating_sub(2), p, 2);
        let col = self.column(alice_basis, symbol, bob_basis);
        let mut out: Vec<f64> = (0..d)
            .map(|j| {
                let photon: f64 = (0..d).map(|k| col[k] * if k == j { alone } else { p * against }).sum();
                t * photon + (1.0 - t) * p * alone
            })
            .collect();
        out.push((1.0 - t) * (1.0 - p).powi(d as i32));
        out
    }

    /// Expected error rate among clicked rounds when Alice and Bob both use
    /// `basis`, averaged over uniform symbols.
    pub fn expected_qber(&self, basis: MubBasis) -> f64 {
        let d = self.d;
        let (mut err, mut clicks) = (0.0, 0.0);
        for s in 0..d {
            let dist = self.outcome_distribution(basis, s as u8, basis);
            let total: f64 = dist[..d].iter().sum();
            clicks += total;
            err += total - dist[s];
        }
        if clicks > 0.0 {
            err / clicks
        } else {
            0.0
        }
    }

    /// Asymptotic key rate implied by [`Self::expected_qber`].
    pub fn expected_key_rate(&self) -> f64 {
        let e1 = self.expected_qber(MubBasis::Mub1);
        let e2 = self.expected_qber(MubBasis::Mub2);
        secure_key_rate(e1, e2, self.d).expect("error rates are probabilities")
    }

    /// Dark-click probability minimizing the uncertainty-weighted squared
    /// distance of the expected error rates and key rate to `targets`.
    ///
    /// Golden-section search on `[0, 0.5]`; the objective is unimodal because
    /// both error rates grow monotonically with the dark-click probability.
    pub fn fit_dark_click_prob(&self, targets: &DarkClickTargets) -> Result<f64, ProtocolError> {
        let chi2 = |p: f64| -> Result<f64, ProtocolError> {
            let ch = self.with_dark_click_prob(p)?;
            let e1 = ch.expected_qber(MubBasis::Mub1);
            let e2 = ch.expected_qber(MubBasis::Mub2);
            let r = secure_key_rate(e1, e2, self.d)?;
            let z = |x: f64, (mu, sigma): (f64, f64)| ((x - mu) / sigma).powi(2);
            Ok(z(e1, targets.e_b1) + z(e2, targets.e_b2) + z(r, targets.key_rate))
        };
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (0.0, 0.5);
        let mut c = b - g * (b - a);
        let mut e = a + g * (b - a);
        let (mut fc, mut fe) = (chi2(c)?, chi2(e)?);
        while b - a > 1e-12 {
            if fc < fe {
                b = e;
                e = c;
                fe = fc;
                c = b - g * (b - a);
                fc = chi2(c)?;
            } else {
                a = c;
                c = e;
                fc = fe;
                e = a + g * (b - a);
                fe = chi2(e)?;
            }
        }
        Ok(0.5 * (a + b))
    }

    /// Samples Bob's outcome; `None` is no click.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        alice_basis: MubBasis,
        symbol: u8,
        bob_basis: MubBasis,
        rng: &mut R,
    ) -> Option<u8> {
        let d = self.d;
        let photon = if rng.random::<f64>() < self.transmittance {
            let col = self.column(alice_basis, symbol, bob_basis);
            let u = rng.random::<f64>();
            let mut acc = 0.0;
            let mut pick = col.iter().rposition(|&p| p > 0.0).unwrap_or(d - 1);
            for (k, &p) in col.iter().enumerate() {
                acc += p;
                if u < acc {
                    pick = k;
                    break;
                }
            }
            Some(pick)
        } else {
            None
        };
        let mut clicked = 0usize;
        let mut set = [false; 256];
        for (j, slot) in set.iter_mut().enumerate().take(d) {
            let dark = rng.random::<f64>() < self.dark_click_prob;
            if dark || photon == Some(j) {
                *slot = true;
                clicked += 1;
            }
        }
        if clicked == 0 {
            return None;
        }
        let mut chosen = if clicked == 1 { 0 } else { rng.random_range(0..clicked) };
        for (j, &on) in set.iter().enumerate().take(d) {
            if on {
                if chosen == 0 {
                    return Some(j as u8);
                }
                chosen -= 1;
            }
        }
        unreachable!("a clicked outcome is always found")
    }
}

/// `E[1 / (offset + M)]` for `M ~ Binomial(n, p)`.
fn mean_inverse(n: usize, p: f64, offset: usize) -> f64 {
    let mut pmf = (1.0 - p).powi(n as i32);
    let mut sum = 0.0;
    for m in 0..=n {
        sum += pmf / (offset + m) as f64;
        if m < n {
            pmf *= (n - m) as f64 / (m + 1) as f64 * p / (1.0 - p);
        }
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::block_rng;

    const BASES: [MubBasis; 2] = [MubBasis::Mub1, MubBasis::Mub2];

    /// Brute-force enumeration over every dark-click pattern.
    fn enumerate(ch: &ChannelModel, ab: MubBasis, s: u8, bb: MubBasis) -> Vec<f64> {
        let d = ch.d();
        let (t, p) = (ch.transmittance(), ch.dark_click_prob());
        let col = ch.column(ab, s, bb).to_vec();
        let mut out = vec![0.0; d + 1];
        for mask in 0..(1u32 << d) {
            let darks = mask.count_ones() as i32;
            let w = p.powi(darks) * (1.0 - p).powi(d as i32 - darks);
            let mut photon_cases: Vec<(Option<usize>, f64)> = vec![(None, 1.0 - t)];
            photon_cases.extend((0..d).map(|k| (Some(k), t * col[k])));
            for (ph, pw) in photon_cases {
                let set: Vec<usize> = (0..d).filter(|&j| mask >> j & 1 == 1 || ph == Some(j)).collect();
                if set.is_empty() {
                    out[d] += w * pw;
                } else {
                    for &j in &set {
                        out[j] += w * pw / set.len() as f64;
                    }
                }
            }
        }
        out
    }

    fn skewed(d: usize) -> ChannelModel {
        let mut cols = Vec::new();
        for k in 0..4 * d {
            let raw: Vec<f64> = (0..d).map(|o| 1.0 + ((k * 7 + o * 3) % 5) as f64).collect();
            let s: f64 = raw.iter().sum();
            cols.extend(raw.iter().map(|v| v / s));
        }
        ChannelModel::from_columns(d, cols, 0.7, 0.05).unwrap()
    }

    #[test]
    fn analytic_distribution_matches_enumeration() {
        for d in [2, 3, 5] {
            let ch = skewed(d);
            for ab in BASES {
                for bb in BASES {
                    for s in 0..d as u8 {
                        let a = ch.outcome_distribution(ab, s, bb);
                        let b = enumerate(&ch, ab, s, bb);
                        for (x, y) in a.iter().zip(&b) {
                            assert!((x - y).abs() < 1e-14, "{a:?} {b:?}");
                        }
                        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn sampling_matches_the_distribution() {
        let ch = skewed(3);
        let mut rng = block_rng(5, 0, 0);
        let n = 200_000;
        let mut counts = [0u64; 4];
        for _ in 0..n {
            match ch.sample(MubBasis::Mub2, 1, MubBasis::Mub1, &mut rng) {
                Some(o) => counts[o as usize] += 1,
                None => counts[3] += 1,
            }
        }
        let expect = ch.outcome_distribution(MubBasis::Mub2, 1, MubBasis::Mub1);
        for (c, p) in counts.iter().zip(&expect) {
            let sigma = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((*c as f64 - n as f64 * p).abs() < 4.0 * sigma, "{counts:?} {expect:?}");
        }
    }

    #[test]
    fn lossless_noiseless_ideal_channel_is_deterministic() {
        let ch = ChannelModel::ideal(3, 1.0, 0.0).unwrap();
        let mut rng = block_rng(1, 0, 0);
        for _ in 0..1000 {
            assert_eq!(ch.sample(MubBasis::Mub1, 2, MubBasis::Mub1, &mut rng), Some(2));
        }
        assert_eq!(ch.expected_qber(MubBasis::Mub2), 0.0);
        assert!((ch.expected_key_rate() - 3f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn dead_channel_never_clicks() {
        let ch = ChannelModel::ideal(3, 0.0, 0.0).unwrap();
        let mut rng = block_rng(1, 0, 0);
        assert!((0..1000).all(|_| ch.sample(MubBasis::Mub1, 0, MubBasis::Mub2, &mut rng).is_none()));
    }

    #[test]
    fn depolarizing_channel_errs_two_thirds_of_the_time() {
        let ch = ChannelModel::depolarizing(3, 0.5, 0.01).unwrap();
        assert!((ch.expected_qber(MubBasis::Mub1) - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn dark_clicks_raise_the_error_rate_monotonically() {
        let base = ChannelModel::ideal(3, 1.0, 0.0).unwrap();
        let mut last = 0.0;
        for p in [0.01, 0.02, 0.05, 0.1] {
            let e = base.with_dark_click_prob(p).unwrap().expected_qber(MubBasis::Mub1);
            assert!(e > last);
            last = e;
        }
    }

    #[test]
    fn fitted_dark_probability_recovers_an_exact_target() {
        let truth = ChannelModel::ideal(3, 1.0, 0.03).unwrap();
        let e = truth.expected_qber(MubBasis::Mub1);
        let targets = DarkClickTargets { e_b1: (e, 0.01), e_b2: (e, 0.01), key_rate: (truth.expected_key_rate(), 0.1) };
        let p = truth.fit_dark_click_prob(&targets).unwrap();
        assert!((p - 0.03).abs() < 1e-7, "{p}");
    }

    #[test]
    fn rejects_invalid_channels() {
        assert!(ChannelModel::from_columns(3, vec![0.5; 36], 1.0, 0.0).is_err());
        assert!(ChannelModel::ideal(3, 1.5, 0.0).is_err());
        assert!(ChannelModel::ideal(3, 1.0, 1.0).is_err());
        assert!(ChannelModel::ideal(1, 1.0, 0.0).is_err());
    }
}

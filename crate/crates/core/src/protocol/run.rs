use serde::{Deserialize, Serialize};

use super::{
    alice_prepare, bob_measure, estimate_qber, secure_key_rate, sift, AliceRecord, BobRecord, ChannelModel,
    ProtocolConfig, ProtocolError, QberReport, SiftedKey,
};

/// Outcome of error estimation and the asymptotic key-rate bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyRateReport {
    pub e_b1: f64,
    pub e_b2: f64,
    pub ci_b1: [f64; 2],
    pub ci_b2: [f64; 2],
    /// Secret bits per sifted photon.
    #[serde(rename = "R")]
    pub key_rate: f64,
    pub sifted_count: u64,
    pub disclosed_count: u64,
    /// `floor(R · (sifted - disclosed))`; zero when aborted or `R ≤ 0`.
    pub secret_bits: u64,
    pub abort: bool,
}

impl KeyRateReport {
    pub fn new(config: &ProtocolConfig, qber: &QberReport, sifted_count: u64) -> Result<Self, ProtocolError> {
        let key_rate = secure_key_rate(qber.e_b1, qber.e_b2, config.d)?;
        let disclosed_count = qber.disclosed.iter().sum::<u64>();
        let abort = qber.e_b1 > config.abort_threshold || qber.e_b2 > config.abort_threshold;
        let kept = sifted_count.saturating_sub(disclosed_count) as f64;
        let secret_bits = if abort || key_rate <= 0.0 { 0 } else { (key_rate * kept).floor() as u64 };
        Ok(Self {
            e_b1: qber.e_b1,
            e_b2: qber.e_b2,
            ci_b1: qber.ci_b1,
            ci_b2: qber.ci_b2,
            key_rate,
            sifted_count,
            disclosed_count,
            secret_bits,
            abort,
        })
    }
}

/// Everything produced by an in-process protocol run.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolRun {
    pub alice: Vec<AliceRecord>,
    pub bob: Vec<BobRecord>,
    pub sifted: SiftedKey,
    /// Sifted rounds left after disclosure.
    pub key: SiftedKey,
    pub qber: QberReport,
    pub report: KeyRateReport,
}

/// Prepares, measures, sifts and estimates errors for `config.n_rounds`
/// rounds, with every random choice derived from `seed`.
pub fn run_protocol(config: &ProtocolConfig, channel: &ChannelModel, seed: u64) -> Result<ProtocolRun, ProtocolError> {
    config.validate()?;
    let alice = alice_prepare(config, seed);
    let bob = bob_measure(config, &alice, channel, seed)?;
    let sifted = sift(&alice, &bob)?;
    let (qber, key) = estimate_qber(&sifted, config.disclosure_fraction, config.min_disclosed, seed)?;
    let report = KeyRateReport::new(config, &qber, sifted.len() as u64)?;
    Ok(ProtocolRun { alice, bob, sifted, key, qber, report })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ideal_channel_reaches_log2_d() {
        let cfg = ProtocolConfig::new(3, 100_000).unwrap();
        let run = run_protocol(&cfg, &ChannelModel::ideal(3, 1.0, 0.0).unwrap(), 7).unwrap();
        assert_eq!(run.key.alice_symbols(), run.key.bob_symbols());
        assert!((run.report.key_rate - 3f64.log2()).abs() < 1e-12);
        assert!(!run.report.abort);
        let kept = run.report.sifted_count - run.report.disclosed_count;
        assert_eq!(run.report.secret_bits, (3f64.log2() * kept as f64).floor() as u64);
    }

    #[test]
    fn sifted_fraction_follows_transmittance() {
        let cfg = ProtocolConfig::new(3, 200_000).unwrap();
        let run = run_protocol(&cfg, &ChannelModel::ideal(3, 0.4, 0.0).unwrap(), 3).unwrap();
        let n = cfg.n_rounds as f64;
        let p = 0.2;
        assert!((run.sifted.len() as f64 - n * p).abs() < 3.0 * (n * p * (1.0 - p)).sqrt());
    }

    #[test]
    fn depolarized_channel_aborts() {
        let cfg = ProtocolConfig::new(3, 50_000).unwrap();
        let run = run_protocol(&cfg, &ChannelModel::depolarizing(3, 1.0, 0.0).unwrap(), 2).unwrap();
        assert!(run.report.abort);
        assert_eq!(run.report.secret_bits, 0);
        for (e, [lo, hi]) in [(run.report.e_b1, run.report.ci_b1), (run.report.e_b2, run.report.ci_b2)] {
            assert!(lo <= 2.0 / 3.0 && 2.0 / 3.0 <= hi, "{e}");
        }
    }

    #[test]
    fn report_serializes_rate_as_r() {
        let cfg = ProtocolConfig::new(3, 10_000).unwrap();
        let run = run_protocol(&cfg, &ChannelModel::ideal(3, 1.0, 0.0).unwrap(), 1).unwrap();
        let json = serde_json::to_string(&run.report).unwrap();
        assert!(json.contains("\"R\":"));
    }
}

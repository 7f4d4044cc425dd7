use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{SourceError, SourceParams};
use crate::seed::{block_rng, stream};

/// Pulses per independently seeded simulation block.
pub(crate) const BLOCK_PULSES: u64 = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Exciton,
    Biexciton,
    Dark,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Exciton => "exciton",
            Origin::Biexciton => "biexciton",
            Origin::Dark => "dark",
        }
    }
}

/// One detection, timed relative to its excitation pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotonEvent {
    pub pulse_index: u64,
    pub t_offset: f64,
    pub origin: Origin,
}

impl PhotonEvent {
    pub fn absolute_ns(&self, period_ns: f64) -> f64 {
        self.pulse_index as f64 * period_ns + self.t_offset
    }
}

fn sort_events(events: &mut [PhotonEvent]) {
    events.sort_by(|a, b| a.pulse_index.cmp(&b.pulse_index).then(a.t_offset.total_cmp(&b.t_offset)));
}

/// Runs `per_block(rng, first_pulse, last_pulse)` over independently seeded
/// blocks and concatenates the results in pulse order.
fn run_blocks<F>(n_pulses: u64, seed: u64, per_block: F) -> Vec<PhotonEvent>
where
    F: Fn(&mut rand_chacha::ChaCha8Rng, u64, u64) -> Vec<PhotonEvent> + Sync,
{
    let n_blocks = n_pulses.div_ceil(BLOCK_PULSES);
    let blocks: Vec<Vec<PhotonEvent>> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = block_rng(seed, stream::EMISSION, b);
            let start = b * BLOCK_PULSES;
            let end = (start + BLOCK_PULSES).min(n_pulses);
            let mut ev = per_block(&mut rng, start, end);
            sort_events(&mut ev);
            ev
        })
        .collect();
    blocks.concat()
}

/// Monte Carlo emission record, sorted by `(pulse_index, t_offset)`.
///
/// Each pulse independently yields an exciton photon with probability `p_x`
/// at `t ~ Exp(tau_x)` and a biexciton photon with probability `q_bx` at
/// `t ~ Exp(tau_bx)`; each photon is detected with probability `eta`. Dark
/// counts form a Poisson process at `dark_rate`.
pub fn simulate_emission(params: &SourceParams, n_pulses: u64, seed: u64) -> Result<Vec<PhotonEvent>, SourceError> {
    params.validate()?;
    if n_pulses == 0 {
        return Err(SourceError::InvalidParams("n_pulses must be at least 1".into()));
    }
    let exp_x = Exp::new(1.0 / params.tau_x).expect("validated lifetime");
    let exp_bx = Exp::new(1.0 / params.tau_bx).expect("validated lifetime");
    let period = params.period_ns();
    let dark_per_ns = params.dark_rate * 1e-9;
    let dark_gap = (dark_per_ns > 0.0).then(|| Exp::new(dark_per_ns).expect("positive rate"));

    Ok(run_blocks(n_pulses, seed, |rng, start, end| {
        let mut ev = Vec::new();
        for pulse in start..end {
            if rng.random::<f64>() < params.p_x * params.eta {
                ev.push(PhotonEvent { pulse_index: pulse, t_offset: exp_x.sample(rng), origin: Origin::Exciton });
            }
            if rng.random::<f64>() < params.q_bx * params.eta {
                ev.push(PhotonEvent { pulse_index: pulse, t_offset: exp_bx.sample(rng), origin: Origin::Biexciton });
            }
        }
        if let Some(gap) = dark_gap {
            let span = (end - start) as f64 * period;
            let mut t = gap.sample(rng);
            while t < span {
                let k = (t / period).floor();
                ev.push(PhotonEvent { pulse_index: start + k as u64, t_offset: t - k * period, origin: Origin::Dark });
                t += gap.sample(rng);
            }
        }
        ev
    }))
}

/// Reference source with Poisson photon-number statistics (`g2(0) = 1`):
/// each pulse emits `Poisson(mean_photons)` photons at `t ~ Exp(tau)`.
pub fn simulate_coherent(
    mean_photons: f64,
    tau: f64,
    n_pulses: u64,
    seed: u64,
) -> Result<Vec<PhotonEvent>, SourceError> {
    if !(mean_photons > 0.0 && mean_photons.is_finite() && tau > 0.0) || n_pulses == 0 {
        return Err(SourceError::InvalidParams(format!(
            "coherent source needs mean > 0, tau > 0 and pulses >= 1 (mean = {mean_photons}, tau = {tau})"
        )));
    }
    let count = Poisson::new(mean_photons).expect("validated mean");
    let times = Exp::new(1.0 / tau).expect("validated lifetime");
    Ok(run_blocks(n_pulses, seed, |rng, start, end| {
        let mut ev = Vec::new();
        for pulse in start..end {
            let k: f64 = count.sample(rng);
            for _ in 0..k as u64 {
                ev.push(PhotonEvent { pulse_index: pulse, t_offset: times.sample(rng), origin: Origin::Exciton });
            }
        }
        ev
    }))
}

/// Keeps detections arriving at least `gate_ns` after their pulse.
pub fn apply_gate(events: &[PhotonEvent], gate_ns: f64) -> Result<Vec<PhotonEvent>, SourceError> {
    if gate_ns.is_nan() || gate_ns < 0.0 {
        return Err(SourceError::InvalidParams(format!("gate {gate_ns} ns must be non-negative")));
    }
    Ok(events.iter().filter(|e| e.t_offset >= gate_ns).copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> SourceParams {
        SourceParams { dark_rate: 0.0, ..SourceParams::default() }
    }

    #[test]
    fn exciton_only_source_emits_at_most_one_photon_per_pulse() {
        let ev = simulate_emission(&params(), 200_000, 3).unwrap();
        for w in ev.windows(2) {
            assert!(w[0].pulse_index < w[1].pulse_index);
        }
    }

    #[test]
    fn saturated_exciton_stream_has_the_exciton_lifetime() {
        let p = SourceParams { eta: 1.0, ..params() };
        let n = 400_000;
        let ev = simulate_emission(&p, n, 11).unwrap();
        assert_eq!(ev.len() as u64, n);
        let mean = ev.iter().map(|e| e.t_offset).sum::<f64>() / n as f64;
        // Exp(25): σ of the mean is 25/√n.
        assert!((mean - 25.0).abs() < 3.0 * 25.0 / (n as f64).sqrt(), "{mean}");
    }

    #[test]
    fn same_seed_same_events() {
        let p = SourceParams { q_bx: 0.3, dark_rate: 1e4, ..SourceParams::default() };
        let a = simulate_emission(&p, 150_000, 42).unwrap();
        let b = simulate_emission(&p, 150_000, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, simulate_emission(&p, 150_000, 43).unwrap());
    }

    #[test]
    fn block_results_do_not_depend_on_thread_count() {
        let p = SourceParams { q_bx: 0.5, dark_rate: 5e3, ..SourceParams::default() };
        let parallel = simulate_emission(&p, 300_000, 9).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let serial = pool.install(|| simulate_emission(&p, 300_000, 9).unwrap());
        assert_eq!(parallel, serial);
    }

    #[test]
    fn dark_counts_are_uniform_over_the_period() {
        let p = SourceParams { p_x: 0.0, dark_rate: 1e5, ..SourceParams::default() };
        let ev = simulate_emission(&p, 400_000, 5).unwrap();
        // 1e5/s over 0.2 s → 2e4 events.
        let n = ev.len() as f64;
        assert!((n - 2e4).abs() < 3.0 * 2e4_f64.sqrt(), "{n}");
        let mean = ev.iter().map(|e| e.t_offset).sum::<f64>() / n;
        let sigma = 500.0 / 12f64.sqrt() / n.sqrt();
        assert!((mean - 250.0).abs() < 3.0 * sigma);
        assert!(ev.iter().all(|e| e.origin == Origin::Dark && (0.0..500.0).contains(&e.t_offset)));
    }

    #[test]
    fn gate_edges() {
        let p = SourceParams { q_bx: 0.5, ..SourceParams::default() };
        let ev = simulate_emission(&p, 50_000, 1).unwrap();
        assert_eq!(apply_gate(&ev, 0.0).unwrap(), ev);
        assert!(apply_gate(&ev, f64::INFINITY).unwrap().is_empty());
        assert!(apply_gate(&ev, -1.0).is_err());
    }

    #[test]
    fn gate_keeps_the_exponential_tail_of_biexcitons() {
        let p = SourceParams { p_x: 0.0, q_bx: 1.0, eta: 1.0, dark_rate: 0.0, ..SourceParams::default() };
        let n = 500_000;
        let ev = simulate_emission(&p, n, 8).unwrap();
        let kept = apply_gate(&ev, 11.0).unwrap().len() as f64 / n as f64;
        let expected = (-11.0_f64 / 4.0).exp();
        let sigma = (expected * (1.0 - expected) / n as f64).sqrt();
        assert!((kept - expected).abs() < 3.0 * sigma, "{kept} vs {expected}");
    }

    #[test]
    fn coherent_source_has_poisson_counts() {
        let n = 200_000;
        let ev = simulate_coherent(0.2, 25.0, n, 4).unwrap();
        let mean = ev.len() as f64 / n as f64;
        assert!((mean - 0.2).abs() < 3.0 * (0.2 / n as f64).sqrt());
    }
}

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{PhotonEvent, SourceError, SourceParams};
use crate::seed::{block_rng, stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HbtSettings {
    pub bin_width_ns: f64,
    /// Side peaks recorded on each side of zero delay.
    pub periods: usize,
    /// Gate already applied to the events; recorded in the estimate.
    pub gate_ns: f64,
}

impl Default for HbtSettings {
    fn default() -> Self {
        Self { bin_width_ns: 1.0, periods: 5, gate_ns: 0.0 }
    }
}

/// Start-stop histogram of `t_B - t_A` over `±(periods + ½)` pulse periods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HbtHistogram {
    pub bin_width_ns: f64,
    pub period_ns: f64,
    pub periods: usize,
    pub gate_ns: f64,
    /// Lower edge of bin 0.
    pub min_delay_ns: f64,
    pub counts: Vec<u64>,
    /// Coincidences per peak, index `periods` being zero delay.
    pub peaks: Vec<u64>,
}

impl HbtHistogram {
    pub fn bin_center(&self, i: usize) -> f64 {
        self.min_delay_ns + (i as f64 + 0.5) * self.bin_width_ns
    }

    pub fn center_peak(&self) -> u64 {
        self.peaks[self.periods]
    }

    pub fn side_peak_total(&self) -> u64 {
        self.peaks.iter().sum::<u64>() - self.center_peak()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_center_ns,counts\n");
        for (i, c) in self.counts.iter().enumerate() {
            out.push_str(&format!("{:.8e},{c}\n", self.bin_center(i)));
        }
        out
    }
}

pub fn hbt_coincidences(events: &[PhotonEvent], params: &SourceParams, seed: u64) -> HbtHistogram {
    hbt_coincidences_with(events, params, seed, &HbtSettings::default())
}

/// Routes every detection 50/50 to detector A or B and histograms all A-B
/// delays within the window.
pub fn hbt_coincidences_with(
    events: &[PhotonEvent],
    params: &SourceParams,
    seed: u64,
    settings: &HbtSettings,
) -> HbtHistogram {
    let period = params.period_ns();
    let k = settings.periods;
    let half_window = (k as f64 + 0.5) * period;
    let bins = (2.0 * half_window / settings.bin_width_ns).ceil() as usize;

    let mut rng = block_rng(seed, stream::HBT_ROUTING, 0);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for e in events {
        let t = e.absolute_ns(period);
        if rng.random::<bool>() {
            a.push(t);
        } else {
            b.push(t);
        }
    }
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);

    let mut counts = vec![0u64; bins];
    let mut peaks = vec![0u64; 2 * k + 1];
    let mut lo = 0usize;
    for &ta in &a {
        while lo < b.len() && b[lo] < ta - half_window {
            lo += 1;
        }
        for &tb in b[lo..].iter().take_while(|&&tb| tb < ta + half_window) {
            let d = tb - ta;
            let bin = ((d + half_window) / settings.bin_width_ns) as usize;
            counts[bin.min(bins - 1)] += 1;
            let m = (d / period).round() as i64 + k as i64;
            if (0..=2 * k as i64).contains(&m) {
                peaks[m as usize] += 1;
            }
        }
    }

    HbtHistogram {
        bin_width_ns: settings.bin_width_ns,
        period_ns: period,
        periods: k,
        gate_ns: settings.gate_ns,
        min_delay_ns: -half_window,
        counts,
        peaks,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct G2Estimate {
    pub g2_zero: f64,
    pub stderr: f64,
    pub gate_ns: f64,
}

/// Zero-delay peak area over the mean side-peak area, with Poisson errors.
pub fn g2_zero(hist: &HbtHistogram) -> Result<G2Estimate, SourceError> {
    let side = hist.side_peak_total();
    if side == 0 || hist.periods == 0 {
        return Err(SourceError::InsufficientStatistics("no side-peak coincidences".into()));
    }
    let center = hist.center_peak() as f64;
    let mean_side = side as f64 / (2 * hist.periods) as f64;
    let g2 = center / mean_side;
    let stderr = if center > 0.0 { g2 * (1.0 / center + 1.0 / side as f64).sqrt() } else { 1.0 / mean_side };
    Ok(G2Estimate { g2_zero: g2, stderr, gate_ns: hist.gate_ns })
}

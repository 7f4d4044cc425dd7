use serde::{Deserialize, Serialize};

use super::{PhotonEvent, SourceError, SourceParams};

/// Arrival-time histogram over one pulse period. Bin `i` covers
/// `[i·bin_ns, (i+1)·bin_ns)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayCurve {
    pub bin_ns: f64,
    pub counts: Vec<f64>,
}

impl DecayCurve {
    pub fn bin_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.bin_ns
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0.0
    }

    /// Noiseless curve sampled from `f` at the bin centers.
    pub fn from_model(bin_ns: f64, bins: usize, f: impl Fn(f64) -> f64) -> Self {
        let counts = (0..bins).map(|i| f((i as f64 + 0.5) * bin_ns)).collect();
        Self { bin_ns, counts }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_center_ns,counts\n");
        for (i, c) in self.counts.iter().enumerate() {
            out.push_str(&format!("{:.8e},{c}\n", self.bin_center(i)));
        }
        out
    }
}

pub fn lifetime_histogram(
    events: &[PhotonEvent],
    params: &SourceParams,
    bin_ns: f64,
) -> Result<DecayCurve, SourceError> {
    if !(bin_ns > 0.0 && bin_ns.is_finite()) {
        return Err(SourceError::InvalidParams(format!("bin width {bin_ns} ns must be positive")));
    }
    let period = params.period_ns();
    let bins = (period / bin_ns).ceil() as usize;
    let mut counts = vec![0.0; bins];
    for e in events.iter().filter(|e| e.t_offset < period) {
        counts[((e.t_offset / bin_ns) as usize).min(bins - 1)] += 1.0;
    }
    Ok(DecayCurve { bin_ns, counts })
}

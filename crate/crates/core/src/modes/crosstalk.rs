use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::coupling::{mode_overlap, smf_coupling};
use super::field::check_waist;
use super::{
    apply_mask, decode_mask, far_field, far_field_window, synthesize_state, ComplexField, Encoding, Grid, ModeLabel,
    ModesError, MubBasis,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waists {
    /// Gaussian envelope waist of the source in the SLM plane.
    pub source: f64,
    /// Fiber mode waist in the far-field plane.
    pub smf: f64,
}

impl Default for Waists {
    fn default() -> Self {
        Self { source: 1.0, smf: 1.0 }
    }
}

/// Projection probabilities `values[bob][alice]` over the six labels
/// `a, b, c, α, β, γ`, normalized so every column of every 3×3 block sums to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrosstalkMatrix {
    pub values: [[f64; 6]; 6],
    /// Couplings before block normalization.
    pub raw: [[f64; 6]; 6],
    pub grid: Grid,
    pub waists: Waists,
    pub encoding: Encoding,
}

impl CrosstalkMatrix {
    pub fn get(&self, bob: ModeLabel, alice: ModeLabel) -> f64 {
        self.values[bob.position()][alice.position()]
    }

    /// Block of Bob's basis rows against Alice's basis columns, `[bob][alice]`.
    pub fn block(&self, bob: MubBasis, alice: MubBasis) -> [[f64; 3]; 3] {
        let (r0, c0) = (bob.index() * 3, alice.index() * 3);
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.values[r0 + i][c0 + j];
            }
        }
        out
    }

    /// Largest deviation of any block-column sum from 1.
    pub fn normalization_error(&self) -> f64 {
        let mut worst = 0.0_f64;
        for col in 0..6 {
            for blk in 0..2 {
                let s: f64 = (0..3).map(|k| self.values[blk * 3 + k][col]).sum();
                worst = worst.max((s - 1.0).abs());
            }
        }
        worst
    }

    /// Six labelled columns (Alice's state) by six rows (Bob's mask), values
    /// with nine significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bob");
        for name in ModeLabel::NAMES {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (row, name) in self.values.iter().zip(ModeLabel::NAMES) {
            out.push_str(name);
            for v in row {
                out.push_str(&format!(",{v:.8e}"));
            }
            out.push('\n');
        }
        out
    }

    pub(crate) fn from_raw(
        raw: [[f64; 6]; 6],
        grid: Grid,
        waists: Waists,
        encoding: Encoding,
    ) -> Result<Self, ModesError> {
        let mut values = raw;
        for col in 0..6 {
            for blk in 0..2 {
                let s: f64 = (0..3).map(|k| raw[blk * 3 + k][col]).sum();
                if s.is_nan() || s <= 0.0 {
                    return Err(ModesError::DegenerateColumn);
                }
                for k in 0..3 {
                    values[blk * 3 + k][col] = raw[blk * 3 + k][col] / s;
                }
            }
        }
        Ok(Self { values, raw, grid, waists, encoding })
    }
}

fn pair_indices() -> impl ParallelIterator<Item = (usize, usize)> {
    (0..36usize).into_par_iter().map(|k| (k / 6, k % 6))
}

/// Encodes each of Alice's six states, decodes with each of Bob's six
/// settings, propagates to the fiber plane and records the coupling.
///
/// `PhaseOnly` runs the SLM chain: Bob's conjugate phase mask followed by the
/// far-field fiber overlap. `Ideal` replaces Bob's apparatus by the exact
/// projection onto the far-field image of his ideal target state, which a
/// phase-only mask cannot realize for the superposition basis.
pub fn crosstalk_matrix(grid: Grid, waists: Waists, encoding: Encoding) -> Result<CrosstalkMatrix, ModesError> {
    check_waist(&grid, waists.source)?;
    if !waists.smf.is_finite() || waists.smf <= 0.0 {
        return Err(ModesError::InvalidWaist(waists.smf));
    }
    let labels = ModeLabel::all();
    let alice: Vec<ComplexField> =
        labels.par_iter().map(|&l| synthesize_state(grid, waists.source, l, encoding)).collect::<Result<_, _>>()?;

    let entries: Vec<((usize, usize), f64)> = match encoding {
        Encoding::PhaseOnly => {
            let masks: Vec<_> = labels.iter().map(|&l| decode_mask(grid, l)).collect();
            pair_indices()
                .map(|(b, a)| {
                    let decoded = apply_mask(&alice[a], &masks[b])?;
                    Ok(((b, a), smf_coupling(&far_field(&decoded), waists.smf)?))
                })
                .collect::<Result<_, ModesError>>()?
        }
        Encoding::Ideal => {
            let alice_far: Vec<_> = alice.par_iter().map(far_field).collect();
            let targets: Vec<_> = labels
                .par_iter()
                .map(|&l| synthesize_state(grid, waists.source, l, Encoding::Ideal).map(|f| far_field(&f)))
                .collect::<Result<_, _>>()?;
            pair_indices()
                .map(|(b, a)| Ok(((b, a), mode_overlap(&targets[b], &alice_far[a])?)))
                .collect::<Result<_, ModesError>>()?
        }
    };

    let mut raw = [[0.0; 6]; 6];
    for ((b, a), v) in entries {
        raw[b][a] = v;
    }
    CrosstalkMatrix::from_raw(raw, grid, waists, encoding)
}

/// Field behind Bob's mask, in the camera plane. With `window = Some((half_width, pixels))`
/// the focal plane is resampled on that window, otherwise the FFT sampling is kept.
pub fn decoded_far_field(
    grid: Grid,
    waists: Waists,
    encoding: Encoding,
    alice: ModeLabel,
    bob: ModeLabel,
    window: Option<(f64, usize)>,
) -> Result<ComplexField, ModesError> {
    let state = synthesize_state(grid, waists.source, alice, encoding)?;
    let decoded = apply_mask(&state, &decode_mask(grid, bob))?;
    Ok(match window {
        Some((half_width, pixels)) => far_field_window(&decoded, half_width, pixels),
        None => far_field(&decoded),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_normalization_and_csv_layout() {
        let g = Grid::new(128, 5.0).unwrap();
        let m = crosstalk_matrix(g, Waists::default(), Encoding::PhaseOnly).unwrap();
        assert!(m.normalization_error() < 1e-9);
        assert!(m.values.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
        let csv = m.to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines.len(), 7);
        assert_eq!(lines[0], "bob,a,b,c,α,β,γ");
        assert!(lines[1].starts_with("a,"));
        assert_eq!(lines[4].split(',').count(), 7);
    }

    #[test]
    fn degenerate_column_is_reported() {
        let g = Grid::new(64, 5.0).unwrap();
        let raw = [[0.0; 6]; 6];
        assert_eq!(
            CrosstalkMatrix::from_raw(raw, g, Waists::default(), Encoding::Ideal),
            Err(ModesError::DegenerateColumn)
        );
    }

    #[test]
    fn invalid_smf_waist_is_rejected() {
        let g = Grid::new(64, 5.0).unwrap();
        let w = Waists { source: 1.0, smf: -1.0 };
        assert!(matches!(crosstalk_matrix(g, w, Encoding::Ideal), Err(ModesError::InvalidWaist(_))));
    }
}

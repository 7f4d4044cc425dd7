use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::ModesError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MubBasis {
    /// Helical-phase states `l = -1, 0, +1`.
    Mub1,
    /// Fourier-conjugate superpositions of the `Mub1` states.
    Mub2,
}

impl MubBasis {
    pub fn index(self) -> usize {
        match self {
            MubBasis::Mub1 => 0,
            MubBasis::Mub2 => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(MubBasis::Mub1),
            1 => Some(MubBasis::Mub2),
            _ => None,
        }
    }
}

/// One of the six states `a, b, c` (MUB1) and `α, β, γ` (MUB2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModeLabel {
    basis: MubBasis,
    index: u8,
}

impl ModeLabel {
    pub const NAMES: [&'static str; 6] = ["a", "b", "c", "α", "β", "γ"];

    pub fn new(basis: MubBasis, index: u8) -> Result<Self, ModesError> {
        if index >= 3 {
            return Err(ModesError::InvalidIndex(index));
        }
        Ok(Self { basis, index })
    }

    /// All six labels in the order `a, b, c, α, β, γ`.
    pub fn all() -> [ModeLabel; 6] {
        let mut out = [ModeLabel { basis: MubBasis::Mub1, index: 0 }; 6];
        for (k, slot) in out.iter_mut().enumerate() {
            *slot = ModeLabel::from_position(k);
        }
        out
    }

    /// Position of the label in [`ModeLabel::all`], 0..6.
    pub fn position(self) -> usize {
        self.basis.index() * 3 + self.index as usize
    }

    pub fn from_position(k: usize) -> Self {
        assert!(k < 6, "label position {k} out of range");
        let basis = if k < 3 { MubBasis::Mub1 } else { MubBasis::Mub2 };
        ModeLabel { basis, index: (k % 3) as u8 }
    }

    pub fn basis(self) -> MubBasis {
        self.basis
    }

    pub fn index(self) -> u8 {
        self.index
    }

    /// OAM charge of a MUB1 state.
    pub fn oam_charge(self) -> Option<i32> {
        match self.basis {
            MubBasis::Mub1 => Some(self.index as i32 - 1),
            MubBasis::Mub2 => None,
        }
    }

    pub fn name(self) -> &'static str {
        Self::NAMES[self.position()]
    }
}

impl fmt::Display for ModeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Column `j` holds the MUB1 coefficients of MUB2 state `j`; rows are `a, b, c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MubCoefficients(pub [[Complex64; 3]; 3]);

impl MubCoefficients {
    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.0[row][col]
    }

    pub fn column(&self, col: usize) -> [Complex64; 3] {
        [self.0[0][col], self.0[1][col], self.0[2][col]]
    }

    /// Largest deviation of `M†M` from the identity.
    pub fn unitarity_error(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..3 {
            for j in 0..3 {
                let s: Complex64 = (0..3).map(|k| self.0[k][i].conj() * self.0[k][j]).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((s - Complex64::new(target, 0.0)).norm());
            }
        }
        worst
    }
}

/// The two-basis construction with `z = exp(2πi/3)`:
/// `α = (a + b + z²c)/√3`, `β = (a + zb + zc)/√3`, `γ = (a + z²b + c)/√3`.
pub fn mub_coefficients() -> MubCoefficients {
    let z = Complex64::from_polar(1.0, 2.0 * PI / 3.0);
    let z2 = z * z;
    let one = Complex64::new(1.0, 0.0);
    let s = 1.0 / 3.0_f64.sqrt();
    let cols = [[one, one, z2], [one, z, z], [one, z2, one]];
    let mut m = [[Complex64::new(0.0, 0.0); 3]; 3];
    for (j, col) in cols.iter().enumerate() {
        for (i, c) in col.iter().enumerate() {
            m[i][j] = c * s;
        }
    }
    MubCoefficients(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn columns_are_orthonormal() {
        let m = mub_coefficients();
        assert!(m.unitarity_error() < 1e-12);
        let (a, b) = (m.column(0), m.column(1));
        let ip: Complex64 = a.iter().zip(&b).map(|(x, y)| x.conj() * y).sum();
        assert!(ip.norm() < 1e-12);
    }

    #[test]
    fn every_entry_is_unbiased() {
        let m = mub_coefficients();
        assert!((m.entry(0, 0).norm_sqr() - 1.0 / 3.0).abs() < 1e-12);
        for i in 0..3 {
            for j in 0..3 {
                assert!((m.entry(i, j).norm_sqr() - 1.0 / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn label_positions_round_trip() {
        for (k, l) in ModeLabel::all().iter().enumerate() {
            assert_eq!(l.position(), k);
        }
        assert_eq!(ModeLabel::from_position(0).oam_charge(), Some(-1));
        assert_eq!(ModeLabel::from_position(2).oam_charge(), Some(1));
        assert!(ModeLabel::new(MubBasis::Mub2, 3).is_err());
        assert_eq!(ModeLabel::from_position(4).to_string(), "β");
    }
}

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::mub::{mub_coefficients, ModeLabel, MubBasis};
use super::{Grid, ModesError};

/// Largest fraction of the envelope's power allowed outside the window.
const MAX_POWER_LEAK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    /// Exact superpositions for MUB2, measured by ideal projection.
    Ideal,
    /// MUB2 phase profile written over the plain Gaussian envelope.
    PhaseOnly,
}

impl Encoding {
    pub fn as_str(self) -> &'static str {
        match self {
            Encoding::Ideal => "ideal",
            Encoding::PhaseOnly => "phase_only",
        }
    }
}

impl std::str::FromStr for Encoding {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ideal" => Ok(Encoding::Ideal),
            "phase_only" => Ok(Encoding::PhaseOnly),
            other => Err(format!("unknown encoding `{other}` (expected ideal or phase_only)")),
        }
    }
}

/// Transverse field sampled on a [`Grid`], row-major (`data[iy * n + ix]`).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    grid: Grid,
    data: Vec<Complex64>,
}

impl ComplexField {
    pub fn zeros(grid: Grid) -> Self {
        Self { grid, data: vec![Complex64::new(0.0, 0.0); grid.len()] }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> Complex64) -> Self {
        let data = grid.points().map(|(_, _, x, y)| f(x, y)).collect();
        Self { grid, data }
    }

    pub(crate) fn from_raw(grid: Grid, data: Vec<Complex64>) -> Self {
        assert_eq!(data.len(), grid.len());
        Self { grid, data }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn at(&self, ix: usize, iy: usize) -> Complex64 {
        self.data[iy * self.grid.n() + ix]
    }

    /// Sample at index `(n/2, n/2)`; on the axis for node-centered grids.
    pub fn on_axis(&self) -> Complex64 {
        let c = self.grid.center();
        self.at(c, c)
    }

    /// `∫|ψ|² dA` as a Riemann sum over the cells.
    pub fn power(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.cell_area()
    }

    /// Scales to unit power; a zero field is left untouched.
    pub fn normalize(&mut self) {
        let p = self.power();
        if p > 0.0 {
            let s = 1.0 / p.sqrt();
            self.data.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn normalized(mut self) -> Self {
        self.normalize();
        self
    }

    /// `⟨self|other⟩ = ∫ conj(self)·other dA`.
    pub fn inner(&self, other: &ComplexField) -> Result<Complex64, ModesError> {
        if self.grid != other.grid {
            return Err(ModesError::GridMismatch);
        }
        let s: Complex64 = self.data.iter().zip(&other.data).map(|(a, b)| a.conj() * b).sum();
        Ok(s * self.grid.cell_area())
    }
}

/// `exp(i·l·φ)`.
#[inline]
pub(crate) fn helical(l: i32, x: f64, y: f64) -> Complex64 {
    Complex64::from_polar(1.0, l as f64 * y.atan2(x))
}

/// Azimuthal factor of the ideal state: a helical phase for MUB1, the
/// coefficient-weighted sum of the three helical phases for MUB2.
pub(crate) fn ideal_angular(label: ModeLabel, x: f64, y: f64) -> Complex64 {
    match label.basis() {
        MubBasis::Mub1 => helical(label.oam_charge().unwrap(), x, y),
        MubBasis::Mub2 => {
            let col = mub_coefficients().column(label.index() as usize);
            (0..3).map(|i| col[i] * helical(i as i32 - 1, x, y)).sum()
        }
    }
}

#[inline]
pub(crate) fn envelope(waist: f64, x: f64, y: f64) -> f64 {
    (-(x * x + y * y) / (waist * waist)).exp()
}

pub(crate) fn check_waist(grid: &Grid, waist: f64) -> Result<(), ModesError> {
    if !waist.is_finite() || waist <= 0.0 {
        return Err(ModesError::InvalidWaist(waist));
    }
    // Power of |exp(-r²/w²)|² beyond the inscribed circle of the window.
    let ratio = grid.extent() / waist;
    let leak = (-2.0 * ratio * ratio).exp();
    if leak >= MAX_POWER_LEAK {
        return Err(ModesError::PowerLeak { leak });
    }
    Ok(())
}

/// One of the six states on `grid`, normalized to unit power.
pub fn synthesize_state(
    grid: Grid,
    waist: f64,
    label: ModeLabel,
    encoding: Encoding,
) -> Result<ComplexField, ModesError> {
    check_waist(&grid, waist)?;
    let phase_only = encoding == Encoding::PhaseOnly && label.basis() == MubBasis::Mub2;
    let field = ComplexField::from_fn(grid, |x, y| {
        let g = envelope(waist, x, y);
        let ang = ideal_angular(label, x, y);
        if phase_only {
            Complex64::from_polar(g, ang.arg())
        } else {
            ang * g
        }
    });
    Ok(field.normalized())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::new(256, 5.0).unwrap()
    }

    #[test]
    fn flat_state_is_a_real_gaussian() {
        let b = ModeLabel::from_position(1);
        for enc in [Encoding::Ideal, Encoding::PhaseOnly] {
            let f = synthesize_state(grid(), 1.0, b, enc).unwrap();
            assert!(f.data().iter().all(|v| v.im == 0.0 && v.re >= 0.0));
            assert!((f.power() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ideal_superposition_is_unbiased_against_mub1() {
        let alpha = synthesize_state(grid(), 1.0, ModeLabel::from_position(3), Encoding::Ideal).unwrap();
        let a = synthesize_state(grid(), 1.0, ModeLabel::from_position(0), Encoding::Ideal).unwrap();
        let p = a.inner(&alpha).unwrap().norm_sqr();
        assert!((p - 1.0 / 3.0).abs() < 1e-6, "{p}");
    }

    #[test]
    fn all_states_are_normalized() {
        for label in ModeLabel::all() {
            for enc in [Encoding::Ideal, Encoding::PhaseOnly] {
                let f = synthesize_state(grid(), 1.0, label, enc).unwrap();
                assert!((f.power() - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn rejects_bad_waists() {
        let b = ModeLabel::from_position(1);
        assert_eq!(
            synthesize_state(grid(), f64::INFINITY, b, Encoding::Ideal),
            Err(ModesError::InvalidWaist(f64::INFINITY))
        );
        assert!(matches!(synthesize_state(grid(), -1.0, b, Encoding::Ideal), Err(ModesError::InvalidWaist(_))));
        assert!(matches!(synthesize_state(grid(), 2.0, b, Encoding::Ideal), Err(ModesError::PowerLeak { .. })));
    }

    #[test]
    fn helical_states_are_orthogonal_on_the_grid() {
        let [a, b, c] =
            [0, 1, 2].map(|k| synthesize_state(grid(), 1.0, ModeLabel::from_position(k), Encoding::Ideal).unwrap());
        for (x, y) in [(&a, &b), (&a, &c), (&b, &c)] {
            assert!(x.inner(y).unwrap().norm() < 1e-12);
        }
    }
}

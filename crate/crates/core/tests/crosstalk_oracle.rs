//! Grid simulation against an independent angular-quadrature oracle.
//!
//! With a unit source waist and a mode-matched fiber, every state, mask and
//! the fiber mode share the same Gaussian radial profile, and the lens is
//! unitary. Each coupling then reduces to `|mean_φ A(φ)·M(φ)|²`, where `A`
//! is Alice's angular factor and `M` Bob's mask, which a one-dimensional
//! quadrature evaluates to near machine precision.

use std::f64::consts::PI;

use hdqkd_core::modes::{crosstalk_matrix, Encoding, Grid, MubBasis, Waists};
use num_complex::Complex64;

/// Block-normalized phase-only crosstalk, frozen from a 2·10⁶-point
/// quadrature: `[bob][alice]` over `a b c α β γ`.
const PHASE_ONLY: [[f64; 6]; 6] = [
    [1.0, 0.0, 0.0, 0.292_528_543_2, 0.292_528_543_2, 0.292_528_543_2],
    [0.0, 1.0, 0.0, 0.414_942_913_5, 0.414_942_913_5, 0.414_942_913_5],
    [0.0, 0.0, 1.0, 0.292_528_543_2, 0.292_528_543_2, 0.292_528_543_2],
    [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.978_139_855_4, 0.010_930_072_3, 0.010_930_072_3],
    [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.010_930_072_3, 0.978_139_855_4, 0.010_930_072_3],
    [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.010_930_072_3, 0.010_930_072_3, 0.978_139_855_4],
];

/// Raw coupling of a phase-only superposition into a mismatched mask of its
/// own basis, before normalization.
const PHASE_ONLY_RAW_OFF_DIAGONAL: f64 = 0.011_174_345_1;

fn coefficients() -> [[Complex64; 3]; 3] {
    let z = Complex64::from_polar(1.0, 2.0 * PI / 3.0);
    let one = Complex64::new(1.0, 0.0);
    // Columns α, β, γ over charges -1, 0, +1.
    [[one, one, z * z], [one, z, z], [one, z * z, one]]
}

fn angular(label: usize, phi: f64, phase_only: bool) -> Complex64 {
    let charges = [-1.0, 0.0, 1.0];
    if label < 3 {
        return Complex64::from_polar(1.0, charges[label] * phi);
    }
    let c = coefficients()[label - 3];
    let f: Complex64 = (0..3).map(|k| c[k] * Complex64::from_polar(1.0, charges[k] * phi)).sum();
    if phase_only {
        Complex64::from_polar(1.0, f.arg())
    } else {
        f / 3f64.sqrt()
    }
}

fn quadrature_matrix(samples: usize) -> ([[f64; 6]; 6], [[f64; 6]; 6]) {
    let mut raw = [[0.0; 6]; 6];
    for (b, row) in raw.iter_mut().enumerate() {
        for (a, v) in row.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..samples {
                let phi = (k as f64 + 0.5) * 2.0 * PI / samples as f64;
                let mask = Complex64::from_polar(1.0, -angular(b, phi, false).arg());
                acc += angular(a, phi, true) * mask;
            }
            *v = (acc / samples as f64).norm_sqr();
        }
    }
    let mut norm = raw;
    for col in 0..6 {
        for blk in [0, 3] {
            let s: f64 = (blk..blk + 3).map(|r| raw[r][col]).sum();
            for r in blk..blk + 3 {
                norm[r][col] = raw[r][col] / s;
            }
        }
    }
    (raw, norm)
}

fn max_deviation(a: &[[f64; 6]; 6], b: &[[f64; 6]; 6]) -> f64 {
    a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn quadrature_reproduces_the_frozen_values() {
    let (raw, norm) = quadrature_matrix(200_000);
    assert!(max_deviation(&norm, &PHASE_ONLY) < 1e-9, "{norm:?}");
    assert!((raw[3][4] - PHASE_ONLY_RAW_OFF_DIAGONAL).abs() < 1e-9);
}

#[test]
fn phase_only_grid_simulation_matches_the_oracle() {
    let m = crosstalk_matrix(Grid::new(512, 5.0).unwrap(), Waists::default(), Encoding::PhaseOnly).unwrap();
    let dev = max_deviation(&m.values, &PHASE_ONLY);
    assert!(dev < 2e-4, "max deviation {dev}");
    assert!((m.raw[3][4] - PHASE_ONLY_RAW_OFF_DIAGONAL).abs() < 2e-4);
    assert!(m.normalization_error() < 1e-12);
}

#[test]
fn phase_only_error_shrinks_with_resolution() {
    let dev = |n| {
        let m = crosstalk_matrix(Grid::new(n, 5.0).unwrap(), Waists::default(), Encoding::PhaseOnly).unwrap();
        max_deviation(&m.values, &PHASE_ONLY)
    };
    let (coarse, fine) = (dev(128), dev(512));
    assert!(fine < coarse, "{coarse} -> {fine}");
}

#[test]
fn ideal_grid_simulation_matches_coefficient_algebra() {
    let m = crosstalk_matrix(Grid::new(512, 5.0).unwrap(), Waists::default(), Encoding::Ideal).unwrap();
    for basis in [MubBasis::Mub1, MubBasis::Mub2] {
        let same = m.block(basis, basis);
        for (i, row) in same.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((v - expect).abs() < 1e-6, "{basis:?} [{i}][{j}] = {v}");
            }
        }
    }
    for (bob, alice) in [(MubBasis::Mub1, MubBasis::Mub2), (MubBasis::Mub2, MubBasis::Mub1)] {
        for v in m.block(bob, alice).iter().flatten() {
            assert!((v - 1.0 / 3.0).abs() < 1e-3, "{v}");
        }
    }
}

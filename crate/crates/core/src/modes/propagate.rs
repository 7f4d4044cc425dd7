use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use super::{ComplexField, Grid};

/// Effective `λ·f` of the Fourier lens in waist units. With this value the
/// far-field image of `exp(-r²)` is `exp(-r'²)`.
pub const FAR_FIELD_SCALE: f64 = std::f64::consts::PI;

/// Swaps quadrants so index `n/2` moves to `0` (its own inverse for even `n`).
fn shift_quadrants(data: &mut [Complex64], n: usize) {
    let h = n / 2;
    for iy in 0..h {
        for ix in 0..n {
            let jx = (ix + h) % n;
            data.swap(iy * n + ix, (iy + h) * n + jx);
        }
    }
}

fn transpose(data: &[Complex64], n: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); data.len()];
    for iy in 0..n {
        for ix in 0..n {
            out[ix * n + iy] = data[iy * n + ix];
        }
    }
    out
}

/// Focal-plane field behind the Fourier lens: a centered, energy-preserving
/// 2-D DFT onto a node-centered grid of spacing `λf / (n·dx)`. A half-cell
/// input offset becomes a linear phase ramp on the output.
pub fn far_field(field: &ComplexField) -> ComplexField {
    let grid = *field.grid();
    let n = grid.n();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);

    let mut buf = field.data().to_vec();
    shift_quadrants(&mut buf, n);
    buf.par_chunks_mut(n).for_each(|row| fft.process(row));
    let mut cols = transpose(&buf, n);
    cols.par_chunks_mut(n).for_each(|row| fft.process(row));
    let mut out = transpose(&cols, n);
    shift_quadrants(&mut out, n);

    let dx = grid.spacing();
    let dx_far = FAR_FIELD_SCALE / (n as f64 * dx);
    let scale = dx / dx_far / n as f64;
    let ramp: Vec<Complex64> = (0..n)
        .map(|k| {
            let kc = k as f64 - (n / 2) as f64;
            Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * grid.offset() * kc / n as f64)
        })
        .collect();
    for (ky, row) in out.chunks_mut(n).enumerate() {
        for (kx, v) in row.iter_mut().enumerate() {
            *v *= ramp[kx] * ramp[ky] * scale;
        }
    }

    ComplexField::from_raw(Grid::derived(n, n as f64 * dx_far / 2.0), out)
}

/// Far field sampled on an arbitrary centered window (`pixels` per side,
/// half-width `half_width` in far-field units) by a direct matrix Fourier
/// transform. Used for camera images, where the natural FFT sampling is too
/// coarse to resolve the focal spot.
pub fn far_field_window(field: &ComplexField, half_width: f64, pixels: usize) -> ComplexField {
    let grid = *field.grid();
    let n = grid.n();
    let out_grid = Grid::derived(pixels, half_width);
    let k = 2.0 * std::f64::consts::PI / FAR_FIELD_SCALE;

    // kernel[u][x] = exp(-i·k·x·u)
    let kernel: Vec<Complex64> = (0..pixels)
        .flat_map(|iu| {
            let u = out_grid.coord(iu);
            (0..n).map(move |ix| Complex64::from_polar(1.0, -k * grid.coord(ix) * u))
        })
        .collect();

    // Transform along x: partial[iy][iu].
    let data = field.data();
    let partial: Vec<Complex64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|iy| {
            let row = &data[iy * n..(iy + 1) * n];
            let kernel = &kernel;
            (0..pixels).map(move |iu| {
                let kr = &kernel[iu * n..(iu + 1) * n];
                row.iter().zip(kr).map(|(a, b)| a * b).sum::<Complex64>()
            })
        })
        .collect();

    let scale = grid.cell_area() / FAR_FIELD_SCALE;
    let out: Vec<Complex64> = (0..pixels)
        .into_par_iter()
        .flat_map_iter(|iv| {
            let kr = &kernel[iv * n..(iv + 1) * n];
            let partial = &partial;
            (0..pixels).map(move |iu| (0..n).map(|iy| kr[iy] * partial[iy * pixels + iu]).sum::<Complex64>() * scale)
        })
        .collect();

    ComplexField::from_raw(out_grid, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modes::field::{envelope, helical};

    fn gaussian(grid: Grid, l: i32) -> ComplexField {
        ComplexField::from_fn(grid, |x, y| helical(l, x, y) * envelope(1.0, x, y)).normalized()
    }

    #[test]
    fn parseval() {
        let g = Grid::new(256, 5.0).unwrap();
        for l in [-1, 0, 1] {
            let f = gaussian(g, l);
            let ff = far_field(&f);
            assert!((ff.power() - f.power()).abs() < 1e-9);
        }
    }

    #[test]
    fn unit_gaussian_is_self_fourier() {
        let g = Grid::new(256, 5.0).unwrap();
        let f = gaussian(g, 0);
        let ff = far_field(&f);
        let expected = ComplexField::from_fn(*ff.grid(), |x, y| envelope(1.0, x, y).into()).normalized();
        let overlap = expected.inner(&ff).unwrap();
        assert!((overlap.norm_sqr() - 1.0).abs() < 1e-9, "{overlap}");
        // Peak on axis.
        let peak = ff.data().iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert_eq!(ff.on_axis().norm(), peak);
    }

    #[test]
    fn vortex_far_field_is_dark_on_axis() {
        let g = Grid::new(256, 5.0).unwrap();
        for l in [-1, 1] {
            let ff = far_field(&gaussian(g, l));
            assert!(ff.on_axis().norm() < 1e-8);
        }
    }

    #[test]
    fn window_transform_matches_fft_samples() {
        let g = Grid::new(128, 5.0).unwrap();
        let f =
            ComplexField::from_fn(g, |x, y| helical(1, x, y) * envelope(1.0, x - 0.3, y + 0.1) + envelope(0.8, x, y));
        let ff = far_field(&f);
        // A window with the FFT's own sampling reproduces it exactly.
        let w = far_field_window(&f, ff.grid().extent(), 128);
        for (a, b) in w.data().iter().zip(ff.data()) {
            assert!((a - b).norm() < 1e-10);
        }
    }
}

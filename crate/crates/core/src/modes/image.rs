use serde::Serialize;

use super::{ComplexField, Grid};

/// `|ψ|²` on the field's grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntensityImage {
    pub grid: Grid,
    pub pixels: Vec<f64>,
}

impl IntensityImage {
    pub fn total(&self) -> f64 {
        self.pixels.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.pixels.iter().copied().fold(0.0, f64::max)
    }

    /// Intensity of the on-axis sample over the total. Needs a node-centered
    /// grid such as a far-field window, which has a sample on the axis.
    pub fn on_axis_fraction(&self) -> f64 {
        let total = self.total();
        if total <= 0.0 {
            return 0.0;
        }
        let c = self.grid.center();
        self.pixels[c * self.grid.n() + c] / total
    }

    /// Fraction of the image's intensity in the central 3×3 pixels, a small
    /// pinhole rather than a point.
    pub fn central_fraction(&self) -> f64 {
        let total = self.total();
        if total <= 0.0 {
            return 0.0;
        }
        let n = self.grid.n();
        let c = self.grid.center();
        let mut s = 0.0;
        for iy in c - 1..=c + 1 {
            for ix in c - 1..=c + 1 {
                s += self.pixels[iy * n + ix];
            }
        }
        s / total
    }
}

pub fn intensity_image(field: &ComplexField) -> IntensityImage {
    IntensityImage { grid: *field.grid(), pixels: field.data().iter().map(|v| v.norm_sqr()).collect() }
}

/// Binary 16-bit PGM (`P5`, big-endian samples), scaled so `full_scale` maps
/// to 65535. Row 0 is written first.
pub fn write_pgm16(image: &IntensityImage, full_scale: f64) -> Vec<u8> {
    let n = image.grid.n();
    let mut out = format!("P5\n{n} {n}\n65535\n").into_bytes();
    out.reserve(2 * n * n);
    for &p in &image.pixels {
        let v = if full_scale > 0.0 { (p / full_scale * 65535.0).round().clamp(0.0, 65535.0) } else { 0.0 };
        out.extend_from_slice(&(v as u16).to_be_bytes());
    }
    out
}

use serde::{Deserialize, Serialize};

use super::ModesError;

/// Where samples sit relative to the optical axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Centering {
    /// Sample `i` at `(i - n/2 + ½)·dx`: no sample on the axis, so vortex
    /// cores are never sampled and the grid keeps exact 4-fold symmetry.
    Cell,
    /// Sample `i` at `(i - n/2)·dx`: index `n/2` lies on the axis.
    Node,
}

/// Square sampling window centered on the optical axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    n: usize,
    extent: f64,
    centering: Centering,
}

impl Grid {
    pub const MIN_POINTS: usize = 64;
    pub const MIN_EXTENT: f64 = 3.0;

    /// `extent` is the half-width of the window in beam-waist units.
    pub fn new(n: usize, extent: f64) -> Result<Self, ModesError> {
        if n < Self::MIN_POINTS || !n.is_multiple_of(2) {
            return Err(ModesError::InvalidGrid(format!(
                "n = {n}: need an even number of points >= {}",
                Self::MIN_POINTS
            )));
        }
        if !extent.is_finite() || extent < Self::MIN_EXTENT {
            return Err(ModesError::InvalidGrid(format!(
                "extent = {extent}: need at least {} waists",
                Self::MIN_EXTENT
            )));
        }
        Ok(Self { n, extent, centering: Centering::Cell })
    }

    /// Unchecked node-centered grid for derived planes (far field, camera),
    /// whose extent is fixed by the transform rather than by the beam.
    pub(crate) fn derived(n: usize, extent: f64) -> Self {
        debug_assert!(n.is_multiple_of(2) && extent > 0.0);
        Self { n, extent, centering: Centering::Node }
    }

    pub fn centering(&self) -> Centering {
        self.centering
    }

    /// Offset of sample positions from the node lattice, in units of `dx`.
    pub fn offset(&self) -> f64 {
        match self.centering {
            Centering::Cell => 0.5,
            Centering::Node => 0.0,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.extent / self.n as f64
    }

    pub fn cell_area(&self) -> f64 {
        let dx = self.spacing();
        dx * dx
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        (i as f64 - (self.n / 2) as f64 + self.offset()) * self.spacing()
    }

    /// Index of the sample nearest the axis (on it for node-centered grids).
    pub fn center(&self) -> usize {
        self.n / 2
    }

    /// Iterates `(ix, iy, x, y)` in row-major order.
    pub fn points(&self) -> impl Iterator<Item = (usize, usize, f64, f64)> + '_ {
        (0..self.n).flat_map(move |iy| {
            let y = self.coord(iy);
            (0..self.n).map(move |ix| (ix, iy, self.coord(ix), y))
        })
    }
}

//! Uniform cell-centred grids and scalar fields on them.

use crate::error::{FlowError, Result};
use crate::geometry::{Bounds, Mode, Vec2};

/// Cell-centred uniform grid. Cell `(i, j)` has centre
/// `origin + ((i + 1/2) h, (j + 1/2) h)`. In axisymmetric mode `origin.x` is zero so
/// the first column of faces lies on the symmetry axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2 {
    pub nx: usize,
    pub ny: usize,
    pub origin: Vec2,
    pub h: f64,
    pub mode: Mode,
}

impl Grid2 {
    pub fn new(nx: usize, ny: usize, origin: Vec2, h: f64, mode: Mode) -> Result<Self> {
        if nx < 4 || ny < 4 {
            return Err(FlowError::InvalidGrid(format!("grid {nx}x{ny} is smaller than 4x4")));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(FlowError::InvalidGrid(format!("spacing {h} is not positive")));
        }
        if mode == Mode::Axisym && origin.x != 0.0 {
            return Err(FlowError::InvalidGrid("axisymmetric grids must start on the axis".into()));
        }
        Ok(Self { nx, ny, origin, h, mode })
    }

    /// Smallest grid of spacing `h` covering `bounds` plus `margin` cells on every
    /// side (except the axis side in axisymmetric mode).
    pub fn covering(bounds: &Bounds, h: f64, margin: usize, mode: Mode) -> Result<Self> {
        let m = margin as f64 * h;
        let (x0, x1) = match mode {
            Mode::Planar => (bounds.lo.x - m, bounds.hi.x + m),
            Mode::Axisym => (0.0, bounds.hi.x + m),
        };
        let (y0, y1) = (bounds.lo.y - m, bounds.hi.y + m);
        let nx = ((x1 - x0) / h).ceil() as usize;
        let ny = ((y1 - y0) / h).ceil() as usize;
        // Centre the surplus so the box stays symmetric for symmetric inputs.
        let sx = match mode {
            Mode::Planar => 0.5 * (nx as f64 * h - (x1 - x0)),
            Mode::Axisym => 0.0,
        };
        let sy = 0.5 * (ny as f64 * h - (y1 - y0));
        Self::new(nx, ny, Vec2::new(x0 - sx, y0 - sy), h, mode)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn center(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new(
            self.origin.x + (i as f64 + 0.5) * self.h,
            self.origin.y + (j as f64 + 0.5) * self.h,
        )
    }

    pub fn bounds(&self) -> Bounds {
        Bounds::new(
            self.origin,
            self.origin + Vec2::new(self.nx as f64 * self.h, self.ny as f64 * self.h),
        )
    }

    /// Continuous cell index of `x` (cell centres sit at integers).
    #[inline]
    pub fn fractional_index(&self, x: &Vec2) -> (f64, f64) {
        (
            (x.x - self.origin.x) / self.h - 0.5,
            (x.y - self.origin.y) / self.h - 0.5,
        )
    }

    /// Cell containing `x`, if any.
    pub fn cell_of(&self, x: &Vec2) -> Option<(usize, usize)> {
        let i = ((x.x - self.origin.x) / self.h).floor();
        let j = ((x.y - self.origin.y) / self.h).floor();
        if i < 0.0 || j < 0.0 || i >= self.nx as f64 || j >= self.ny as f64 {
            None
        } else {
            Some((i as usize, j as usize))
        }
    }

    /// Maps a possibly out-of-range column to a valid one: mirrored across the axis in
    /// axisymmetric mode, clamped otherwise.
    #[inline]
    pub fn wrap_i(&self, i: isize) -> usize {
        let i = if self.mode == Mode::Axisym && i < 0 { -1 - i } else { i };
        i.clamp(0, self.nx as isize - 1) as usize
    }

    #[inline]
    pub fn wrap_j(&self, j: isize) -> usize {
        j.clamp(0, self.ny as isize - 1) as usize
    }

    /// Cell area weight: `h^2` in planar mode, `2 pi r h^2` in axisymmetric mode.
    #[inline]
    pub fn cell_measure(&self, i: usize) -> f64 {
        match self.mode {
            Mode::Planar => self.h * self.h,
            Mode::Axisym => 2.0 * std::f64::consts::PI * (i as f64 + 0.5) * self.h * self.h * self.h,
        }
    }
}

/// Scalar field stored row-major on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub grid: Grid2,
    pub data: Vec<f64>,
}

impl GridField {
    pub fn zeros(grid: &Grid2) -> Self {
        Self { grid: grid.clone(), data: vec![0.0; grid.len()] }
    }

    pub fn from_fn(grid: &Grid2, f: impl Fn(Vec2) -> f64) -> Self {
        let mut data = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                data.push(f(grid.center(i, j)));
            }
        }
        Self { grid: grid.clone(), data }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.grid.nx + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let nx = self.grid.nx;
        self.data[j * nx + i] = v;
    }

    /// Value at a possibly out-of-range index (mirrored across the axis, clamped at
    /// the box edges).
    #[inline]
    pub fn at(&self, i: isize, j: isize) -> f64 {
        self.get(self.grid.wrap_i(i), self.grid.wrap_j(j))
    }

    /// Bilinear interpolation of the cell values at `x`. Points outside the box use
    /// the nearest edge values; in axisymmetric mode `r < 0` samples the mirror.
    pub fn sample(&self, x: &Vec2) -> f64 {
        let p = if self.grid.mode == Mode::Axisym { Vec2::new(x.x.abs(), x.y) } else { *x };
        let (u, v) = self.grid.fractional_index(&p);
        let i0 = u.floor();
        let j0 = v.floor();
        let (fu, fv) = (u - i0, v - j0);
        let (i0, j0) = (i0 as isize, j0 as isize);
        let a = self.at(i0, j0);
        let b = self.at(i0 + 1, j0);
        let c = self.at(i0, j0 + 1);
        let d = self.at(i0 + 1, j0 + 1);
        (1.0 - fv) * ((1.0 - fu) * a + fu * b) + fv * ((1.0 - fu) * c + fu * d)
    }

    /// Bilinear sample together with the interpolation stencil: the four `(cell, weight)`
    /// pairs whose weighted sum gives the sample.
    pub fn stencil(grid: &Grid2, x: &Vec2) -> [((usize, usize), f64); 4] {
        let p = if grid.mode == Mode::Axisym { Vec2::new(x.x.abs(), x.y) } else { *x };
        let (u, v) = grid.fractional_index(&p);
        let i0 = u.floor();
        let j0 = v.floor();
        let (fu, fv) = (u - i0, v - j0);
        let (i0, j0) = (i0 as isize, j0 as isize);
        [
            ((grid.wrap_i(i0), grid.wrap_j(j0)), (1.0 - fu) * (1.0 - fv)),
            ((grid.wrap_i(i0 + 1), grid.wrap_j(j0)), fu * (1.0 - fv)),
            ((grid.wrap_i(i0), grid.wrap_j(j0 + 1)), (1.0 - fu) * fv),
            ((grid.wrap_i(i0 + 1), grid.wrap_j(j0 + 1)), fu * fv),
        ]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn bilinear_reproduces_affine_functions() {
        let g = Grid2::new(16, 12, Vec2::new(-1.0, -0.5), 0.125, Mode::Planar).unwrap();
        let f = GridField::from_fn(&g, |x| 2.0 * x.x - 3.0 * x.y + 0.5);
        for p in [Vec2::new(0.1, 0.2), Vec2::new(-0.7, 0.6), Vec2::new(0.33, -0.21)] {
            assert_abs_diff_eq!(f.sample(&p), 2.0 * p.x - 3.0 * p.y + 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn axisym_sampling_mirrors_across_axis() {
        let g = Grid2::new(8, 8, Vec2::new(0.0, -1.0), 0.25, Mode::Axisym).unwrap();
        let f = GridField::from_fn(&g, |x| x.x * x.x + x.y);
        assert_abs_diff_eq!(f.sample(&Vec2::new(-0.3, 0.1)), f.sample(&Vec2::new(0.3, 0.1)), epsilon = 1e-14);
        assert_eq!(f.at(-1, 3), f.get(0, 3));
        assert_eq!(f.at(-2, 3), f.get(1, 3));
    }

    #[test]
    fn covering_grid_contains_bounds() {
        let b = Bounds::new(Vec2::new(-2.0, -2.0), Vec2::new(2.0, 2.0));
        let g = Grid2::covering(&b, 1.0 / 32.0, 4, Mode::Planar).unwrap();
        let gb = g.bounds();
        assert!(gb.lo.x <= -2.0 - 4.0 / 32.0 + 1e-12 && gb.hi.y >= 2.0 + 4.0 / 32.0 - 1e-12);
        assert_abs_diff_eq!(gb.lo.x + gb.hi.x, 0.0, epsilon = 1e-12);
        let ga = Grid2::covering(&b, 1.0 / 32.0, 4, Mode::Axisym).unwrap();
        assert_eq!(ga.origin.x, 0.0);
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(Grid2::new(2, 10, Vec2::zeros(), 0.1, Mode::Planar).is_err());
        assert!(Grid2::new(10, 10, Vec2::zeros(), 0.0, Mode::Planar).is_err());
        assert!(Grid2::new(10, 10, Vec2::new(0.5, 0.0), 0.1, Mode::Axisym).is_err());
    }
}

//! Finite-difference curvature of level-set functions, sampled on the extracted
//! interface.

use crate::geometry::{Mode, Vec2};
use crate::grid::GridField;
use crate::interface::Interface;

/// Geometric quantities of the level set through a cell centre.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellGeometry {
    pub grad: Vec2,
    /// Profile curvature (curvature of the meridian curve), positive for a disc.
    pub k1: f64,
    /// Rotational curvature in axisymmetric mode.
    pub k2: Option<f64>,
}

impl CellGeometry {
    pub fn mean(&self) -> f64 {
        self.k1 + self.k2.unwrap_or(0.0)
    }
}

/// Curvature of the level set of `phi` (positive inside) through cell `(i, j)`, from
/// central differences. `None` where the gradient degenerates.
pub fn cell_geometry(phi: &GridField, i: usize, j: usize) -> Option<CellGeometry> {
    let g = &phi.grid;
    let (i, j) = (i as isize, j as isize);
    let h = g.h;
    let c = phi.at(i, j);
    let e = phi.at(i + 1, j);
    let w = phi.at(i - 1, j);
    let n = phi.at(i, j + 1);
    let s = phi.at(i, j - 1);
    let px = (e - w) / (2.0 * h);
    let py = (n - s) / (2.0 * h);
    let pxx = (e - 2.0 * c + w) / (h * h);
    let pyy = (n - 2.0 * c + s) / (h * h);
    let pxy = (phi.at(i + 1, j + 1) - phi.at(i + 1, j - 1) - phi.at(i - 1, j + 1) + phi.at(i - 1, j - 1))
        / (4.0 * h * h);
    let g2 = px * px + py * py;
    if g2 < 1e-12 {
        return None;
    }
    let gn = g2.sqrt();
    let k1 = -(pxx * py * py - 2.0 * px * py * pxy + pyy * px * px) / (g2 * gn);
    let k2 = match g.mode {
        Mode::Planar => None,
        Mode::Axisym => {
            let r = g.origin.x + (i as f64 + 0.5) * h;
            Some(-px / (gn * r))
        }
    };
    Some(CellGeometry { grad: Vec2::new(px, py), k1, k2 })
}

/// Curvature data at one interface sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureSample {
    pub x: Vec2,
    /// Outward unit normal of `K`.
    pub nu: Vec2,
    pub h: f64,
    pub a_norm: f64,
    pub lambda1: f64,
    pub k1: f64,
    pub k2: Option<f64>,
}

/// Samples curvature at the midpoints of the interface segments by bilinear
/// interpolation of the cell values. `phi` must already carry ghost values outside the
/// barrier. Midpoints whose stencil touches a degenerate cell are skipped; the count of
/// skipped points is returned alongside.
pub fn sample_curvature(phi: &GridField, iface: &Interface) -> (Vec<CurvatureSample>, usize) {
    let g = &phi.grid;
    let mut out = Vec::with_capacity(iface.segments.len());
    let mut skipped = 0;
    for seg in &iface.segments {
        let x = seg.midpoint();
        let stencil = GridField::stencil(g, &x);
        let mut grad = Vec2::zeros();
        let (mut k1, mut k2) = (0.0, 0.0);
        let mut ok = true;
        for ((i, j), wgt) in stencil {
            if wgt == 0.0 {
                continue;
            }
            match cell_geometry(phi, i, j) {
                Some(cg) => {
                    grad += cg.grad * wgt;
                    k1 += cg.k1 * wgt;
                    k2 += cg.k2.unwrap_or(0.0) * wgt;
                }
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok || grad.norm() < 1e-12 {
            skipped += 1;
            continue;
        }
        let nu = -grad.normalize();
        let k2 = if g.mode == Mode::Axisym { Some(k2) } else { None };
        let (h, a_norm, lambda1) = match k2 {
            None => (k1, k1.abs(), k1),
            Some(k2) => (k1 + k2, (k1 * k1 + k2 * k2).sqrt(), k1.min(k2)),
        };
        out.push(CurvatureSample { x, nu, h, a_norm, lambda1, k1, k2 });
    }
    (out, skipped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Bounds;
    use crate::grid::Grid2;
    use approx::assert_relative_eq;

    #[test]
    fn circle_curvature() {
        let g = Grid2::covering(&Bounds::new(Vec2::new(-1.0, -1.0), Vec2::new(1.0, 1.0)), 1.0 / 128.0, 2, Mode::Planar)
            .unwrap();
        let phi = GridField::from_fn(&g, |x| 0.5 - x.norm());
        let iface = Interface::extract(&phi, None);
        let (s, skipped) = sample_curvature(&phi, &iface);
        assert_eq!(skipped, 0);
        for p in &s {
            assert_relative_eq!(p.h, 2.0, max_relative = 1e-2);
            assert_eq!(p.a_norm, p.h.abs());
            assert_relative_eq!(p.nu.dot(&p.x.normalize()), 1.0, max_relative = 1e-3);
        }
    }

    #[test]
    fn sphere_curvature_axisym() {
        let g = Grid2::new(96, 192, Vec2::new(0.0, -1.0), 1.0 / 96.0, Mode::Axisym).unwrap();
        let phi = GridField::from_fn(&g, |x| 0.5 - x.norm());
        let (s, _) = sample_curvature(&phi, &Interface::extract(&phi, None));
        for p in &s {
            assert_relative_eq!(p.h, 4.0, max_relative = 2e-2);
            assert_relative_eq!(p.a_norm / p.h, 0.5_f64.sqrt(), max_relative = 2e-2);
        }
    }

    #[test]
    fn cylinder_curvature_axisym() {
        let g = Grid2::new(96, 64, Vec2::new(0.0, -0.5), 1.0 / 96.0, Mode::Axisym).unwrap();
        let phi = GridField::from_fn(&g, |x| 0.5 - x.x);
        let (s, _) = sample_curvature(&phi, &Interface::extract(&phi, None));
        assert!(!s.is_empty());
        for p in &s {
            assert_relative_eq!(p.h, 2.0, max_relative = 1e-2);
            assert_relative_eq!(p.a_norm / p.h, 1.0, max_relative = 1e-2);
            assert!(p.lambda1.abs() < 1e-9);
        }
    }
}

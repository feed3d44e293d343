//! Zero-level-set extraction (marching squares) and discrete measures of the
//! extracted interface.

use crate::geometry::{Mode, Vec2};
use crate::grid::GridField;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: Vec2,
    pub b: Vec2,
}

impl Segment {
    pub fn midpoint(&self) -> Vec2 {
        (self.a + self.b) * 0.5
    }

    pub fn length(&self) -> f64 {
        (self.b - self.a).norm()
    }
}

/// Piecewise-linear approximation of `{phi = 0}`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Interface {
    pub segments: Vec<Segment>,
    pub mode: Option<Mode>,
}

fn lerp_zero(pa: Vec2, fa: f64, pb: Vec2, fb: f64) -> Vec2 {
    let t = if fa == fb { 0.5 } else { (fa / (fa - fb)).clamp(0.0, 1.0) };
    pa + (pb - pa) * t
}

/// Positive part of the square with the given corner values, as a polygon (corners
/// counter-clockwise: (0,0), (1,0), (1,1), (0,1)).
fn positive_polygon(p: &[Vec2; 4], f: &[f64; 4]) -> Vec<Vec2> {
    let mut poly = Vec::with_capacity(8);
    for k in 0..4 {
        let l = (k + 1) % 4;
        if f[k] >= 0.0 {
            poly.push(p[k]);
        }
        if (f[k] >= 0.0) != (f[l] >= 0.0) {
            poly.push(lerp_zero(p[k], f[k], p[l], f[l]));
        }
    }
    poly
}

fn shoelace(poly: &[Vec2]) -> (f64, f64) {
    // Returns (area, first moment in x).
    let n = poly.len();
    if n < 3 {
        return (0.0, 0.0);
    }
    let (mut a, mut mx) = (0.0, 0.0);
    for k in 0..n {
        let p = poly[k];
        let q = poly[(k + 1) % n];
        let c = p.x * q.y - q.x * p.y;
        a += c;
        mx += (p.x + q.x) * c;
    }
    (0.5 * a, mx / 6.0)
}

/// Clip the segment `a b` to `{dist >= 0}` (the part inside the barrier).
fn clip_segment(seg: Segment, dist: &dyn Fn(&Vec2) -> f64) -> Option<Segment> {
    let (da, db) = (dist(&seg.a), dist(&seg.b));
    match (da >= 0.0, db >= 0.0) {
        (true, true) => Some(seg),
        (false, false) => None,
        (ain, _) => {
            let (mut lo, mut hi) = if ain { (seg.a, seg.b) } else { (seg.b, seg.a) };
            for _ in 0..40 {
                let m = (lo + hi) * 0.5;
                if dist(&m) >= 0.0 {
                    lo = m;
                } else {
                    hi = m;
                }
            }
            if ain {
                Some(Segment { a: seg.a, b: lo })
            } else {
                Some(Segment { a: lo, b: seg.b })
            }
        }
    }
}

impl Interface {
    /// Marching-squares extraction over the dual grid of cell centres. Segments are
    /// clipped to `{dist >= 0}` when a distance function is given. In axisymmetric
    /// mode an extra mirrored column closes the interface across the axis and the
    /// result is clipped to `r >= 0`.
    pub fn extract(field: &GridField, dist: Option<&dyn Fn(&Vec2) -> f64>) -> Interface {
        let g = &field.grid;
        Self::extract_in(field, dist, (0, g.nx, 0, g.ny))
    }

    /// Extraction restricted to the dual squares whose lower-left cell lies in
    /// `[i0, i1) x [j0, j1)`.
    pub fn extract_in(
        field: &GridField,
        dist: Option<&dyn Fn(&Vec2) -> f64>,
        range: (usize, usize, usize, usize),
    ) -> Interface {
        let g = &field.grid;
        let (i0, i1, j0, j1) = range;
        let i_start: isize = if g.mode == Mode::Axisym && i0 == 0 { -1 } else { i0 as isize };
        let mut segments = Vec::new();
        for j in j0 as isize..(j1.min(g.ny - 1)) as isize {
            for i in i_start..(i1.min(g.nx - 1)) as isize {
                let c = |ii: isize, jj: isize| {
                    Vec2::new(g.origin.x + (ii as f64 + 0.5) * g.h, g.origin.y + (jj as f64 + 0.5) * g.h)
                };
                let p = [c(i, j), c(i + 1, j), c(i + 1, j + 1), c(i, j + 1)];
                let f = [field.at(i, j), field.at(i + 1, j), field.at(i + 1, j + 1), field.at(i, j + 1)];
                let code = f.iter().enumerate().fold(0u8, |acc, (k, v)| acc | (((*v >= 0.0) as u8) << k));
                if code == 0 || code == 15 {
                    continue;
                }
                let e = |k: usize| {
                    let l = (k + 1) % 4;
                    lerp_zero(p[k], f[k], p[l], f[l])
                };
                let mut push = |a: Vec2, b: Vec2| {
                    let mut s = Some(Segment { a, b });
                    if g.mode == Mode::Axisym {
                        s = s.and_then(|s| clip_segment(s, &|x: &Vec2| x.x));
                    }
                    if let Some(dist) = dist {
                        s = s.and_then(|s| clip_segment(s, dist));
                    }
                    if let Some(s) = s {
                        if s.length() > 0.0 {
                            segments.push(s);
                        }
                    }
                };
                // Edge k joins corner k and corner k+1.
                match code {
                    1 | 14 => push(e(3), e(0)),
                    2 | 13 => push(e(0), e(1)),
                    3 | 12 => push(e(3), e(1)),
                    4 | 11 => push(e(1), e(2)),
                    6 | 9 => push(e(0), e(2)),
                    7 | 8 => push(e(2), e(3)),
                    5 | 10 => {
                        let centre = 0.25 * (f[0] + f[1] + f[2] + f[3]);
                        let joined = (centre >= 0.0) == (code == 5);
                        if joined {
                            push(e(0), e(1));
                            push(e(2), e(3));
                        } else {
                            push(e(3), e(0));
                            push(e(1), e(2));
                        }
                    }
                    _ => unreachable!(),
                }
            }
        }
        Interface { segments, mode: Some(g.mode) }
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn midpoints(&self) -> Vec<Vec2> {
        self.segments.iter().map(Segment::midpoint).collect()
    }

    /// Length of the meridian curve.
    pub fn length(&self) -> f64 {
        self.segments.iter().map(Segment::length).sum()
    }

    /// Measure of the hypersurface: length in planar mode, surface area of revolution
    /// in axisymmetric mode.
    pub fn measure(&self) -> f64 {
        match self.mode {
            Some(Mode::Axisym) => self
                .segments
                .iter()
                .map(|s| std::f64::consts::PI * (s.a.x + s.b.x) * s.length())
                .sum(),
            _ => self.length(),
        }
    }

    /// Number of connected components, joining endpoints closer than `tol`.
    pub fn components(&self, tol: f64) -> usize {
        let n = self.segments.len();
        if n == 0 {
            return 0;
        }
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        // Bucket endpoints on a hash grid of cell size tol.
        let mut buckets: std::collections::HashMap<(i64, i64), Vec<usize>> = std::collections::HashMap::new();
        let key = |v: &Vec2| ((v.x / tol).floor() as i64, (v.y / tol).floor() as i64);
        for (k, s) in self.segments.iter().enumerate() {
            for v in [s.a, s.b] {
                buckets.entry(key(&v)).or_default().push(k);
            }
        }
        for (k, s) in self.segments.iter().enumerate() {
            for v in [s.a, s.b] {
                let (bx, by) = key(&v);
                for dx in -1..=1 {
                    for dy in -1..=1 {
                        if let Some(list) = buckets.get(&(bx + dx, by + dy)) {
                            for &m in list {
                                let t = &self.segments[m];
                                if (t.a - v).norm() <= tol || (t.b - v).norm() <= tol {
                                    let (ra, rb) = (find(&mut parent, k), find(&mut parent, m));
                                    if ra != rb {
                                        parent[ra] = rb;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        (0..n).filter(|&k| find(&mut parent, k) == k).count()
    }
}

/// Measure of `{phi >= 0}`: area in planar mode, volume of revolution in axisymmetric
/// mode. Each dual square contributes the positive part of its piecewise-linear
/// reconstruction.
pub fn region_measure(field: &GridField) -> f64 {
    let g = &field.grid;
    let i_start: isize = if g.mode == Mode::Axisym { -1 } else { 0 };
    let mut total = 0.0;
    for j in 0..g.ny as isize - 1 {
        for i in i_start..g.nx as isize - 1 {
            let c = |ii: isize, jj: isize| {
                Vec2::new(g.origin.x + (ii as f64 + 0.5) * g.h, g.origin.y + (jj as f64 + 0.5) * g.h)
            };
            let p = [c(i, j), c(i + 1, j), c(i + 1, j + 1), c(i, j + 1)];
            let f = [field.at(i, j), field.at(i + 1, j), field.at(i + 1, j + 1), field.at(i, j + 1)];
            if f.iter().all(|v| *v < 0.0) {
                continue;
            }
            let mut poly = positive_polygon(&p, &f);
            if g.mode == Mode::Axisym && i < 0 {
                poly = clip_polygon_right_of_axis(&poly);
            }
            let (a, mx) = shoelace(&poly);
            total += match g.mode {
                Mode::Planar => a,
                Mode::Axisym => 2.0 * std::f64::consts::PI * mx,
            };
        }
    }
    total
}

fn clip_polygon_right_of_axis(poly: &[Vec2]) -> Vec<Vec2> {
    let n = poly.len();
    let mut out = Vec::with_capacity(n + 2);
    for k in 0..n {
        let p = poly[k];
        let q = poly[(k + 1) % n];
        if p.x >= 0.0 {
            out.push(p);
        }
        if (p.x >= 0.0) != (q.x >= 0.0) {
            let t = p.x / (p.x - q.x);
            out.push(p + (q - p) * t);
        }
    }
    out
}

/// Root-mean-square symmetric Chamfer distance between two point clouds.
pub fn chamfer_rms(a: &[Vec2], b: &[Vec2]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return f64::INFINITY;
    }
    let one_way = |p: &[Vec2], q: &[Vec2]| {
        let s: f64 = p
            .iter()
            .map(|x| q.iter().map(|y| (x - y).norm_squared()).fold(f64::INFINITY, f64::min))
            .sum();
        s / p.len() as f64
    };
    (0.5 * (one_way(a, b) + one_way(b, a))).sqrt()
}

/// Hausdorff distance between two point clouds.
pub fn hausdorff(a: &[Vec2], b: &[Vec2]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return f64::INFINITY;
    }
    let one_way = |p: &[Vec2], q: &[Vec2]| {
        p.iter()
            .map(|x| q.iter().map(|y| (x - y).norm()).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    one_way(a, b).max(one_way(b, a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid2;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn disc_field(h: f64, r0: f64) -> GridField {
        let g = Grid2::covering(
            &crate::geometry::Bounds::new(Vec2::new(-1.0, -1.0), Vec2::new(1.0, 1.0)),
            h,
            2,
            Mode::Planar,
        )
        .unwrap();
        GridField::from_fn(&g, |x| r0 - x.norm())
    }

    #[test]
    fn circle_length_and_area_converge() {
        let f = disc_field(1.0 / 64.0, 0.5);
        let iface = Interface::extract(&f, None);
        assert_abs_diff_eq!(iface.length(), PI, epsilon = 2e-3);
        assert_abs_diff_eq!(region_measure(&f), PI * 0.25, epsilon = 2e-3);
        assert_eq!(iface.components(1e-9), 1);
        for m in iface.midpoints() {
            assert!((m.norm() - 0.5).abs() < 1e-3);
        }
    }

    #[test]
    fn axisym_sphere_area_and_volume() {
        let g = Grid2::new(64, 128, Vec2::new(0.0, -1.0), 1.0 / 64.0, Mode::Axisym).unwrap();
        let f = GridField::from_fn(&g, |x| 0.5 - x.norm());
        let iface = Interface::extract(&f, None);
        assert_abs_diff_eq!(iface.measure(), 4.0 * PI * 0.25, epsilon = 5e-3);
        assert_abs_diff_eq!(region_measure(&f), 4.0 / 3.0 * PI * 0.125, epsilon = 5e-3);
        assert!(iface.segments.iter().all(|s| s.a.x >= 0.0 && s.b.x >= 0.0));
        assert_eq!(iface.components(1e-9), 1);
    }

    #[test]
    fn clipping_to_barrier() {
        let f = disc_field(1.0 / 64.0, 0.5);
        let half = |x: &Vec2| x.x;
        let iface = Interface::extract(&f, Some(&half));
        assert_abs_diff_eq!(iface.length(), PI * 0.5, epsilon = 2e-3);
        assert!(iface.segments.iter().all(|s| s.a.x >= 0.0 && s.b.x >= 0.0));
    }

    #[test]
    fn two_components() {
        let g = Grid2::new(64, 32, Vec2::new(-1.0, -0.5), 1.0 / 32.0, Mode::Planar).unwrap();
        let f = GridField::from_fn(&g, |x| {
            (0.2 - (x - Vec2::new(-0.5, 0.0)).norm()).max(0.2 - (x - Vec2::new(0.5, 0.0)).norm())
        });
        assert_eq!(Interface::extract(&f, None).components(1e-9), 2);
    }

    #[test]
    fn chamfer_of_identical_clouds_is_zero() {
        let a = vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0)];
        assert_eq!(chamfer_rms(&a, &a), 0.0);
        let b = vec![Vec2::new(0.0, 0.1), Vec2::new(1.0, 0.1)];
        assert_abs_diff_eq!(chamfer_rms(&a, &b), 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(hausdorff(&a, &b), 0.1, epsilon = 1e-12);
    }
}

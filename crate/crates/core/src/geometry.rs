//! Barrier domains, initial regions and the boundary primitives shared by the
//! flow, the elliptic solver and the blowup analysis.
//!
//! Conventions used throughout the crate:
//!
//! * `d` is the signed distance to the barrier, positive inside `D`.
//! * `N = -grad d` is the outward unit normal of `D`.
//! * Region level functions are positive inside `K`; `nu` is the outward normal of `K`.
//! * In axisymmetric mode points are `(r, z)` in the meridian half-plane `r >= 0`.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};

pub type Vec2 = Vector2<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Planar,
    Axisym,
}

impl Mode {
    /// Dimension `n` of the evolving hypersurface.
    pub fn surface_dim(self) -> usize {
        match self {
            Mode::Planar => 1,
            Mode::Axisym => 2,
        }
    }
}

/// Shape of the barrier container.
#[derive(Debug, Clone, PartialEq)]
pub enum BarrierShape {
    Disc { center: Vec2, radius: f64 },
    Annulus { center: Vec2, inner: f64, outer: f64 },
    /// `D = { x : <x, normal> >= offset }` with `normal` the inward unit normal.
    Halfplane { normal: Vec2, offset: f64 },
    /// `D = { x : |<x, normal> - center| <= half_width }`.
    Slab { normal: Vec2, center: f64, half_width: f64 },
    /// Two lobes of radius `lobe_radius` centred at `(0, +-lobe_offset)` joined by a
    /// capsule of radius `neck_radius` along the symmetry axis; corners are smoothed
    /// over a width `blend`.
    /// The neck radius grows like `neck_radius + waist z^2`, so that for `waist > 0` the
    /// central cross-section is a strictly stable free-boundary minimal surface.
    Dumbbell { lobe_radius: f64, lobe_offset: f64, neck_radius: f64, waist: f64, blend: f64 },
    /// Ball of the given radius centred at the origin of the meridian plane.
    Ball { radius: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarrierDomain {
    pub shape: BarrierShape,
    pub mode: Mode,
}

/// Principal curvatures of the barrier with respect to the outward normal.
///
/// A disc of radius `R` has `profile = 1/R`. In axisymmetric mode the barrier is a
/// surface of revolution and carries the extra rotational curvature `N_r / r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierCurvature {
    pub profile: f64,
    pub rotational: Option<f64>,
}

impl BarrierCurvature {
    pub fn trace(&self) -> f64 {
        self.profile + self.rotational.unwrap_or(0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.profile.abs().max(self.rotational.map_or(0.0, f64::abs))
    }
}

/// Axis-aligned box `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub lo: Vec2,
    pub hi: Vec2,
}

impl Bounds {
    pub fn new(lo: Vec2, hi: Vec2) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, x: &Vec2) -> bool {
        x.x >= self.lo.x && x.x <= self.hi.x && x.y >= self.lo.y && x.y <= self.hi.y
    }

    pub fn intersect(&self, other: &Bounds) -> Bounds {
        Bounds {
            lo: Vec2::new(self.lo.x.max(other.lo.x), self.lo.y.max(other.lo.y)),
            hi: Vec2::new(self.hi.x.min(other.hi.x), self.hi.y.min(other.hi.y)),
        }
    }

    pub fn union(&self, other: &Bounds) -> Bounds {
        Bounds {
            lo: Vec2::new(self.lo.x.min(other.lo.x), self.lo.y.min(other.lo.y)),
            hi: Vec2::new(self.hi.x.max(other.hi.x), self.hi.y.max(other.hi.y)),
        }
    }

    pub fn inflate(&self, margin: f64) -> Bounds {
        Bounds {
            lo: self.lo - Vec2::new(margin, margin),
            hi: self.hi + Vec2::new(margin, margin),
        }
    }

    pub fn diameter(&self) -> f64 {
        (self.hi - self.lo).norm()
    }
}

// Step for finite-difference probes of the distance function.
const FD_STEP: f64 = 1e-5;

fn smooth_max(a: f64, b: f64, k: f64) -> f64 {
    if k <= 0.0 {
        return a.max(b);
    }
    let w = (k - (a - b).abs()).max(0.0) / k;
    a.max(b) + w * w * k * 0.25
}

fn segment_distance(x: &Vec2, a: &Vec2, b: &Vec2) -> f64 {
    let ab = b - a;
    let t = ((x - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
    (x - (a + ab * t)).norm()
}

impl BarrierDomain {
    pub fn new(shape: BarrierShape, mode: Mode) -> Self {
        Self { shape, mode }
    }

    pub fn disc(center: Vec2, radius: f64) -> Self {
        Self::new(BarrierShape::Disc { center, radius }, Mode::Planar)
    }

    pub fn annulus(center: Vec2, inner: f64, outer: f64) -> Self {
        Self::new(BarrierShape::Annulus { center, inner, outer }, Mode::Planar)
    }

    pub fn halfplane(normal: Vec2, offset: f64) -> Self {
        Self::new(BarrierShape::Halfplane { normal: normal.normalize(), offset }, Mode::Planar)
    }

    pub fn slab(normal: Vec2, center: f64, half_width: f64) -> Self {
        Self::new(
            BarrierShape::Slab { normal: normal.normalize(), center, half_width },
            Mode::Planar,
        )
    }

    pub fn ball(radius: f64) -> Self {
        Self::new(BarrierShape::Ball { radius }, Mode::Axisym)
    }

    /// The dumbbell used by the long-time scenarios: unit lobes centred at
    /// `z = +-1.8` joined by a neck of radius 0.35 with a slight waist.
    pub fn standard_dumbbell(mode: Mode) -> Self {
        Self::new(
            BarrierShape::Dumbbell { lobe_radius: 1.0, lobe_offset: 1.8, neck_radius: 0.35, waist: 0.02, blend: 0.15 },
            mode,
        )
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    /// Signed distance to the barrier, positive inside `D`.
    pub fn signed_distance(&self, x: &Vec2) -> f64 {
        match &self.shape {
            BarrierShape::Disc { center, radius } => radius - (x - center).norm(),
            BarrierShape::Annulus { center, inner, outer } => {
                let rho = (x - center).norm();
                (outer - rho).min(rho - inner)
            }
            BarrierShape::Halfplane { normal, offset } => x.dot(normal) - offset,
            BarrierShape::Slab { normal, center, half_width } => half_width - (x.dot(normal) - center).abs(),
            BarrierShape::Ball { radius } => radius - x.norm(),
            BarrierShape::Dumbbell { lobe_radius, lobe_offset, neck_radius, waist, blend } => {
                let top = Vec2::new(0.0, *lobe_offset);
                let bottom = Vec2::new(0.0, -lobe_offset);
                let lobes = (lobe_radius - (x - top).norm()).max(lobe_radius - (x - bottom).norm());
                let z = x.y.clamp(-lobe_offset, *lobe_offset);
                let neck = neck_radius + waist * z * z - segment_distance(x, &bottom, &top);
                smooth_max(lobes, neck, *blend)
            }
        }
    }

    /// Gradient of the signed distance (inward pointing, unit length away from the
    /// medial axis).
    pub fn distance_gradient(&self, x: &Vec2) -> Vec2 {
        match &self.shape {
            BarrierShape::Disc { center, .. } => {
                let r = x - center;
                let n = r.norm();
                if n > 0.0 {
                    -r / n
                } else {
                    Vec2::zeros()
                }
            }
            BarrierShape::Halfplane { normal, .. } => *normal,
            BarrierShape::Slab { normal, center, .. } => {
                let s = x.dot(normal) - center;
                if s > 0.0 {
                    -normal
                } else if s < 0.0 {
                    *normal
                } else {
                    Vec2::zeros()
                }
            }
            BarrierShape::Ball { .. } => {
                let n = x.norm();
                if n > 0.0 {
                    -x / n
                } else {
                    Vec2::zeros()
                }
            }
            _ => self.numeric_gradient(x, FD_STEP),
        }
    }

    fn numeric_gradient(&self, x: &Vec2, step: f64) -> Vec2 {
        let ex = Vec2::new(step, 0.0);
        let ey = Vec2::new(0.0, step);
        Vec2::new(
            (self.signed_distance(&(x + ex)) - self.signed_distance(&(x - ex))) / (2.0 * step),
            (self.signed_distance(&(x + ey)) - self.signed_distance(&(x - ey))) / (2.0 * step),
        )
    }

    /// Outward unit normal `N = -grad d / |grad d|`.
    pub fn outward_normal(&self, x: &Vec2) -> Vec2 {
        let g = self.distance_gradient(x);
        let n = g.norm();
        if n > 0.0 {
            -g / n
        } else {
            Vec2::zeros()
        }
    }

    /// Nearest barrier point `xi(x)` obtained by Newton projection onto `{d = 0}`.
    pub fn project(&self, x: &Vec2) -> Vec2 {
        let mut y = *x;
        for _ in 0..12 {
            let d = self.signed_distance(&y);
            if d.abs() < 1e-14 {
                break;
            }
            let g = self.distance_gradient(&y);
            let g2 = g.norm_squared();
            if g2 < 1e-24 {
                break;
            }
            y -= g * (d / g2);
        }
        y
    }

    /// Reflection `2 xi(x) - x` across the barrier, with the default probe width.
    pub fn reflect(&self, x: &Vec2) -> Result<Vec2> {
        self.reflect_with(x, 1e-4 * self.length_scale())
    }

    /// Reflection across the barrier; points whose distance gradient, probed with
    /// central differences of width `probe`, has norm below `1 - 0.05` are treated
    /// as lying on the medial axis.
    pub fn reflect_with(&self, x: &Vec2, probe: f64) -> Result<Vec2> {
        let grad_norm = self.numeric_gradient(x, probe.max(FD_STEP)).norm();
        if grad_norm < 0.95 {
            return Err(FlowError::MedialAxis { x: [x.x, x.y], grad_norm });
        }
        let xi = self.project(x);
        Ok(xi * 2.0 - x)
    }

    /// Curvature of the barrier at a boundary point.
    pub fn barrier_curvature(&self, y: &Vec2, tol: f64) -> Result<BarrierCurvature> {
        let d = self.signed_distance(y);
        if d.abs() >= tol {
            return Err(FlowError::NotOnBoundary { x: [y.x, y.y], distance: d.abs() });
        }
        Ok(self.curvature_near(y))
    }

    /// Barrier curvature at the projection of `x` (no distance check).
    pub fn curvature_near(&self, x: &Vec2) -> BarrierCurvature {
        let profile = match &self.shape {
            BarrierShape::Disc { radius, .. } => 1.0 / radius,
            BarrierShape::Ball { radius } => 1.0 / radius,
            BarrierShape::Halfplane { .. } | BarrierShape::Slab { .. } => 0.0,
            BarrierShape::Annulus { center, inner, outer } => {
                let rho = (x - center).norm();
                if rho < 0.5 * (inner + outer) {
                    -1.0 / inner
                } else {
                    1.0 / outer
                }
            }
            BarrierShape::Dumbbell { .. } => self.numeric_profile_curvature(&self.project(x)),
        };
        let rotational = match self.mode {
            Mode::Planar => None,
            Mode::Axisym => {
                let y = self.project(x);
                let n = self.outward_normal(&y);
                if y.x.abs() > 1e-6 {
                    Some(n.x / y.x)
                } else {
                    Some(profile)
                }
            }
        };
        BarrierCurvature { profile, rotational }
    }

    fn numeric_profile_curvature(&self, y: &Vec2) -> f64 {
        let s = 1e-4;
        let f = |dx: f64, dy: f64| self.signed_distance(&(y + Vec2::new(dx, dy)));
        let fx = (f(s, 0.0) - f(-s, 0.0)) / (2.0 * s);
        let fy = (f(0.0, s) - f(0.0, -s)) / (2.0 * s);
        let fxx = (f(s, 0.0) - 2.0 * f(0.0, 0.0) + f(-s, 0.0)) / (s * s);
        let fyy = (f(0.0, s) - 2.0 * f(0.0, 0.0) + f(0.0, -s)) / (s * s);
        let fxy = (f(s, s) - f(s, -s) - f(-s, s) + f(-s, -s)) / (4.0 * s * s);
        let g2 = fx * fx + fy * fy;
        -(fxx * fy * fy - 2.0 * fx * fy * fxy + fyy * fx * fx) / g2.powf(1.5)
    }

    /// `C_dD`: the maximal absolute principal curvature of the barrier.
    pub fn curvature_bound(&self) -> f64 {
        match &self.shape {
            BarrierShape::Disc { radius, .. } | BarrierShape::Ball { radius } => 1.0 / radius,
            BarrierShape::Annulus { inner, outer, .. } => (1.0 / inner).max(1.0 / outer),
            BarrierShape::Halfplane { .. } | BarrierShape::Slab { .. } => 0.0,
            BarrierShape::Dumbbell { .. } => {
                // Sample the boundary by projecting points of a ring of rays.
                let b = self.bounds().expect("dumbbell is bounded");
                let mut kmax: f64 = 0.0;
                let n = 720;
                for k in 0..n {
                    let t = (k as f64 + 0.5) / n as f64;
                    // Rays from the neck axis cover the whole boundary curve.
                    let z = b.lo.y + t * (b.hi.y - b.lo.y);
                    let y = self.project(&Vec2::new(0.5 * b.hi.x.max(0.1), z));
                    if self.signed_distance(&y).abs() < 1e-8 {
                        kmax = kmax.max(self.curvature_near(&y).max_abs());
                    }
                }
                kmax
            }
        }
    }

    /// Bounding box of `D`, or `None` for unbounded barriers. In axisymmetric mode
    /// only the meridian half-plane `r >= 0` is covered.
    pub fn bounds(&self) -> Option<Bounds> {
        let b = match &self.shape {
            BarrierShape::Disc { center, radius } => {
                Bounds::new(center - Vec2::new(*radius, *radius), center + Vec2::new(*radius, *radius))
            }
            BarrierShape::Annulus { center, outer, .. } => {
                Bounds::new(center - Vec2::new(*outer, *outer), center + Vec2::new(*outer, *outer))
            }
            BarrierShape::Ball { radius } => Bounds::new(Vec2::new(-radius, -radius), Vec2::new(*radius, *radius)),
            BarrierShape::Dumbbell { lobe_radius, lobe_offset, blend, .. } => {
                let w = lobe_radius + blend;
                Bounds::new(Vec2::new(-w, -lobe_offset - w), Vec2::new(w, lobe_offset + w))
            }
            BarrierShape::Halfplane { .. } | BarrierShape::Slab { .. } => return None,
        };
        Some(match self.mode {
            Mode::Planar => b,
            Mode::Axisym => Bounds::new(Vec2::new(0.0, b.lo.y), b.hi),
        })
    }

    /// Characteristic length used for default tolerances.
    pub fn length_scale(&self) -> f64 {
        match &self.shape {
            BarrierShape::Disc { radius, .. } | BarrierShape::Ball { radius } => *radius,
            BarrierShape::Annulus { outer, .. } => *outer,
            BarrierShape::Slab { half_width, .. } => *half_width,
            BarrierShape::Dumbbell { lobe_radius, .. } => *lobe_radius,
            BarrierShape::Halfplane { .. } => 1.0,
        }
    }

    /// Diameter of `D` (of its bounded part); unbounded barriers report `f64::INFINITY`.
    pub fn diameter(&self) -> f64 {
        match &self.shape {
            BarrierShape::Disc { radius, .. } | BarrierShape::Ball { radius } => 2.0 * radius,
            BarrierShape::Annulus { outer, .. } => 2.0 * outer,
            BarrierShape::Dumbbell { lobe_radius, lobe_offset, .. } => 2.0 * (lobe_radius + lobe_offset),
            _ => f64::INFINITY,
        }
    }

    pub fn contains(&self, x: &Vec2) -> bool {
        self.signed_distance(x) >= 0.0
    }
}

/// Shapes of the initial region `K`. Every shape is implicitly intersected with `D`.
#[derive(Debug, Clone, PartialEq)]
pub enum RegionShape {
    Disc { center: Vec2, radius: f64 },
    /// Disc meeting the barrier orthogonally, with its contact arc centred at `foot`.
    HalfDisc { foot: Vec2, radius: f64 },
    /// `lo <= <x, normal> <= hi`; either side may be infinite.
    Band { normal: Vec2, lo: f64, hi: f64 },
    /// Meridian disc of a solid torus with core circle `(core_radius, height)`.
    TorusProfile { core_radius: f64, tube_radius: f64, height: f64 },
    /// Meridian half-disc of a solid half-torus sitting on a ball barrier, with core
    /// circle of radius `core_radius` on the upper hemisphere.
    HalfTorusProfile { core_radius: f64, tube_radius: f64 },
    /// Tubular neighbourhood `{ dist(x, P) <= thickness }` of the hyperplane
    /// `P = { <x, normal> = offset }` (two-sheeted), or of the half-space
    /// `{ <x, normal> <= offset }` (one-sheeted).
    BarrierOffset { normal: Vec2, offset: f64, thickness: f64, two_sided: bool },
    AnnularShell { center: Vec2, inner: f64, outer: f64 },
    Union(Vec<RegionShape>),
    Difference(Box<RegionShape>, Box<RegionShape>),
}

impl RegionShape {
    /// Signed level function, positive inside the shape (exact distance for the
    /// primitive shapes, min/max combinations for the composite ones).
    pub fn level(&self, dom: &BarrierDomain, x: &Vec2) -> f64 {
        match self {
            RegionShape::Disc { center, radius } => radius - (x - center).norm(),
            RegionShape::HalfDisc { foot, radius } => {
                let c = orthogonal_disc_center(dom, foot, *radius);
                radius - (x - c).norm()
            }
            RegionShape::Band { normal, lo, hi } => {
                let s = x.dot(&normal.normalize());
                (s - lo).min(hi - s)
            }
            RegionShape::TorusProfile { core_radius, tube_radius, height } => {
                tube_radius - (x - Vec2::new(*core_radius, *height)).norm()
            }
            RegionShape::HalfTorusProfile { core_radius, tube_radius } => {
                let foot = half_torus_foot(dom, *core_radius);
                let c = orthogonal_disc_center(dom, &foot, *tube_radius);
                tube_radius - (x - c).norm()
            }
            RegionShape::BarrierOffset { normal, offset, thickness, two_sided } => {
                let s = x.dot(&normal.normalize()) - offset;
                if *two_sided {
                    thickness - s.abs()
                } else {
                    thickness - s
                }
            }
            RegionShape::AnnularShell { center, inner, outer } => {
                let rho = (x - center).norm();
                (outer - rho).min(rho - inner)
            }
            RegionShape::Union(parts) => {
                parts.iter().map(|p| p.level(dom, x)).fold(f64::NEG_INFINITY, f64::max)
            }
            RegionShape::Difference(a, b) => a.level(dom, x).min(-b.level(dom, x)),
        }
    }
}

/// Foot point on a ball (or disc) barrier at distance `core_radius` from the axis.
fn half_torus_foot(dom: &BarrierDomain, core_radius: f64) -> Vec2 {
    let r = match &dom.shape {
        BarrierShape::Ball { radius } | BarrierShape::Disc { radius, .. } => *radius,
        _ => dom.length_scale(),
    };
    let z = (r * r - core_radius * core_radius).max(0.0).sqrt();
    dom.project(&Vec2::new(core_radius, z))
}

/// Centre of the disc of radius `radius` that meets the barrier orthogonally with
/// its contact arc centred at `foot`, using the osculating circle of the barrier.
pub fn orthogonal_disc_center(dom: &BarrierDomain, foot: &Vec2, radius: f64) -> Vec2 {
    let k = dom.curvature_near(foot).profile;
    if k.abs() < 1e-12 {
        return *foot;
    }
    let n = dom.outward_normal(foot);
    let osc = foot - n / k;
    let dir = (foot - osc).normalize();
    osc + dir * (1.0 / (k * k) + radius * radius).sqrt()
}

/// The initial region `K`, optionally with its junctions bent by `tau`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialRegion {
    pub shape: RegionShape,
    pub mean_convex: bool,
    pub bend: Option<f64>,
}

/// Bending profile `chi(s) = (1 - s)^3` on `[0, 1)`.
fn bend_profile(s: f64) -> f64 {
    if s >= 1.0 {
        0.0
    } else {
        let t = 1.0 - s.max(0.0);
        t * t * t
    }
}

impl InitialRegion {
    pub fn new(shape: RegionShape, mean_convex: bool) -> Self {
        Self { shape, mean_convex, bend: None }
    }

    /// Level function of `K` (or of `K^tau` when bent), positive inside. Membership in
    /// `K` additionally requires `d(x) >= 0`.
    pub fn level(&self, dom: &BarrierDomain, x: &Vec2) -> f64 {
        let base = self.shape.level(dom, x);
        match self.bend {
            None => base,
            Some(tau) => {
                let d = dom.signed_distance(x);
                if d >= 0.0 && d < tau {
                    base - tau * d * bend_profile(d / tau)
                } else {
                    base
                }
            }
        }
    }

    pub fn contains(&self, dom: &BarrierDomain, x: &Vec2) -> bool {
        dom.signed_distance(x) >= 0.0 && self.level(dom, x) >= 0.0
    }

    /// Outward unit normal of `K` from the level function.
    pub fn outward_normal(&self, dom: &BarrierDomain, x: &Vec2) -> Vec2 {
        let s = 1e-6;
        let gx = (self.level(dom, &(x + Vec2::new(s, 0.0))) - self.level(dom, &(x - Vec2::new(s, 0.0)))) / (2.0 * s);
        let gy = (self.level(dom, &(x + Vec2::new(0.0, s))) - self.level(dom, &(x - Vec2::new(0.0, s)))) / (2.0 * s);
        let g = Vec2::new(gx, gy);
        let n = g.norm();
        if n > 0.0 {
            -g / n
        } else {
            Vec2::zeros()
        }
    }

    /// Points where the Dirichlet boundary `{level = 0}` meets the barrier, found by
    /// bisection along the barrier curve sampled at spacing `step` inside `window`.
    pub fn junctions(&self, dom: &BarrierDomain, window: &Bounds, step: f64) -> Vec<Vec2> {
        // Walk the boundary curve: sample a grid, project cells near the barrier and
        // order them by arclength via angle around the window centre.
        let mut pts: Vec<Vec2> = Vec::new();
        let nx = ((window.hi.x - window.lo.x) / step).ceil() as usize + 1;
        let ny = ((window.hi.y - window.lo.y) / step).ceil() as usize + 1;
        let mut boundary = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                let x = window.lo + Vec2::new(i as f64 * step, j as f64 * step);
                if dom.signed_distance(&x).abs() < 0.75 * step {
                    let y = dom.project(&x);
                    if window.contains(&y) {
                        boundary.push(y);
                    }
                }
            }
        }
        // Pairs of nearby boundary samples with opposite level signs bracket a junction.
        for a in 0..boundary.len() {
            for b in (a + 1)..boundary.len() {
                let (p, q) = (boundary[a], boundary[b]);
                if (p - q).norm() > 1.5 * step {
                    continue;
                }
                let (fp, fq) = (self.level(dom, &p), self.level(dom, &q));
                if (fp >= 0.0) == (fq >= 0.0) {
                    continue;
                }
                let (mut lo, mut hi, mut flo) = (p, q, fp);
                for _ in 0..60 {
                    let mid = dom.project(&((lo + hi) * 0.5));
                    let fm = self.level(dom, &mid);
                    if (fm >= 0.0) == (flo >= 0.0) {
                        lo = mid;
                        flo = fm;
                    } else {
                        hi = mid;
                    }
                }
                let j = dom.project(&((lo + hi) * 0.5));
                if pts.iter().all(|p| (p - j).norm() > 2.0 * step) {
                    pts.push(j);
                }
            }
        }
        pts
    }

    /// Largest contact-angle error `|asin <nu, N>|` over the junctions in `window`.
    pub fn contact_angle_error(&self, dom: &BarrierDomain, window: &Bounds, step: f64) -> Option<f64> {
        let js = self.junctions(dom, window, step);
        js.iter()
            .map(|j| self.outward_normal(dom, j).dot(&dom.outward_normal(j)).clamp(-1.0, 1.0).asin().abs())
            .reduce(f64::max)
    }

    /// Whether `K` touches the barrier somewhere inside `window`.
    fn touches_barrier(&self, dom: &BarrierDomain, window: &Bounds, step: f64) -> bool {
        let nx = ((window.hi.x - window.lo.x) / step).ceil() as usize + 1;
        let ny = ((window.hi.y - window.lo.y) / step).ceil() as usize + 1;
        (0..ny).any(|j| {
            (0..nx).any(|i| {
                let x = window.lo + Vec2::new(i as f64 * step, j as f64 * step);
                let d = dom.signed_distance(&x);
                d >= 0.0 && d < step && self.shape.level(dom, &x) > 0.0
            })
        })
    }

    /// Bend the region near its barrier junctions so that the Dirichlet boundary meets
    /// the barrier at an acute interior angle, `<nu, N> <= -tau/2`.
    ///
    /// The level function is lowered by `tau * d * (1 - d/tau)^3` in the collar
    /// `d < tau`, so `K^tau` is contained in `K`, agrees with it outside the collar
    /// and shrinks monotonically in `tau`. Regions without barrier contact are
    /// returned unchanged.
    pub fn bend_corners(&self, dom: &BarrierDomain, tau: f64, window: &Bounds) -> Result<InitialRegion> {
        assert!(tau > 0.0 && tau <= 1.0, "bending parameter must lie in (0, 1]");
        let step = (tau / 16.0).min(window.diameter() / 64.0);
        if !self.touches_barrier(dom, window, step) {
            return Ok(self.clone());
        }
        // K must be thicker than the collar somewhere along the barrier contact.
        let nx = ((window.hi.x - window.lo.x) / step).ceil() as usize + 1;
        let ny = ((window.hi.y - window.lo.y) / step).ceil() as usize + 1;
        let mut thickness: f64 = 0.0;
        for j in 0..ny {
            for i in 0..nx {
                let x = window.lo + Vec2::new(i as f64 * step, j as f64 * step);
                let d = dom.signed_distance(&x);
                if d >= 0.0 && d < tau {
                    thickness = thickness.max(self.shape.level(dom, &x));
                }
            }
        }
        if thickness < tau {
            return Err(FlowError::TooThin { thickness, collar: tau });
        }
        let mut bent = self.clone();
        bent.bend = Some(tau);
        Ok(bent)
    }
}

/// Smooth extensions of the barrier normal and curvature into a collar of `D`.
///
/// Values are transported along the normal lines of the barrier and multiplied by a
/// `C^2` cutoff that equals one on the barrier and vanishes for `d >= r_ext`.
#[derive(Debug, Clone)]
pub struct AmbientExtension {
    pub domain: BarrierDomain,
    pub r_ext: f64,
}

/// `C^2` cutoff: 1 at `s <= 0`, 0 at `s >= 1` (reversed quintic smoothstep).
pub fn collar_cutoff(s: f64) -> f64 {
    if s <= 0.0 {
        1.0
    } else if s >= 1.0 {
        0.0
    } else {
        1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
    }
}

impl AmbientExtension {
    pub fn new(domain: BarrierDomain, r_ext: f64) -> Self {
        Self { domain, r_ext }
    }

    pub fn cutoff(&self, x: &Vec2) -> f64 {
        collar_cutoff(self.domain.signed_distance(x).max(0.0) / self.r_ext)
    }

    /// Extended outward normal.
    pub fn normal(&self, x: &Vec2) -> Vec2 {
        let c = self.cutoff(x);
        if c == 0.0 {
            return Vec2::zeros();
        }
        let xi = self.domain.project(x);
        self.domain.outward_normal(&xi) * c
    }

    /// Extended unit tangent of the barrier (the normal rotated by +90 degrees), not
    /// cut off.
    pub fn tangent(&self, x: &Vec2) -> Vec2 {
        let n = self.domain.outward_normal(&self.domain.project(x));
        Vec2::new(-n.y, n.x)
    }

    /// Extended profile curvature.
    pub fn curvature(&self, x: &Vec2) -> f64 {
        let c = self.cutoff(x);
        if c == 0.0 {
            return 0.0;
        }
        self.domain.curvature_near(x).profile * c
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn disc_distance_examples() {
        let dom = BarrierDomain::disc(Vec2::zeros(), 2.0);
        assert_abs_diff_eq!(dom.signed_distance(&Vec2::new(2.0, 0.0)), 0.0);
        assert_abs_diff_eq!(dom.signed_distance(&Vec2::new(0.0, 0.0)), 2.0);
        let y = Vec2::new(2.0_f64.sqrt(), 2.0_f64.sqrt());
        assert_abs_diff_eq!(dom.signed_distance(&y), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn halfplane_distance_is_translation_invariant() {
        let dom = BarrierDomain::halfplane(Vec2::new(1.0, 0.0), 0.0);
        for y in [-3.0, 0.0, 0.7, 12.0] {
            assert_abs_diff_eq!(dom.signed_distance(&Vec2::new(0.3, y)), 0.3, epsilon = 1e-15);
        }
    }

    #[test]
    fn reflect_examples() {
        let hp = BarrierDomain::halfplane(Vec2::new(1.0, 0.0), 0.0);
        let r = hp.reflect(&Vec2::new(0.3, 0.0)).unwrap();
        assert_abs_diff_eq!(r.x, -0.3, epsilon = 1e-14);
        assert_abs_diff_eq!(r.y, 0.0, epsilon = 1e-14);

        let disc = BarrierDomain::disc(Vec2::zeros(), 1.0);
        let r = disc.reflect(&Vec2::new(0.5, 0.0)).unwrap();
        assert_abs_diff_eq!(r.x, 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(r.y, 0.0, epsilon = 1e-12);

        let on = Vec2::new(0.6, 0.8);
        let r = disc.reflect(&on).unwrap();
        assert_abs_diff_eq!((r - on).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn reflect_rejects_medial_axis() {
        let disc = BarrierDomain::disc(Vec2::zeros(), 1.0);
        assert!(matches!(
            disc.reflect_with(&Vec2::new(1e-3, 0.0), 0.01),
            Err(FlowError::MedialAxis { .. })
        ));
    }

    #[test]
    fn barrier_curvature_examples() {
        let disc = BarrierDomain::disc(Vec2::zeros(), 2.0);
        let k = disc.barrier_curvature(&Vec2::new(0.0, 2.0), 1e-9).unwrap();
        assert_abs_diff_eq!(k.profile, 0.5, epsilon = 1e-12);

        let hp = BarrierDomain::halfplane(Vec2::new(0.0, 1.0), 0.0);
        assert_abs_diff_eq!(hp.barrier_curvature(&Vec2::new(3.0, 0.0), 1e-9).unwrap().profile, 0.0);

        let ann = BarrierDomain::annulus(Vec2::zeros(), 1.0, 4.0);
        let k = ann.barrier_curvature(&Vec2::new(1.0, 0.0), 1e-9).unwrap();
        assert_abs_diff_eq!(k.profile, -1.0, epsilon = 1e-12);
        let k = ann.barrier_curvature(&Vec2::new(0.0, 4.0), 1e-9).unwrap();
        assert_abs_diff_eq!(k.profile, 0.25, epsilon = 1e-12);

        assert!(matches!(
            disc.barrier_curvature(&Vec2::new(0.0, 1.0), 1e-6),
            Err(FlowError::NotOnBoundary { .. })
        ));
    }

    #[test]
    fn ball_curvature_has_equal_principal_curvatures() {
        let ball = BarrierDomain::ball(1.0);
        let y = Vec2::new(0.6, 0.8);
        let k = ball.barrier_curvature(&y, 1e-9).unwrap();
        assert_abs_diff_eq!(k.profile, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(k.rotational.unwrap(), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(ball.curvature_bound(), 1.0);
    }

    #[test]
    fn numeric_curvature_matches_analytic_on_dumbbell_lobe() {
        let dom = BarrierDomain::standard_dumbbell(Mode::Planar);
        // Top of the upper lobe is far from the blend.
        let y = Vec2::new(0.0, 2.8);
        let k = dom.curvature_near(&y).profile;
        assert_abs_diff_eq!(k, 1.0, epsilon = 1e-3);
        // The waist bends the neck wall by r'' = 2 * 0.02.
        let k = dom.curvature_near(&Vec2::new(0.35, 0.0)).profile;
        assert_abs_diff_eq!(k.abs(), 0.04, epsilon = 1e-3);
    }

    #[test]
    fn eikonal_holds_away_from_medial_axis() {
        let h = 1.0 / 64.0;
        for dom in [
            BarrierDomain::disc(Vec2::new(0.1, -0.2), 2.0),
            BarrierDomain::annulus(Vec2::zeros(), 1.0, 4.0),
            BarrierDomain::slab(Vec2::new(0.0, 1.0), 0.0, 0.5),
        ] {
            let b = dom.bounds().unwrap_or(Bounds::new(Vec2::new(-1.0, -1.0), Vec2::new(1.0, 1.0)));
            let mut count = 0;
            let mut y = b.lo.y;
            while y <= b.hi.y {
                let mut x = b.lo.x;
                while x <= b.hi.x {
                    let p = Vec2::new(x, y);
                    if let Ok(_) = dom.reflect_with(&p, 2.0 * h) {
                        let ex = Vec2::new(h, 0.0);
                        let ey = Vec2::new(0.0, h);
                        let gx = (dom.signed_distance(&(p + ex)) - dom.signed_distance(&(p - ex))) / (2.0 * h);
                        let gy = (dom.signed_distance(&(p + ey)) - dom.signed_distance(&(p - ey))) / (2.0 * h);
                        let g = (gx * gx + gy * gy).sqrt();
                        // Central differences straddling the medial axis are excluded
                        // by the probe; the rest obey the eikonal equation.
                        if dom.reflect_with(&(p + ex), 2.0 * h).is_ok()
                            && dom.reflect_with(&(p - ex), 2.0 * h).is_ok()
                            && dom.reflect_with(&(p + ey), 2.0 * h).is_ok()
                            && dom.reflect_with(&(p - ey), 2.0 * h).is_ok()
                        {
                            assert!((g - 1.0).abs() <= 10.0 * h, "{dom:?} at {p:?}: {g}");
                            count += 1;
                        }
                    }
                    x += 3.0 * h;
                }
                y += 3.0 * h;
            }
            assert!(count > 100);
        }
    }

    #[test]
    fn outward_normal_derivative_of_distance_is_minus_one() {
        let dom = BarrierDomain::disc(Vec2::zeros(), 2.0);
        let y = Vec2::new(2.0, 0.0);
        let n = dom.outward_normal(&y);
        let s = 1e-6;
        let dn = (dom.signed_distance(&(y + n * s)) - dom.signed_distance(&(y - n * s))) / (2.0 * s);
        assert_abs_diff_eq!(dn, -1.0, epsilon = 1e-8);
    }

    #[test]
    fn half_disc_meets_curved_barrier_orthogonally() {
        let dom = BarrierDomain::disc(Vec2::zeros(), 2.0);
        let k = InitialRegion::new(RegionShape::HalfDisc { foot: Vec2::new(0.0, 2.0), radius: 0.4 }, true);
        let window = Bounds::new(Vec2::new(-1.0, 1.0), Vec2::new(1.0, 2.1));
        let err = k.contact_angle_error(&dom, &window, 0.01).unwrap();
        assert!(err < 1e-3, "contact angle error {err}");
        assert_eq!(k.junctions(&dom, &window, 0.01).len(), 2);
    }

    #[test]
    fn half_torus_profile_is_orthogonal_to_ball() {
        let dom = BarrierDomain::ball(1.0);
        let k = InitialRegion::new(RegionShape::HalfTorusProfile { core_radius: 0.6, tube_radius: 0.15 }, true);
        let window = Bounds::new(Vec2::new(0.0, 0.0), Vec2::new(1.1, 1.1));
        let err = k.contact_angle_error(&dom, &window, 0.005).unwrap();
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn bend_corners_angle_condition_on_flat_barrier() {
        let dom = BarrierDomain::halfplane(Vec2::new(1.0, 0.0), 0.0);
        let k = InitialRegion::new(RegionShape::HalfDisc { foot: Vec2::zeros(), radius: 0.5 }, true);
        let window = Bounds::new(Vec2::new(-0.1, -0.7), Vec2::new(0.7, 0.7));
        let tau = 0.2;
        let bent = k.bend_corners(&dom, tau, &window).unwrap();
        let js = bent.junctions(&dom, &window, 0.005);
        assert_eq!(js.len(), 2);
        for j in js {
            // Normal measured from a discrete level-function stencil.
            let h = 1e-3;
            let f = |p: Vec2| bent.level(&dom, &p);
            let p = j + Vec2::new(h, 0.0);
            let g = Vec2::new(
                (f(p + Vec2::new(h, 0.0)) - f(p - Vec2::new(h, 0.0))) / (2.0 * h),
                (f(p + Vec2::new(0.0, h)) - f(p - Vec2::new(0.0, h))) / (2.0 * h),
            );
            let nu = -g.normalize();
            let n = dom.outward_normal(&j);
            assert!(nu.dot(&n) <= -tau / 2.0, "<nu, N> = {}", nu.dot(&n));
        }
    }

    #[test]
    fn bend_corners_without_contact_is_identity() {
        let dom = BarrierDomain::disc(Vec2::zeros(), 2.0);
        let k = InitialRegion::new(RegionShape::Disc { center: Vec2::zeros(), radius: 0.5 }, true);
        let window = dom.bounds().unwrap();
        assert_eq!(k.bend_corners(&dom, 0.2, &window).unwrap(), k);
    }

    #[test]
    fn bend_corners_rejects_thin_regions() {
        let dom = BarrierDomain::halfplane(Vec2::new(1.0, 0.0), 0.0);
        let k = InitialRegion::new(RegionShape::Band { normal: Vec2::new(0.0, 1.0), lo: -0.02, hi: 0.02 }, true);
        let window = Bounds::new(Vec2::new(-0.1, -0.5), Vec2::new(1.0, 0.5));
        assert!(matches!(k.bend_corners(&dom, 0.2, &window), Err(FlowError::TooThin { .. })));
    }

    #[test]
    fn bend_corners_converges_to_original_and_is_monotone() {
        let dom = BarrierDomain::halfplane(Vec2::new(1.0, 0.0), 0.0);
        let k = InitialRegion::new(RegionShape::HalfDisc { foot: Vec2::zeros(), radius: 0.5 }, true);
        let window = Bounds::new(Vec2::new(-0.1, -0.7), Vec2::new(0.7, 0.7));
        let mut prev_gap = f64::INFINITY;
        for tau in [0.2, 0.1, 0.05, 0.025] {
            let bent = k.bend_corners(&dom, tau, &window).unwrap();
            let coarser = k.bend_corners(&dom, 2.0 * tau, &window).unwrap();
            // Sup of the level deficit bounds the Hausdorff distance.
            let mut gap: f64 = 0.0;
            for i in 0..200 {
                for j in 0..200 {
                    let x = Vec2::new(i as f64 * 0.0035, -0.7 + j as f64 * 0.007);
                    gap = gap.max(k.level(&dom, &x) - bent.level(&dom, &x));
                    if bent.level(&dom, &x) < 0.0 {
                        assert!(coarser.level(&dom, &x) < 0.0);
                    }
                }
            }
            assert!(gap < prev_gap);
            prev_gap = gap;
        }
        assert!(prev_gap < 1e-3);
    }

    #[test]
    fn extension_agrees_with_barrier_curvature_on_boundary() {
        let dom = BarrierDomain::disc(Vec2::zeros(), 2.0);
        let ext = AmbientExtension::new(dom.clone(), 0.5);
        for k in 0..16 {
            let th = k as f64 * 0.4;
            let y = Vec2::new(2.0 * th.cos(), 2.0 * th.sin());
            assert_abs_diff_eq!(ext.curvature(&y), dom.barrier_curvature(&y, 1e-9).unwrap().profile, epsilon = 1e-12);
            assert_abs_diff_eq!((ext.normal(&y) - dom.outward_normal(&y)).norm(), 0.0, epsilon = 1e-12);
        }
        assert_eq!(ext.curvature(&Vec2::new(0.5, 0.0)), 0.0);
        assert_eq!(ext.normal(&Vec2::new(0.5, 0.0)), Vec2::zeros());
    }

    #[test]
    fn collar_cutoff_is_c2() {
        let s = 1e-4;
        for x in [0.0, 1.0] {
            let d1 = (collar_cutoff(x + s) - collar_cutoff(x - s)) / (2.0 * s);
            let d2 = (collar_cutoff(x + s) - 2.0 * collar_cutoff(x) + collar_cutoff(x - s)) / (s * s);
            assert!(d1.abs() < 1e-6 && d2.abs() < 1e-2, "{x}: {d1} {d2}");
        }
    }
}

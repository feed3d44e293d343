//! Parabolic rescaling around space-time points, Gaussian densities, relative
//! thickness, the expanding-hole experiment and tangent-flow classification.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{FlowError, Result};
use crate::geometry::{BarrierDomain, InitialRegion, Mode, RegionShape, Vec2};
use crate::interface::Interface;
use crate::levelset::{run, FlowConfig, FlowTrajectory};

/// Half-width of the rescaled window.
pub const WINDOW: f64 = 2.5;
/// Fit residual above which a frame is reported as unclassified.
pub const CLASSIFY_THRESHOLD: f64 = 0.05;

/// Largest rescaled slice time used for fitting; slices closer to the singular time
/// are under-resolved.
const S_MAX: f64 = -0.1;

/// Density of the circle shrinker, `sqrt(2 pi / e)`.
pub fn circle_density() -> f64 {
    (2.0 * std::f64::consts::PI / std::f64::consts::E).sqrt()
}

/// Density of the round 2-sphere shrinker, `4 / e`.
pub fn sphere_density() -> f64 {
    4.0 / std::f64::consts::E
}

/// `e^{-x} I0(x)` for `x >= 0`.
fn bessel_i0e(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 3.75 {
        let y = (x / 3.75).powi(2);
        let i0 = 1.0
            + y * (3.5156229
                + y * (3.0899424 + y * (1.2067492 + y * (0.2659732 + y * (0.360768e-1 + y * 0.45813e-2)))));
        i0 * (-ax).exp()
    } else {
        let y = 3.75 / ax;
        (0.39894228
            + y * (0.1328592e-1
                + y * (0.225319e-2
                    + y * (-0.157565e-2
                        + y * (0.916281e-2
                            + y * (-0.2057706e-1 + y * (0.2635537e-1 + y * (-0.1647633e-1 + y * 0.392377e-2))))))))
            / ax.sqrt()
    }
}

/// Quadrature nodes (position, length weight) of an interface: two Gauss points per
/// segment.
fn quadrature(iface: &Interface) -> Vec<(Vec2, f64)> {
    let g = 0.5 / 3f64.sqrt();
    let mut out = Vec::with_capacity(2 * iface.segments.len());
    for s in &iface.segments {
        let l = 0.5 * s.length();
        let d = s.b - s.a;
        out.push((s.a + d * (0.5 - g), l));
        out.push((s.a + d * (0.5 + g), l));
    }
    out
}

/// Gaussian kernel mass of one quadrature node (a point in the plane, or a ring in
/// axisymmetric mode) centred at `x0` with scale `r`.
fn kernel(mode: Mode, q: &Vec2, w: f64, x0: &Vec2, r: f64) -> f64 {
    let four_r2 = 4.0 * r * r;
    let dz = q.y - x0.y;
    match mode {
        Mode::Planar => {
            let d2 = (q - x0).norm_squared();
            if d2 > 36.0 * r * r {
                return 0.0;
            }
            w * (-d2 / four_r2).exp() / (std::f64::consts::PI * four_r2).sqrt()
        }
        Mode::Axisym => {
            let (rho, rho0) = (q.x.abs(), x0.x.abs());
            let d2 = (rho - rho0).powi(2) + dz * dz;
            if d2 > 36.0 * r * r {
                return 0.0;
            }
            // Integral over the rotation angle of exp(-|X - X0|^2 / 4r^2).
            let ring = 2.0 * std::f64::consts::PI * rho * (-d2 / four_r2).exp() * bessel_i0e(rho * rho0 / (2.0 * r * r));
            w * ring / (std::f64::consts::PI * four_r2)
        }
    }
}

/// Gaussian density of an interface at `x0`, scale `r`, with the reflected interface
/// blended in with weight `clamp(1 - d(x0)/r, 0, 1)`.
pub fn interface_density(dom: &BarrierDomain, iface: &Interface, mode: Mode, x0: &Vec2, r: f64) -> f64 {
    let nodes = quadrature(iface);
    let mut theta: f64 = nodes.iter().map(|(q, w)| kernel(mode, q, *w, x0, r)).sum();
    let beta = (1.0 - dom.signed_distance(x0) / r).clamp(0.0, 1.0);
    if beta > 0.0 {
        let reach = 0.5 * dom.length_scale();
        let mut refl = 0.0;
        for (q, w) in &nodes {
            if (q - x0).norm() > 6.0 * r || dom.signed_distance(q) > reach {
                continue;
            }
            if let Ok(qr) = dom.reflect(q) {
                refl += kernel(mode, &qr, *w, x0, r);
            }
        }
        theta += beta * refl;
    }
    theta
}

/// Gaussian density `Theta(x*, t*, r)`, evaluated on the interface recorded at
/// `t* - r^2`; centres within `r` of the barrier use the reflected version.
pub fn gaussian_density(traj: &FlowTrajectory, x_star: Vec2, t_star: f64, r: f64) -> Result<f64> {
    let t = t_star - r * r;
    if !(r > 0.0) || t < -1e-12 || t > traj.t_end() + 1e-12 {
        return Err(FlowError::Window(format!("density time {t} outside [0, {}]", traj.t_end())));
    }
    let rec = traj.interface_near(t).ok_or_else(|| FlowError::Window("no recorded interfaces".into()))?;
    Ok(interface_density(&traj.barrier.dom, &rec.interface, traj.mode(), &x_star, r))
}

#[derive(Debug, Clone, Serialize)]
pub struct DensityLadder {
    pub center: [f64; 2],
    pub t_star: f64,
    pub boundary: bool,
    pub radii: Vec<f64>,
    pub theta: Vec<f64>,
    /// Drift allowance `tol(r)` used between consecutive rungs.
    pub tolerance: Vec<f64>,
    pub pass: bool,
}

/// Geometric ladder `r_k = r_max 2^{-k/2}` down to `3h`, with `r_max` limited by the
/// recorded time window and the barrier size.
pub fn density_radii(traj: &FlowTrajectory, t_star: f64) -> Vec<f64> {
    let h = traj.h();
    let r_max = (0.9 * t_star.max(0.0).sqrt()).min(0.25 * traj.barrier.dom.length_scale().min(traj.grid().bounds().diameter()));
    let mut out = Vec::new();
    let mut r = r_max;
    while r >= 3.0 * h && out.len() < 10 {
        out.push(r);
        r /= 2f64.sqrt();
    }
    out
}

/// Checks that `Theta(x*, t*, r)` is nonincreasing in `r` on a geometric ladder, up to
/// 3% (interior) or `3% + C r` with `C = max(1, 2 max|k|)` (boundary).
pub fn density_monotonicity_check(traj: &FlowTrajectory, x_star: Vec2, t_star: f64) -> Result<DensityLadder> {
    let radii = density_radii(traj, t_star);
    if radii.len() < 2 {
        return Err(FlowError::Window("no resolvable radii below the singular time".into()));
    }
    let dom = &traj.barrier.dom;
    let boundary = dom.signed_distance(&x_star) < radii[0];
    let c_drift = (2.0 * dom.curvature_bound()).max(1.0);
    let theta = radii.iter().map(|&r| gaussian_density(traj, x_star, t_star, r)).collect::<Result<Vec<_>>>()?;
    let tolerance: Vec<f64> =
        radii.iter().zip(&theta).map(|(r, th)| 0.03 * th + if boundary { c_drift * r } else { 0.0 }).collect();
    // radii are decreasing: theta[k] (larger r) must not exceed theta[k+1] + tol.
    let pass = (0..radii.len() - 1).all(|k| theta[k] <= theta[k + 1] + tolerance[k]);
    Ok(DensityLadder { center: [x_star.x, x_star.y], t_star, boundary, radii, theta, tolerance, pass })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thickness {
    pub value: f64,
    /// `S` has no points in the ball (value is 0 by convention).
    pub empty: bool,
}

/// Relative thickness `inf_{|v|=1} sup_{y in S, |y-x|<=r} |<v, y - x>| / r`.
pub fn thickness(points: &[Vec2], x: &Vec2, r: f64) -> Thickness {
    let local: Vec<Vec2> = points.iter().map(|p| (p - x) / r).filter(|p| p.norm() <= 1.0).collect();
    if local.is_empty() {
        return Thickness { value: 0.0, empty: true };
    }
    let width = |a: f64| {
        let v = Vec2::new(a.cos(), a.sin());
        local.iter().map(|p| v.dot(p).abs()).fold(0.0, f64::max)
    };
    let n_dir = 360;
    let step = std::f64::consts::PI / n_dir as f64;
    let (mut best_a, mut best) = (0.0, f64::INFINITY);
    for k in 0..n_dir {
        let a = k as f64 * step;
        let w = width(a);
        if w < best {
            best = w;
            best_a = a;
        }
    }
    // Golden-section refinement in the bracketing interval.
    let (mut lo, mut hi) = (best_a - step, best_a + step);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let m1 = hi - phi * (hi - lo);
        let m2 = lo + phi * (hi - lo);
        if width(m1) < width(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    Thickness { value: best.min(width(0.5 * (lo + hi))), empty: false }
}

#[derive(Debug, Clone, Serialize)]
pub struct HoleConfig {
    /// Slab half-width `w`.
    pub half_width: f64,
    /// Initial hole radius.
    pub rho0: f64,
    /// Requested grid spacing; refined to at least 4 cells per half-width.
    pub h: f64,
    /// Radius of the disc barrier containing the slab.
    pub barrier_radius: f64,
    /// Number of rungs of the ladder `r_k = rho0 2^{k/4}`.
    pub rungs: usize,
}

impl HoleConfig {
    pub fn new(half_width: f64, rho0: f64) -> Self {
        Self { half_width, rho0, h: 1.0 / 64.0, barrier_radius: 1.5, rungs: 3 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HoleRung {
    pub r: f64,
    pub dist: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HoleReport {
    pub half_width: f64,
    pub rho0: f64,
    pub h: f64,
    pub ladder: Vec<HoleRung>,
    /// `min_k dist(K_{r_k^2}, x) / r_k` over the rungs not saturated by the barrier.
    pub achieved_a: f64,
}

/// Distance from `x` to `K` given the interface of `K` and whether `x` lies in `K`.
fn distance_to_region(iface: &Interface, inside: bool) -> impl Fn(&Vec2) -> f64 + '_ {
    move |x| {
        if inside {
            return 0.0;
        }
        iface
            .segments
            .iter()
            .map(|s| {
                let d = s.b - s.a;
                let l2 = d.norm_squared();
                let u = if l2 > 0.0 { ((x - s.a).dot(&d) / l2).clamp(0.0, 1.0) } else { 0.0 };
                (s.a + d * u - x).norm()
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Flows a slab of half-width `w` with a hole `B(0, rho0)` removed and records how
/// fast the hole opens: `dist(K_{r^2}, 0) / r` on a geometric ladder of `r`.
pub fn expanding_hole_experiment(cfg: &HoleConfig) -> Result<HoleReport> {
    let h = cfg.h.min(cfg.half_width / 4.0);
    let dom = BarrierDomain::disc(Vec2::zeros(), cfg.barrier_radius);
    let slab = RegionShape::Band { normal: Vec2::new(0.0, 1.0), lo: -cfg.half_width, hi: cfg.half_width };
    let hole = RegionShape::Disc { center: Vec2::zeros(), radius: cfg.rho0 };
    let k = InitialRegion::new(RegionShape::Difference(Box::new(slab), Box::new(hole)), false);
    let radii: Vec<f64> = (0..cfg.rungs).map(|i| cfg.rho0 * 2f64.powf(i as f64 / 4.0)).collect();
    let times: Vec<f64> = radii.iter().map(|r| r * r).collect();
    let horizon = *times.last().unwrap_or(&0.0);
    let mut fc = FlowConfig::new(h, horizon).with_outputs(times.clone());
    fc.stop_at_extinction = false;
    let traj = run(&k, &dom, &fc)?;
    let x0 = Vec2::zeros();
    let mut ladder = Vec::new();
    for (r, t) in radii.iter().zip(&times) {
        let st = traj
            .snapshots
            .iter()
            .min_by(|a, b| (a.t - t).abs().partial_cmp(&(b.t - t).abs()).unwrap())
            .ok_or_else(|| FlowError::Window("no snapshots recorded".into()))?;
        let filled = traj.filled(st);
        let iface = traj.barrier.interface(&filled);
        let inside = filled.sample(&x0) >= 0.0;
        let dist = distance_to_region(&iface, inside)(&x0);
        ladder.push(HoleRung { r: *r, dist, ratio: dist / r });
    }
    // Once the retracting strip ends reach the barrier the distance saturates.
    let cap = 0.8 * cfg.barrier_radius;
    let achieved_a = ladder.iter().filter(|g| g.dist < cap).map(|g| g.ratio).fold(f64::INFINITY, f64::min);
    Ok(HoleReport { half_width: cfg.half_width, rho0: cfg.rho0, h, ladder, achieved_a })
}

/// Barrier status of a rescaled frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BarrierStatus {
    Interior,
    /// Limiting half-space `{ <y - foot, normal> >= 0 }` in rescaled coordinates.
    Boundary { foot: [f64; 2], normal: [f64; 2] },
}

#[derive(Debug, Clone, Serialize)]
pub struct RescaledSlice {
    pub s: f64,
    pub t: f64,
    pub points: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RescaledFrame {
    pub center: [f64; 2],
    pub t_star: f64,
    pub lambda: f64,
    pub mode: Mode,
    pub status: BarrierStatus,
    /// Points were mirrored across the rotation axis.
    pub mirrored: bool,
    pub slices: Vec<RescaledSlice>,
    #[serde(skip)]
    barrier: Option<BarrierDomain>,
}

impl RescaledFrame {
    /// Rescaled signed distance to the barrier, `lambda d(x* + y / lambda)`.
    fn barrier_distance(&self, y: &Vec2) -> f64 {
        match &self.barrier {
            Some(dom) => self.lambda * dom.signed_distance(&(self.center_vec() + y / self.lambda)),
            None => f64::INFINITY,
        }
    }

    fn center_vec(&self) -> Vec2 {
        Vec2::new(self.center[0], self.center[1])
    }

    /// Rescaled point on the barrier near `y`, moved inward by `offset`.
    fn barrier_point(&self, y: &Vec2, offset: f64) -> Option<Vec2> {
        let dom = self.barrier.as_ref()?;
        let x = dom.project(&(self.center_vec() + y / self.lambda));
        let xin = x - dom.outward_normal(&x) * (offset / self.lambda);
        Some((xin - self.center_vec()) * self.lambda)
    }
}

/// Parabolic rescaling `y = lambda (x - x*)`, `s = lambda^2 (t - t*)` of the recorded
/// interfaces with `s` in `[-1, 0)`, restricted to the window `|y|_inf <= WINDOW`.
pub fn rescale(traj: &FlowTrajectory, x_star: Vec2, t_star: f64, lambda: f64) -> Result<RescaledFrame> {
    let h = traj.h();
    if lambda * h > 0.25 {
        return Err(FlowError::Resolution(format!("lambda h = {} exceeds 1/4", lambda * h)));
    }
    if t_star > traj.t_end() + traj.config.dt() * 2.0 || t_star < 0.0 {
        return Err(FlowError::Window(format!("t* = {t_star} outside the recorded range")));
    }
    let dom = &traj.barrier.dom;
    let t0 = t_star - 1.0 / (lambda * lambda);
    let mode = traj.mode();
    let mirrored = mode == Mode::Axisym && lambda * x_star.x < WINDOW;
    let axis = -lambda * x_star.x;
    let records: Vec<_> = traj.interfaces_in(t0, t_star).filter(|r| r.t < t_star).collect();
    // Up to 16 slices evenly spread in s.
    let mut picked: Vec<usize> = Vec::new();
    for k in 0..16 {
        let s_target = -1.0 + k as f64 / 16.0;
        let t_target = t_star + s_target / (lambda * lambda);
        if let Some((i, _)) = records
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1.t - t_target).abs().partial_cmp(&(b.1.t - t_target).abs()).unwrap())
        {
            if !picked.contains(&i) {
                picked.push(i);
            }
        }
    }
    picked.sort();
    let slices = picked
        .into_iter()
        .map(|i| {
            let rec = records[i];
            let mut pts = Vec::new();
            for m in rec.interface.midpoints() {
                let y = (m - x_star) * lambda;
                if y.x.abs() <= WINDOW && y.y.abs() <= WINDOW {
                    pts.push([y.x, y.y]);
                }
                if mirrored {
                    let ym = Vec2::new(2.0 * axis - y.x, y.y);
                    if ym.x.abs() <= WINDOW && ym.y.abs() <= WINDOW {
                        pts.push([ym.x, ym.y]);
                    }
                }
            }
            RescaledSlice { s: lambda * lambda * (rec.t - t_star), t: rec.t, points: pts }
        })
        .collect();
    let d = dom.signed_distance(&x_star);
    let status = if d <= 2.0 * h || lambda * d <= 0.5 {
        let p = dom.project(&x_star);
        let n_in = -dom.outward_normal(&p);
        let foot = (p - x_star) * lambda;
        BarrierStatus::Boundary { foot: [foot.x, foot.y], normal: [n_in.x, n_in.y] }
    } else {
        BarrierStatus::Interior
    };
    Ok(RescaledFrame {
        center: [x_star.x, x_star.y],
        t_star,
        lambda,
        mode,
        status,
        mirrored,
        slices,
        barrier: Some(dom.clone()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TangentKind {
    StaticPlane,
    StaticHalfplane,
    ShrinkingSphere,
    ShrinkingHalfsphere,
    /// Round cylinder away from the barrier.
    ShrinkingCylinder,
    /// Cylinder whose axis lies in the barrier plane (the reflected picture of a
    /// half-cylinder).
    ShrinkingCylinderAxisInBarrier,
    /// Cylinder meeting the barrier orthogonally along its axis direction.
    ShrinkingCylinderAxisPerpBarrier,
    ShrinkingHalfcylinder,
    QuasistaticPlane,
}

impl TangentKind {
    pub fn multiplicity(self) -> u32 {
        if self == TangentKind::QuasistaticPlane {
            2
        } else {
            1
        }
    }

    /// Gaussian density of the model (reflected for half-models).
    pub fn density(self, mode: Mode) -> f64 {
        use TangentKind::*;
        match self {
            StaticPlane | StaticHalfplane => 1.0,
            ShrinkingSphere | ShrinkingHalfsphere => match mode {
                Mode::Planar => circle_density(),
                Mode::Axisym => sphere_density(),
            },
            ShrinkingCylinder | ShrinkingCylinderAxisInBarrier | ShrinkingCylinderAxisPerpBarrier
            | ShrinkingHalfcylinder => circle_density(),
            QuasistaticPlane => 2.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TangentModel {
    pub kind: TangentKind,
    pub multiplicity: u32,
    /// Centre of the shrinker, or a point of the plane, in rescaled coordinates.
    pub center: [f64; 2],
    /// Unit normal of planes, or the direction of the symmetry axis.
    pub axis: [f64; 2],
    /// Model radius at `s = -1` (0 for planes).
    pub scale: f64,
    pub residual: f64,
    pub density: f64,
    pub classified: bool,
    pub lambda: f64,
    /// Residuals of all candidate models.
    pub candidates: Vec<(TangentKind, f64)>,
}

/// Curve families fitted to rescaled slices.
#[derive(Debug, Clone, Copy)]
enum Family {
    /// Line `<y, (cos a, sin a)> = o`; params `[a, o]`.
    Line,
    /// Line orthogonal to the barrier plane; params `[o]` along the barrier tangent.
    HalfLine,
    /// Circle of radius `sqrt(k (|s| + delta))`; params `[cx, cy, delta]`.
    Circle { k: f64 },
    /// Same, centred on the barrier plane; params `[u, delta]`.
    HalfCircle { k: f64 },
    /// Lines `|y.x - axis| = sqrt(2 (|s| + delta))`; params `[delta]`.
    AxisCylinder,
    /// Sheet parallel to the barrier at per-slice offsets; params `[o_0, o_1, ...]`.
    Sheet,
}

struct Fit<'a> {
    frame: &'a RescaledFrame,
    family: Family,
    slices: Vec<(f64, Vec<Vec2>)>,
    foot: Vec2,
    n_in: Vec2,
    axis: f64,
}

impl Fit<'_> {
    fn tangent(&self) -> Vec2 {
        Vec2::new(-self.n_in.y, self.n_in.x)
    }

    fn radius(k: f64, s: f64, delta: f64) -> f64 {
        (k * (-s + delta)).max(0.0).sqrt()
    }

    fn dist(&self, y: &Vec2, s: f64, slice: usize, p: &[f64]) -> f64 {
        match self.family {
            Family::Line => y.dot(&Vec2::new(p[0].cos(), p[0].sin())) - p[1],
            Family::HalfLine => (y - self.foot).dot(&self.tangent()) - p[0],
            Family::Circle { k } => (y - Vec2::new(p[0], p[1])).norm() - Self::radius(k, s, p[2]),
            Family::HalfCircle { k } => {
                (y - (self.foot + self.tangent() * p[0])).norm() - Self::radius(k, s, p[1])
            }
            Family::AxisCylinder => (y.x - self.axis).abs() - Self::radius(2.0, s, p[0]),
            Family::Sheet => self.frame.barrier_distance(y) - p[slice],
        }
    }

    fn inside(&self, y: &Vec2) -> bool {
        let in_window = y.x.abs() <= WINDOW && y.y.abs() <= WINDOW;
        let in_d = match self.frame.status {
            BarrierStatus::Interior => true,
            BarrierStatus::Boundary { .. } => (y - self.foot).dot(&self.n_in) >= 0.0,
        };
        in_window && in_d
    }

    fn samples(&self, s: f64, slice: usize, p: &[f64]) -> Vec<Vec2> {
        let span = 2.0 * WINDOW * 2f64.sqrt();
        let n_line = 400;
        let line = |a: Vec2, dir: Vec2| -> Vec<Vec2> {
            (0..=n_line).map(|i| a + dir * (span * (i as f64 / n_line as f64 - 0.5))).collect()
        };
        let circle = |c: Vec2, r: f64| -> Vec<Vec2> {
            let n = 256;
            (0..n)
                .map(|i| {
                    let a = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                    c + Vec2::new(a.cos(), a.sin()) * r
                })
                .collect()
        };
        let pts = match self.family {
            Family::Line => {
                let n = Vec2::new(p[0].cos(), p[0].sin());
                line(n * p[1], Vec2::new(-n.y, n.x))
            }
            Family::HalfLine => line(self.foot + self.tangent() * p[0], self.n_in),
            Family::Circle { k } => circle(Vec2::new(p[0], p[1]), Self::radius(k, s, p[2])),
            Family::HalfCircle { k } => circle(self.foot + self.tangent() * p[0], Self::radius(k, s, p[1])),
            Family::AxisCylinder => {
                let r = Self::radius(2.0, s, p[0]);
                let mut v = line(Vec2::new(self.axis + r, 0.0), Vec2::new(0.0, 1.0));
                v.extend(line(Vec2::new(self.axis - r, 0.0), Vec2::new(0.0, 1.0)));
                v
            }
            Family::Sheet => line(self.foot, self.tangent())
                .into_iter()
                .filter_map(|y| self.frame.barrier_point(&y, p[slice]))
                .collect(),
        };
        pts.into_iter().filter(|y| self.inside(y)).collect()
    }

    fn n_params(&self) -> usize {
        match self.family {
            Family::Line => 2,
            Family::HalfLine | Family::AxisCylinder => 1,
            Family::Circle { .. } => 3,
            Family::HalfCircle { .. } => 2,
            Family::Sheet => self.slices.len(),
        }
    }

    fn initial(&self) -> Vec<f64> {
        let all: Vec<Vec2> = self.slices.iter().flat_map(|(_, p)| p.iter().copied()).collect();
        let n = all.len().max(1) as f64;
        let mean = all.iter().fold(Vec2::zeros(), |a, b| a + b) / n;
        match self.family {
            Family::Line => {
                let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
                for p in &all {
                    let d = p - mean;
                    sxx += d.x * d.x;
                    sxy += d.x * d.y;
                    syy += d.y * d.y;
                }
                // Normal = direction of least variance.
                let a = 0.5 * (2.0 * sxy).atan2(sxx - syy) + std::f64::consts::FRAC_PI_2;
                let nrm = Vec2::new(a.cos(), a.sin());
                vec![a, mean.dot(&nrm)]
            }
            Family::HalfLine => vec![(mean - self.foot).dot(&self.tangent())],
            Family::Circle { .. } => {
                if self.frame.mirrored {
                    vec![self.axis, 0.0, 0.0]
                } else {
                    vec![0.0, 0.0, 0.0]
                }
            }
            Family::HalfCircle { .. } | Family::AxisCylinder => {
                let mut v = vec![0.0; self.n_params()];
                if let Family::HalfCircle { .. } = self.family {
                    v[0] = (-self.foot).dot(&self.tangent());
                }
                v
            }
            Family::Sheet => self
                .slices
                .iter()
                .map(|(_, pts)| {
                    let m = pts.len().max(1) as f64;
                    pts.iter().map(|y| self.frame.barrier_distance(y)).sum::<f64>() / m
                })
                .collect(),
        }
    }

    fn residuals(&self, p: &[f64]) -> Vec<f64> {
        let mut out = Vec::new();
        for (k, (s, pts)) in self.slices.iter().enumerate() {
            for y in pts {
                out.push(self.dist(y, *s, k, p));
            }
        }
        out
    }

    /// Symmetric Chamfer residual averaged over slices.
    fn chamfer(&self, p: &[f64]) -> f64 {
        let mut total = 0.0;
        for (k, (s, pts)) in self.slices.iter().enumerate() {
            let model = self.samples(*s, k, p);
            if model.is_empty() || pts.is_empty() {
                return f64::INFINITY;
            }
            let d_data: f64 = pts.iter().map(|y| self.dist(y, *s, k, p).powi(2)).sum::<f64>() / pts.len() as f64;
            let d_model: f64 = model
                .iter()
                .map(|m| pts.iter().map(|y| (m - y).norm_squared()).fold(f64::INFINITY, f64::min))
                .sum::<f64>()
                / model.len() as f64;
            total += (0.5 * (d_data + d_model)).sqrt();
        }
        total / self.slices.len() as f64
    }
}

/// Levenberg-Marquardt with forward-difference Jacobian.
fn least_squares(f: &dyn Fn(&[f64]) -> Vec<f64>, p0: Vec<f64>, iters: usize) -> Vec<f64> {
    let mut p = p0;
    let cost = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();
    let mut r = f(&p);
    let mut c = cost(&r);
    let mut mu = 1e-3;
    let n = p.len();
    for _ in 0..iters {
        let m = r.len();
        let mut jac = DMatrix::<f64>::zeros(m, n);
        for j in 0..n {
            let eps = 1e-6 * (1.0 + p[j].abs());
            let mut q = p.clone();
            q[j] += eps;
            let rq = f(&q);
            for i in 0..m {
                jac[(i, j)] = (rq[i] - r[i]) / eps;
            }
        }
        let rv = DVector::from_vec(r.clone());
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * rv;
        let mut improved = false;
        for _ in 0..10 {
            let mut a = jtj.clone();
            for j in 0..n {
                a[(j, j)] += mu * (1.0 + jtj[(j, j)]);
            }
            let Some(step) = a.lu().solve(&(-&jtr)) else {
                mu *= 10.0;
                continue;
            };
            let q: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let rq = f(&q);
            let cq = cost(&rq);
            if cq < c {
                let rel = (c - cq) / c.max(1e-300);
                p = q;
                r = rq;
                c = cq;
                mu = (mu * 0.3).max(1e-12);
                improved = rel > 1e-12;
                break;
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }
    p
}

/// Fits the model zoo allowed by the frame's barrier status and mode; returns the best
/// model, flagged unclassified if its residual exceeds `CLASSIFY_THRESHOLD`.
pub fn classify_tangent(frame: &RescaledFrame) -> TangentModel {
    use TangentKind::*;
    let slices: Vec<(f64, Vec<Vec2>)> = frame
        .slices
        .iter()
        .filter(|s| s.s <= S_MAX && !s.points.is_empty())
        .map(|s| (s.s, s.points.iter().map(|p| Vec2::new(p[0], p[1])).collect()))
        .collect();
    let (foot, n_in) = match frame.status {
        BarrierStatus::Interior => (Vec2::zeros(), Vec2::new(0.0, 1.0)),
        BarrierStatus::Boundary { foot, normal } => (Vec2::new(foot[0], foot[1]), Vec2::new(normal[0], normal[1])),
    };
    let axis = -frame.lambda * frame.center[0];
    let boundary = matches!(frame.status, BarrierStatus::Boundary { .. });
    let mut zoo: Vec<(TangentKind, Family)> = Vec::new();
    match (frame.mode, boundary) {
        (Mode::Planar, false) => {
            zoo.push((StaticPlane, Family::Line));
            zoo.push((ShrinkingSphere, Family::Circle { k: 2.0 }));
        }
        (Mode::Planar, true) => {
            zoo.push((StaticHalfplane, Family::HalfLine));
            zoo.push((ShrinkingHalfsphere, Family::HalfCircle { k: 2.0 }));
            zoo.push((QuasistaticPlane, Family::Sheet));
        }
        (Mode::Axisym, false) => {
            zoo.push((StaticPlane, Family::Line));
            zoo.push((ShrinkingCylinder, Family::Circle { k: 2.0 }));
            if frame.mirrored {
                zoo.push((ShrinkingSphere, Family::Circle { k: 4.0 }));
                zoo.push((ShrinkingCylinder, Family::AxisCylinder));
            }
        }
        (Mode::Axisym, true) => {
            zoo.push((StaticHalfplane, Family::HalfLine));
            zoo.push((ShrinkingHalfcylinder, Family::HalfCircle { k: 2.0 }));
            zoo.push((QuasistaticPlane, Family::Sheet));
            if frame.mirrored {
                zoo.push((ShrinkingHalfsphere, Family::HalfCircle { k: 4.0 }));
                zoo.push((ShrinkingCylinderAxisPerpBarrier, Family::AxisCylinder));
            }
        }
    }
    let mut best: Option<TangentModel> = None;
    let mut candidates = Vec::new();
    for (kind, family) in zoo {
        let fit = Fit { frame, family, slices: slices.clone(), foot, n_in, axis };
        let (p, residual) = if slices.len() < 3 {
            (fit.initial(), f64::INFINITY)
        } else {
            let p = least_squares(&|q| fit.residuals(q), fit.initial(), 100);
            let res = fit.chamfer(&p);
            (p, res)
        };
        candidates.push((kind, residual));
        let (center, ax, scale) = match family {
            Family::Line => {
                let n = Vec2::new(p[0].cos(), p[0].sin());
                ([n.x * p[1], n.y * p[1]], [n.x, n.y], 0.0)
            }
            Family::HalfLine => {
                let c = foot + fit.tangent() * p[0];
                ([c.x, c.y], [fit.tangent().x, fit.tangent().y], 0.0)
            }
            Family::Circle { k } => ([p[0], p[1]], [0.0, 1.0], Fit::radius(k, -1.0, p[2])),
            Family::HalfCircle { k } => {
                let c = foot + fit.tangent() * p[0];
                ([c.x, c.y], [fit.tangent().x, fit.tangent().y], Fit::radius(k, -1.0, p[1]))
            }
            Family::AxisCylinder => ([axis, 0.0], [0.0, 1.0], Fit::radius(2.0, -1.0, p[0])),
            Family::Sheet => ([foot.x, foot.y], [n_in.x, n_in.y], 0.0),
        };
        let better = best.as_ref().is_none_or(|b| residual < b.residual);
        if better {
            best = Some(TangentModel {
                kind,
                multiplicity: kind.multiplicity(),
                center,
                axis: ax,
                scale,
                residual,
                density: kind.density(frame.mode),
                classified: residual <= CLASSIFY_THRESHOLD,
                lambda: frame.lambda,
                candidates: Vec::new(),
            });
        }
    }
    let mut model = best.expect("model zoo is never empty");
    model.candidates = candidates;
    model
}

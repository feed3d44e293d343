//! Curvature monitors on flows: curvature reports, noncollapsing radii, the `|A|/H`
//! series, the convexity and gradient estimates. The monitors on translator solutions
//! are computed in [`crate::elliptic`] and re-exported here.

use serde::Serialize;

use crate::curvature::{cell_geometry, sample_curvature, CurvatureSample};
use crate::error::{FlowError, Result};
use crate::geometry::{Mode, Vec2};
use crate::grid::GridField;
use crate::levelset::{BarrierGrid, FlowState, FlowTrajectory};

pub use crate::elliptic::{monitor_f, perturbed_sff, MonitorLabel, MonitorReport, PerturbedSff};

#[derive(Debug, Clone, Serialize)]
pub struct PointCurvature {
    pub x: [f64; 2],
    pub nu: [f64; 2],
    pub h: f64,
    pub a_norm: f64,
    pub lambda1: f64,
    /// `|grad H|` along the interface.
    pub grad_h: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CurvatureReport {
    pub t: f64,
    pub points: Vec<PointCurvature>,
    pub degenerate: usize,
    pub min_h: f64,
    pub max_h: f64,
    pub max_a_over_h: f64,
    pub min_lambda1_over_h: f64,
}

/// Mean curvature of the level set through `x`, interpolated from cell values.
fn mean_curvature_at(filled: &GridField, x: &Vec2) -> Option<f64> {
    let mut v = 0.0;
    for ((i, j), w) in GridField::stencil(&filled.grid, x) {
        if w == 0.0 {
            continue;
        }
        v += cell_geometry(filled, i, j)?.mean() * w;
    }
    Some(v)
}

/// Curvature quantities on the interface of a ghost-filled level-set field.
pub fn curvature_report(bg: &BarrierGrid, filled: &GridField, t: f64) -> CurvatureReport {
    let iface = bg.interface(filled);
    let (samples, mut degenerate) = sample_curvature(filled, &iface);
    let h = bg.h();
    let mut points = Vec::with_capacity(samples.len());
    for s in &samples {
        let tau = Vec2::new(-s.nu.y, s.nu.x);
        let grad_h = match (mean_curvature_at(filled, &(s.x + tau * h)), mean_curvature_at(filled, &(s.x - tau * h))) {
            (Some(a), Some(b)) => (a - b).abs() / (2.0 * h),
            _ => {
                degenerate += 1;
                continue;
            }
        };
        points.push(PointCurvature {
            x: [s.x.x, s.x.y],
            nu: [s.nu.x, s.nu.y],
            h: s.h,
            a_norm: s.a_norm,
            lambda1: s.lambda1,
            grad_h,
        });
    }
    let min_h = points.iter().map(|p| p.h).fold(f64::INFINITY, f64::min);
    let max_h = points.iter().map(|p| p.h).fold(f64::NEG_INFINITY, f64::max);
    let max_a_over_h = points.iter().filter(|p| p.h > 0.0).map(|p| p.a_norm / p.h).fold(f64::NAN, f64::max);
    let min_lambda1_over_h = points.iter().filter(|p| p.h > 0.0).map(|p| p.lambda1 / p.h).fold(f64::NAN, f64::min);
    CurvatureReport { t, points, degenerate, min_h, max_h, max_a_over_h, min_lambda1_over_h }
}

/// Curvature quantities of one flow state.
pub fn curvature_quantities(traj: &FlowTrajectory, state: &FlowState) -> CurvatureReport {
    curvature_report(&traj.barrier, &traj.filled(state), state.t)
}

#[derive(Debug, Clone, Serialize)]
pub struct NoncollapsePoint {
    pub x: [f64; 2],
    pub h: f64,
    pub r_in: f64,
    pub r_out: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NoncollapseReport {
    pub t: f64,
    pub h0: f64,
    pub points: Vec<NoncollapsePoint>,
    /// Minimum of `r_in H` over points with `H >= H0` (`NaN` if there are none).
    pub min_in: f64,
    pub min_out: f64,
}

/// Interface samples together with their images under the barrier reflection and, in
/// axisymmetric mode, under the mirror across the axis. Tangent balls are tested
/// against this doubled set, so they may extend across the barrier.
fn doubled_points(bg: &BarrierGrid, pts: &[Vec2]) -> Vec<Vec2> {
    let mut out: Vec<Vec2> = pts.to_vec();
    let collar = 0.5 * bg.dom.length_scale();
    for p in pts {
        if bg.dom.signed_distance(p) < collar {
            if let Ok(q) = bg.dom.reflect_with(p, 2.0 * bg.h()) {
                out.push(q);
            }
        }
    }
    if bg.grid.mode == Mode::Axisym {
        let n = out.len();
        for k in 0..n {
            let q = out[k];
            out.push(Vec2::new(-q.x, q.y));
        }
    }
    out
}

/// Largest interior and exterior balls tangent at `p` (normal `nu`, outward of `K`)
/// whose interiors avoid every point of `cloud`, ignoring points within `skip` of `p`.
fn tangent_radii(p: &Vec2, nu: &Vec2, cloud: &[Vec2], skip: f64, cap: f64) -> (f64, f64) {
    let (mut r_in, mut r_out) = (cap, cap);
    for q in cloud {
        let v = q - p;
        let d2 = v.norm_squared();
        if d2 < skip * skip {
            continue;
        }
        let s = nu.dot(&v);
        // |q - (p - r nu)| >= r  <=>  d2 + 2 r s >= 0.
        if s < 0.0 {
            r_in = r_in.min(d2 / (-2.0 * s));
        } else if s > 0.0 {
            r_out = r_out.min(d2 / (2.0 * s));
        }
    }
    (r_in, r_out)
}

/// Noncollapsing radii `r_in`, `r_out` at every interface sample of a state.
pub fn noncollapsing(traj: &FlowTrajectory, state: &FlowState, h0: f64) -> NoncollapseReport {
    let bg = &traj.barrier;
    let filled = traj.filled(state);
    let iface = bg.interface(&filled);
    let (samples, _) = sample_curvature(&filled, &iface);
    noncollapsing_samples(bg, &samples, state.t, h0)
}

pub fn noncollapsing_samples(bg: &BarrierGrid, samples: &[CurvatureSample], t: f64, h0: f64) -> NoncollapseReport {
    let h = bg.h();
    let pts: Vec<Vec2> = samples.iter().map(|s| s.x).collect();
    let cloud = doubled_points(bg, &pts);
    let cap = if bg.dom.diameter().is_finite() { bg.dom.diameter() } else { bg.grid.bounds().diameter() };
    let points: Vec<NoncollapsePoint> = samples
        .iter()
        .map(|s| {
            let (r_in, r_out) = tangent_radii(&s.x, &s.nu, &cloud, 6.0 * h, cap);
            NoncollapsePoint { x: [s.x.x, s.x.y], h: s.h, r_in, r_out }
        })
        .collect();
    let sel = points.iter().filter(|p| p.h >= h0);
    let min_in = sel.clone().map(|p| p.r_in * p.h).fold(f64::NAN, f64::min);
    let min_out = sel.map(|p| p.r_out * p.h).fold(f64::NAN, f64::min);
    NoncollapseReport { t, h0, points, min_in, min_out }
}

/// Default curvature threshold `H0 = 10 / diam(D)`.
pub fn default_h0(bg: &BarrierGrid) -> f64 {
    let d = bg.dom.diameter();
    10.0 / if d.is_finite() { d } else { bg.grid.bounds().diameter() }
}

#[derive(Debug, Clone, Serialize)]
pub struct RatioSeries {
    pub t: Vec<f64>,
    pub sup_ratio: Vec<f64>,
    pub c: f64,
    pub rho: f64,
    /// Largest `ratio / (C e^{rho t})` over the series.
    pub worst: f64,
    pub pass: bool,
}

/// Least-squares fit of `log y = log C + rho t`, shifted up so that the fit dominates.
fn dominated_exp_fit(t: &[f64], y: &[f64]) -> (f64, f64) {
    let n = t.len() as f64;
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mt = t.iter().sum::<f64>() / n;
    let ml = ly.iter().sum::<f64>() / n;
    let stt: f64 = t.iter().map(|v| (v - mt) * (v - mt)).sum();
    let rho = if stt > 0.0 { t.iter().zip(&ly).map(|(a, b)| (a - mt) * (b - ml)).sum::<f64>() / stt } else { 0.0 };
    let c = (ml - rho * mt).exp();
    (c, rho)
}

/// `sup |A|/H` over the interface at each snapshot with `t >= t_min`, with an
/// exponential fit `C e^{rho t}`. PASS iff the series stays within 20% of the fit.
pub fn ratio_ah_series(traj: &FlowTrajectory, t_min: f64) -> Result<RatioSeries> {
    if traj.mode() != Mode::Axisym {
        return Err(FlowError::Mode("the |A|/H series is only meaningful in axisymmetric mode".into()));
    }
    let h = traj.h();
    let (mut ts, mut ys) = (Vec::new(), Vec::new());
    for st in traj.all_states().filter(|s| s.t >= t_min) {
        let rep = curvature_quantities(traj, st);
        if rep.points.is_empty() {
            continue;
        }
        // Stop once the interface is no longer resolved.
        if rep.max_h * h > traj.config.blowup_threshold {
            break;
        }
        if rep.max_a_over_h.is_finite() {
            ts.push(st.t);
            ys.push(rep.max_a_over_h);
        }
    }
    if ts.is_empty() {
        return Err(FlowError::Window("no resolved snapshots for the |A|/H series".into()));
    }
    let (c, rho) = dominated_exp_fit(&ts, &ys);
    let worst = ts.iter().zip(&ys).map(|(t, y)| y / (c * (rho * t).exp())).fold(0.0, f64::max);
    Ok(RatioSeries { t: ts, sup_ratio: ys, c, rho, worst, pass: worst <= 1.2 })
}

#[derive(Debug, Clone, Serialize)]
pub struct FrontierPoint {
    pub h0: f64,
    /// Smallest constant that passes at this threshold (`NaN` without samples).
    pub constant: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub constant: f64,
    pub h0: f64,
    pub pass: bool,
    pub frontier: Vec<FrontierPoint>,
}

/// Resolved curvature reports of all snapshots, with points within `5h` of a detected
/// singular event (at or after its time) masked out.
fn resolved_reports(traj: &FlowTrajectory) -> Vec<CurvatureReport> {
    let h = traj.h();
    let mut out = Vec::new();
    for st in traj.all_states() {
        let mut rep = curvature_quantities(traj, st);
        if rep.max_h * h > traj.config.blowup_threshold {
            continue;
        }
        rep.points.retain(|p| {
            let x = Vec2::new(p.x[0], p.x[1]);
            !traj.events.iter().any(|e| st.t >= e.t - 1e-12 && (e.point() - x).norm() < 5.0 * h)
        });
        out.push(rep);
    }
    out
}

fn frontier(reports: &[CurvatureReport], thresholds: &[f64], f: impl Fn(&PointCurvature) -> f64) -> Vec<FrontierPoint> {
    thresholds
        .iter()
        .map(|&h0| {
            let vals: Vec<f64> = reports.iter().flat_map(|r| r.points.iter()).filter(|p| p.h >= h0).map(&f).collect();
            FrontierPoint { h0, constant: vals.iter().copied().fold(f64::NAN, f64::max), samples: vals.len() }
        })
        .collect()
}

/// Convexity estimate `lambda1 >= -eps H` at points with `H >= H0`; the frontier lists
/// the smallest passing `eps` for a range of thresholds.
pub fn convexity_estimate(traj: &FlowTrajectory, eps_cvx: f64, h0: f64) -> Result<EstimateReport> {
    if traj.mode() != Mode::Axisym {
        return Err(FlowError::Mode("the convexity estimate needs axisymmetric mode".into()));
    }
    let reports = resolved_reports(traj);
    let thresholds: Vec<f64> = (0..8).map(|k| h0 * 2f64.powi(k) / 4.0).collect();
    let fr = frontier(&reports, &thresholds, |p| (-p.lambda1 / p.h).max(0.0));
    let here = frontier(&reports, &[h0], |p| (-p.lambda1 / p.h).max(0.0));
    let needed = here[0].constant;
    Ok(EstimateReport { constant: eps_cvx, h0, pass: !(needed > eps_cvx), frontier: fr })
}

/// Gradient estimate `|grad H| <= C H^2` (plus an `O(h)` allowance, here `C / h`
/// relative slack is not used: the constant is reported directly).
pub fn gradient_estimate(traj: &FlowTrajectory, c_grad: f64, h0: f64) -> EstimateReport {
    let reports = resolved_reports(traj);
    let thresholds: Vec<f64> = (0..8).map(|k| h0 * 2f64.powi(k) / 4.0).collect();
    let f = |p: &PointCurvature| p.grad_h / (p.h * p.h);
    let fr = frontier(&reports, &thresholds, f);
    let here = frontier(&reports, &[h0], f);
    let needed = here[0].constant;
    EstimateReport { constant: c_grad, h0, pass: !(needed > c_grad), frontier: fr }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BarrierDomain, Bounds, InitialRegion, RegionShape};
    use crate::levelset::{run, FlowConfig};
    use approx::assert_relative_eq;

    fn state_of(k: InitialRegion, dom: BarrierDomain, cfg: FlowConfig) -> (BarrierGrid, GridField) {
        let bg = BarrierGrid::new(&dom, &cfg).unwrap();
        let phi = bg.initial_phi(&k, &cfg).unwrap();
        let f = bg.ghost_filled(&phi);
        (bg, f)
    }

    #[test]
    fn circle_report_and_noncollapsing() {
        let h = 1.0 / 128.0;
        let (bg, f) = state_of(
            InitialRegion::new(RegionShape::Disc { center: Vec2::zeros(), radius: 0.5 }, true),
            BarrierDomain::disc(Vec2::zeros(), 2.0),
            FlowConfig::new(h, 0.0),
        );
        let rep = curvature_report(&bg, &f, 0.0);
        assert_relative_eq!(rep.min_h, 2.0, max_relative = 0.05);
        assert_relative_eq!(rep.max_h, 2.0, max_relative = 0.05);
        for p in &rep.points {
            assert_eq!(p.a_norm, p.h.abs());
            assert!(p.grad_h < 0.5);
        }
        let iface = bg.interface(&f);
        let (samples, _) = sample_curvature(&f, &iface);
        let nc = noncollapsing_samples(&bg, &samples, 0.0, 1.0);
        assert_relative_eq!(nc.min_in, 1.0, max_relative = 0.05);
        for p in &nc.points {
            assert!(p.r_in <= 1.0 / p.h + 4.0 * h);
            assert!(p.r_out <= 4.0);
        }
    }

    #[test]
    fn halfdisc_noncollapsing_by_reflection() {
        let h = 1.0 / 128.0;
        let (bg, f) = state_of(
            InitialRegion::new(RegionShape::HalfDisc { foot: Vec2::zeros(), radius: 0.5 }, true),
            BarrierDomain::halfplane(Vec2::new(1.0, 0.0), 0.0),
            FlowConfig::new(h, 0.0).with_window(Bounds::new(Vec2::new(-0.1, -0.7), Vec2::new(0.7, 0.7))),
        );
        let (samples, _) = sample_curvature(&f, &bg.interface(&f));
        let nc = noncollapsing_samples(&bg, &samples, 0.0, 1.0);
        assert_relative_eq!(nc.min_in, 1.0, max_relative = 0.05);
    }

    #[test]
    fn sphere_ratio_series_is_flat() {
        let dom = BarrierDomain::ball(2.0);
        let k = InitialRegion::new(RegionShape::Disc { center: Vec2::zeros(), radius: 0.5 }, true);
        let cfg = FlowConfig::new(1.0 / 48.0, 0.04).with_uniform_outputs(8);
        let traj = run(&k, &dom, &cfg).unwrap();
        let s = ratio_ah_series(&traj, 0.0).unwrap();
        assert!(s.pass);
        assert!(s.rho.abs() < 1.0, "{}", s.rho);
        for r in &s.sup_ratio {
            assert_relative_eq!(*r, 0.5_f64.sqrt(), max_relative = 0.05);
        }
        let cvx = convexity_estimate(&traj, 0.0, 1.0).unwrap();
        assert!(cvx.pass);
    }

    #[test]
    fn planar_ratio_series_is_a_mode_error() {
        let dom = BarrierDomain::disc(Vec2::zeros(), 2.0);
        let k = InitialRegion::new(RegionShape::Disc { center: Vec2::zeros(), radius: 0.5 }, true);
        let traj = run(&k, &dom, &FlowConfig::new(1.0 / 32.0, 0.01)).unwrap();
        assert!(matches!(ratio_ah_series(&traj, 0.0), Err(FlowError::Mode(_))));
        let g = gradient_estimate(&traj, 1.0, 1.0);
        assert!(g.pass, "{:?}", g.frontier);
    }

    #[test]
    fn torus_has_negative_lambda1() {
        let h = 1.0 / 96.0;
        let (bg, f) = state_of(
            InitialRegion::new(RegionShape::TorusProfile { core_radius: 0.5, tube_radius: 0.2, height: 0.0 }, true),
            BarrierDomain::ball(1.0),
            FlowConfig::new(h, 0.0),
        );
        let rep = curvature_report(&bg, &f, 0.0);
        // Inner equator: lambda1 = -1/(R - r) relative to H = 1/r - 1/(R - r).
        assert!(rep.min_lambda1_over_h < -0.3, "{}", rep.min_lambda1_over_h);
    }
}

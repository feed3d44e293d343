//! Checks run on flow trajectories and translator solutions.

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{EventKind, ScenarioConfig, TranslatorCheck};
use super::report::CheckRecord;
use crate::blowup::{classify_tangent, density_monotonicity_check, rescale};
use crate::diagnostics::{curvature_quantities, default_h0, noncollapsing};
use crate::elliptic::{
    check_h_lower, check_v_lower_bound, monitor_f, one_sided_min_check, ordering_gap, perturbed_sff, TranslatorParams,
    TranslatorSolution,
};
use crate::geometry::Vec2;
use crate::grid::GridField;
use crate::levelset::{FlowState, FlowTrajectory, Location};

/// Algebraic least-squares circle through `points`: centre and radius.
pub fn fit_circle(points: &[Vec2]) -> Option<(Vec2, f64)> {
    if points.len() < 3 {
        return None;
    }
    let a = DMatrix::from_fn(points.len(), 3, |i, j| match j {
        0 => points[i].x,
        1 => points[i].y,
        _ => 1.0,
    });
    let b = DVector::from_fn(points.len(), |i, _| -points[i].norm_squared());
    let sol = a.svd(true, true).solve(&b, 1e-12).ok()?;
    let c = Vec2::new(-0.5 * sol[0], -0.5 * sol[1]);
    let r2 = c.norm_squared() - sol[2];
    (r2 > 0.0).then(|| (c, r2.sqrt()))
}

/// States whose curvature is resolved on the grid (`max|H| h` below the blowup
/// threshold), excluding the initial state.
fn resolved_states(traj: &FlowTrajectory) -> Vec<&FlowState> {
    let h = traj.h();
    traj.snapshots
        .iter()
        .filter(|st| {
            let rep = curvature_quantities(traj, st);
            !rep.points.is_empty() && rep.max_h * h <= traj.config.blowup_threshold
        })
        .collect()
}

fn failed(id: &str, scenario: &str, note: impl Into<String>) -> CheckRecord {
    CheckRecord::new(id, scenario).note(note).pass(false)
}

pub fn flow_checks(cfg: &ScenarioConfig, traj: &FlowTrajectory) -> Vec<CheckRecord> {
    let c = &cfg.checks;
    let name = cfg.name.as_str();
    let mut out = Vec::new();
    if let Some(x) = &c.extinction {
        let t = traj.t_ext.unwrap_or(f64::NAN);
        let rel = (t - x.expected).abs() / x.expected;
        out.push(
            CheckRecord::new("extinction-time", name)
                .measured("t_ext", t)
                .measured("relative_error", rel)
                .threshold("expected", x.expected)
                .threshold("rel_tol", x.rel_tol)
                .pass(rel <= x.rel_tol),
        );
    }
    if let Some(x) = &c.radius_law {
        out.push(radius_law(name, traj, x.r0, x.tol_cells));
    }
    if let Some(x) = &c.contact_angle {
        let h = traj.h();
        let rows: Vec<f64> = traj
            .series
            .iter()
            .filter(|r| r.max_h * h <= traj.config.blowup_threshold && r.contact_angle_error.is_finite())
            .map(|r| r.contact_angle_error)
            .collect();
        let worst = rows.iter().copied().fold(0.0, f64::max);
        out.push(
            CheckRecord::new("contact-angle", name)
                .measured("max_error", worst)
                .measured("samples", rows.len() as f64)
                .threshold("tol", x.tol)
                .pass(!rows.is_empty() && worst <= x.tol),
        );
    }
    if let Some(x) = &c.ratio_ah {
        out.push(ratio_ah(name, traj, x.expected, x.rel_tol));
    }
    if let Some(x) = &c.singular_event {
        out.push(singular_event(name, traj, x.kind));
    }
    if let Some(x) = &c.tangent {
        let point = if x.at_pop {
            traj.pops.first().map(|p| (p.x, p.t))
        } else {
            traj.events.first().map(|e| (e.point(), e.t))
        };
        let rec = match point {
            None => failed("tangent", name, "no singular event to blow up"),
            Some((xs, ts)) => match rescale(traj, xs, ts, x.lambda) {
                Err(e) => failed("tangent", name, e.to_string()),
                Ok(frame) => {
                    let m = classify_tangent(&frame);
                    let kind = serde_json::to_value(m.kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
                    let mult_ok = x.multiplicity.is_none_or(|k| k == m.multiplicity);
                    CheckRecord::new("tangent", name)
                        .measured("residual", m.residual)
                        .measured("multiplicity", m.multiplicity as f64)
                        .measured("density", m.density)
                        .threshold("max_residual", x.max_residual)
                        .threshold("lambda", x.lambda)
                        .fitted("scale", m.scale)
                        .note(format!("classified {kind}, expected {}", x.kind))
                        .pass(kind == x.kind && m.residual < x.max_residual && mult_ok)
                }
            },
        };
        out.push(rec);
    }
    if let Some(x) = &c.density {
        let rec = match traj.events.first() {
            None => failed("density", name, "no singular event"),
            Some(ev) => match density_monotonicity_check(traj, ev.point(), ev.t) {
                Err(e) => failed("density", name, e.to_string()),
                Ok(l) => {
                    let theta = *l.theta.last().unwrap();
                    let rel = (theta - x.expected).abs() / x.expected;
                    CheckRecord::new("density", name)
                        .measured("theta", theta)
                        .measured("r", *l.radii.last().unwrap())
                        .measured("relative_error", rel)
                        .measured("ladder_monotone", if l.pass { 1.0 } else { 0.0 })
                        .threshold("expected", x.expected)
                        .threshold("rel_tol", x.rel_tol)
                        .pass(l.pass && rel <= x.rel_tol)
                }
            },
        };
        out.push(rec);
    }
    if let Some(x) = &c.noncollapsing {
        let h0 = x.h0.unwrap_or_else(|| default_h0(&traj.barrier));
        let (mut lo_in, mut lo_out) = (f64::INFINITY, f64::INFINITY);
        let states = resolved_states(traj);
        for st in &states {
            let r = noncollapsing(traj, st, h0);
            if r.min_in.is_finite() {
                lo_in = lo_in.min(r.min_in);
            }
            if r.min_out.is_finite() {
                lo_out = lo_out.min(r.min_out);
            }
        }
        let lo = lo_in.min(lo_out);
        let mut rec = CheckRecord::new("noncollapsing", name)
            .measured("min_r_in_h", lo_in)
            .measured("min_r_out_h", lo_out)
            .measured("snapshots", states.len() as f64)
            .threshold("min", x.min)
            .threshold("h0", h0);
        let mut pass = lo.is_finite() && lo >= x.min;
        if let Some(e) = x.exact {
            rec = rec.threshold("exact", e).threshold("rel_tol", x.rel_tol);
            pass &= (lo - e).abs() <= x.rel_tol * e;
        }
        out.push(rec.pass(pass));
    }
    if let Some(x) = &c.one_sided {
        out.push(one_sided(name, traj, x.competitors, x.snapshots, cfg.seed));
    }
    if let Some(x) = &c.long_time {
        let st = traj.snapshots.last().unwrap_or(&traj.final_state);
        let h = traj.h();
        let iface = traj.interface_of(st);
        let sheets = iface.components(3.0 * h);
        let max_h = traj.curvature_of(st).iter().map(|s| s.h.abs()).fold(0.0, f64::max);
        let mut rec = CheckRecord::new("long-time", name)
            .measured("t", st.t)
            .measured("max_h", max_h)
            .measured("sheets", sheets as f64)
            .threshold("max_h", x.max_h);
        let mut pass = !iface.is_empty() && max_h < x.max_h;
        if let Some(s) = x.sheets {
            rec = rec.threshold("sheets", s as f64);
            pass &= s == sheets;
        }
        out.push(rec.pass(pass));
    }
    out
}

fn radius_law(name: &str, traj: &FlowTrajectory, r0: f64, tol_cells: f64) -> CheckRecord {
    let h = traj.h();
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for rec in &traj.history {
        let exact2 = r0 * r0 - 2.0 * rec.t;
        // Only radii resolved by several cells are compared.
        if exact2 < (8.0 * h) * (8.0 * h) {
            continue;
        }
        match fit_circle(&rec.interface.midpoints()) {
            Some((_, r)) => worst = worst.max((r - exact2.sqrt()).abs()),
            None => worst = f64::INFINITY,
        }
        n += 1;
    }
    CheckRecord::new("radius-law", name)
        .measured("max_error", worst)
        .measured("samples", n as f64)
        .threshold("tol", tol_cells * h)
        .pass(n > 0 && worst <= tol_cells * h)
}

fn ratio_ah(name: &str, traj: &FlowTrajectory, expected: f64, rel_tol: f64) -> CheckRecord {
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for st in resolved_states(traj) {
        let samples = traj.curvature_of(st);
        let vals: Vec<f64> = samples.iter().filter(|s| s.h > 0.0).map(|s| s.a_norm / s.h).collect();
        if vals.is_empty() {
            continue;
        }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        worst = worst.max((mean - expected).abs() / expected);
        n += 1;
    }
    CheckRecord::new("ratio-a-over-h", name)
        .measured("max_relative_error", worst)
        .measured("snapshots", n as f64)
        .threshold("expected", expected)
        .threshold("rel_tol", rel_tol)
        .pass(n > 0 && worst <= rel_tol)
}

fn singular_event(name: &str, traj: &FlowTrajectory, kind: EventKind) -> CheckRecord {
    let dom = &traj.barrier.dom;
    let rec = CheckRecord::new("singular-event", name)
        .measured("events", traj.events.len() as f64)
        .measured("pops", traj.pops.len() as f64);
    match kind {
        EventKind::Pop => match traj.pops.first() {
            Some(p) => {
                let d = dom.signed_distance(&p.x);
                let h = traj.h();
                rec.measured("t", p.t)
                    .measured("wall_distance", d)
                    .threshold("wall_distance", 4.0 * h)
                    .note("pop")
                    .pass(d.abs() <= 4.0 * h)
            }
            None => rec.note("no popping event").pass(false),
        },
        EventKind::Boundary | EventKind::Interior => {
            let want = if kind == EventKind::Boundary { Location::Boundary } else { Location::Interior };
            match traj.events.iter().find(|e| e.location == want) {
                Some(e) => rec.measured("t", e.t).measured("x", e.x[0]).measured("y", e.x[1]).pass(true),
                None => rec.note("no event with the expected location").pass(false),
            }
        }
    }
}

/// Competitors between `K_t` and `K`: `K_t` itself, `K`, outward offsets of `K_t`
/// clipped to `K`, and `K_t` with random discs of `K` attached.
pub fn competitors(traj: &FlowTrajectory, state: &FlowState, count: usize, seed: u64) -> Vec<GridField> {
    let kt = traj.filled(state);
    let k0 = traj.filled(&traj.initial);
    let h = traj.h();
    let combine = |extra: &dyn Fn(Vec2, f64) -> f64| {
        let mut f = kt.clone();
        for (k, v) in f.data.iter_mut().enumerate() {
            let x = kt.grid.center(k % kt.grid.nx, k / kt.grid.nx);
            *v = v.max(extra(x, *v).min(k0.data[k]));
        }
        f
    };
    let mut out = vec![kt.clone(), k0.clone()];
    for s in [2.0, 4.0, 8.0] {
        if out.len() < count {
            out.push(combine(&|_, v| v + s * h));
        }
    }
    let pts = traj.interface_of(state).midpoints();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while out.len() < count {
        if pts.is_empty() {
            out.push(k0.clone());
            continue;
        }
        let c = pts[rng.random_range(0..pts.len())] + Vec2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)) * h;
        let r = rng.random_range(3.0..12.0) * h;
        out.push(combine(&|x, _| r - (x - c).norm()));
    }
    out
}

fn one_sided(name: &str, traj: &FlowTrajectory, count: usize, snapshots: usize, seed: u64) -> CheckRecord {
    let states = resolved_states(traj);
    if states.is_empty() {
        return failed("one-sided", name, "no resolved snapshots");
    }
    let stride = states.len().div_ceil(snapshots).max(1);
    let (mut slack, mut tested, mut pass) = (f64::INFINITY, 0, true);
    let mut tol = 0.0;
    for (i, st) in states.iter().step_by(stride).enumerate() {
        let comps = competitors(traj, st, count, seed.wrapping_add(i as u64));
        match one_sided_min_check(traj, st.t, &comps) {
            Ok(r) => {
                // The first competitor is K_t itself.
                slack = r.competitors[1..].iter().map(|p| p - r.perimeter).fold(slack, f64::min);
                tol = r.tolerance;
                pass &= r.pass;
                tested += 1;
            }
            Err(e) => return failed("one-sided", name, e.to_string()),
        }
    }
    CheckRecord::new("one-sided", name)
        .measured("min_slack", slack)
        .measured("snapshots", tested as f64)
        .measured("competitors", count as f64)
        .threshold("tolerance", tol)
        .pass(pass)
}

/// Checks of one translator solve.
pub fn translator_checks(
    name: &str,
    tag: &str,
    sol: &TranslatorSolution,
    p: &TranslatorParams,
    x: &TranslatorCheck,
) -> Vec<CheckRecord> {
    let id = |base: &str| if tag.is_empty() { base.to_string() } else { format!("{base}[{tag}]") };
    let mut out = Vec::new();
    let bound_ok = sol.trace.iter().all(|s| s.bound_ok);
    out.push(
        CheckRecord::new(&id("continuation"), name)
            .measured("kappa", sol.kappa)
            .measured("residual", sol.residual)
            .measured("steps", sol.trace.len() as f64)
            .measured("max_u", sol.max_u())
            .measured("tau_error", sol.tau_error.unwrap_or(f64::NAN))
            .measured("bound_ok", if bound_ok { 1.0 } else { 0.0 })
            .threshold("kappa", p.kappa)
            .threshold("max_residual", x.max_residual)
            .threshold("sup_bound", p.sup_bound(p.kappa))
            .pass(sol.kappa == p.kappa && sol.residual <= x.max_residual && bound_ok),
    );
    if x.v_bound {
        let v = check_v_lower_bound(sol, p);
        out.push(
            CheckRecord::new(&id("v-lower-bound"), name)
                .measured("ratio_1", v.ratio_1)
                .measured("ratio_2", v.ratio_2)
                .measured("min_boundary_v", v.min_boundary_v)
                .measured("interior_slack", v.interior_slack)
                .threshold("ratio", 1.0)
                .fitted("a", v.a)
                .fitted("b", v.b)
                .fitted("m", v.m)
                .pass(v.pass),
        );
    }
    if x.h_lower {
        let hl = check_h_lower(sol, p);
        out.push(
            CheckRecord::new(&id("h-lower-bound"), name)
                .measured("noise", hl.noise)
                .threshold("c_over_noise", 1.0)
                .fitted("c", hl.c)
                .fitted("a", hl.a)
                .pass(hl.pass),
        );
    }
    if x.monitor {
        let m = monitor_f(sol, p);
        let label = serde_json::to_value(m.label).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        out.push(
            CheckRecord::new(&id("monitor-argmax"), name)
                .measured("max_f", m.max_f)
                .measured("x", m.argmax[0])
                .measured("y", m.argmax[1])
                .note(format!("argmax on {label} cells"))
                .pass(m.pass),
        );
    }
    if x.b_cells.is_some() || x.a_min.is_some() {
        let s = perturbed_sff(sol, &p.extension(&sol.domain));
        let mut rec = CheckRecord::new(&id("perturbed-sff"), name)
            .measured("max_b_xn", s.max_b_xn)
            .measured("max_a_xn", s.max_a_xn)
            .measured("junctions", s.junctions.len() as f64);
        let mut pass = !s.junctions.is_empty();
        if let Some(k) = x.b_cells {
            rec = rec.threshold("max_b_xn", k * p.h);
            pass &= s.max_b_xn <= k * p.h;
        }
        if let Some(a) = x.a_min {
            rec = rec.threshold("min_a_xn", a);
            pass &= s.max_a_xn >= a;
        }
        out.push(rec.pass(pass));
    }
    out
}

/// `u_{eps, sigma_1} >= u_{eps, sigma_2} - h` for `sigma_1 < sigma_2` along each row
/// of the sweep, and stability of the fitted `c` under halving of `eps`.
pub fn sweep_checks(name: &str, grid: &[(f64, f64, TranslatorSolution, f64)], h: f64) -> Vec<CheckRecord> {
    let mut out = Vec::new();
    let mut gap = f64::NEG_INFINITY;
    let mut pairs = 0;
    for (i, a) in grid.iter().enumerate() {
        for b in &grid[i + 1..] {
            if a.0 == b.0 && a.1 < b.1 {
                gap = gap.max(ordering_gap(&a.2, &b.2));
                pairs += 1;
            }
        }
    }
    if pairs > 0 {
        out.push(
            CheckRecord::new("sigma-ordering", name)
                .measured("max_gap", gap)
                .measured("pairs", pairs as f64)
                .threshold("max_gap", h)
                .pass(gap <= h),
        );
    }
    let mut worst: f64 = 1.0;
    let mut halvings = 0;
    for a in grid {
        for b in grid {
            if a.1 == b.1 && (b.0 - 0.5 * a.0).abs() < 1e-12 {
                let r = if a.3 > b.3 { a.3 / b.3 } else { b.3 / a.3 };
                worst = worst.max(if r.is_finite() && r > 0.0 { r } else { f64::INFINITY });
                halvings += 1;
            }
        }
    }
    if halvings > 0 {
        out.push(
            CheckRecord::new("h-lower-stability", name)
                .measured("max_ratio", worst)
                .measured("halvings", halvings as f64)
                .threshold("max_ratio", 2.0)
                .pass(worst <= 2.0),
        );
    }
    out
}

//! Acceptance suite. Every criterion prints one `[PASS]`/`[FAIL]` line and asserts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use fbflow::blowup::{expanding_hole_experiment, interface_density, HoleConfig};
use fbflow::elliptic::{solve_continuation, TranslatorParams};
use fbflow::harness::{bundled, read_snapshot, run_scenario, encode_snapshot, verify_all, CheckRecord, RunOptions};
use fbflow::interface::Interface;
use fbflow::{BarrierDomain, Bounds, Grid2, GridField, InitialRegion, Mode, RegionShape, Vec2};

struct Ran {
    checks: Vec<CheckRecord>,
    elapsed: Duration,
}

impl Ran {
    fn check(&self, id: &str) -> &CheckRecord {
        self.checks.iter().find(|c| c.id == id).unwrap_or_else(|| panic!("no check {id}"))
    }

    fn m(&self, id: &str, key: &str) -> f64 {
        self.check(id).measured.get(key).copied().unwrap_or(f64::NAN)
    }
}

fn run_bundled(name: &str) -> Ran {
    let cfg = bundled(name).unwrap();
    let t0 = Instant::now();
    let o = run_scenario(&cfg, &RunOptions { dry: true, ..Default::default() }).unwrap();
    Ran { checks: o.report.checks, elapsed: t0.elapsed() }
}

macro_rules! cached {
    ($f:ident, $name:expr) => {
        fn $f() -> &'static Ran {
            static CELL: OnceLock<Ran> = OnceLock::new();
            CELL.get_or_init(|| run_bundled($name))
        }
    };
}

cached!(circle, "circle");
cached!(halfcircle, "halfcircle");
cached!(halftorus, "halftorus-axisym");
cached!(sweep, "translator-halfdisc");

fn verdict(id: &str, title: &str, pass: bool, detail: String) {
    println!("[{}] {id} {title}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "{id} {title}: {detail}");
}

fn passed(r: &Ran, id: &str) -> bool {
    r.check(id).pass
}

#[test]
fn c01_shrinking_circle() {
    let r = circle();
    let pass = passed(r, "extinction-time") && passed(r, "radius-law") && r.elapsed < Duration::from_secs(60);
    verdict(
        "C01",
        "shrinking circle",
        pass,
        format!(
            "T_ext {:.5} (0.125 +- 5%), radius error {:.2e} (<= 3h = {:.2e}), {:.1?}",
            r.m("extinction-time", "t_ext"),
            r.m("radius-law", "max_error"),
            3.0 / 128.0,
            r.elapsed
        ),
    );
}

#[test]
fn c02_free_boundary_halfcircle() {
    let r = halfcircle();
    let pass = passed(r, "extinction-time")
        && passed(r, "radius-law")
        && passed(r, "contact-angle")
        && r.elapsed < Duration::from_secs(60);
    verdict(
        "C02",
        "free-boundary half-circle",
        pass,
        format!(
            "T_ext {:.5}, radius error {:.2e}, max contact-angle error {:.2e} rad over {} samples, {:.1?}",
            r.m("extinction-time", "t_ext"),
            r.m("radius-law", "max_error"),
            r.m("contact-angle", "max_error"),
            r.m("contact-angle", "samples"),
            r.elapsed
        ),
    );
}

#[test]
fn c03_axisymmetric_sphere() {
    let r = run_bundled("sphere-axisym");
    let pass = passed(&r, "extinction-time") && passed(&r, "ratio-a-over-h") && r.elapsed < Duration::from_secs(120);
    verdict(
        "C03",
        "axisymmetric sphere",
        pass,
        format!(
            "T_ext {:.5} (0.0625 +- 5%), |A|/H max relative error {:.2e} over {} snapshots, {:.1?}",
            r.m("extinction-time", "t_ext"),
            r.m("ratio-a-over-h", "max_relative_error"),
            r.m("ratio-a-over-h", "snapshots"),
            r.elapsed
        ),
    );
}

/// Classical RK4 for `u'' = f(u, u')` returning `(u, u')` at `x1`.
fn rk4(f: &dyn Fn(f64, f64) -> f64, x0: f64, x1: f64, u: f64, p: f64, steps: usize) -> (f64, f64) {
    let dx = (x1 - x0) / steps as f64;
    let (mut u, mut p) = (u, p);
    for _ in 0..steps {
        let (k1u, k1p) = (p, f(u, p));
        let (k2u, k2p) = (p + 0.5 * dx * k1p, f(u + 0.5 * dx * k1u, p + 0.5 * dx * k1p));
        let (k3u, k3p) = (p + 0.5 * dx * k2p, f(u + 0.5 * dx * k2u, p + 0.5 * dx * k2p));
        let (k4u, k4p) = (p + dx * k3p, f(u + dx * k3u, p + dx * k3p));
        u += dx / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
        p += dx / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
    }
    (u, p)
}

/// Max deviation of the slab translator from the 1D shooting solution.
fn slab_oracle_error() -> f64 {
    let (eps, sigma, h) = (0.5, 1.0, 1.0 / 256.0);
    let w = 2.0 * h;
    let dom = BarrierDomain::slab(Vec2::new(0.0, 1.0), 0.0, w);
    let k = InitialRegion::new(RegionShape::Band { normal: Vec2::new(1.0, 0.0), lo: 0.0, hi: 1.0 }, true);
    let p = TranslatorParams::new(eps, sigma)
        .with_h(h)
        .with_tau(0.0)
        .with_window(Bounds::new(Vec2::new(-0.125, -w), Vec2::new(1.125, w)));
    let sol = solve_continuation(&k, &dom, &p).unwrap();
    let f = |u: f64, du: f64| {
        let s = (eps * eps + du * du).sqrt();
        (sigma * u - 1.0 / s) * s * s * s / (eps * eps)
    };
    let (mut lo, mut hi) = (0.0, 1.0 / (sigma * eps));
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if rk4(&f, 0.5, 1.0, mid, 0.0, 4000).0 > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let u0 = 0.5 * (lo + hi);
    let g = sol.grid();
    sol.discretization
        .cells
        .iter()
        .map(|&c| {
            let d = (g.center(c % g.nx, c / g.nx).x - 0.5).abs();
            (sol.u.data[c] - rk4(&f, 0.5, 0.5 + d, u0, 0.0, 2000).0).abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn c04_translator_solver() {
    let r = sweep();
    let cont: Vec<&CheckRecord> = r.checks.iter().filter(|c| c.id.starts_with("continuation")).collect();
    let cont_ok = cont.iter().all(|c| c.pass);
    let worst_res = cont.iter().map(|c| c.measured["residual"]).fold(0.0, f64::max);
    let ordering = r.check("sigma-ordering");
    let oracle = slab_oracle_error();
    let pass = cont.len() == 10
        && cont_ok
        && worst_res <= 1e-8
        && ordering.pass
        && ordering.measured["pairs"] == 9.0
        && oracle <= 1e-4
        && r.elapsed < Duration::from_secs(300);
    verdict(
        "C04",
        "translator solver",
        pass,
        format!(
            "{} solves reach kappa = 1, max residual {worst_res:.1e}, sup bound at every step {cont_ok}, \
             sigma-ordering gap {:.1e} (<= h), 1D oracle error {oracle:.1e}, sweep {:.1?}",
            cont.len(),
            ordering.measured["max_gap"],
            r.elapsed
        ),
    );
}

#[test]
fn c05_v_lower_bound() {
    let flat = run_bundled("translator-flat");
    let disc = sweep();
    let v_flat = flat.check("v-lower-bound");
    let v_disc = disc.check("v-lower-bound");
    let stab = disc.check("h-lower-stability");
    let pass = v_flat.pass
        && v_disc.pass
        && v_flat.measured["interior_slack"] > 0.0
        && v_disc.measured["interior_slack"] > 0.0
        && stab.pass;
    verdict(
        "C05",
        "V lower bound",
        pass,
        format!(
            "flat ratios {:.3}/{:.3} interior slack {:.3}; disc ratios {:.3}/{:.3} interior slack {:.3}; \
             fitted c ratio under eps-halving {:.3} (<= 2)",
            v_flat.measured["ratio_1"],
            v_flat.measured["ratio_2"],
            v_flat.measured["interior_slack"],
            v_disc.measured["ratio_1"],
            v_disc.measured["ratio_2"],
            v_disc.measured["interior_slack"],
            stab.measured["max_ratio"]
        ),
    );
}

#[test]
fn c06_perturbed_sff() {
    let disc = run_bundled("translator-disc");
    let sff = disc.check("perturbed-sff");
    let mut monitors: Vec<CheckRecord> = Vec::new();
    for r in [&disc, sweep(), &run_bundled("translator-flat"), &run_bundled("translator-bounds")] {
        monitors.extend(r.checks.iter().filter(|c| c.id.starts_with("monitor-argmax")).cloned());
    }
    let neumann = monitors.iter().filter(|c| !c.pass).count();
    let pass = sff.pass && neumann == 0 && !monitors.is_empty();
    verdict(
        "C06",
        "perturbed second fundamental form",
        pass,
        format!(
            "max|B(X,N)| {:.4} (<= 10h = {:.4}), max|A(X,N)| {:.4} (>= 0.3/R = 0.15), monitor argmax on Neumann cells in {neumann} of {} solves",
            sff.measured["max_b_xn"],
            10.0 / 160.0,
            sff.measured["max_a_xn"],
            monitors.len()
        ),
    );
}

#[test]
fn c07_gaussian_density() {
    // Static line y = 0 far from the barrier.
    let g = Grid2::new(240, 240, Vec2::new(-3.0, -3.0), 0.025, Mode::Planar).unwrap();
    let line = Interface::extract(&GridField::from_fn(&g, |x| -x.y + 1e-3), None);
    let dom = BarrierDomain::disc(Vec2::zeros(), 100.0);
    let theta_line = interface_density(&dom, &line, Mode::Planar, &Vec2::new(0.0, 1e-3), 0.4);
    let c = circle().check("density");
    let hc = halfcircle().check("density");
    let pass = (theta_line - 1.0).abs() <= 0.01 && c.pass && hc.pass;
    verdict(
        "C07",
        "Gaussian density",
        pass,
        format!(
            "line {theta_line:.5}; circle {:.5} (err {:.2}%, ladder monotone {}); half-circle reflected {:.5} (err {:.2}%, ladder monotone {})",
            c.measured["theta"],
            100.0 * c.measured["relative_error"],
            c.measured["ladder_monotone"] == 1.0,
            hc.measured["theta"],
            100.0 * hc.measured["relative_error"],
            hc.measured["ladder_monotone"] == 1.0
        ),
    );
}

#[test]
fn c08_halftorus_neckpinch() {
    let r = halftorus();
    let t = r.check("tangent");
    let pass = passed(r, "singular-event") && t.pass && r.elapsed < Duration::from_secs(600);
    verdict(
        "C08",
        "half-torus neckpinch",
        pass,
        format!(
            "boundary event at t = {:.5}; {} residual {:.4}; {:.1?}",
            r.m("singular-event", "t"),
            t.note.as_deref().unwrap_or(""),
            t.measured["residual"],
            r.elapsed
        ),
    );
}

#[test]
fn c09_annulus_popping() {
    let r = run_bundled("annulus-pop");
    let t = r.check("tangent");
    let pass = passed(&r, "singular-event") && t.pass;
    verdict(
        "C09",
        "annulus popping",
        pass,
        format!(
            "pop at t = {:.4}, wall distance {:.2e}; {} multiplicity {} residual {:.4}",
            r.m("singular-event", "t"),
            r.m("singular-event", "wall_distance"),
            t.note.as_deref().unwrap_or(""),
            t.measured["multiplicity"],
            t.measured["residual"]
        ),
    );
}

#[test]
fn c10_one_sided_minimization() {
    let c = halfcircle().check("one-sided");
    let pass = c.pass && c.measured["competitors"] >= 10.0 && c.measured["min_slack"] > 0.0;
    verdict(
        "C10",
        "one-sided minimization",
        pass,
        format!(
            "{} competitors at {} snapshots, min perimeter excess over F != K_t {:.4}",
            c.measured["competitors"], c.measured["snapshots"], c.measured["min_slack"]
        ),
    );
}

#[test]
fn c11_noncollapsing() {
    let t = halftorus().check("noncollapsing");
    let c = circle().check("noncollapsing");
    let hc = halfcircle().check("noncollapsing");
    let pass = t.pass && c.pass && hc.pass;
    verdict(
        "C11",
        "noncollapsing",
        pass,
        format!(
            "half-torus min r H {:.3} (>= 0.5) over {} snapshots; circle {:.3}, half-circle {:.3} (1 +- 5%)",
            t.measured["min_r_in_h"].min(t.measured["min_r_out_h"]),
            t.measured["snapshots"],
            c.measured["min_r_in_h"].min(c.measured["min_r_out_h"]),
            hc.measured["min_r_in_h"].min(hc.measured["min_r_out_h"])
        ),
    );
}

#[test]
fn c12_dumbbell_long_time() {
    let two = run_bundled("dumbbell-twosheet");
    let one = run_bundled("dumbbell-onesheet");
    let (a, b) = (two.check("long-time"), one.check("long-time"));
    verdict(
        "C12",
        "dumbbell long-time behavior",
        a.pass && b.pass,
        format!(
            "two-sheeted: {} sheets, max H {:.4} at t = {}; one-sheeted: {} sheets, max H {:.4} at t = {}",
            a.measured["sheets"], a.measured["max_h"], a.measured["t"], b.measured["sheets"], b.measured["max_h"], b.measured["t"]
        ),
    );
}

#[test]
fn c13_expanding_hole() {
    let achieved: Vec<f64> = [0.1, 0.05, 0.025]
        .iter()
        .map(|&w| expanding_hole_experiment(&HoleConfig::new(w, 0.1)).unwrap().achieved_a)
        .collect();
    let pass = achieved.windows(2).all(|p| p[1] > p[0]);
    verdict("C13", "expanding hole", pass, format!("achieved A for w = 0.1, 0.05, 0.025: {achieved:.3?}"));
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn c14_determinism_and_format() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut reports = Vec::new();
    for d in &dirs {
        let opts = RunOptions { out: Some(d.path().into()), stamp: Some("run".into()), ..Default::default() };
        reports.push(verify_all("fast", &opts).unwrap());
    }
    let (a, b) = (tree(dirs[0].path()), tree(dirs[1].path()));
    let identical = a == b;
    let snaps: Vec<&PathBuf> = a.keys().filter(|p| p.extension().is_some_and(|e| e == "fbf")).collect();
    let mut exact = !snaps.is_empty();
    for p in &snaps {
        let (field, t) = read_snapshot(dirs[0].path().join(p)).unwrap();
        exact &= encode_snapshot(&field, t) == a[*p];
    }
    let pass = identical && exact && reports[0].pass;
    verdict(
        "C14",
        "determinism and format",
        pass,
        format!(
            "{} files byte-identical across two verify-fast runs: {identical}; {} snapshots round-trip bit-exact: {exact}; suite {}/{} passed",
            a.len(),
            snaps.len(),
            reports[0].summary.passed,
            reports[0].summary.total
        ),
    );
}

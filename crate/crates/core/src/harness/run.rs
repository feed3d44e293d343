//! Scenario execution, artifacts and the verification driver.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::checks::{flow_checks, sweep_checks, translator_checks};
use super::config::{parse_scenario, ScenarioConfig, TranslatorCheck};
use super::report::{CheckRecord, VerificationReport};
use super::snapshot::write_snapshot;
use crate::elliptic::{check_h_lower, solve_translator, TranslatorSolution};
use crate::error::{FlowError, Result};
use crate::levelset::{run, FlowTrajectory};

/// Bundled scenario files, by name.
pub const BUNDLED: &[(&str, &str)] = &[
    ("circle", include_str!("../../../../scenarios/circle.cfg")),
    ("halfcircle", include_str!("../../../../scenarios/halfcircle.cfg")),
    ("sphere-axisym", include_str!("../../../../scenarios/sphere-axisym.cfg")),
    ("halftorus-axisym", include_str!("../../../../scenarios/halftorus-axisym.cfg")),
    ("annulus-pop", include_str!("../../../../scenarios/annulus-pop.cfg")),
    ("dumbbell-onesheet", include_str!("../../../../scenarios/dumbbell-onesheet.cfg")),
    ("dumbbell-twosheet", include_str!("../../../../scenarios/dumbbell-twosheet.cfg")),
    ("translator-bounds", include_str!("../../../../scenarios/translator-bounds.cfg")),
    ("translator-halfdisc", include_str!("../../../../scenarios/translator-halfdisc.cfg")),
    ("translator-disc", include_str!("../../../../scenarios/translator-disc.cfg")),
    ("translator-flat", include_str!("../../../../scenarios/translator-flat.cfg")),
];

/// Scenarios of `verify fast`.
pub const FAST: &[&str] = &["circle", "halfcircle", "translator-bounds"];

/// Grid spacing of the flow scenarios under `verify fast`.
pub const FAST_RESOLUTION: f64 = 1.0 / 64.0;

pub fn bundled(name: &str) -> Option<ScenarioConfig> {
    let text = BUNDLED.iter().find(|(n, _)| *n == name)?.1;
    Some(parse_scenario(text).expect("bundled scenarios are valid"))
}

pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

/// Resolves `name` as a file path, or else as the name of a bundled scenario.
pub fn resolve_scenario(name: &str) -> Result<ScenarioConfig> {
    let path = Path::new(name);
    if path.exists() {
        return super::config::load_scenario(path);
    }
    let stem = name.strip_suffix(".cfg").unwrap_or(name);
    bundled(stem).ok_or_else(|| FlowError::Io(format!("{name}: no such file or bundled scenario")))
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Output root. When `None`, `FBFLOW_OUT`, the config's `output`, then `out`.
    pub out: Option<PathBuf>,
    pub resolution: Option<f64>,
    pub until: Option<f64>,
    /// Run directory name below `<root>/<scenario>/`; defaults to a UTC timestamp.
    pub stamp: Option<String>,
    /// Skip writing artifacts.
    pub dry: bool,
    pub parallel: bool,
}

impl RunOptions {
    fn root(&self, configured: Option<&str>) -> PathBuf {
        if let Some(o) = &self.out {
            return o.clone();
        }
        if let Some(o) = std::env::var_os("FBFLOW_OUT").filter(|v| !v.is_empty()) {
            return PathBuf::from(o);
        }
        PathBuf::from(configured.unwrap_or("out"))
    }

    fn stamp(&self) -> String {
        self.stamp.clone().unwrap_or_else(|| chrono::Utc::now().format("%Y%m%dT%H%M%SZ").to_string())
    }

    fn apply(&self, mut cfg: ScenarioConfig) -> Result<ScenarioConfig> {
        if let Some(h) = self.resolution {
            cfg = cfg.with_resolution(h)?;
        }
        if let Some(t) = self.until {
            if cfg.flow.is_some() {
                cfg = cfg.with_horizon(t)?;
            }
        }
        Ok(cfg)
    }
}

/// Artifacts of one scenario run.
#[derive(Debug)]
pub struct ScenarioOutcome {
    pub config: ScenarioConfig,
    pub report: VerificationReport,
    pub dir: Option<PathBuf>,
    pub trajectory: Option<FlowTrajectory>,
    pub solution: Option<TranslatorSolution>,
}

fn run_dir(root: &Path, name: &str, stamp: &str) -> Result<PathBuf> {
    let base = root.join(name);
    let mut dir = base.join(stamp);
    let mut k = 1;
    while dir.exists() {
        dir = base.join(format!("{stamp}-{k}"));
        k += 1;
    }
    std::fs::create_dir_all(dir.join("snapshots"))?;
    Ok(dir)
}

fn write_csv<T: serde::Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| FlowError::Io(e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| FlowError::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the flow and/or translator problem of `cfg`, evaluates its checks and writes
/// `config.toml`, `snapshots/`, `series.csv` and `report.json` to
/// `<root>/<name>/<stamp>/`.
pub fn run_scenario(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<ScenarioOutcome> {
    let cfg = opts.apply(cfg.clone())?;
    let wrap = |e: FlowError| FlowError::Scenario { scenario: cfg.name.clone(), source: Box::new(e) };
    let dir = if opts.dry { None } else { Some(run_dir(&opts.root(cfg.output.as_deref()), &cfg.name, &opts.stamp())?) };
    if let Some(d) = &dir {
        std::fs::write(d.join("config.toml"), cfg.to_toml())?;
    }
    let dom = cfg.domain();
    let k = cfg.region();
    let mut checks = Vec::new();
    let mut trajectory = None;
    let mut solution = None;
    if let Some(fc) = cfg.flow_config() {
        let traj = run(&k, &dom, &fc).map_err(wrap)?;
        checks.extend(flow_checks(&cfg, &traj));
        if let Some(d) = &dir {
            let states = std::iter::once(&traj.initial).chain(&traj.snapshots);
            for (i, st) in states.enumerate() {
                write_snapshot(d.join("snapshots").join(format!("phi_{i:04}.fbf")), &st.phi, st.t)?;
            }
            write_csv(&d.join("series.csv"), &traj.series)?;
        }
        trajectory = Some(traj);
    }
    if cfg.translator.is_some() {
        let (recs, sol) = run_translator(&cfg).map_err(wrap)?;
        checks.extend(recs);
        if let Some(d) = &dir {
            write_snapshot(d.join("snapshots").join("u.fbf"), &sol.u, sol.kappa)?;
            let name = if trajectory.is_some() { "continuation.csv" } else { "series.csv" };
            write_csv(&d.join(name), &sol.trace)?;
        }
        solution = Some(sol);
    }
    let report = VerificationReport::new(&cfg.name, checks);
    if let Some(d) = &dir {
        std::fs::write(d.join("report.json"), report.to_json())?;
    }
    Ok(ScenarioOutcome { config: cfg, report, dir, trajectory, solution })
}

fn run_translator(cfg: &ScenarioConfig) -> Result<(Vec<CheckRecord>, TranslatorSolution)> {
    let t = cfg.translator.as_ref().expect("translator section");
    let dom = cfg.domain();
    let k = cfg.region();
    let default_check = TranslatorCheck {
        max_residual: 1e-8,
        v_bound: false,
        h_lower: false,
        monitor: false,
        b_cells: None,
        a_min: None,
    };
    let x = cfg.checks.translator.clone().unwrap_or(default_check);
    let p = cfg.translator_params(None, None).unwrap();
    let sol = solve_translator(&k, &dom, &p)?;
    let mut out = translator_checks(&cfg.name, "", &sol, &p, &x);
    if !t.sweep_eps.is_empty() || !t.sweep_sigma.is_empty() {
        let eps: Vec<f64> = if t.sweep_eps.is_empty() { vec![t.eps] } else { t.sweep_eps.clone() };
        let sig: Vec<f64> = if t.sweep_sigma.is_empty() { vec![t.sigma] } else { t.sweep_sigma.clone() };
        let pairs: Vec<(f64, f64)> = eps.iter().flat_map(|&e| sig.iter().map(move |&s| (e, s))).collect();
        let solved: Vec<Result<(f64, f64, TranslatorSolution, f64, Vec<CheckRecord>)>> = pairs
            .par_iter()
            .map(|&(e, s)| {
                let q = cfg.translator_params(Some(e), Some(s)).unwrap();
                let sol = solve_translator(&k, &dom, &q)?;
                let c = check_h_lower(&sol, &q).c;
                let recs = translator_checks(&cfg.name, &format!("eps={e},sigma={s}"), &sol, &q, &x);
                Ok((e, s, sol, c, recs))
            })
            .collect();
        let mut grid = Vec::new();
        for r in solved {
            let (e, s, sol, c, recs) = r?;
            out.extend(recs);
            grid.push((e, s, sol, c));
        }
        out.extend(sweep_checks(&cfg.name, &grid, cfg.grid.h));
    }
    Ok((out, sol))
}

/// Runs a suite: `fast` or `full`. Scenario errors become failing records.
pub fn verify_all(selector: &str, opts: &RunOptions) -> Result<VerificationReport> {
    let (names, fast): (Vec<&str>, bool) = match selector {
        "fast" => (FAST.to_vec(), true),
        "full" => (bundled_names().collect(), false),
        "" => return Err(FlowError::Usage("verify needs a suite selector: fast or full".into())),
        other => return Err(FlowError::Usage(format!("unknown suite {other:?}; expected fast or full"))),
    };
    let run_one = |name: &&str| -> VerificationReport {
        let mut cfg = bundled(name).unwrap();
        if fast && cfg.flow.is_some() && opts.resolution.is_none() {
            cfg.grid.h = FAST_RESOLUTION;
        }
        match run_scenario(&cfg, opts) {
            Ok(o) => o.report,
            Err(e) => VerificationReport::new(name, vec![CheckRecord::new("execution", name).note(e.to_string())]),
        }
    };
    let reports: Vec<VerificationReport> =
        if opts.parallel { names.par_iter().map(run_one).collect() } else { names.iter().map(run_one).collect() };
    let suite = VerificationReport::merge(selector, reports);
    if !opts.dry {
        let dir = run_dir(&opts.root(None), &format!("verify-{selector}"), &opts.stamp())?;
        std::fs::remove_dir(dir.join("snapshots"))?;
        std::fs::write(dir.join("report.json"), suite.to_json())?;
    }
    Ok(suite)
}

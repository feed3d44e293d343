//! `fbflow` command-line interface.
//!
//! Exit status: 0 when every check passes, 1 when a check fails, 2 on errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fbflow::blowup::{classify_tangent, rescale};
use fbflow::harness::{resolve_scenario, run_scenario, verify_all, CheckRecord, RunOptions, VerificationReport};
use fbflow::{FlowError, Vec2};

#[derive(Parser)]
#[command(name = "fbflow", version, about = "Free-boundary mean curvature flow laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Output root directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Grid spacing override.
    #[arg(long, global = true, value_name = "H")]
    resolution: Option<f64>,
    /// Flow horizon override.
    #[arg(long, global = true, value_name = "T")]
    until: Option<f64>,
    /// Run independent scenarios concurrently.
    #[arg(long, global = true)]
    parallel: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file or bundled scenario and its checks.
    Run { scenario: String },
    /// Run only the translator problem of a scenario.
    Translator { scenario: String },
    /// Flow a scenario and classify the tangent flow at a spacetime point.
    Blowup {
        scenario: String,
        /// Spacetime point `x,y,t`.
        #[arg(long, value_parser = parse_center, allow_hyphen_values = true)]
        center: (f64, f64, f64),
        #[arg(long)]
        lambda: f64,
    },
    /// Run a suite: `fast` or `full`.
    Verify { suite: Option<String> },
}

fn parse_center(s: &str) -> Result<(f64, f64, f64), String> {
    let v: Vec<f64> = s.split(',').map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}"))).collect::<Result<_, _>>()?;
    match v[..] {
        [x, y, t] => Ok((x, y, t)),
        _ => Err(format!("expected x,y,t, got {s:?}")),
    }
}

fn print(report: &VerificationReport) {
    for line in report.lines() {
        println!("{line}");
    }
    let s = report.summary;
    println!("{}: {} passed, {} failed", report.suite, s.passed, s.failed);
}

fn status(report: &VerificationReport) -> ExitCode {
    if report.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn execute(cli: Cli) -> Result<ExitCode, FlowError> {
    let opts = RunOptions {
        out: cli.common.out,
        resolution: cli.common.resolution,
        until: cli.common.until,
        parallel: cli.common.parallel,
        ..Default::default()
    };
    match cli.command {
        Command::Run { scenario } => {
            let cfg = resolve_scenario(&scenario)?;
            let o = run_scenario(&cfg, &opts)?;
            print(&o.report);
            if let Some(d) = &o.dir {
                println!("artifacts: {}", d.display());
            }
            Ok(status(&o.report))
        }
        Command::Translator { scenario } => {
            let mut cfg = resolve_scenario(&scenario)?;
            if cfg.translator.is_none() {
                return Err(FlowError::Usage(format!("scenario {} has no [translator] section", cfg.name)));
            }
            cfg.flow = None;
            cfg.checks = fbflow::harness::config::CheckSpec { translator: cfg.checks.translator.clone(), ..Default::default() };
            let o = run_scenario(&cfg, &opts)?;
            print(&o.report);
            Ok(status(&o.report))
        }
        Command::Blowup { scenario, center: (x, y, t), lambda } => {
            let mut cfg = resolve_scenario(&scenario)?;
            if cfg.flow.is_none() {
                return Err(FlowError::Usage(format!("scenario {} has no [flow] section", cfg.name)));
            }
            cfg.translator = None;
            cfg.checks = Default::default();
            let o = run_scenario(&cfg, &RunOptions { dry: true, ..opts })?;
            let traj = o.trajectory.expect("flow scenarios record a trajectory");
            let frame = rescale(&traj, Vec2::new(x, y), t, lambda)?;
            let model = classify_tangent(&frame);
            println!("{}", serde_json::to_string_pretty(&model).expect("models serialize"));
            let rec = CheckRecord::new("blowup", &cfg.name)
                .measured("residual", model.residual)
                .measured("density", model.density)
                .pass(model.residual.is_finite());
            Ok(status(&VerificationReport::new(&cfg.name, vec![rec])))
        }
        Command::Verify { suite } => {
            let report = verify_all(suite.as_deref().unwrap_or(""), &opts)?;
            print(&report);
            Ok(status(&report))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

use fbflow::harness::config::RegionSpec;
use fbflow::harness::*;
use fbflow::{FlowError, Grid2, GridField, Mode, Vec2};
use proptest::prelude::*;

const TINY: &str = r#"
name = "tiny-circle"
seed = 7

[domain]
kind = "disc"
radius = 1.0

[region]
kind = "disc"
radius = 0.25

[grid]
h = 0.03125

[flow]
horizon = 0.05
outputs = 2

[checks.extinction]
expected = 0.03125
rel_tol = 0.1
"#;

fn validation_path(text: &str) -> String {
    match parse_scenario(text) {
        Err(FlowError::Validation { path, .. }) => path,
        other => panic!("expected a validation error, got {other:?}"),
    }
}

#[test]
fn bundled_halfcircle_is_planar() {
    let cfg = bundled("halfcircle").unwrap();
    assert_eq!(cfg.mode, Mode::Planar);
    assert!(matches!(cfg.region, RegionSpec::HalfDisc { .. }));
}

#[test]
fn every_bundled_scenario_round_trips_through_its_echo() {
    for name in bundled_names() {
        let cfg = bundled(name).unwrap();
        assert_eq!(cfg.name, name);
        assert_eq!(parse_scenario(&cfg.to_toml()).unwrap(), cfg, "{name}");
    }
}

#[test]
fn defaults_are_filled() {
    let cfg = parse_scenario(TINY).unwrap();
    let f = cfg.flow.as_ref().unwrap();
    assert_eq!((f.dt_factor, f.band_width, f.reinit_every), (0.2, 8, 10));
    assert!(cfg.to_toml().contains("dt_factor = 0.2"));
}

#[test]
fn nonpositive_h_is_rejected_at_grid_h() {
    assert_eq!(validation_path(&TINY.replace("h = 0.03125", "h = 0.0")), "grid.h");
    assert_eq!(validation_path(&TINY.replace("h = 0.03125", "h = -1.0")), "grid.h");
}

#[test]
fn unknown_keys_are_named() {
    assert_eq!(validation_path(&TINY.replace("seed = 7", "seed = 7\nfoo = 1")), "foo");
    assert_eq!(validation_path(&TINY.replace("h = 0.03125", "h = 0.03125\nfoo = 1")), "grid.foo");
}

#[test]
fn other_invalid_fields_carry_their_path() {
    assert_eq!(validation_path(&TINY.replace("radius = 0.25", "radius = -0.25")), "region.radius");
    assert_eq!(validation_path(&TINY.replace("horizon = 0.05", "horizon = 0.05\ndt_factor = 0.5")), "flow.dt_factor");
    assert_eq!(validation_path(&TINY.replace("h = 0.03125", "h = \"fine\"")), "grid.h");
    assert_eq!(validation_path(&TINY.replace("kind = \"disc\"\nradius = 1.0", "kind = \"cube\"")), "domain.kind");
}

#[test]
fn malformed_text_is_a_parse_error() {
    assert!(matches!(parse_scenario("name = \n[grid"), Err(FlowError::Parse(_))));
}

#[test]
fn verify_rejects_missing_or_unknown_selector() {
    let opts = RunOptions { dry: true, ..Default::default() };
    assert!(matches!(verify_all("", &opts), Err(FlowError::Usage(_))));
    assert!(matches!(verify_all("medium", &opts), Err(FlowError::Usage(_))));
}

#[test]
fn run_writes_the_artifact_layout() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_scenario(TINY).unwrap();
    let opts = RunOptions { out: Some(dir.path().into()), stamp: Some("s".into()), ..Default::default() };
    let o = run_scenario(&cfg, &opts).unwrap();
    let run = dir.path().join("tiny-circle").join("s");
    assert_eq!(o.dir.as_deref(), Some(run.as_path()));
    let echo = std::fs::read_to_string(run.join("config.toml")).unwrap();
    assert_eq!(parse_scenario(&echo).unwrap(), cfg);
    let csv = std::fs::read_to_string(run.join("series.csv")).unwrap();
    assert!(csv.starts_with("t,area,perimeter,min_h,max_h,max_a_over_h,contact_angle_error\n"));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(run.join("report.json")).unwrap()).unwrap();
    let check = &report["checks"][0];
    assert_eq!(check["id"], "extinction-time");
    assert_eq!(check["scenario"], "tiny-circle");
    assert!(check["measured"]["t_ext"].is_number() && check["thresholds"]["expected"].is_number());
    let (phi, t) = read_snapshot(run.join("snapshots").join("phi_0000.fbf")).unwrap();
    assert_eq!(t, 0.0);
    assert_eq!(phi.grid.h, 0.03125);
    assert!(o.report.pass, "{:?}", o.report.lines());

    // A second run with the same stamp lands in a fresh directory.
    let again = run_scenario(&cfg, &opts).unwrap();
    assert_eq!(again.dir.unwrap(), dir.path().join("tiny-circle").join("s-1"));
}

#[test]
fn overrides_apply_before_running() {
    let cfg = parse_scenario(TINY).unwrap();
    let opts = RunOptions { dry: true, resolution: Some(1.0 / 16.0), until: Some(0.01), ..Default::default() };
    let o = run_scenario(&cfg, &opts).unwrap();
    assert_eq!(o.config.grid.h, 1.0 / 16.0);
    assert_eq!(o.trajectory.unwrap().t_end(), 0.01);
    // The circle is still alive at t = 0.01.
    assert!(!o.report.pass);
    let bad = RunOptions { dry: true, resolution: Some(0.0), ..Default::default() };
    assert!(matches!(run_scenario(&cfg, &bad), Err(FlowError::Validation { .. })));
}

proptest! {
    #[test]
    fn snapshots_round_trip_bit_exactly(
        nx in 4usize..12,
        ny in 4usize..12,
        bits in proptest::collection::vec(any::<u64>(), 144),
        ox in -10.0f64..10.0,
        h in 1e-4f64..1.0,
        t in any::<f64>(),
        axisym in any::<bool>(),
    ) {
        let mode = if axisym { Mode::Axisym } else { Mode::Planar };
        let x0 = if axisym { 0.0 } else { ox };
        let g = Grid2::new(nx, ny, Vec2::new(x0, -ox), h, mode).unwrap();
        let data: Vec<f64> = bits[..nx * ny].iter().map(|b| f64::from_bits(*b)).collect();
        let f = GridField { grid: g, data };
        let bytes = encode_snapshot(&f, t);
        let (back, t2) = decode_snapshot(&bytes).unwrap();
        prop_assert_eq!(t2.to_bits(), t.to_bits());
        prop_assert_eq!(&back.grid, &f.grid);
        prop_assert!(back.data.iter().zip(&f.data).all(|(a, b)| a.to_bits() == b.to_bits()));
        prop_assert_eq!(encode_snapshot(&back, t2), bytes);
    }
}

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use fbflow::elliptic::TranslatorGrid;
use fbflow::harness::{decode_snapshot, encode_snapshot};
use fbflow::levelset::{step, BarrierGrid, FlowConfig, FlowState};
use fbflow::{BarrierDomain, InitialRegion, RegionShape, Vec2};

fn level_set_step(c: &mut Criterion) {
    let dom = BarrierDomain::disc(Vec2::zeros(), 2.0);
    let k = InitialRegion::new(RegionShape::HalfDisc { foot: Vec2::new(0.0, -2.0), radius: 0.5 }, true);
    let cfg = FlowConfig::new(1.0 / 128.0, 0.1);
    let bg = BarrierGrid::new(&dom, &cfg).unwrap();
    let phi = bg.initial_phi(&k, &cfg).unwrap();
    let state = FlowState { t: 0.0, phi, step: 0 };
    c.bench_function("level_set_step_h128", |b| {
        b.iter(|| step(&bg, black_box(&state), cfg.dt(), cfg.delta()).unwrap())
    });
}

fn translator_jacobian(c: &mut Criterion) {
    let dom = BarrierDomain::disc(Vec2::zeros(), 2.0);
    let k = InitialRegion::new(RegionShape::HalfDisc { foot: Vec2::new(0.0, -2.0), radius: 0.5 }, true);
    let tg = TranslatorGrid::new(&k, &dom, 1.0 / 160.0, None).unwrap();
    let u: Vec<f64> = (0..tg.len()).map(|i| 0.1 + 1e-3 * (i % 7) as f64).collect();
    c.bench_function("translator_residual_h160", |b| b.iter(|| tg.residual(black_box(&u), 0.1, 1.0, 1.0)));
    c.bench_function("translator_linearize_h160", |b| b.iter(|| tg.linearize(black_box(&u), 0.1, 1.0, 1.0)));
}

fn snapshot_roundtrip(c: &mut Criterion) {
    let dom = BarrierDomain::disc(Vec2::zeros(), 2.0);
    let cfg = FlowConfig::new(1.0 / 128.0, 0.1);
    let bg = BarrierGrid::new(&dom, &cfg).unwrap();
    let k = InitialRegion::new(RegionShape::Disc { center: Vec2::zeros(), radius: 0.5 }, true);
    let phi = bg.initial_phi(&k, &cfg).unwrap();
    c.bench_function("snapshot_roundtrip_h128", |b| {
        b.iter(|| decode_snapshot(&encode_snapshot(black_box(&phi), 0.5)).unwrap())
    });
}

criterion_group!(benches, level_set_step, translator_jacobian, snapshot_roundtrip);
criterion_main!(benches);

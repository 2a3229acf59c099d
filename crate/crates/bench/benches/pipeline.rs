use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use nalgebra::Quaternion;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use twinsync_bench::{panda, panda_ready, telemetry};
use twinsync_core::latency::summarize;
use twinsync_core::mocap::{FilterConfig, MocapFilter, RawMocapSample};
use twinsync_core::robot_model::forward_kinematics;
use twinsync_core::scenario::ScenarioConfig;
use twinsync_core::sim::simulate;
use twinsync_core::transport::{decode_telemetry, encode_telemetry, TrackingQuality};
use twinsync_core::zones::{query, ZoneBox};
use twinsync_core::{DeltaKind, Pose};

fn codec(c: &mut Criterion) {
    let p = telemetry(7, 9);
    let bytes = encode_telemetry(&p).unwrap();
    c.bench_function("telemetry_encode_9dof", |b| {
        b.iter(|| encode_telemetry(black_box(&p)).unwrap())
    });
    c.bench_function("telemetry_decode_9dof", |b| {
        b.iter(|| decode_telemetry(black_box(&bytes)).unwrap())
    });
}

fn kinematics(c: &mut Criterion) {
    let model = panda();
    let q = panda_ready();
    c.bench_function("panda_fk", |b| {
        b.iter(|| forward_kinematics(&model, black_box(&q)).unwrap())
    });
}

fn mocap(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let frames: Vec<RawMocapSample> = (0..1000u64)
        .map(|k| RawMocapSample {
            time_ns: k * 10_000_000,
            position: [rng.random::<f64>() * 1e-3, 0.5, 0.02].into(),
            rotation: Quaternion::identity(),
            quality: TrackingQuality::Tracked,
        })
        .collect();
    c.bench_function("mocap_filter_1000_frames", |b| {
        b.iter_batched(
            || MocapFilter::new(FilterConfig::default()).unwrap(),
            |mut f| {
                for s in &frames {
                    black_box(f.process(s).unwrap());
                }
            },
            BatchSize::SmallInput,
        )
    });
}

fn zones(c: &mut Criterion) {
    let zone = ZoneBox {
        pose: Pose::from_xyz_rpy([0.3, 0.0, 0.4], [0.1, 0.2, 0.3]),
        half_extents: [0.05, 0.1, 0.04].into(),
    };
    let p = [0.31, 0.02, 0.41].into();
    c.bench_function("zone_query", |b| b.iter(|| query(black_box(&zone), black_box(&p))));
}

fn stats(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let v: Vec<f64> = (0..20_000).map(|_| rng.random_range(0.1..9.0)).collect();
    c.bench_function("summarize_20k", |b| {
        b.iter(|| summarize(DeltaKind::IngressToApplied, black_box(&v)).unwrap())
    });
}

fn emulated_run(c: &mut Criterion) {
    let mut s = ScenarioConfig::builtin_default();
    s.duration_s = 1.0;
    let mut group = c.benchmark_group("emulated");
    group.sample_size(10);
    group.bench_function("default_scenario_1s", |b| b.iter(|| simulate(black_box(&s)).unwrap()));
    group.finish();
}

criterion_group!(benches, codec, kinematics, mocap, zones, stats, emulated_run);
criterion_main!(benches);

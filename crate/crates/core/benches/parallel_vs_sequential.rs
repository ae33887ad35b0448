use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trimode::gates::gate_by_name;
use trimode::linalg::C64;
use trimode::optimizer::{synthesize, SynthesisConfig};
use trimode::par::ExecMode;
use trimode::qec::{roundtrip_trials, IdealGates};
use trimode::{Cavity, Segment};

const MODES: [(&str, ExecMode); 2] = [("sequential", ExecMode::Sequential), ("parallel", ExecMode::Parallel)];

fn pulse(n: usize) -> Vec<Segment> {
    (0..n)
        .map(|l| Segment { duration: 0.3, amplitude: C64::new((l as f64).sin(), (0.7 * l as f64).cos()) })
        .collect()
}

fn sector_propagation(c: &mut Criterion) {
    let segs = pulse(60);
    let sectors: Vec<usize> = (0..=8).collect();
    let mut group = c.benchmark_group("pulse_unitary_k8");
    for (name, mode) in MODES {
        let cav = Cavity::new(8).with_exec_mode(mode);
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| cav.pulse_unitary(&segs, &sectors).unwrap())
        });
    }
    group.finish();
}

fn restarts(c: &mut Criterion) {
    let spec = gate_by_name("routing").unwrap();
    let cav = Cavity::new(spec.max_charge());
    let mut group = c.benchmark_group("synthesis_restarts");
    group.sample_size(10);
    for (name, mode) in MODES {
        let cfg = SynthesisConfig { restarts: 4, restart_wave: 4, max_iterations: 20, exec: mode, ..Default::default() };
        group.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| synthesize(&cav, &spec, &cfg).unwrap()));
    }
    group.finish();
}

fn qec_trials(c: &mut Criterion) {
    let gates = IdealGates::new().unwrap();
    let mut group = c.benchmark_group("roundtrip_trials");
    for (name, mode) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| roundtrip_trials(100, &mut ChaCha8Rng::seed_from_u64(0), &gates, mode).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, sector_propagation, restarts, qec_trials);
criterion_main!(benches);

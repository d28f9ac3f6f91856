use std::f64::consts::PI;

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use orbital_raman::*;

fn three_level() -> SystemModel {
    SystemModel::new(LevelKind::ThreeLevel, EnergySpec::default().with_small_delta(0.25), DipoleSet::default()).unwrap()
}

fn pi_sequence() -> PulseSequence {
    PulseSequence::single(RamanPulse::new(0.0, 8.49, 1.93 * PI, 2.0 * PI * 4.8, 0.0).unwrap()).unwrap()
}

fn hamiltonian(c: &mut Criterion) {
    let m = three_level();
    let seq = pi_sequence();
    let h = m.rotating(&seq).unwrap();
    c.bench_function("rotating_hamiltonian_at", |b| b.iter(|| h.at(black_box(1.3))));
}

fn single_pulse(c: &mut Criterion) {
    let m = three_level();
    let seq = pi_sequence();
    let rho0 = DensityMatrix::basis_state(m.dim(), 0);
    let cfg = IntegratorConfig::default();
    let mut group = c.benchmark_group("simulate_pi_pulse");
    group.sample_size(20);
    group.bench_function("closed", |b| {
        b.iter(|| simulate(&m, &seq, &Dissipation::default(), &rho0, &cfg).unwrap())
    });
    group.bench_function("dissipative", |b| {
        b.iter(|| simulate(&m, &seq, &Dissipation::measured(), &rho0, &cfg).unwrap())
    });
    group.finish();
}

fn rabi(c: &mut Criterion) {
    let cfg = ExperimentConfig::new(three_level()).unwrap();
    let areas = Axis::linspace("stokes_area_rad", 0.0, 3.0 * PI, 16).unwrap();
    let mut group = c.benchmark_group("sweeps");
    group.sample_size(10);
    group.bench_function("rabi_16", |b| b.iter(|| rabi_sweep(&cfg, &areas).unwrap()));
    group.finish();
}

criterion_group!(benches, hamiltonian, single_pulse, rabi);
criterion_main!(benches);

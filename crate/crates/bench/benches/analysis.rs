use criterion::{black_box, criterion_group, criterion_main, Criterion};
use orbital_raman::*;

fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn fits(c: &mut Criterion) {
    let x = grid(30.0, 40.0, 201);
    let y: Vec<f64> = x.iter().map(|v| FitModel::Sinusoid.eval(&[0.45, 1.042, 0.7, 0.5], *v)).collect();
    c.bench_function("fit_sinusoid_201", |b| b.iter(|| fit_auto(FitModel::Sinusoid, black_box(&x), black_box(&y)).unwrap()));

    let x = grid(40.0, 600.0, 57);
    let y: Vec<f64> = x.iter().map(|v| FitModel::ExpDecay.eval(&[0.48, 198.2, 0.01], *v)).collect();
    c.bench_function("fit_exp_decay_57", |b| b.iter(|| fit_auto(FitModel::ExpDecay, black_box(&x), black_box(&y)).unwrap()));
}

fn spectrum(c: &mut Criterion) {
    let x = grid(30.0, 80.0, 501);
    let y: Vec<f64> = x.iter().map(|t| 0.5 + 0.4 * (2.0 * std::f64::consts::PI * 1.042 * t).cos()).collect();
    c.bench_function("fft_spectrum_501", |b| b.iter(|| fft_spectrum(black_box(&x), black_box(&y)).unwrap()));
}

criterion_group!(benches, fits, spectrum);
criterion_main!(benches);

use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};

use chaosdesign::linalg::spectral_radius;
use chaosdesign::lyapunov::{autonomous_spectrum, conditional_mle};
use chaosdesign::skeleton::lissajous;
use chaosdesign::training::{ridge_readout, train};
use chaosdesign::{build_reservoir, Matrix, ReservoirSpec, State, TangentSettings, TrainingConfig};

fn reservoir_step(c: &mut Criterion) {
    for n in [300, 1000] {
        let res = build_reservoir(ReservoirSpec::new(n, 2, 0.5, 1.2, 0.2, 1)).unwrap();
        let x = State::zeros(n);
        c.bench_function(&format!("step N={n}"), |b| b.iter(|| res.step(black_box(&x), black_box(&[0.3, -0.2])).unwrap()));
    }
}

fn matvec(c: &mut Criterion) {
    let n = 1000;
    let m = Matrix::from_fn(n, n, |i, j| ((i * 31 + j * 17) % 97) as f64 / 97.0 - 0.5);
    let x: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
    let v: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
    c.bench_function("matvec N=1000", |b| b.iter(|| m.matvec(black_box(&x))));
    let mut ys = vec![vec![0.0; n], vec![0.0; n]];
    c.bench_function("matvec pair N=1000", |b| b.iter(|| m.matvec_many(black_box(&[&x, &v]), &mut ys)));
}

fn dense_solvers(c: &mut Criterion) {
    let mut g = c.benchmark_group("dense");
    g.sample_size(10);
    let res = build_reservoir(ReservoirSpec::new(300, 2, 0.5, 1.0, 0.2, 1)).unwrap();
    g.bench_function("spectral radius N=300", |b| b.iter(|| spectral_radius(black_box(res.w())).unwrap()));
    let t = 3000;
    let x = Matrix::from_fn(t, 300, |i, j| ((i * 7 + j * 13) as f64 * 0.001).sin());
    let y = Matrix::from_fn(t, 2, |i, j| ((i + j) as f64 * 0.01).cos());
    g.bench_function("ridge T=3000 N=300", |b| b.iter(|| ridge_readout(black_box(&x), black_box(&y), 1e-3).unwrap()));
    g.finish();
}

fn short_exponent_runs(c: &mut Criterion) {
    let mut g = c.benchmark_group("lyapunov");
    g.sample_size(10);
    let res = build_reservoir(ReservoirSpec::new(300, 2, 0.5, 1.2, 0.2, 1)).unwrap();
    let sk = lissajous(100);
    let settings = TangentSettings {
        steps: 2000,
        transient: 200,
        ..TangentSettings::default()
    };
    g.bench_function("conditional MLE N=300 2000 steps", |b| {
        b.iter(|| conditional_mle(black_box(&res), &sk, &settings).unwrap())
    });
    let cfg = TrainingConfig {
        t_init: 500,
        t_train: 2000,
        ..TrainingConfig::default()
    };
    g.bench_function("closed-loop MLE N=300 2000 steps", |b| {
        b.iter_batched(
            || train(&res, &sk, &cfg).unwrap(),
            |model| autonomous_spectrum(&model, &settings).unwrap(),
            BatchSize::LargeInput,
        )
    });
    g.finish();
}

criterion_group!(benches, reservoir_step, matvec, dense_solvers, short_exponent_runs);
criterion_main!(benches);

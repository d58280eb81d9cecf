use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mvsk_bench::gaussian_cloud;
use mvsk_core::dynamics::{meanfield_force, meanfield_force_direct, step_kinetic, step_overdamped};
use mvsk_core::metrics::{w2_1d_exact, SampleCloud};
use mvsk_core::{KernelSpec, KineticEnsemble, ModelSpec, OverdampedEnsemble, Scheme, TermFlags};

fn force(c: &mut Criterion) {
    let kernel = KernelSpec::neg_tanh();
    let mut g = c.benchmark_group("meanfield_force");
    for n in [500usize, 2000] {
        let x = gaussian_cloud(n, 1);
        g.bench_with_input(BenchmarkId::new("neg_tanh_fast", n), &x, |b, x| {
            b.iter(|| meanfield_force(x, 1, &kernel))
        });
        g.bench_with_input(BenchmarkId::new("neg_tanh_direct", n), &x, |b, x| {
            b.iter(|| meanfield_force_direct(x, 1, &kernel))
        });
    }
    g.finish();
}

fn steps(c: &mut Criterion) {
    let model = ModelSpec::preset("1d-tanh-friction").unwrap();
    let n = 2000;
    let x = gaussian_cloud(n, 1);
    let v = gaussian_cloud(n, 2);
    let mut g = c.benchmark_group("step");
    g.bench_function("kinetic_exponential_2000", |b| {
        let mut ens = KineticEnsemble::new(1, x.clone(), v.clone(), 0.05).unwrap();
        b.iter(|| step_kinetic(&mut ens, &[0.01], 1e-4, &model, Scheme::Exponential).unwrap())
    });
    g.bench_function("overdamped_paper_limit_2000", |b| {
        let mut ens = OverdampedEnsemble::new(1, x.clone(), TermFlags::PAPER_LIMIT).unwrap();
        let w = gaussian_cloud(n, 3);
        b.iter(|| step_overdamped(&mut ens, &[0.03], Some(&w), 1e-3, &model).unwrap())
    });
    g.finish();
}

fn distances(c: &mut Criterion) {
    let a = SampleCloud::from_1d(&gaussian_cloud(2000, 4)).unwrap();
    let b = SampleCloud::from_1d(&gaussian_cloud(2000, 5)).unwrap();
    c.bench_function("w2_1d_exact_2000", |bch| bch.iter(|| w2_1d_exact(&a, &b).unwrap()));
}

criterion_group!(benches, force, steps, distances);
criterion_main!(benches);

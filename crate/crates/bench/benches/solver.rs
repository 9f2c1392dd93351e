use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use csgm_core::kernel::{Example, KernelFn, KernelModel, LossFn};
use csgm_core::problems::{l1_problem, sample_unit_sphere, NoisyL1Oracle, ParetoNoise};
use csgm_core::solver::step;
use csgm_core::{clip, Schedule, ScheduleMode, ScheduleParams, SolverState, Subgradient};

fn params(mode: ScheduleMode) -> ScheduleParams {
    ScheduleParams {
        mode,
        gamma: 0.1,
        lambda: 0.1,
        epsilon: 0.01,
        p: 1.1,
        lipschitz: 10.0,
        horizon: Some(100_000),
    }
}

fn bench_clip(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let u = Subgradient::new((0..100).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    c.bench_function("clip d=100", |b| b.iter(|| clip(black_box(&u), black_box(2.0)).unwrap()));
}

fn bench_schedule(c: &mut Criterion) {
    for mode in [ScheduleMode::Anytime, ScheduleMode::EpochDoubling] {
        let s = Schedule::new(params(mode)).unwrap();
        c.bench_function(&format!("step_and_clip {}", mode.label()), |b| {
            b.iter(|| s.step_and_clip(black_box(77_777)).unwrap())
        });
    }
}

fn bench_pareto(c: &mut Criterion) {
    let noise = ParetoNoise::new(1.1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    c.bench_function("pareto sample", |b| b.iter(|| noise.sample(&mut rng)));
}

fn bench_step(c: &mut Criterion) {
    let d = 100;
    let spec = l1_problem(d).unwrap();
    let schedule = Schedule::new(params(ScheduleMode::Anytime)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x1 = sample_unit_sphere(d, &mut rng).unwrap();
    let mut oracle = NoisyL1Oracle::pareto(d, 1.1, rng).unwrap();
    let mut state = SolverState::new(x1, &spec).unwrap();
    c.bench_function("solver step d=100 pareto", |b| {
        b.iter(|| step(&mut state, &mut oracle, &schedule, &spec, 1).unwrap())
    });
}

fn bench_kernel_step(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let data: Vec<Example> = (0..1000)
        .map(|_| {
            let z = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let y = if z[0] > 0.0 { 1.0 } else { -1.0 };
            Example::new(z, y)
        })
        .collect();
    let kernel = KernelFn::gaussian(0.5).unwrap();
    // Cost grows with the stored expansion, so time the step at a fixed
    // history length of 500.
    let mut warm = KernelModel::new(kernel, LossFn::Hinge, 1).unwrap();
    for ex in &data[..500] {
        warm.step(std::slice::from_ref(ex), 0.1, 1.0).unwrap();
    }
    c.bench_function("kernel step after 500", |b| {
        b.iter_batched(
            || warm.clone(),
            |mut m| m.step(std::slice::from_ref(&data[500]), 0.1, 1.0).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, bench_clip, bench_schedule, bench_pareto, bench_step, bench_kernel_step);
criterion_main!(benches);

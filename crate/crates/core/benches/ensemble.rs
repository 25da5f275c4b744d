use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use dean_kawasaki::parallel::{map_indexed, map_indexed_sequential};
use dean_kawasaki::particles::{mollified_initial, InitialPreset, Mollifier};
use dean_kawasaki::regularization::{select_parameters, RegSqrt};
use dean_kawasaki::rng::{path_rng, StreamFamily};
use dean_kawasaki::solver::{integrate_with, IntegrateOptions};
use dean_kawasaki::torus::{GridField, GridSpec};

const PATHS: usize = 32;
const N: usize = 128;

fn ensemble(c: &mut Criterion) {
    let params = select_parameters(N, 1, 0.5).unwrap();
    let reg = RegSqrt::new(params.delta).unwrap();
    let mut rng = path_rng(1, StreamFamily::InitialCondition, 0, 0);
    let ens = InitialPreset::Uniform.generate(1, N, &mut rng).unwrap();
    let u0 = mollified_initial(&ens, &Mollifier::standard(1, N).unwrap(), GridSpec::new(1, 8 * N).unwrap()).unwrap();
    let options = IntegrateOptions {
        record_every: 50,
        solver_grid: Some(GridSpec::for_cutoff(1, params.cutoff).unwrap()),
        track_integrals: false,
    };
    let dt = 2e-4;
    let path = |i: usize| -> GridField {
        let mut rng = path_rng(1, StreamFamily::Spde, 0, i as u32);
        integrate_with(u0.clone(), params, reg, 200.0 * dt, dt, &mut rng, options, |_, _, _| Ok(()))
            .unwrap()
            .final_state
            .u
    };

    let mut group = c.benchmark_group("spde_ensemble");
    group.sample_size(10);
    group.bench_function("rayon", |b| b.iter(|| black_box(map_indexed(PATHS, path))));
    group.bench_function("sequential", |b| b.iter(|| black_box(map_indexed_sequential(PATHS, path))));
    group.finish();
}

criterion_group!(benches, ensemble);
criterion_main!(benches);

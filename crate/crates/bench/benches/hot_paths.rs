use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};

use salab_core::depth::{critical_depth, discretize};
use salab_core::dynamics::{init_chain, sa_step_table, InitialDistribution};
use salab_core::landscape::Landscape;
use salab_core::rng::StreamRng;
use salab_core::schedule::{CoolingSchedule, ScheduleTable, StepSchedule};
use salab_core::{gibbs_tail_quadrature, spectral_gap_1d};

fn bench_sa_steps(c: &mut Criterion) {
    let land = Landscape::double_well(0.2).unwrap().normalize(100_000).unwrap();
    let ss = StepSchedule::new(1.0 / 44.0, 0.75).unwrap();
    let cs = CoolingSchedule::with_default_offset(1.2113).unwrap();
    let n_steps = 100_000u64;
    let table = ScheduleTable::build(&ss, &cs, n_steps).unwrap();
    let mu0 = InitialDistribution::point_mass(vec![0.974]);
    let mut group = c.benchmark_group("dynamics");
    group.throughput(Throughput::Elements(n_steps));
    group.bench_function("sa_steps_100k", |b| {
        b.iter_batched(
            || init_chain(&mu0, 1, 0),
            |mut state| {
                let mut z = [0.0];
                let mut scratch = [0.0];
                for _ in 0..n_steps {
                    sa_step_table(&mut state, &land, &table, &mut z, &mut scratch).unwrap();
                }
                state.x[0]
            },
            BatchSize::SmallInput,
        )
    });
    group.finish();
}

fn bench_rng(c: &mut Criterion) {
    let mut group = c.benchmark_group("rng");
    group.throughput(Throughput::Elements(100_000));
    group.bench_function("normal_pairs_100k", |b| {
        let mut rng = StreamRng::new(7, 0);
        b.iter(|| {
            let mut acc = 0.0;
            for _ in 0..50_000 {
                let (a, b) = rng.normal_pair();
                acc += a + b;
            }
            acc
        })
    });
    group.finish();
}

fn bench_depth(c: &mut Criterion) {
    let land = Landscape::double_well(0.2).unwrap().normalize(100_000).unwrap();
    let grid = discretize(&land, &[1 << 14]).unwrap();
    c.bench_function("critical_depth_16k_cells", |b| {
        b.iter(|| critical_depth(&grid).unwrap().critical_depth)
    });
}

fn bench_spectral(c: &mut Criterion) {
    let land = Landscape::double_well(0.2).unwrap().normalize(100_000).unwrap();
    c.bench_function("spectral_gap_2048", |b| {
        b.iter(|| spectral_gap_1d(&land, 0.1, 2048).unwrap())
    });
}

fn bench_quadrature(c: &mut Criterion) {
    let land = Landscape::double_well(0.2).unwrap().normalize(100_000).unwrap();
    let grid = discretize(&land, &[1 << 16]).unwrap();
    c.bench_function("gibbs_tail_quadrature_64k", |b| {
        b.iter(|| gibbs_tail_quadrature(&grid, 0.1, 0.3).unwrap())
    });
}

criterion_group!(
    benches,
    bench_sa_steps,
    bench_rng,
    bench_depth,
    bench_spectral,
    bench_quadrature
);
criterion_main!(benches);

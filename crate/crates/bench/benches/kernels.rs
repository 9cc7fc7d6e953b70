use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use slabperc::connectivity::{crossing, crossing_threshold, Orientation};
use slabperc::environment::classify_intervals;
use slabperc::renorm::build_sigma;
use slabperc::rng::stream_key;
use slabperc::unionfind::UnionFind;
use slabperc::{Box3, ModelParams, PercolationModel, SlabLattice};
use slabperc_bench::{renewal_environment, renorm_spec, SEED};

fn thresholds(c: &mut Criterion) {
    let mut group = c.benchmark_group("crossing_threshold");
    for n in [16usize, 64, 256] {
        let bx = Box3::new(0, 2 * n as i64, 0, n as i64).unwrap();
        let lattice = SlabLattice::enclosing(&bx, 0).unwrap();
        let mut r = 0;
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| {
                r += 1;
                crossing_threshold(&lattice, &bx, Orientation::Horizontal, stream_key(SEED, r)).unwrap()
            })
        });
    }
    group.finish();
}

fn union_find(c: &mut Criterion) {
    let n: usize = 1 << 16;
    let pairs: Vec<(usize, usize)> =
        (0..n).map(|i| (i, (i.wrapping_mul(2_654_435_761) >> 7) % n)).collect();
    c.bench_function("union_find_65536", |b| {
        let mut uf = UnionFind::new(n);
        b.iter(|| {
            uf.reset();
            for &(a, z) in &pairs {
                uf.union(a, z);
            }
            black_box(uf.set_size(0))
        })
    });
}

fn sample_and_cross(c: &mut Criterion) {
    let lattice = SlabLattice::new(129, 129, 1).unwrap();
    let env = renewal_environment(129).unwrap();
    let model = PercolationModel::new(lattice, &env, Default::default()).unwrap();
    let params = ModelParams::new(0.5, 0.8).unwrap();
    let bx = Box3::new(0, 128, 0, 128).unwrap();
    let mut r = 0;
    c.bench_function("sample_crossing_128_k1", |b| {
        b.iter(|| {
            r += 1;
            let config = model.sample_replica(&params, SEED, r);
            crossing(&config, &bx, Orientation::Horizontal).unwrap()
        })
    });
}

fn sigma(c: &mut Criterion) {
    let spec = renorm_spec(8, 4, 1).unwrap();
    let params = ModelParams::new(0.6, 0.8).unwrap();
    let mut r = 0;
    c.bench_function("build_sigma_n8_4x4", |b| {
        b.iter(|| {
            r += 1;
            let config = spec.model().sample_replica(&params, SEED, r);
            build_sigma(&config, &spec).unwrap().sigma.open_count()
        })
    });
}

fn environment(c: &mut Criterion) {
    c.bench_function("environment_classify_65536", |b| {
        b.iter(|| {
            let env = renewal_environment(1 << 16).unwrap();
            classify_intervals(&env, 16, 0.5).unwrap().flags.len()
        })
    });
}

criterion_group!(benches, thresholds, union_find, sample_and_cross, sigma, environment);
criterion_main!(benches);

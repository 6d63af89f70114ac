//! Parallel-vs-sequential comparison of the three batch workloads that route
//! through par::map: stability classification, trajectory integration, and
//! partition columns. With the `parallel` feature off, both sides alias the
//! sequential path and the comparison collapses to parity.

use std::time::Duration;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hwmodel::dynamics::{integrate, IntegrateOptions};
use hwmodel::equilibria::classify_stability;
use hwmodel::geometry::Geography;
use hwmodel::model::{Model, Params};
use hwmodel::par;
use hwmodel::sweep::{partition, range_values, SweepGrid};
use hwmodel::symmetry::{invariant_supports, PermGroup, SupportPattern};

fn catalog(geo: &Geography) -> Vec<SupportPattern> {
    let group = PermGroup::for_geography(geo).unwrap();
    let subs = group.subgroups().unwrap();
    invariant_supports(&group, &subs)
}

fn dirichlet_starts(k: usize, n: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    (0..n)
        .map(|_| {
            let raw: Vec<f64> = (0..k).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / total).collect()
        })
        .collect()
}

fn bench_classify(c: &mut Criterion) {
    let geo = Geography::square_torus(4).unwrap();
    let model = Model::new(&geo, Params::new(1.2, 0.3).unwrap()).unwrap();
    let pats = catalog(&geo);
    let mut g = c.benchmark_group("classify_batch");
    g.sample_size(10).measurement_time(Duration::from_secs(2));
    g.bench_function("parallel", |b| {
        b.iter(|| par::map(&pats, |p| classify_stability(&model, p, 1e-9).unwrap()))
    });
    g.bench_function("sequential", |b| {
        b.iter(|| par::map_seq(&pats, |p| classify_stability(&model, p, 1e-9).unwrap()))
    });
    g.finish();
}

fn bench_integrate(c: &mut Criterion) {
    let geo = Geography::ring(16).unwrap();
    let model = Model::new(&geo, Params::new(1.2, 0.3).unwrap()).unwrap();
    let starts = dirichlet_starts(16, 24);
    let opts = IntegrateOptions::default();
    let mut g = c.benchmark_group("integrate_batch");
    g.sample_size(10).measurement_time(Duration::from_secs(3));
    g.bench_function("parallel", |b| {
        b.iter(|| par::map(&starts, |x0| integrate(&model, x0, &opts).unwrap().converged))
    });
    g.bench_function("sequential", |b| {
        b.iter(|| par::map_seq(&starts, |x0| integrate(&model, x0, &opts).unwrap().converged))
    });
    g.finish();
}

fn bench_partition(c: &mut Criterion) {
    let geo = Geography::square_torus(6).unwrap();
    let pats = catalog(&geo);
    let phis = range_values(0.05, 0.95, 0.05).unwrap();
    let alphas = range_values(1.0, 3.0, 0.1).unwrap();
    let mut g = c.benchmark_group("partition_columns");
    g.sample_size(10).measurement_time(Duration::from_secs(3));
    // partition fans phi columns through par::map internally; the sequential
    // side feeds it one single-phi grid at a time through map_seq.
    let full = SweepGrid::new(phis.clone(), alphas.clone()).unwrap();
    g.bench_function("parallel", |b| {
        b.iter(|| partition(&geo, &pats, &full, 1e-10).unwrap().len())
    });
    g.bench_function("sequential", |b| {
        b.iter(|| {
            par::map_seq(&phis, |&phi| {
                let grid = SweepGrid::new(vec![phi], alphas.clone()).unwrap();
                partition(&geo, &pats, &grid, 1e-10).unwrap().len()
            })
            .iter()
            .sum::<usize>()
        })
    });
    g.finish();
}

criterion_group!(benches, bench_classify, bench_integrate, bench_partition);
criterion_main!(benches);

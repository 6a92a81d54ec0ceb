use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use bondforest::cart::best_split;
use bondforest::forest::bootstrap;
use bondforest::importance::{minimal_depth, permutation_importance, PermutationConfig};
use bondforest::rng::rng_from_seed;
use bondforest::{fit_tree, Forest, TreeParams};
use bondforest_bench::{dataset, default_dataset, forest, params, SEED};

fn tree(c: &mut Criterion) {
    let ds = default_dataset();
    let in_bag = bootstrap(&mut rng_from_seed(SEED), ds.n_rows());
    let tp = TreeParams {
        mtry: 3,
        node_size: 5,
        max_depth: None,
        seed: SEED,
    };
    c.bench_function("fit_tree/934", |b| b.iter(|| fit_tree(black_box(&ds), &in_bag, &tp).unwrap()));

    let sample: Vec<(usize, u32)> = in_bag.iter().copied().enumerate().collect();
    let mut group = c.benchmark_group("best_split/934");
    for (name, feature) in [("continuous", 1), ("categorical", 5)] {
        group.bench_with_input(BenchmarkId::from_parameter(name), &feature, |b, &f| {
            b.iter(|| best_split(black_box(&ds), &sample, f))
        });
    }
    group.finish();
}

fn forests(c: &mut Criterion) {
    let mut group = c.benchmark_group("fit_forest");
    group.sample_size(10);
    for n in [234, 934] {
        let ds = dataset(n);
        let p = params(&ds, 100);
        group.bench_with_input(BenchmarkId::new("100_trees", n), &ds, |b, ds| b.iter(|| Forest::fit(ds, &p).unwrap()));
    }
    group.finish();
}

fn evaluation(c: &mut Criterion) {
    let ds = default_dataset();
    let f = forest(&ds, 100);
    c.bench_function("oob/100_trees", |b| b.iter(|| f.oob(black_box(&ds)).unwrap()));
    c.bench_function("minimal_depth/100_trees", |b| b.iter(|| minimal_depth(black_box(&f))));
    let mut group = c.benchmark_group("permutation_importance");
    group.sample_size(10);
    group.bench_function("100_trees", |b| {
        b.iter(|| permutation_importance(&f, &ds, &PermutationConfig::new(SEED)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, tree, forests, evaluation);
criterion_main!(benches);

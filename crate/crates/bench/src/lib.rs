//! Fixtures shared by the benchmarks.

use bondforest::synth::{generate, GeneratorConfig, DEFAULT_ROWS};
use bondforest::{Dataset, Forest, ForestParams};

pub const SEED: u64 = 20_240;

/// Synthetic data of the default size and shape.
pub fn dataset(n: usize) -> Dataset {
    generate(&GeneratorConfig::new(n, SEED)).expect("default generator config is valid")
}

pub fn default_dataset() -> Dataset {
    dataset(DEFAULT_ROWS)
}

pub fn params(ds: &Dataset, n_trees: usize) -> ForestParams {
    ForestParams {
        n_trees,
        ..ForestParams::defaults(ds.n_features(), SEED)
    }
}

pub fn forest(ds: &Dataset, n_trees: usize) -> Forest {
    Forest::fit(ds, &params(ds, n_trees)).expect("fixture forest fits")
}

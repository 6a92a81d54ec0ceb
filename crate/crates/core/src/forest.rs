//! Bagged ensembles of regression trees with out-of-bag evaluation.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cart::{fit_tree, RegressionTree, TreeParams};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, derived_rng, stream, Rng};
use crate::schema::{Dataset, Schema};

pub const DEFAULT_TREES: usize = 700;
pub const DEFAULT_NODE_SIZE: usize = 5;

const MODEL_FORMAT: &str = "bondforest-model";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub mtry: usize,
    pub node_size: usize,
    #[serde(default)]
    pub max_depth: Option<usize>,
    pub seed: u64,
}

impl ForestParams {
    /// Regression defaults for `p` predictors.
    pub fn defaults(p: usize, seed: u64) -> Self {
        ForestParams {
            n_trees: DEFAULT_TREES,
            mtry: default_mtry(p),
            node_size: DEFAULT_NODE_SIZE,
            max_depth: None,
            seed,
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidParams("the forest needs at least one tree".into()));
        }
        if self.mtry == 0 || self.mtry > p {
            return Err(Error::InvalidParams(format!("mtry must be in 1..={p}, got {}", self.mtry)));
        }
        if self.node_size == 0 {
            return Err(Error::InvalidParams("node_size must be at least 1".into()));
        }
        Ok(())
    }

    /// Seed of tree `k`; its bootstrap and its feature draws derive from it.
    pub fn tree_seed(&self, k: usize) -> u64 {
        derive_seed(self.seed, stream::TREE, k as u64)
    }
}

pub fn default_mtry(p: usize) -> usize {
    (p / 3).max(1)
}

/// Multiplicities of `n` draws with replacement from `n` rows.
pub fn bootstrap(rng: &mut Rng, n: usize) -> Vec<u32> {
    let mut counts = vec![0u32; n];
    for _ in 0..n {
        counts[rng.random_range(0..n)] += 1;
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    schema: Schema,
    params: ForestParams,
    n_train: usize,
    training_digest: String,
    trees: Vec<RegressionTree>,
}

#[derive(Serialize)]
struct ModelFileRef<'a> {
    format: &'a str,
    version: u32,
    #[serde(flatten)]
    forest: &'a Forest,
}

#[derive(Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    forest: Forest,
}

impl Forest {
    /// Grows `params.n_trees` trees in parallel. The result does not depend
    /// on the number of worker threads.
    pub fn fit(ds: &Dataset, params: &ForestParams) -> Result<Forest> {
        params.validate(ds.n_features())?;
        let n = ds.n_rows();
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|k| {
                let seed = params.tree_seed(k);
                let in_bag = bootstrap(&mut derived_rng(seed, stream::BOOTSTRAP, 0), n);
                let tp = TreeParams {
                    mtry: params.mtry,
                    node_size: params.node_size,
                    max_depth: params.max_depth,
                    seed,
                };
                fit_tree(ds, &in_bag, &tp)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Forest {
            schema: ds.schema().clone(),
            params: *params,
            n_train: n,
            training_digest: ds.fingerprint(),
            trees,
        })
    }

    /// Assembles a forest from prebuilt trees.
    pub fn from_trees(
        schema: Schema,
        params: ForestParams,
        training: &Dataset,
        trees: Vec<RegressionTree>,
    ) -> Result<Forest> {
        let forest = Forest {
            schema,
            params: ForestParams {
                n_trees: trees.len(),
                ..params
            },
            n_train: training.n_rows(),
            training_digest: training.fingerprint(),
            trees,
        };
        forest.validate()?;
        Ok(forest)
    }

    fn validate(&self) -> Result<()> {
        self.schema.validate()?;
        if self.trees.is_empty() || self.trees.len() != self.params.n_trees {
            return Err(Error::Model(format!(
                "expected {} trees, found {}",
                self.params.n_trees,
                self.trees.len()
            )));
        }
        let p = self.schema.n_features();
        for (k, t) in self.trees.iter().enumerate() {
            t.validate().map_err(|e| Error::Model(format!("tree {k}: {e}")))?;
            if t.in_bag().len() != self.n_train {
                return Err(Error::Model(format!("tree {k}: in-bag vector length mismatch")));
            }
            for n in t.nodes() {
                if let Some(s) = n.split {
                    if s.rule.feature() >= p {
                        return Err(Error::Model(format!("tree {k}: split on unknown feature")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn n_train(&self) -> usize {
        self.n_train
    }

    pub fn training_digest(&self) -> &str {
        &self.training_digest
    }

    /// Mean of the tree predictions for one schema-conformant row.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.schema.check_row(x)?;
        Ok(self.predict_unchecked(x))
    }

    pub fn predict_unchecked(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn predict_dataset(&self, ds: &Dataset) -> Result<Vec<f64>> {
        if ds.schema() != &self.schema {
            return Err(Error::SchemaMismatch("dataset schema differs from the model's".into()));
        }
        Ok((0..ds.n_rows()).map(|i| self.predict_unchecked(&ds.row(i))).collect())
    }

    fn check_training(&self, ds: &Dataset) -> Result<()> {
        if ds.n_rows() != self.n_train || ds.fingerprint() != self.training_digest {
            return Err(Error::DatasetMismatch);
        }
        Ok(())
    }

    /// Out-of-bag predictions of every tree, as (row, prediction) lists in
    /// tree order.
    fn per_tree_oob(&self, ds: &Dataset) -> Vec<Vec<(usize, f64)>> {
        self.trees
            .par_iter()
            .map(|t| {
                t.oob_rows()
                    .map(|i| (i, t.predict_with(|f| ds.value(i, f))))
                    .collect()
            })
            .collect()
    }

    /// Out-of-bag evaluation on the training data.
    pub fn oob(&self, ds: &Dataset) -> Result<OobReport> {
        self.check_training(ds)?;
        let mut acc = OobAccumulator::new(ds.n_rows());
        for preds in self.per_tree_oob(ds) {
            acc.add(&preds);
        }
        acc.report(ds.response())
    }

    /// Out-of-bag evaluation of the forests formed by the first `k` trees,
    /// for each `k` in `sizes` (ascending, at most the forest size).
    pub fn oob_prefixes(&self, ds: &Dataset, sizes: &[usize]) -> Result<Vec<OobReport>> {
        self.check_training(ds)?;
        if sizes.windows(2).any(|w| w[0] > w[1]) || sizes.iter().any(|&k| k == 0 || k > self.trees.len()) {
            return Err(Error::InvalidParams(format!(
                "prefix sizes must be ascending within 1..={}",
                self.trees.len()
            )));
        }
        let per_tree = self.per_tree_oob(ds);
        let mut acc = OobAccumulator::new(ds.n_rows());
        let mut out = Vec::with_capacity(sizes.len());
        let mut added = 0;
        for &k in sizes {
            while added < k {
                acc.add(&per_tree[added]);
                added += 1;
            }
            out.push(acc.report(ds.response())?);
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&ModelFileRef {
            format: MODEL_FORMAT,
            version: MODEL_VERSION,
            forest: self,
        })?)
    }

    pub fn from_json(text: &str) -> Result<Forest> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format != MODEL_FORMAT {
            return Err(Error::Model(format!("not a model file (format `{}`)", file.format)));
        }
        if file.version != MODEL_VERSION {
            return Err(Error::Model(format!("unsupported model version {}", file.version)));
        }
        file.forest.validate()?;
        Ok(file.forest)
    }
}

/// Running sums of out-of-bag predictions per training row.
#[derive(Debug, Clone)]
pub struct OobAccumulator {
    sums: Vec<f64>,
    counts: Vec<u32>,
}

impl OobAccumulator {
    pub fn new(n: usize) -> Self {
        OobAccumulator {
            sums: vec![0.0; n],
            counts: vec![0; n],
        }
    }

    pub fn add(&mut self, predictions: &[(usize, f64)]) {
        for &(i, v) in predictions {
            self.sums[i] += v;
            self.counts[i] += 1;
        }
    }

    /// Mean prediction per row, `None` for rows never added.
    pub fn predictions(&self) -> Vec<Option<f64>> {
        self.sums
            .iter()
            .zip(&self.counts)
            .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
            .collect()
    }

    pub fn report(&self, y: &[f64]) -> Result<OobReport> {
        let predictions = self.predictions();
        let covered: Vec<(f64, f64)> = predictions
            .iter()
            .zip(y)
            .filter_map(|(p, &yi)| p.map(|p| (p, yi)))
            .collect();
        let n_covered = covered.len();
        if n_covered == 0 {
            return Err(Error::NoOobCoverage);
        }
        let m = n_covered as f64;
        let mse = covered.iter().map(|(p, yi)| (yi - p) * (yi - p)).sum::<f64>() / m;
        let ybar = covered.iter().map(|(_, yi)| yi).sum::<f64>() / m;
        let tss = covered.iter().map(|(_, yi)| (yi - ybar) * (yi - ybar)).sum::<f64>();
        if tss == 0.0 {
            return Err(Error::ZeroVariance);
        }
        Ok(OobReport {
            r2: 1.0 - mse / (tss / m),
            mse,
            n_covered,
            n_never_oob: y.len() - n_covered,
            oob_counts: self.counts.clone(),
            predictions,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OobReport {
    /// Mean squared out-of-bag error over rows out of bag at least once.
    pub mse: f64,
    /// `1 - mse / (tss / n_covered)` over the same rows.
    pub r2: f64,
    pub n_covered: usize,
    pub n_never_oob: usize,
    /// Number of trees for which each row was out of bag.
    pub oob_counts: Vec<u32>,
    pub predictions: Vec<Option<f64>>,
}

//! Variable importance: out-of-bag permutation importance and minimal depth
//! with its null-distribution selection threshold.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cart::RegressionTree;
use crate::error::{Error, Result};
use crate::forest::Forest;
use crate::rng::{derive_seed, derived_rng, stream};
use crate::schema::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PermutationScore {
    Raw,
    Normalized,
    #[default]
    Percent,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PermutationImportance {
    pub features: Vec<String>,
    /// Mean over trees of the OOB MSE increase after permuting the feature.
    pub raw: Vec<f64>,
    /// `raw` divided by the standard error of the per-tree increases.
    pub normalized: Vec<f64>,
    /// `raw` as a percentage of the forest's OOB MSE.
    pub percent: Vec<f64>,
    /// Standard error of the per-tree increases.
    pub std_error: Vec<f64>,
    pub primary: PermutationScore,
    /// Feature ids, most important first.
    pub ranking: Vec<usize>,
    pub trees_used: usize,
    /// Trees skipped for having fewer than two OOB rows.
    pub trees_skipped: usize,
}

impl PermutationImportance {
    pub fn scores(&self, which: PermutationScore) -> &[f64] {
        match which {
            PermutationScore::Raw => &self.raw,
            PermutationScore::Normalized => &self.normalized,
            PermutationScore::Percent => &self.percent,
        }
    }

    /// Ranking by another score, descending, ties by feature id.
    pub fn ranking_by(&self, which: PermutationScore) -> Vec<usize> {
        rank_descending(self.scores(which))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinimalDepthImportance {
    pub features: Vec<String>,
    /// Forest-averaged minimal depth per feature.
    pub mean_depth: Vec<f64>,
    /// Depth of the deepest node of every tree.
    pub tree_depths: Vec<u32>,
    pub threshold: f64,
    pub selected: Vec<bool>,
    /// Feature ids, smallest mean minimal depth first.
    pub ranking: Vec<usize>,
}

fn rank_descending(scores: &[f64]) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..scores.len()).collect();
    ids.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    ids
}

fn rank_ascending(scores: &[f64]) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..scores.len()).collect();
    ids.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    ids
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationConfig {
    pub seed: u64,
    /// Independent permutations averaged per (tree, feature).
    pub repetitions: usize,
    pub primary: PermutationScore,
}

impl PermutationConfig {
    pub fn new(seed: u64) -> Self {
        PermutationConfig {
            seed,
            repetitions: 1,
            primary: PermutationScore::default(),
        }
    }
}

/// The permutation applied to `feature` among tree `k`'s OOB rows, as
/// `(row, source_row)` pairs: `row` is scored with the feature value of
/// `source_row`.
pub fn oob_permutation(tree: &RegressionTree, seed: u64, k: usize, feature: usize, rep: usize) -> Vec<(usize, usize)> {
    let rows: Vec<usize> = tree.oob_rows().collect();
    let mut source = rows.clone();
    let tree_seed = derive_seed(seed, stream::PERMUTATION, k as u64);
    source.shuffle(&mut derived_rng(tree_seed, feature as u64, rep as u64));
    rows.into_iter().zip(source).collect()
}

/// Per-feature OOB MSE increases for one tree, or `None` when the tree has
/// fewer than two OOB rows.
fn tree_increases(tree: &RegressionTree, ds: &Dataset, k: usize, cfg: &PermutationConfig) -> Option<Vec<f64>> {
    let rows: Vec<usize> = tree.oob_rows().collect();
    if rows.len() < 2 {
        return None;
    }
    let y = ds.response();
    let m = rows.len() as f64;
    let base = rows
        .iter()
        .map(|&i| {
            let e = y[i] - tree.predict_with(|f| ds.value(i, f));
            e * e
        })
        .sum::<f64>()
        / m;
    let increases = (0..ds.n_features())
        .map(|p| {
            let col = ds.column(p);
            let mut total = 0.0;
            for rep in 0..cfg.repetitions {
                let mse = oob_permutation(tree, cfg.seed, k, p, rep)
                    .into_iter()
                    .map(|(i, src)| {
                        let e = y[i] - tree.predict_with(|f| if f == p { col[src] } else { ds.value(i, f) });
                        e * e
                    })
                    .sum::<f64>()
                    / m;
                total += mse - base;
            }
            total / cfg.repetitions as f64
        })
        .collect();
    Some(increases)
}

/// Permutation importance over the forest's training data.
pub fn permutation_importance(
    forest: &Forest,
    ds: &Dataset,
    cfg: &PermutationConfig,
) -> Result<PermutationImportance> {
    if cfg.repetitions == 0 {
        return Err(Error::InvalidParams("repetitions must be at least 1".into()));
    }
    let oob = forest.oob(ds)?;
    let per_tree: Vec<Option<Vec<f64>>> = forest
        .trees()
        .par_iter()
        .enumerate()
        .map(|(k, t)| tree_increases(t, ds, k, cfg))
        .collect();
    let used: Vec<&Vec<f64>> = per_tree.iter().flatten().collect();
    let skipped = per_tree.len() - used.len();
    if used.is_empty() {
        return Err(Error::NoOobCoverage);
    }
    let p = ds.n_features();
    let kk = used.len() as f64;
    let mut raw = vec![0.0; p];
    let mut std_error = vec![0.0; p];
    for f in 0..p {
        let mean = used.iter().map(|d| d[f]).sum::<f64>() / kk;
        let var = if used.len() > 1 {
            used.iter().map(|d| (d[f] - mean) * (d[f] - mean)).sum::<f64>() / (kk - 1.0)
        } else {
            0.0
        };
        raw[f] = mean;
        std_error[f] = var.sqrt() / kk.sqrt();
    }
    let normalized = raw
        .iter()
        .zip(&std_error)
        .map(|(&r, &se)| if se > 0.0 { r / se } else { 0.0 })
        .collect();
    let percent = raw.iter().map(|r| 100.0 * r / oob.mse).collect();
    let mut out = PermutationImportance {
        features: ds.schema().feature_names(),
        raw,
        normalized,
        percent,
        std_error,
        primary: cfg.primary,
        ranking: Vec::new(),
        trees_used: used.len(),
        trees_skipped: skipped,
    };
    out.ranking = out.ranking_by(cfg.primary);
    Ok(out)
}

/// Depth of the shallowest node splitting on each feature, or `max_depth + 1`
/// for features the tree never splits on.
pub fn tree_minimal_depths(tree: &RegressionTree, p: usize) -> Vec<u32> {
    let absent = tree.max_depth() + 1;
    let mut depths = vec![absent; p];
    for n in tree.nodes() {
        if let Some(s) = n.split {
            let f = s.rule.feature();
            depths[f] = depths[f].min(n.depth);
        }
    }
    depths
}

/// Mean of the null minimal-depth distribution for a tree of depth `q` when
/// each of `p` features splits any given node with probability `1/p`, with
/// `2^d` nodes at depth `d`.
pub fn null_mean_minimal_depth(p: usize, q: u32) -> f64 {
    let theta = 1.0 / p as f64;
    let miss = 1.0 - theta;
    let mut survive = 1.0;
    let mut mean = 0.0;
    for d in 0..q {
        let none_here = miss.powf(2f64.powi(d as i32));
        mean += d as f64 * survive * (1.0 - none_here);
        survive *= none_here;
    }
    mean + q as f64 * survive
}

/// Average over trees of the null mean minimal depth.
pub fn mean_minimal_depth_threshold(forest: &Forest) -> f64 {
    threshold_for_depths(forest.schema().n_features(), forest.trees().iter().map(|t| t.max_depth()))
}

pub fn threshold_for_depths(p: usize, depths: impl ExactSizeIterator<Item = u32>) -> f64 {
    let k = depths.len() as f64;
    depths.map(|q| null_mean_minimal_depth(p, q)).sum::<f64>() / k
}

pub fn minimal_depth(forest: &Forest) -> MinimalDepthImportance {
    let p = forest.schema().n_features();
    let k = forest.n_trees() as f64;
    let mut mean_depth = vec![0.0; p];
    for t in forest.trees() {
        for (f, d) in tree_minimal_depths(t, p).into_iter().enumerate() {
            mean_depth[f] += d as f64;
        }
    }
    for d in &mut mean_depth {
        *d /= k;
    }
    let threshold = mean_minimal_depth_threshold(forest);
    MinimalDepthImportance {
        features: forest.schema().feature_names(),
        selected: mean_depth.iter().map(|&d| d < threshold).collect(),
        ranking: rank_ascending(&mean_depth),
        tree_depths: forest.trees().iter().map(|t| t.max_depth()).collect(),
        mean_depth,
        threshold,
    }
}

/// Both importance measures side by side, one row per feature in schema order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankingTable {
    pub rows: Vec<RankingRow>,
    pub threshold: f64,
    pub primary: PermutationScore,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankingRow {
    pub feature: String,
    pub raw: f64,
    pub normalized: f64,
    pub percent: f64,
    /// 1-based position in the permutation ranking.
    pub permutation_rank: usize,
    pub minimal_depth: f64,
    /// 1-based position in the minimal-depth ranking.
    pub minimal_depth_rank: usize,
    pub selected: bool,
}

fn positions(ranking: &[usize]) -> Vec<usize> {
    let mut pos = vec![0; ranking.len()];
    for (i, &f) in ranking.iter().enumerate() {
        pos[f] = i + 1;
    }
    pos
}

pub fn rank_report(pi: &PermutationImportance, md: &MinimalDepthImportance) -> Result<RankingTable> {
    if pi.features != md.features {
        return Err(Error::SchemaMismatch("importance results cover different features".into()));
    }
    let pp = positions(&pi.ranking);
    let mp = positions(&md.ranking);
    let rows = pi
        .features
        .iter()
        .enumerate()
        .map(|(f, name)| RankingRow {
            feature: name.clone(),
            raw: pi.raw[f],
            normalized: pi.normalized[f],
            percent: pi.percent[f],
            permutation_rank: pp[f],
            minimal_depth: md.mean_depth[f],
            minimal_depth_rank: mp[f],
            selected: md.selected[f],
        })
        .collect();
    Ok(RankingTable {
        rows,
        threshold: md.threshold,
        primary: pi.primary,
    })
}

impl RankingTable {
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("feature,raw,normalized,percent,permutation_rank,minimal_depth,minimal_depth_rank,selected\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.feature, r.raw, r.normalized, r.percent, r.permutation_rank, r.minimal_depth, r.minimal_depth_rank, r.selected
            );
        }
        out
    }

    /// Two rankings side by side, with the threshold line drawn into the
    /// minimal-depth column.
    pub fn to_text(&self) -> String {
        let score = |r: &RankingRow| match self.primary {
            PermutationScore::Raw => r.raw,
            PermutationScore::Normalized => r.normalized,
            PermutationScore::Percent => r.percent,
        };
        let label = match self.primary {
            PermutationScore::Raw => "raw increase",
            PermutationScore::Normalized => "normalized",
            PermutationScore::Percent => "% increase MSE",
        };
        let mut by_perm: Vec<&RankingRow> = self.rows.iter().collect();
        by_perm.sort_by_key(|r| r.permutation_rank);
        let mut by_depth: Vec<&RankingRow> = self.rows.iter().collect();
        by_depth.sort_by_key(|r| r.minimal_depth_rank);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>4}  {:<16}{:>16}    {:<16}{:>14}",
            "rank", "permutation", label, "minimal depth", "depth"
        );
        let mut line_drawn = false;
        for (i, (a, b)) in by_perm.iter().zip(&by_depth).enumerate() {
            if !line_drawn && b.minimal_depth >= self.threshold {
                let _ = writeln!(out, "{:>4}  {:<36}{:-<30}", "", "", format!("- threshold {:.3} ", self.threshold));
                line_drawn = true;
            }
            let _ = writeln!(
                out,
                "{:>4}  {:<16}{:>16.3}    {:<16}{:>14.3}",
                i + 1,
                a.feature,
                score(a),
                b.feature,
                b.minimal_depth
            );
        }
        if !line_drawn {
            let _ = writeln!(out, "{:>4}  {:<36}{:-<30}", "", "", format!("- threshold {:.3} ", self.threshold));
        }
        let selected = self.rows.iter().filter(|r| r.selected).count();
        let _ = writeln!(out, "selected by minimal depth: {selected} of {}", self.rows.len());
        out
    }
}

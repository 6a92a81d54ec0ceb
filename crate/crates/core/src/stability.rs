//! Split-half stability: the data are repeatedly cut into two disjoint
//! halves, a forest is grown on each, and the two halves' OOB accuracy and
//! importance rankings are compared.

use std::fmt::Write as _;

use rand::seq::index;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forest::{Forest, ForestParams};
use crate::importance::{minimal_depth, permutation_importance, PermutationConfig, PermutationScore};
use crate::rng::{derive_seed, derived_rng, stream};
use crate::schema::Dataset;
use crate::tuning::grid_search_mtry;

/// Row indices of the two halves, each ascending. The first half has
/// `ceil(n / 2)` rows drawn without replacement.
pub fn split_half_indices(n: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 4 {
        return Err(Error::TooFewRows { n, min: 4 });
    }
    let mut a = index::sample(&mut derived_rng(seed, stream::SPLIT_HALF, 0), n, n.div_ceil(2)).into_vec();
    a.sort_unstable();
    let mut in_a = vec![false; n];
    for &i in &a {
        in_a[i] = true;
    }
    let b = (0..n).filter(|&i| !in_a[i]).collect();
    Ok((a, b))
}

pub fn split_half(ds: &Dataset, seed: u64) -> Result<(Dataset, Dataset)> {
    let (a, b) = split_half_indices(ds.n_rows(), seed)?;
    Ok((ds.subset(&a)?, ds.subset(&b)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Permutation,
    MinimalDepth,
}

impl Method {
    pub const ALL: [Method; 2] = [Method::Permutation, Method::MinimalDepth];

    pub fn name(self) -> &'static str {
        match self {
            Method::Permutation => "permutation",
            Method::MinimalDepth => "minimal_depth",
        }
    }
}

/// Ranking positions whose occupants are compared between halves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Position {
    Top,
    Second,
    Third,
    SecondFromBottom,
    Bottom,
    /// The bottom two as an unordered pair.
    LastTwo,
}

impl Position {
    pub const ALL: [Position; 6] = [
        Position::Top,
        Position::Second,
        Position::Third,
        Position::SecondFromBottom,
        Position::Bottom,
        Position::LastTwo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Position::Top => "top",
            Position::Second => "second",
            Position::Third => "third",
            Position::SecondFromBottom => "second_from_bottom",
            Position::Bottom => "bottom",
            Position::LastTwo => "last_two",
        }
    }

    /// Positions that exist in a ranking of `p` features.
    pub fn valid_for(p: usize) -> Vec<Position> {
        Position::ALL
            .into_iter()
            .filter(|pos| match pos {
                Position::Top => p >= 1,
                Position::Second | Position::SecondFromBottom | Position::Bottom | Position::LastTwo => p >= 2,
                Position::Third => p >= 3,
            })
            .collect()
    }

    /// Features at this position, sorted (two for `LastTwo`, else one).
    pub fn occupants(self, ranking: &[usize]) -> Vec<usize> {
        let p = ranking.len();
        let mut v = match self {
            Position::Top => vec![ranking[0]],
            Position::Second => vec![ranking[1]],
            Position::Third => vec![ranking[2]],
            Position::SecondFromBottom => vec![ranking[p - 2]],
            Position::Bottom => vec![ranking[p - 1]],
            Position::LastTwo => vec![ranking[p - 2], ranking[p - 1]],
        };
        v.sort_unstable();
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityTuning {
    pub grid: Vec<usize>,
    pub folds: usize,
    /// Trees per cross-validation forest.
    pub n_trees: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityConfig {
    pub iterations: usize,
    pub seed: u64,
    /// Forest settings for both halves; `mtry` is used unless tuning is on.
    pub forest: ForestParams,
    /// Per-half mtry tuning; `None` uses `forest.mtry` throughout.
    pub tune: Option<StabilityTuning>,
    pub permutation_score: PermutationScore,
}

impl StabilityConfig {
    pub fn defaults(p: usize, seed: u64) -> Self {
        StabilityConfig {
            iterations: 100,
            seed,
            forest: ForestParams::defaults(p, seed),
            tune: Some(StabilityTuning {
                grid: (1..=p).collect(),
                folds: 5,
                n_trees: ForestParams::defaults(p, seed).n_trees,
            }),
            permutation_score: PermutationScore::default(),
        }
    }
}

/// One half's forest summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HalfResult {
    pub n: usize,
    pub mtry: usize,
    pub r2_oob: f64,
    pub permutation_ranking: Vec<usize>,
    pub minimal_depth_ranking: Vec<usize>,
    /// Whether some features tied on the ranking score.
    pub permutation_tie: bool,
    pub minimal_depth_tie: bool,
}

impl HalfResult {
    pub fn ranking(&self, m: Method) -> &[usize] {
        match m {
            Method::Permutation => &self.permutation_ranking,
            Method::MinimalDepth => &self.minimal_depth_ranking,
        }
    }

    fn tie(&self, m: Method) -> bool {
        match m {
            Method::Permutation => self.permutation_tie,
            Method::MinimalDepth => self.minimal_depth_tie,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairRecord {
    pub iteration: usize,
    pub a: HalfResult,
    pub b: HalfResult,
    /// Rows of the first half, ascending.
    #[serde(skip)]
    pub rows_a: Vec<usize>,
    #[serde(skip)]
    pub rows_b: Vec<usize>,
}

impl PairRecord {
    pub fn abs_r2_difference(&self) -> f64 {
        (self.a.r2_oob - self.b.r2_oob).abs()
    }
}

fn has_tie(scores: &[f64], ranking: &[usize]) -> bool {
    ranking.windows(2).any(|w| scores[w[0]] == scores[w[1]])
}

fn fit_half(ds: &Dataset, seed: u64, cfg: &StabilityConfig) -> Result<HalfResult> {
    let mtry = match &cfg.tune {
        Some(t) => {
            let fixed = ForestParams {
                n_trees: t.n_trees,
                ..cfg.forest
            };
            grid_search_mtry(ds, &t.grid, t.folds, &fixed, derive_seed(seed, stream::FOLDS, 0))?.chosen
        }
        None => cfg.forest.mtry,
    };
    let params = ForestParams {
        mtry,
        seed,
        ..cfg.forest
    };
    let forest = Forest::fit(ds, &params)?;
    let oob = forest.oob(ds)?;
    let perm_cfg = PermutationConfig {
        primary: cfg.permutation_score,
        ..PermutationConfig::new(derive_seed(seed, stream::PERMUTATION, 0))
    };
    let pi = permutation_importance(&forest, ds, &perm_cfg)?;
    let md = minimal_depth(&forest);
    Ok(HalfResult {
        n: ds.n_rows(),
        mtry,
        r2_oob: oob.r2,
        permutation_tie: has_tie(pi.scores(cfg.permutation_score), &pi.ranking),
        minimal_depth_tie: has_tie(&md.mean_depth, &md.ranking),
        permutation_ranking: pi.ranking,
        minimal_depth_ranking: md.ranking,
    })
}

/// Fits and summarizes both halves of one pair.
pub fn run_pair(a: &Dataset, b: &Dataset, seed_a: u64, seed_b: u64, cfg: &StabilityConfig) -> Result<(HalfResult, HalfResult)> {
    Ok((fit_half(a, seed_a, cfg)?, fit_half(b, seed_b, cfg)?))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Agreement {
    pub method: Method,
    pub position: Position,
    /// Percentage of iterations in which both halves put the same
    /// feature(s) at this position.
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Frequency {
    pub method: Method,
    pub position: Position,
    /// Per feature, the number of half-samples placing it at this position.
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub features: Vec<String>,
    pub pairs: Vec<PairRecord>,
    pub mean_abs_r2_difference: f64,
    pub min_abs_r2_difference: f64,
    pub max_abs_r2_difference: f64,
    pub agreement: Vec<Agreement>,
    pub frequency: Vec<Frequency>,
    /// Half-samples whose ranking contained tied scores, per method.
    pub ties: Vec<(Method, usize)>,
}

pub fn run_stability(ds: &Dataset, cfg: &StabilityConfig) -> Result<StabilityReport> {
    if cfg.iterations == 0 {
        return Err(Error::InvalidParams("iterations must be at least 1".into()));
    }
    let mut pairs = Vec::with_capacity(cfg.iterations);
    for i in 0..cfg.iterations {
        let iter_seed = derive_seed(cfg.seed, stream::STABILITY, i as u64);
        let (rows_a, rows_b) = split_half_indices(ds.n_rows(), iter_seed)?;
        let (a, b) = (ds.subset(&rows_a)?, ds.subset(&rows_b)?);
        let (ha, hb) = run_pair(
            &a,
            &b,
            derive_seed(iter_seed, stream::TREE, 0),
            derive_seed(iter_seed, stream::TREE, 1),
            cfg,
        )?;
        pairs.push(PairRecord {
            iteration: i,
            a: ha,
            b: hb,
            rows_a,
            rows_b,
        });
    }
    Ok(summarize_pairs(ds.schema().feature_names(), pairs))
}

/// Aggregates pair records into agreement and frequency statistics.
pub fn summarize_pairs(features: Vec<String>, pairs: Vec<PairRecord>) -> StabilityReport {
    let p = features.len();
    let iters = pairs.len() as f64;
    let diffs: Vec<f64> = pairs.iter().map(PairRecord::abs_r2_difference).collect();
    let positions = Position::valid_for(p);
    let mut agreement = Vec::new();
    let mut frequency = Vec::new();
    for m in Method::ALL {
        for &pos in &positions {
            let agree = pairs
                .iter()
                .filter(|r| pos.occupants(r.a.ranking(m)) == pos.occupants(r.b.ranking(m)))
                .count();
            agreement.push(Agreement {
                method: m,
                position: pos,
                percent: 100.0 * agree as f64 / iters,
            });
            let mut counts = vec![0; p];
            for r in &pairs {
                for half in [&r.a, &r.b] {
                    for f in pos.occupants(half.ranking(m)) {
                        counts[f] += 1;
                    }
                }
            }
            frequency.push(Frequency {
                method: m,
                position: pos,
                counts,
            });
        }
    }
    let ties = Method::ALL
        .into_iter()
        .map(|m| (m, pairs.iter().map(|r| usize::from(r.a.tie(m)) + usize::from(r.b.tie(m))).sum()))
        .collect();
    StabilityReport {
        features,
        mean_abs_r2_difference: diffs.iter().sum::<f64>() / iters,
        min_abs_r2_difference: diffs.iter().copied().fold(f64::INFINITY, f64::min),
        max_abs_r2_difference: diffs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        pairs,
        agreement,
        frequency,
        ties,
    }
}

impl StabilityReport {
    pub fn agreement_percent(&self, method: Method, position: Position) -> Option<f64> {
        self.agreement
            .iter()
            .find(|a| a.method == method && a.position == position)
            .map(|a| a.percent)
    }

    pub fn iterations_csv(&self) -> String {
        let names = |r: &[usize]| r.iter().map(|&f| self.features[f].as_str()).collect::<Vec<_>>().join(" ");
        let mut out = String::from(
            "iteration,n_a,n_b,mtry_a,mtry_b,r2_oob_a,r2_oob_b,abs_r2_difference,\
             permutation_ranking_a,permutation_ranking_b,minimal_depth_ranking_a,minimal_depth_ranking_b\n",
        );
        for r in &self.pairs {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.iteration + 1,
                r.a.n,
                r.b.n,
                r.a.mtry,
                r.b.mtry,
                r.a.r2_oob,
                r.b.r2_oob,
                r.abs_r2_difference(),
                names(&r.a.permutation_ranking),
                names(&r.b.permutation_ranking),
                names(&r.a.minimal_depth_ranking),
                names(&r.b.minimal_depth_ranking)
            );
        }
        out
    }

    pub fn agreement_csv(&self) -> String {
        let mut out = String::from("position,permutation_percent,minimal_depth_percent\n");
        for pos in Position::ALL {
            if let (Some(p), Some(m)) = (
                self.agreement_percent(Method::Permutation, pos),
                self.agreement_percent(Method::MinimalDepth, pos),
            ) {
                let _ = writeln!(out, "{},{p},{m}", pos.name());
            }
        }
        out
    }

    /// Long format: one row per (method, position, feature).
    pub fn frequency_csv(&self) -> String {
        let mut out = String::from("method,position,feature,count,percent\n");
        for fr in &self.frequency {
            let total: usize = fr.counts.iter().sum();
            for (f, &c) in fr.counts.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    fr.method.name(),
                    fr.position.name(),
                    self.features[f],
                    c,
                    100.0 * c as f64 / total as f64
                );
            }
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("statistic,value\n");
        let _ = writeln!(out, "iterations,{}", self.pairs.len());
        let _ = writeln!(out, "mean_abs_r2_difference,{}", self.mean_abs_r2_difference);
        let _ = writeln!(out, "min_abs_r2_difference,{}", self.min_abs_r2_difference);
        let _ = writeln!(out, "max_abs_r2_difference,{}", self.max_abs_r2_difference);
        for a in &self.agreement {
            let _ = writeln!(out, "{}_{}_agreement_percent,{}", a.method.name(), a.position.name(), a.percent);
        }
        for (m, t) in &self.ties {
            let _ = writeln!(out, "{}_tied_half_samples,{t}", m.name());
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "split-half iterations: {}", self.pairs.len());
        let _ = writeln!(
            out,
            "|R2_OOB(A) - R2_OOB(B)|: mean {:.2}%, min {:.2}%, max {:.2}%",
            100.0 * self.mean_abs_r2_difference,
            100.0 * self.min_abs_r2_difference,
            100.0 * self.max_abs_r2_difference
        );
        let _ = writeln!(out, "{:<20}{:>14}{:>16}", "position", "permutation", "minimal depth");
        for pos in Position::ALL {
            if let (Some(p), Some(m)) = (
                self.agreement_percent(Method::Permutation, pos),
                self.agreement_percent(Method::MinimalDepth, pos),
            ) {
                let _ = writeln!(out, "{:<20}{:>13.1}%{:>15.1}%", pos.name(), p, m);
            }
        }
        for (m, t) in &self.ties {
            let _ = writeln!(out, "{} rankings with tied scores: {t}", m.name());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_sizes_and_disjointness() {
        let (a, b) = split_half_indices(934, 1).unwrap();
        assert_eq!((a.len(), b.len()), (467, 467));
        let (a, b) = split_half_indices(5, 1).unwrap();
        assert_eq!((a.len(), b.len()), (3, 2));
        assert!(a.iter().all(|i| !b.contains(i)));
        assert_eq!(split_half_indices(5, 1).unwrap(), (a, b));
        assert!(matches!(split_half_indices(3, 1), Err(Error::TooFewRows { n: 3, min: 4 })));
    }

    #[test]
    fn occupants() {
        let r = [4, 2, 0, 1, 3];
        assert_eq!(Position::Top.occupants(&r), vec![4]);
        assert_eq!(Position::Third.occupants(&r), vec![0]);
        assert_eq!(Position::SecondFromBottom.occupants(&r), vec![1]);
        assert_eq!(Position::LastTwo.occupants(&r), vec![1, 3]);
        assert_eq!(Position::valid_for(2).len(), 5);
    }

    fn half(perm: Vec<usize>, md: Vec<usize>, r2: f64) -> HalfResult {
        HalfResult {
            n: 10,
            mtry: 1,
            r2_oob: r2,
            permutation_ranking: perm,
            minimal_depth_ranking: md,
            permutation_tie: false,
            minimal_depth_tie: true,
        }
    }

    #[test]
    fn agreement_bookkeeping() {
        let pairs = vec![
            PairRecord {
                iteration: 0,
                a: half(vec![0, 1, 2, 3], vec![0, 1, 2, 3], 0.8),
                b: half(vec![1, 0, 2, 3], vec![0, 1, 3, 2], 0.7),
                rows_a: vec![],
                rows_b: vec![],
            },
            PairRecord {
                iteration: 1,
                a: half(vec![0, 1, 2, 3], vec![0, 2, 1, 3], 0.9),
                b: half(vec![0, 1, 3, 2], vec![0, 1, 2, 3], 0.6),
                rows_a: vec![],
                rows_b: vec![],
            },
        ];
        let names = (0..4).map(|i| format!("f{i}")).collect();
        let rep = summarize_pairs(names, pairs);
        assert_eq!(rep.agreement_percent(Method::Permutation, Position::Top), Some(50.0));
        assert_eq!(rep.agreement_percent(Method::MinimalDepth, Position::Top), Some(100.0));
        assert_eq!(rep.agreement_percent(Method::Permutation, Position::LastTwo), Some(100.0));
        assert_eq!(rep.agreement_percent(Method::MinimalDepth, Position::Bottom), Some(50.0));
        assert!((rep.mean_abs_r2_difference - 0.2).abs() < 1e-12);
        assert!((rep.min_abs_r2_difference - 0.1).abs() < 1e-12);
        for fr in &rep.frequency {
            let per_half = if fr.position == Position::LastTwo { 2 } else { 1 };
            assert_eq!(fr.counts.iter().sum::<usize>(), 4 * per_half);
        }
        assert_eq!(rep.ties, vec![(Method::Permutation, 0), (Method::MinimalDepth, 4)]);
        assert_eq!(rep.agreement_csv().lines().count(), 7);
        assert_eq!(rep.frequency_csv().lines().count(), 1 + 2 * 6 * 4);
    }
}

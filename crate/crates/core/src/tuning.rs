//! Hyperparameter selection: mtry by k-fold cross-validated grid search and
//! the number of trees by an out-of-bag convergence scan.

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forest::{Forest, ForestParams};
use crate::rng::{derive_seed, derived_rng, stream};
use crate::schema::Dataset;

/// Means within this distance of the best count as tied; ties go to the
/// smaller mtry.
pub const MTRY_TIE_TOLERANCE: f64 = 1e-4;

/// Largest relative OOB MSE deviation from the largest forest that a chosen
/// forest size may show, at that size and every larger scanned size.
pub const NTREE_REL_TOLERANCE: f64 = 0.01;

/// Fold id of every row: a seeded shuffle cut into contiguous chunks whose
/// sizes differ by at most one.
pub fn assign_folds(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidParams(format!("need at least 2 folds, got {k}")));
    }
    let base = n / k;
    if base < 2 {
        return Err(Error::FoldTooSmall { fold: k - 1, size: base });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut derived_rng(seed, stream::FOLDS, 0));
    let extra = n % k;
    let mut folds = vec![0; n];
    let mut pos = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        for &row in &order[pos..pos + size] {
            folds[row] = f;
        }
        pos += size;
    }
    Ok(folds)
}

/// `(training rows, held-out rows)` for each fold, rows ascending.
pub fn fold_splits(folds: &[usize], k: usize) -> Vec<(Vec<usize>, Vec<usize>)> {
    (0..k)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..folds.len()).partition(|&i| folds[i] == f);
            (train, test)
        })
        .collect()
}

/// `1 - MSE / Var` on held-out rows, both normalized by the row count.
pub fn heldout_r2(y: &[f64], predictions: &[f64]) -> Result<f64> {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let mse = y.iter().zip(predictions).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
    Ok(1.0 - mse / var)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MtryCurve {
    pub grid: Vec<usize>,
    /// `cv_r2[i][f]`: held-out R² of grid value `i` on fold `f`.
    pub cv_r2: Vec<Vec<f64>>,
    pub mean_cv_r2: Vec<f64>,
    pub chosen: usize,
}

impl MtryCurve {
    pub fn to_csv(&self) -> String {
        let folds = self.cv_r2.first().map_or(0, Vec::len);
        let mut out = String::from("mtry,mean_cv_r2");
        for f in 0..folds {
            out.push_str(&format!(",fold{}_cv_r2", f + 1));
        }
        out.push_str(",chosen\n");
        for (i, &m) in self.grid.iter().enumerate() {
            out.push_str(&format!("{m},{}", self.mean_cv_r2[i]));
            for v in &self.cv_r2[i] {
                out.push_str(&format!(",{v}"));
            }
            out.push_str(&format!(",{}\n", m == self.chosen));
        }
        out
    }
}

/// Smallest grid value whose mean is within `tolerance` of the best mean.
pub fn select_mtry(grid: &[usize], means: &[f64], tolerance: f64) -> usize {
    let best = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    grid.iter()
        .zip(means)
        .filter(|(_, &m)| m >= best - tolerance)
        .map(|(&g, _)| g)
        .min()
        .expect("grid is non-empty")
}

fn check_grid(grid: &[usize], p: usize) -> Result<Vec<usize>> {
    let mut g = grid.to_vec();
    g.sort_unstable();
    g.dedup();
    if g.is_empty() || g[0] == 0 || g[g.len() - 1] > p {
        return Err(Error::InvalidParams(format!("mtry grid must be a non-empty subset of 1..={p}")));
    }
    Ok(g)
}

/// K-fold cross-validated grid search over mtry. Every grid value sees the
/// same folds and the same per-fold forest seed.
pub fn grid_search_mtry(
    ds: &Dataset,
    grid: &[usize],
    folds: usize,
    fixed: &ForestParams,
    seed: u64,
) -> Result<MtryCurve> {
    let grid = check_grid(grid, ds.n_features())?;
    let assignment = assign_folds(ds.n_rows(), folds, seed)?;
    let splits = fold_splits(&assignment, folds);
    let mut prepared = Vec::with_capacity(folds);
    for (f, (train, test)) in splits.iter().enumerate() {
        let train_ds = ds.subset(train)?;
        let test_ds = ds.subset(test)?;
        prepared.push((train_ds, test_ds, derive_seed(seed, stream::CV_FOREST, f as u64)));
    }
    let mut cv_r2 = Vec::with_capacity(grid.len());
    for &mtry in &grid {
        let mut row = Vec::with_capacity(folds);
        for (train_ds, test_ds, fold_seed) in &prepared {
            let params = ForestParams {
                mtry,
                seed: *fold_seed,
                ..*fixed
            };
            let forest = Forest::fit(train_ds, &params)?;
            let pred = forest.predict_dataset(test_ds)?;
            row.push(heldout_r2(test_ds.response(), &pred)?);
        }
        cv_r2.push(row);
    }
    let mean_cv_r2: Vec<f64> = cv_r2.iter().map(|r| r.iter().sum::<f64>() / r.len() as f64).collect();
    let chosen = select_mtry(&grid, &mean_cv_r2, MTRY_TIE_TOLERANCE);
    Ok(MtryCurve {
        grid,
        cv_r2,
        mean_cv_r2,
        chosen,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanRow {
    pub n_trees: usize,
    pub mse_oob: f64,
    pub r2_oob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NtreeScan {
    pub rows: Vec<ScanRow>,
    pub chosen: usize,
}

impl NtreeScan {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n_trees,mse_oob,r2_oob,chosen\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{}\n", r.n_trees, r.mse_oob, r.r2_oob, r.n_trees == self.chosen));
        }
        out
    }
}

/// Smallest scanned size from which every larger scanned size stays within
/// `rel_tol` of the largest forest's OOB MSE.
pub fn choose_n_trees(rows: &[ScanRow], rel_tol: f64) -> usize {
    let last = rows.last().expect("scan is non-empty");
    let mut chosen = last.n_trees;
    for r in rows.iter().rev() {
        if (r.mse_oob - last.mse_oob).abs() <= rel_tol * last.mse_oob {
            chosen = r.n_trees;
        } else {
            break;
        }
    }
    chosen
}

/// OOB error for forests of each size in `ks`. One forest of the largest
/// size is grown; smaller forests are its leading trees, which are exactly
/// the forests a smaller size would grow from the same seed.
pub fn ntree_scan(ds: &Dataset, ks: &[usize], fixed: &ForestParams, seed: u64) -> Result<NtreeScan> {
    if ks.is_empty() || ks.windows(2).any(|w| w[0] >= w[1]) || ks[0] == 0 {
        return Err(Error::InvalidParams("tree counts must be positive and strictly ascending".into()));
    }
    let params = ForestParams {
        n_trees: ks[ks.len() - 1],
        seed,
        ..*fixed
    };
    let forest = Forest::fit(ds, &params)?;
    let reports = forest.oob_prefixes(ds, ks)?;
    let rows: Vec<ScanRow> = ks
        .iter()
        .zip(reports)
        .map(|(&k, r)| ScanRow {
            n_trees: k,
            mse_oob: r.mse,
            r2_oob: r.r2,
        })
        .collect();
    let chosen = choose_n_trees(&rows, NTREE_REL_TOLERANCE);
    Ok(NtreeScan { rows, chosen })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuneResult {
    pub mtry: MtryCurve,
    pub scan: Option<NtreeScan>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneConfig {
    pub grid: Vec<usize>,
    pub folds: usize,
    /// Tree counts to scan; empty skips the scan.
    pub scan_sizes: Vec<usize>,
    pub seed: u64,
}

impl TuneConfig {
    pub fn defaults(p: usize, seed: u64) -> Self {
        TuneConfig {
            grid: (1..=p).collect(),
            folds: 5,
            scan_sizes: vec![50, 100, 200, 350, 500, 700, 1000, 1400, 2000],
            seed,
        }
    }
}

/// Grid search, then (optionally) the tree-count scan at the chosen mtry.
pub fn tune(ds: &Dataset, fixed: &ForestParams, cfg: &TuneConfig) -> Result<TuneResult> {
    let mtry = grid_search_mtry(ds, &cfg.grid, cfg.folds, fixed, cfg.seed)?;
    let scan = if cfg.scan_sizes.is_empty() {
        None
    } else {
        let params = ForestParams {
            mtry: mtry.chosen,
            ..*fixed
        };
        Some(ntree_scan(ds, &cfg.scan_sizes, &params, derive_seed(cfg.seed, stream::TREE, u64::MAX))?)
    };
    Ok(TuneResult { mtry, scan })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{FeatureSpec, ResponseSpec, Schema, ValueRange};

    #[test]
    fn folds_partition_rows_evenly() {
        let folds = assign_folds(23, 5, 4).unwrap();
        let mut sizes = [0usize; 5];
        for &f in &folds {
            sizes[f] += 1;
        }
        assert_eq!(sizes, [5, 5, 5, 4, 4]);
        assert_eq!(assign_folds(23, 5, 4).unwrap(), folds);
        let splits = fold_splits(&folds, 5);
        let mut seen = vec![0; 23];
        for (train, test) in &splits {
            assert_eq!(train.len() + test.len(), 23);
            for &i in test {
                seen[i] += 1;
                assert!(!train.contains(&i));
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn small_folds_are_rejected() {
        assert!(matches!(assign_folds(9, 5, 1), Err(Error::FoldTooSmall { .. })));
        assert!(assign_folds(10, 5, 1).is_ok());
        assert!(assign_folds(10, 1, 1).is_err());
    }

    #[test]
    fn ties_go_to_smaller_mtry() {
        assert_eq!(select_mtry(&[3, 4], &[0.81234, 0.81236], MTRY_TIE_TOLERANCE), 3);
        assert_eq!(select_mtry(&[3, 4], &[0.80, 0.81], MTRY_TIE_TOLERANCE), 4);
        assert_eq!(select_mtry(&[9], &[0.5], MTRY_TIE_TOLERANCE), 9);
    }

    #[test]
    fn chosen_size_is_stable_tail() {
        let row = |n_trees, mse_oob| ScanRow {
            n_trees,
            mse_oob,
            r2_oob: 0.0,
        };
        let rows = [row(50, 1.2), row(350, 1.05), row(700, 1.004), row(1000, 1.008), row(2000, 1.0)];
        assert_eq!(choose_n_trees(&rows, 0.01), 700);
        let rows = [row(50, 1.2), row(350, 1.0), row(700, 1.02), row(2000, 1.0)];
        assert_eq!(choose_n_trees(&rows, 0.01), 2000);
    }

    fn data(n: usize) -> Dataset {
        let schema = Schema::new(
            vec![
                FeatureSpec::continuous("a", "", ValueRange::UNBOUNDED),
                FeatureSpec::continuous("b", "", ValueRange::UNBOUNDED),
            ],
            ResponseSpec {
                name: "y".into(),
                unit: String::new(),
                range: ValueRange::UNBOUNDED,
            },
        )
        .unwrap();
        let a: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 1.91).cos()).collect();
        let y = a.iter().zip(&b).map(|(x, z)| 3.0 * x + 0.2 * z).collect();
        Dataset::new(schema, vec![a, b], y).unwrap()
    }

    #[test]
    fn grid_search_and_scan_run() {
        let ds = data(60);
        let fixed = ForestParams {
            n_trees: 20,
            ..ForestParams::defaults(2, 0)
        };
        let curve = grid_search_mtry(&ds, &[2, 1], 3, &fixed, 6).unwrap();
        assert_eq!(curve.grid, vec![1, 2]);
        assert_eq!(curve.cv_r2.len(), 2);
        assert!(curve.mean_cv_r2.iter().all(|r| *r > 0.5));
        assert_eq!(curve.to_csv().lines().count(), 3);
        let scan = ntree_scan(&ds, &[1], &fixed, 2).unwrap();
        assert_eq!(scan.rows.len(), 1);
        assert!(grid_search_mtry(&ds, &[3], 3, &fixed, 6).is_err());
        assert!(ntree_scan(&ds, &[10, 5], &fixed, 2).is_err());
    }

    #[test]
    fn scan_prefixes_match_independent_forests() {
        let ds = data(40);
        let fixed = ForestParams::defaults(2, 0);
        let scan = ntree_scan(&ds, &[5, 15], &fixed, 11).unwrap();
        let small = Forest::fit(&ds, &ForestParams { n_trees: 5, seed: 11, ..fixed }).unwrap();
        assert_eq!(scan.rows[0].mse_oob, small.oob(&ds).unwrap().mse);
    }
}

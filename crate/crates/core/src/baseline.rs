//! Ordinary least squares benchmark on main effects, with treatment-coded
//! categoricals, evaluated by bootstrap out-of-bag, k-fold and leave-one-out
//! resampling.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::{bootstrap, OobAccumulator};
use crate::rng::{derived_rng, stream};
use crate::schema::{Dataset, Schema};
use crate::tuning::{assign_folds, fold_splits};

/// Columns with `|r_jj| <= RANK_TOL * |column|` in the QR factor are treated
/// as linearly dependent on earlier columns.
pub const RANK_TOL: f64 = 1e-9;

/// Maps predictor rows to design rows: an intercept, the continuous features
/// in schema order, then one indicator per non-reference level. The first
/// level of every categorical is the reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignEncoder {
    schema: Schema,
    columns: Vec<String>,
}

impl DesignEncoder {
    pub fn new(schema: &Schema) -> Self {
        let mut columns = vec!["(intercept)".to_string()];
        for f in schema.features() {
            if f.levels().is_none() {
                columns.push(f.name.clone());
            }
        }
        for f in schema.features() {
            if let Some(levels) = f.levels() {
                for l in &levels[1..] {
                    columns.push(format!("{}={}", f.name, l));
                }
            }
        }
        DesignEncoder {
            schema: schema.clone(),
            columns,
        }
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn encode(&self, row: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.columns.len());
        out.push(1.0);
        for (f, spec) in self.schema.features().iter().enumerate() {
            if spec.levels().is_none() {
                out.push(row[f]);
            }
        }
        for (f, spec) in self.schema.features().iter().enumerate() {
            if let Some(levels) = spec.levels() {
                let code = row[f] as usize;
                out.extend((1..levels.len()).map(|l| if l == code { 1.0 } else { 0.0 }));
            }
        }
        out
    }

    /// Inverse of [`encode`](Self::encode).
    pub fn decode(&self, design: &[f64]) -> Result<Vec<f64>> {
        if design.len() != self.columns.len() || design[0] != 1.0 {
            return Err(Error::SchemaMismatch("not a design row of this encoder".into()));
        }
        let p = self.schema.n_features();
        let mut row = vec![0.0; p];
        let mut i = 1;
        for (f, spec) in self.schema.features().iter().enumerate() {
            if spec.levels().is_none() {
                row[f] = design[i];
                i += 1;
            }
        }
        for (f, spec) in self.schema.features().iter().enumerate() {
            if let Some(levels) = spec.levels() {
                let block = &design[i..i + levels.len() - 1];
                let hot: Vec<usize> = (0..block.len()).filter(|&j| block[j] == 1.0).collect();
                if hot.len() > 1 || block.iter().any(|&v| v != 0.0 && v != 1.0) {
                    return Err(Error::SchemaMismatch(format!("invalid indicator block for `{}`", spec.name)));
                }
                row[f] = hot.first().map_or(0.0, |&j| (j + 1) as f64);
                i += levels.len() - 1;
            }
        }
        Ok(row)
    }

    fn matrix(&self, ds: &Dataset, rows: &[usize]) -> DMatrix<f64> {
        let c = self.columns.len();
        let mut data = Vec::with_capacity(rows.len() * c);
        for &r in rows {
            data.extend(self.encode(&ds.row(r)));
        }
        DMatrix::from_row_slice(rows.len(), c, &data)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    encoder: DesignEncoder,
    coefficients: Vec<f64>,
    /// Dummy columns of levels absent from the fitted rows; held at 0.
    #[serde(default)]
    dropped: Vec<usize>,
}

impl LinearModel {
    pub fn columns(&self) -> &[String] {
        self.encoder.columns()
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn schema(&self) -> &Schema {
        &self.encoder.schema
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        self.encoder
            .encode(row)
            .iter()
            .zip(&self.coefficients)
            .map(|(x, b)| x * b)
            .sum()
    }

    /// False when the row has a level that never occurred in the fitted rows.
    pub fn covers(&self, row: &[f64]) -> bool {
        if self.dropped.is_empty() {
            return true;
        }
        let design = self.encoder.encode(row);
        self.dropped.iter().all(|&j| design[j] == 0.0)
    }

    /// Names of columns whose level never occurred in the fitted rows.
    pub fn dropped(&self) -> Vec<&str> {
        self.dropped.iter().map(|&j| self.encoder.columns[j].as_str()).collect()
    }

    pub fn coefficients_csv(&self) -> String {
        let mut out = String::from("term,coefficient,estimated\n");
        for (j, (c, b)) in self.columns().iter().zip(&self.coefficients).enumerate() {
            out.push_str(&format!("{c},{b},{}\n", !self.dropped.contains(&j)));
        }
        out
    }
}

/// Least squares through a Householder QR factorization.
fn solve(encoder: &DesignEncoder, x: DMatrix<f64>, y: DVector<f64>) -> Result<Vec<f64>> {
    let (n, c) = x.shape();
    if n <= c {
        return Err(Error::Underdetermined { rows: n, columns: c });
    }
    let norms: Vec<f64> = (0..c).map(|j| x.column(j).norm()).collect();
    let qr = x.qr();
    let r = qr.r();
    let deficient: Vec<String> = (0..c)
        .filter(|&j| r[(j, j)].abs() <= RANK_TOL * norms[j])
        .map(|j| encoder.columns[j].clone())
        .collect();
    if !deficient.is_empty() {
        return Err(Error::RankDeficient { columns: deficient });
    }
    let qty = qr.q().transpose() * y;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Invariant("triangular solve failed on a full-rank factor".into()))?;
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::Invariant("non-finite least squares coefficients".into()));
    }
    Ok(beta.iter().copied().collect())
}

/// Fits on the listed rows; a row listed twice counts twice.
pub fn fit_ols_rows(ds: &Dataset, rows: &[usize]) -> Result<LinearModel> {
    let encoder = DesignEncoder::new(ds.schema());
    let x = encoder.matrix(ds, rows);
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|&r| ds.response()[r]));
    let coefficients = solve(&encoder, x, y)?;
    Ok(LinearModel {
        encoder,
        coefficients,
        dropped: vec![],
    })
}

/// Like [`fit_ols_rows`], but a dummy column that is zero on every listed row
/// is removed before solving and reported with coefficient 0.
pub fn fit_ols_rows_present(ds: &Dataset, rows: &[usize]) -> Result<LinearModel> {
    let encoder = DesignEncoder::new(ds.schema());
    let x = encoder.matrix(ds, rows);
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|&r| ds.response()[r]));
    let first_dummy = 1 + ds.schema().features().iter().filter(|f| !f.is_categorical()).count();
    let dropped: Vec<usize> = (first_dummy..encoder.n_columns())
        .filter(|&j| x.column(j).iter().all(|&v| v == 0.0))
        .collect();
    let kept: Vec<usize> = (0..encoder.n_columns()).filter(|j| !dropped.contains(j)).collect();
    let reduced = DesignEncoder {
        columns: kept.iter().map(|&j| encoder.columns[j].clone()).collect(),
        ..encoder.clone()
    };
    let beta = solve(&reduced, x.select_columns(&kept), y)?;
    let mut coefficients = vec![0.0; encoder.n_columns()];
    for (&j, b) in kept.iter().zip(beta) {
        coefficients[j] = b;
    }
    Ok(LinearModel {
        encoder,
        coefficients,
        dropped,
    })
}

pub fn fit_ols(ds: &Dataset) -> Result<LinearModel> {
    fit_ols_rows(ds, &(0..ds.n_rows()).collect::<Vec<_>>())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum Resampling {
    BootstrapOob { resamples: usize },
    KFold { folds: usize },
    Loocv,
}

/// One refit: training rows (with repeats) and the rows it predicts.
#[derive(Debug, Clone, PartialEq)]
pub struct Resample {
    pub train: Vec<usize>,
    pub heldout: Vec<usize>,
}

pub fn resample_plan(n: usize, scheme: Resampling, seed: u64) -> Result<Vec<Resample>> {
    match scheme {
        Resampling::BootstrapOob { resamples } => {
            if resamples == 0 {
                return Err(Error::InvalidParams("need at least one bootstrap resample".into()));
            }
            Ok((0..resamples)
                .map(|b| {
                    let in_bag = bootstrap(&mut derived_rng(seed, stream::OLS_BOOTSTRAP, b as u64), n);
                    let mut train = Vec::with_capacity(n);
                    let mut heldout = Vec::new();
                    for (i, &m) in in_bag.iter().enumerate() {
                        train.extend(std::iter::repeat(i).take(m as usize));
                        if m == 0 {
                            heldout.push(i);
                        }
                    }
                    Resample { train, heldout }
                })
                .collect())
        }
        Resampling::KFold { folds } => {
            let assignment = assign_folds(n, folds, seed)?;
            Ok(fold_splits(&assignment, folds)
                .into_iter()
                .map(|(train, heldout)| Resample { train, heldout })
                .collect())
        }
        Resampling::Loocv => {
            if n < 2 {
                return Err(Error::TooFewRows { n, min: 2 });
            }
            Ok((0..n)
                .map(|i| Resample {
                    train: (0..n).filter(|&j| j != i).collect(),
                    heldout: vec![i],
                })
                .collect())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OlsEvaluation {
    pub scheme: Resampling,
    pub r2: f64,
    pub mse: f64,
    /// Rows that received at least one held-out prediction.
    pub n_predicted: usize,
    pub resamples: usize,
    /// Resamples whose design matrix was rank deficient or underdetermined.
    pub skipped: usize,
    /// Held-out rows left unpredicted because their level never occurred in
    /// that resample's training rows.
    pub withheld: usize,
}

/// Held-out predictions per row (averaged when a row is held out more than
/// once), the number of skipped resamples, and the number of held-out rows
/// withheld because their level was absent from the training rows.
pub fn heldout_predictions(ds: &Dataset, plan: &[Resample]) -> Result<(Vec<Option<f64>>, usize, usize)> {
    let fits: Vec<Option<(Vec<(usize, f64)>, usize)>> = plan
        .par_iter()
        .map(|r| match fit_ols_rows_present(ds, &r.train) {
            Ok(model) => {
                let mut preds = Vec::with_capacity(r.heldout.len());
                for &i in &r.heldout {
                    let row = ds.row(i);
                    if model.covers(&row) {
                        preds.push((i, model.predict(&row)));
                    }
                }
                let withheld = r.heldout.len() - preds.len();
                Ok(Some((preds, withheld)))
            }
            Err(Error::RankDeficient { .. } | Error::Underdetermined { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;
    let mut acc = OobAccumulator::new(ds.n_rows());
    let (mut skipped, mut withheld) = (0, 0);
    for f in &fits {
        match f {
            Some((preds, w)) => {
                acc.add(preds);
                withheld += w;
            }
            None => skipped += 1,
        }
    }
    Ok((acc.predictions(), skipped, withheld))
}

/// Resampled R² of the OLS baseline: `1 - MSE / (TSS / n')` over the `n'`
/// rows with a held-out prediction.
pub fn evaluate_ols(ds: &Dataset, scheme: Resampling, seed: u64) -> Result<OlsEvaluation> {
    let plan = resample_plan(ds.n_rows(), scheme, seed)?;
    let (preds, skipped, withheld) = heldout_predictions(ds, &plan)?;
    let pairs: Vec<(f64, f64)> = preds
        .iter()
        .zip(ds.response())
        .filter_map(|(p, &y)| p.map(|p| (p, y)))
        .collect();
    if pairs.is_empty() {
        return Err(Error::NoOobCoverage);
    }
    let m = pairs.len() as f64;
    let mse = pairs.iter().map(|(p, y)| (y - p) * (y - p)).sum::<f64>() / m;
    let mean = pairs.iter().map(|(_, y)| y).sum::<f64>() / m;
    let tss = pairs.iter().map(|(_, y)| (y - mean) * (y - mean)).sum::<f64>();
    if tss == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok(OlsEvaluation {
        scheme,
        r2: 1.0 - mse / (tss / m),
        mse,
        n_predicted: pairs.len(),
        resamples: plan.len(),
        skipped,
        withheld,
    })
}

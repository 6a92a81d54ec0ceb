//! Column summaries: five-number summaries plus mean for continuous columns,
//! level counts for categorical ones.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::schema::Dataset;

/// Quantile of already sorted data by linear interpolation between order
/// statistics (the "type 7" rule).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sum of squared deviations from the mean.
pub fn sum_sq_dev(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinuousSummary {
    pub name: String,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub mean: f64,
    pub q3: f64,
    pub max: f64,
}

impl ContinuousSummary {
    pub fn of(name: &str, values: &[f64]) -> Self {
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        ContinuousSummary {
            name: name.to_string(),
            min: s[0],
            q1: quantile_sorted(&s, 0.25),
            median: quantile_sorted(&s, 0.5),
            mean: mean(&s),
            q3: quantile_sorted(&s, 0.75),
            max: s[s.len() - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelCount {
    pub level: String,
    pub count: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoricalSummary {
    pub name: String,
    pub levels: Vec<LevelCount>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryStats {
    pub n: usize,
    /// Response first, then continuous predictors in schema order.
    pub continuous: Vec<ContinuousSummary>,
    pub categorical: Vec<CategoricalSummary>,
}

pub fn summarize(ds: &Dataset) -> SummaryStats {
    let schema = ds.schema();
    let n = ds.n_rows();
    let mut continuous = vec![ContinuousSummary::of(&schema.response().name, ds.response())];
    let mut categorical = Vec::new();
    for (f, spec) in schema.features().iter().enumerate() {
        match spec.levels() {
            None => continuous.push(ContinuousSummary::of(&spec.name, ds.column(f))),
            Some(levels) => {
                let mut counts = vec![0usize; levels.len()];
                for &v in ds.column(f) {
                    counts[v as usize] += 1;
                }
                categorical.push(CategoricalSummary {
                    name: spec.name.clone(),
                    levels: levels
                        .iter()
                        .zip(counts)
                        .map(|(l, c)| LevelCount {
                            level: l.clone(),
                            count: c,
                            percent: 100.0 * c as f64 / n as f64,
                        })
                        .collect(),
                });
            }
        }
    }
    SummaryStats {
        n,
        continuous,
        categorical,
    }
}

impl SummaryStats {
    pub fn continuous_csv(&self) -> String {
        let mut out = String::from("variable,min,q1,median,mean,q3,max\n");
        for c in &self.continuous {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                c.name, c.min, c.q1, c.median, c.mean, c.q3, c.max
            ));
        }
        out
    }

    pub fn categorical_csv(&self) -> String {
        let mut out = String::from("variable,level,count,percent\n");
        for c in &self.categorical {
            for l in &c.levels {
                out.push_str(&format!("{},{},{},{}\n", c.name, l.level, l.count, l.percent));
            }
        }
        out
    }
}

impl fmt::Display for SummaryStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "observations: {}", self.n)?;
        writeln!(
            f,
            "{:<16}{:>10}{:>10}{:>10}{:>10}{:>10}{:>10}",
            "variable", "min", "1st qu.", "median", "mean", "3rd qu.", "max"
        )?;
        for c in &self.continuous {
            writeln!(
                f,
                "{:<16}{:>10.2}{:>10.2}{:>10.2}{:>10.2}{:>10.2}{:>10.2}",
                c.name, c.min, c.q1, c.median, c.mean, c.q3, c.max
            )?;
        }
        for c in &self.categorical {
            writeln!(f, "{}", c.name)?;
            for l in &c.levels {
                writeln!(f, "  {:<22}{:>6}{:>8.1}%", l.level, l.count, l.percent)?;
            }
        }
        Ok(())
    }
}

/// Spread over the money market rate; both arguments in percent.
pub fn derive_spread(coupon: f64, money_market_rate: f64) -> Result<f64> {
    if !(coupon.is_finite() && money_market_rate.is_finite()) || money_market_rate < 0.0 {
        return Err(Error::InvalidParams(format!(
            "coupon {coupon} and money market rate {money_market_rate} must be finite, rate non-negative"
        )));
    }
    if coupon < money_market_rate {
        return Err(Error::NegativeSpread {
            coupon,
            rate: money_market_rate,
        });
    }
    Ok(coupon - money_market_rate)
}

//! Feature metadata and the validated, column-major [`Dataset`].
//!
//! Predictor values are stored as `f64` columns. Categorical cells hold the
//! zero-based index of their level in the schema's level list, so a predictor
//! row is always a plain `&[f64]` of length P.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Largest level count a categorical feature may have; level subsets are
/// stored as `u64` bitmasks.
pub const MAX_LEVELS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureKind {
    Continuous,
    Categorical { levels: Vec<String> },
}

/// Admissible interval for a continuous value.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ValueRange {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    /// When set, `min` itself is excluded.
    #[serde(default)]
    pub min_exclusive: bool,
}

impl ValueRange {
    pub const UNBOUNDED: ValueRange = ValueRange {
        min: None,
        max: None,
        min_exclusive: false,
    };

    pub fn closed(min: f64, max: f64) -> Self {
        ValueRange {
            min: Some(min),
            max: Some(max),
            min_exclusive: false,
        }
    }

    pub fn at_least(min: f64) -> Self {
        ValueRange {
            min: Some(min),
            max: None,
            min_exclusive: false,
        }
    }

    pub fn positive() -> Self {
        ValueRange {
            min: Some(0.0),
            max: None,
            min_exclusive: true,
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        if !v.is_finite() {
            return false;
        }
        if let Some(lo) = self.min {
            if v < lo || (self.min_exclusive && v == lo) {
                return false;
            }
        }
        if let Some(hi) = self.max {
            if v > hi {
                return false;
            }
        }
        true
    }

    pub fn describe(&self) -> String {
        let lo = match self.min {
            Some(m) if self.min_exclusive => format!("({m}"),
            Some(m) => format!("[{m}"),
            None => "(-inf".to_string(),
        };
        let hi = match self.max {
            Some(m) => format!("{m}]"),
            None => "inf)".to_string(),
        };
        format!("{lo}, {hi}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: FeatureKind,
    #[serde(default)]
    pub unit: String,
    #[serde(default)]
    pub range: ValueRange,
}

impl FeatureSpec {
    pub fn continuous(name: &str, unit: &str, range: ValueRange) -> Self {
        FeatureSpec {
            name: name.to_string(),
            kind: FeatureKind::Continuous,
            unit: unit.to_string(),
            range,
        }
    }

    pub fn categorical(name: &str, levels: &[&str]) -> Self {
        FeatureSpec {
            name: name.to_string(),
            kind: FeatureKind::Categorical {
                levels: levels.iter().map(|s| s.to_string()).collect(),
            },
            unit: "level".to_string(),
            range: ValueRange::UNBOUNDED,
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, FeatureKind::Categorical { .. })
    }

    pub fn levels(&self) -> Option<&[String]> {
        match &self.kind {
            FeatureKind::Categorical { levels } => Some(levels),
            FeatureKind::Continuous => None,
        }
    }

    /// Case-insensitive lookup of a level name.
    pub fn level_index(&self, name: &str) -> Option<usize> {
        self.levels()?
            .iter()
            .position(|l| l.eq_ignore_ascii_case(name.trim()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseSpec {
    pub name: String,
    #[serde(default)]
    pub unit: String,
    #[serde(default)]
    pub range: ValueRange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    features: Vec<FeatureSpec>,
    response: ResponseSpec,
}

impl Schema {
    pub fn new(features: Vec<FeatureSpec>, response: ResponseSpec) -> Result<Self> {
        let schema = Schema { features, response };
        schema.validate()?;
        Ok(schema)
    }

    /// Checks the structural invariants; also run after deserialization.
    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::InvalidSchema("no predictors".into()));
        }
        let mut names: Vec<String> = self
            .features
            .iter()
            .map(|f| f.name.to_ascii_lowercase())
            .collect();
        names.push(self.response.name.to_ascii_lowercase());
        for (i, n) in names.iter().enumerate() {
            if n.trim().is_empty() {
                return Err(Error::InvalidSchema("empty column name".into()));
            }
            if names[..i].contains(n) {
                return Err(Error::InvalidSchema(format!("duplicate column name `{n}`")));
            }
        }
        for f in &self.features {
            if let Some(levels) = f.levels() {
                if levels.is_empty() {
                    return Err(Error::InvalidSchema(format!("`{}` has no levels", f.name)));
                }
                if levels.len() > MAX_LEVELS {
                    return Err(Error::InvalidSchema(format!(
                        "`{}` has {} levels, at most {MAX_LEVELS} are supported",
                        f.name,
                        levels.len()
                    )));
                }
                for (i, l) in levels.iter().enumerate() {
                    if levels[..i].iter().any(|o| o.eq_ignore_ascii_case(l)) {
                        return Err(Error::InvalidSchema(format!(
                            "`{}` lists level `{l}` twice",
                            f.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// The catastrophe bond schema: spread plus nine offering-circular
    /// predictors. All percentages are on the 0-100 scale.
    pub fn cat_bond() -> Self {
        use crate::record::{Coverage, Diversifier, RatingStatus, Trigger, Vendor};
        let features = vec![
            FeatureSpec::continuous("ap", "percent", ValueRange::closed(0.0, 100.0)),
            FeatureSpec::continuous("el", "percent of size", ValueRange::closed(0.0, 100.0)),
            FeatureSpec::continuous("size", "million USD", ValueRange::positive()),
            FeatureSpec::continuous("term", "years", ValueRange::positive()),
            FeatureSpec::categorical("coverage", &Coverage::NAMES),
            FeatureSpec::categorical("diversifier", &Diversifier::NAMES),
            FeatureSpec::categorical("rating_status", &RatingStatus::NAMES),
            FeatureSpec::categorical("trigger", &Trigger::NAMES),
            FeatureSpec::categorical("vendor", &Vendor::NAMES),
        ];
        let response = ResponseSpec {
            name: "spread".into(),
            unit: "percent of size".into(),
            range: ValueRange::at_least(0.0),
        };
        Schema::new(features, response).expect("canonical schema is valid")
    }

    pub fn features(&self) -> &[FeatureSpec] {
        &self.features
    }

    pub fn feature(&self, index: usize) -> &FeatureSpec {
        &self.features[index]
    }

    pub fn response(&self) -> &ResponseSpec {
        &self.response
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features
            .iter()
            .position(|f| f.name.eq_ignore_ascii_case(name.trim()))
    }

    pub fn is_categorical(&self, feature: usize) -> bool {
        self.features[feature].is_categorical()
    }

    /// Checks a single predictor value against the feature's kind and range.
    pub fn check_value(&self, feature: usize, value: f64) -> bool {
        let spec = &self.features[feature];
        match spec.levels() {
            Some(levels) => value >= 0.0 && value.fract() == 0.0 && (value as usize) < levels.len(),
            None => spec.range.contains(value),
        }
    }

    /// Validates a predictor row, naming the first offending feature.
    pub fn check_row(&self, row: &[f64]) -> Result<()> {
        if row.len() != self.n_features() {
            return Err(Error::SchemaMismatch(format!(
                "expected {} predictors, got {}",
                self.n_features(),
                row.len()
            )));
        }
        for (f, &v) in row.iter().enumerate() {
            if !self.check_value(f, v) {
                return Err(Error::SchemaMismatch(format!(
                    "value {v} is not valid for `{}`",
                    self.features[f].name
                )));
            }
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("schema serializes");
        hex::encode(Sha256::digest(&json))
    }
}

/// An immutable, validated table of observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Schema,
    columns: Vec<Vec<f64>>,
    response: Vec<f64>,
    provenance: Option<String>,
}

impl Dataset {
    /// Builds a dataset from predictor columns (schema encoding) and the
    /// response, validating every cell.
    pub fn new(schema: Schema, columns: Vec<Vec<f64>>, response: Vec<f64>) -> Result<Self> {
        if response.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if columns.len() != schema.n_features() {
            return Err(Error::SchemaMismatch(format!(
                "expected {} predictor columns, got {}",
                schema.n_features(),
                columns.len()
            )));
        }
        let n = response.len();
        for (f, col) in columns.iter().enumerate() {
            if col.len() != n {
                return Err(Error::SchemaMismatch(format!(
                    "column `{}` has {} rows, response has {n}",
                    schema.feature(f).name,
                    col.len()
                )));
            }
            for (row, &v) in col.iter().enumerate() {
                if !schema.check_value(f, v) {
                    let spec = schema.feature(f);
                    return Err(Error::OutOfRange {
                        row: row + 1,
                        column: spec.name.clone(),
                        value: v,
                        range: match spec.levels() {
                            Some(l) => format!("level codes [0, {})", l.len()),
                            None => spec.range.describe(),
                        },
                    });
                }
            }
        }
        for (row, &y) in response.iter().enumerate() {
            if !schema.response().range.contains(y) {
                return Err(Error::OutOfRange {
                    row: row + 1,
                    column: schema.response().name.clone(),
                    value: y,
                    range: schema.response().range.describe(),
                });
            }
        }
        Ok(Dataset {
            schema,
            columns,
            response,
            provenance: None,
        })
    }

    /// Builds a dataset from row-major predictor rows.
    pub fn from_rows(schema: Schema, rows: &[Vec<f64>], response: Vec<f64>) -> Result<Self> {
        let p = schema.n_features();
        let mut columns = vec![Vec::with_capacity(rows.len()); p];
        for (i, r) in rows.iter().enumerate() {
            if r.len() != p {
                return Err(Error::RowArity {
                    row: i + 1,
                    expected: p,
                    found: r.len(),
                });
            }
            for (c, &v) in columns.iter_mut().zip(r) {
                c.push(v);
            }
        }
        Dataset::new(schema, columns, response)
    }

    pub fn with_provenance(mut self, note: impl Into<String>) -> Self {
        self.provenance = Some(note.into());
        self
    }

    pub fn provenance(&self) -> Option<&str> {
        self.provenance.as_deref()
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.response.len()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    #[inline]
    pub fn value(&self, row: usize, feature: usize) -> f64 {
        self.columns[feature][row]
    }

    pub fn column(&self, feature: usize) -> &[f64] {
        &self.columns[feature]
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    pub fn row(&self, row: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[row]).collect()
    }

    /// Level name of a categorical cell, or `None` for continuous features.
    pub fn level_name(&self, row: usize, feature: usize) -> Option<&str> {
        let levels = self.schema.feature(feature).levels()?;
        Some(levels[self.value(row, feature) as usize].as_str())
    }

    /// Rows in the given order (duplicates allowed).
    pub fn subset(&self, rows: &[usize]) -> Result<Dataset> {
        let columns = self
            .columns
            .iter()
            .map(|c| rows.iter().map(|&r| c[r]).collect())
            .collect();
        let response = rows.iter().map(|&r| self.response[r]).collect();
        Dataset::new(self.schema.clone(), columns, response)
    }

    /// Same predictors, different response.
    pub fn with_response(&self, response: Vec<f64>) -> Result<Dataset> {
        Dataset::new(self.schema.clone(), self.columns.clone(), response)
    }

    /// Same response, different values for one predictor column.
    pub fn with_column(&self, feature: usize, values: Vec<f64>) -> Result<Dataset> {
        let mut columns = self.columns.clone();
        columns[feature] = values;
        Dataset::new(self.schema.clone(), columns, self.response.clone())
    }

    /// SHA-256 over the schema fingerprint and the exact bit patterns of
    /// every cell; identifies the training set of a saved forest.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.schema.fingerprint().as_bytes());
        h.update((self.n_rows() as u64).to_le_bytes());
        for col in &self.columns {
            for v in col {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        for y in &self.response {
            h.update(y.to_bits().to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

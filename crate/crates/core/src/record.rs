//! Typed view of one catastrophe bond observation in the canonical schema.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{Dataset, Schema};

macro_rules! level_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $label:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];
            pub const NAMES: [&'static str; [$($label),+].len()] = [$($label),+];

            pub fn code(self) -> usize {
                self as usize
            }

            pub fn from_code(code: usize) -> Option<Self> {
                Self::ALL.get(code).copied()
            }

            pub fn name(self) -> &'static str {
                Self::NAMES[self as usize]
            }
        }
    };
}

level_enum!(
    /// `Both` covers tranches where occurrence and aggregate coverage co-exist.
    Coverage {
        Aggregate => "aggregate",
        Occurrence => "occurrence",
        Both => "both",
    }
);

level_enum!(Diversifier {
    Apac => "APAC",
    Europe => "Europe",
    MultiPeril => "MultiPeril",
    NaQuake => "NAQuake",
    NaWind => "NAWind",
    SaQuake => "SAQuake",
});

level_enum!(RatingStatus {
    Rated => "rated",
    NotRated => "not_rated",
});

level_enum!(Trigger {
    Indemnity => "indemnity",
    PureParametric => "pure_parametric",
    IndustryLossIndex => "industry_loss_index",
    ParametricIndex => "parametric_index",
    Model => "model",
    Multiple => "multiple",
});

level_enum!(
    /// `Pp` marks private placements where the modelling firm was not disclosed.
    Vendor {
        Air => "AIR",
        Aon => "AON",
        Eqecat => "EQECAT",
        Rms => "RMS",
        Pp => "pp",
    }
);

/// The nine offering-circular predictors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BondFeatures {
    /// Attachment probability, percent.
    pub ap: f64,
    /// Expected loss, percent of size.
    pub el: f64,
    /// Nominal, million USD.
    pub size: f64,
    /// Years to maturity.
    pub term: f64,
    pub coverage: Coverage,
    pub diversifier: Diversifier,
    pub rating_status: RatingStatus,
    pub trigger: Trigger,
    pub vendor: Vendor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BondRecord {
    /// Spread over the money market rate, percent of size.
    pub spread: f64,
    #[serde(flatten)]
    pub features: BondFeatures,
}

impl BondFeatures {
    /// Predictor row in canonical schema order and encoding.
    pub fn to_row(&self) -> Vec<f64> {
        vec![
            self.ap,
            self.el,
            self.size,
            self.term,
            self.coverage.code() as f64,
            self.diversifier.code() as f64,
            self.rating_status.code() as f64,
            self.trigger.code() as f64,
            self.vendor.code() as f64,
        ]
    }

    pub fn from_row(row: &[f64]) -> Result<Self> {
        if row.len() != 9 {
            return Err(Error::SchemaMismatch(format!(
                "bond rows have 9 predictors, got {}",
                row.len()
            )));
        }
        fn level<T>(v: f64, f: impl Fn(usize) -> Option<T>, name: &str) -> Result<T> {
            if v < 0.0 || v.fract() != 0.0 {
                return Err(Error::SchemaMismatch(format!("bad level code {v} for `{name}`")));
            }
            f(v as usize).ok_or_else(|| Error::SchemaMismatch(format!("bad level code {v} for `{name}`")))
        }
        Ok(BondFeatures {
            ap: row[0],
            el: row[1],
            size: row[2],
            term: row[3],
            coverage: level(row[4], Coverage::from_code, "coverage")?,
            diversifier: level(row[5], Diversifier::from_code, "diversifier")?,
            rating_status: level(row[6], RatingStatus::from_code, "rating_status")?,
            trigger: level(row[7], Trigger::from_code, "trigger")?,
            vendor: level(row[8], Vendor::from_code, "vendor")?,
        })
    }
}

impl BondRecord {
    pub fn validate(&self) -> Result<()> {
        let schema = Schema::cat_bond();
        Dataset::from_rows(schema, &[self.features.to_row()], vec![self.spread]).map(|_| ())
    }
}

impl Dataset {
    /// Builds a canonical-schema dataset from typed records.
    pub fn from_records(records: &[BondRecord]) -> Result<Dataset> {
        let rows: Vec<Vec<f64>> = records.iter().map(|r| r.features.to_row()).collect();
        let response = records.iter().map(|r| r.spread).collect();
        Dataset::from_rows(Schema::cat_bond(), &rows, response)
    }

    /// Typed view of one row; fails unless the dataset uses the canonical schema.
    pub fn record(&self, row: usize) -> Result<BondRecord> {
        if self.schema() != &Schema::cat_bond() {
            return Err(Error::SchemaMismatch(
                "dataset does not use the catastrophe bond schema".into(),
            ));
        }
        Ok(BondRecord {
            spread: self.response()[row],
            features: BondFeatures::from_row(&self.row(row))?,
        })
    }
}

//! Random-forest regression for catastrophe bond spreads, with out-of-bag
//! evaluation, two importance measures, hyperparameter tuning, split-half
//! ranking stability, a linear baseline and a synthetic data generator.

pub mod baseline;
pub mod cart;
pub mod error;
pub mod forest;
pub mod importance;
pub mod io;
pub mod record;
pub mod rng;
pub mod schema;
pub mod stability;
pub mod stats;
pub mod synth;
pub mod tuning;

pub use cart::{fit_tree, RegressionTree, SplitRule, TreeParams};
pub use error::{Error, ErrorCategory, Result};
pub use forest::{Forest, ForestParams, OobReport};
pub use importance::{MinimalDepthImportance, PermutationImportance, PermutationScore, RankingTable};
pub use record::{BondFeatures, BondRecord, Coverage, Diversifier, RatingStatus, Trigger, Vendor};
pub use schema::{Dataset, FeatureKind, FeatureSpec, ResponseSpec, Schema, ValueRange};

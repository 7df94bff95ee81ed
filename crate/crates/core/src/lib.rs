//! Clone-selection classifier benchmark.
//!
//! Trial data model and feature engineering, chained-equation imputation, twelve
//! binary classifiers tuned by MCC-scored grid search, forward feature selection
//! and a replicated simulation study.

pub mod classifiers;
pub mod data;
pub mod error;
pub mod featselect;
pub mod impute;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod preprocess;
pub mod report;
pub mod seed;
pub mod simstudy;
pub mod tuning;

pub use error::{Error, Result};

//! Typed tabular data model, CSV ingestion and engineered trial features.

mod dataset;
mod features;
mod io;
mod reference;
mod schema;

pub use dataset::{Dataset, Planting, RowKey};
pub use features::*;
pub use io::{load_trials, read_trials, save_dataset, schema_for, write_dataset, NA_TOKEN};
pub use reference::{appendix_schema, synthetic_trials, APPENDIX_ROWS, RESPONSE, TRIAL_REGION, YEAR_IN_TRIAL};
pub use schema::{default_missing_tokens, ColumnKind, ColumnSpec, KeyColumns, Schema};

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}, column '{column}': cannot read '{value}' as a number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("inconsistent input: {0}")]
    Consistency(String),

    #[error("no control yields available for year {year}, region {region}")]
    UnavailableControl { year: i32, region: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("data error on {date}: t_max {t_max} is below t_min {t_min}")]
    Temperature { date: String, t_max: f64, t_min: f64 },

    #[error("stratification error: {0}")]
    Stratification(String),

    #[error("encoding error: level '{level}' of column '{column}' was not seen during fitting")]
    UnseenLevel { column: String, level: String },

    #[error("imputation error in column '{0}': every cell is missing")]
    Imputation(String),

    #[error("invalid hyperparameters for {family}: {message}")]
    Hyperparameter { family: String, message: String },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("generation error: {0}")]
    Generation(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn hyper(family: impl ToString, message: impl Into<String>) -> Self {
        Error::Hyperparameter {
            family: family.to_string(),
            message: message.into(),
        }
    }
}

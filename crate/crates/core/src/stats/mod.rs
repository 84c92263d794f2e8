//! Agreement and repeatability statistics between measurement methods.

mod agreement;
mod bland_altman;
mod bootstrap;
mod icc;
mod table;

pub use agreement::{
    agreement, read_matched_csv, write_matched_csv, write_table_csv, AgreementConfig, AgreementReport, MatchedRecord,
    ParameterAgreement, Repeatability, SkippedComparison,
};
pub use bland_altman::{bland_altman, differences, percentage_error, BlandAltman, LOA_Z};
pub use bootstrap::{bootstrap_mean_diff_ci, BootstrapCi, MIN_RESAMPLES};
pub use icc::{classify_icc, icc, mean_squares, repeatability, IccClass, IccForm, MeanSquares};
pub use table::{MeasurementTable, RowLabel};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("LengthMismatch: {left} vs {right} values")]
    LengthMismatch { left: usize, right: usize },
    #[error("TooFewPairs: {0} pairs, at least 2 are needed")]
    TooFewPairs(usize),
    #[error("TooFewRows: {0} rows, at least 2 are needed")]
    TooFewRows(usize),
    #[error("TooFewColumns: {0} columns, at least 2 are needed")]
    TooFewColumns(usize),
    #[error("row {row} has {len} cells, expected {expected}")]
    RaggedRow { row: usize, len: usize, expected: usize },
    #[error("row {row} contains a non-finite value")]
    NonFinite { row: usize },
    #[error("DegenerateVariance: between-row and residual variance are both zero")]
    DegenerateVariance,
    #[error("TooFewResamples: {0}, at least {MIN_RESAMPLES} are needed")]
    TooFewResamples(usize),
    #[error("confidence level must lie in (0, 1), got {0}")]
    InvalidLevel(f64),
    #[error("UnknownMethod: {name} (available: {available})")]
    UnknownMethod { name: String, available: String },
    #[error("duplicate record for walk {walk}, method {method}, parameter {parameter}")]
    DuplicateRecord {
        walk: String,
        method: String,
        parameter: String,
    },
    #[error("NoUsableParameters: no parameter has two matched walks for any method pair")]
    NoUsableParameters,
    #[error("csv: {0}")]
    Csv(String),
}

impl From<csv::Error> for StatsError {
    fn from(e: csv::Error) -> Self {
        StatsError::Csv(e.to_string())
    }
}

//! Abstract fit/predict interface so estimators never depend on a concrete learner.

use core::fmt;

use super::forest::FeatureMatrix;

#[derive(Debug, Clone, PartialEq)]
pub enum FitError {
    Empty,
    DimensionMismatch { expected: usize, found: usize },
    NonFinite { row: usize },
    InvalidParams(&'static str),
    Parse { line: usize, reason: &'static str },
}

impl fmt::Display for FitError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Empty => f.write_str("empty training set"),
            Self::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Self::NonFinite { row } => write!(f, "non-finite training value in row {row}"),
            Self::InvalidParams(reason) => write!(f, "invalid learner parameters: {reason}"),
            Self::Parse { line, reason } => write!(f, "model text line {line}: {reason}"),
        }
    }
}

/// A fitted real-valued predictor over fixed-width feature rows.
pub trait Regressor: Send + Sync {
    fn feature_count(&self) -> usize;

    /// `row.len()` must equal [`Regressor::feature_count`].
    fn predict(&self, row: &[f64]) -> f64;
}

/// Something that turns a training set into a [`Regressor`].
pub trait Learner {
    type Model: Regressor + 'static;

    fn fit(&self, features: &FeatureMatrix, targets: &[f64]) -> Result<Self::Model, FitError>;
}

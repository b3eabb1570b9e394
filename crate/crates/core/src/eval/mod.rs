//! Cross-validation and the statistics reported for trained models.

mod cv;
mod report;
mod stats;

use thiserror::Error;

use crate::tree::TreeError;

pub use cv::{
    cross_validate_classifier, cross_validate_regressor, kfold_assign, ClassificationEval,
    ConfusionMatrix, EvalReport, OutOfFoldRatios, RegressionEval, StageEval,
};
pub use report::{render_table, scatter_csv};
pub use stats::{ci_mean, ci_proportion, pearson_r, t_quantile, z_quantile, Interval, IntervalMethod};

/// Confidence level used for reported intervals unless overridden.
pub const DEFAULT_LEVEL: f64 = 0.99;
pub const DEFAULT_FOLDS: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("confidence level must lie in (0, 1), got {0}")]
    InvalidLevel(f64),
    #[error("error rate must lie in [0, 1], got {0}")]
    InvalidProportion(f64),
    #[error("degrees of freedom must be positive and finite, got {0}")]
    InvalidDegreesOfFreedom(f64),
    #[error("need at least {need} values, got {got}")]
    TooFewValues { need: usize, got: usize },
    #[error("length mismatch: {0} predictions vs {1} actuals")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 folds, got {0}")]
    TooFewFolds(usize),
    #[error("n < k: {n} instances cannot fill {k} folds")]
    NotEnoughInstances { n: usize, k: usize },
    #[error("strata has {0} labels for {1} instances")]
    StrataLength(usize, usize),
    #[error("no regression instances (no counted phase-3 days)")]
    NoRegressionInstances,
    #[error(transparent)]
    Tree(#[from] TreeError),
}

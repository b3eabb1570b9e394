use chrono::NaiveDate;
use thiserror::Error;

use crate::bundle::BundleError;
use crate::eval::EvalError;
use crate::features::FeatureError;
use crate::ingest::IngestError;
use crate::synth::SynthError;
use crate::tree::TreeError;

/// Top-level error for pipeline and command operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Climate {
        path: String,
        #[source]
        source: IngestError,
    },
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("no regression instances: the labels contain no counted phase-3 days")]
    NoRegressionInstances,
    #[error("station {station}: not enough history to accumulate from the season start; earliest usable date is {earliest}")]
    InsufficientHistory { station: String, earliest: NaiveDate },
    #[error("station {station}: no season start inside the climate data, nothing can be forecast")]
    NoUsableHistory { station: String },
    #[error("no climate days fall in the requested date range")]
    EmptyRange,
    #[error("climate data does not match the bundle: {0}")]
    Incompatible(String),
    #[error("{0}")]
    Invalid(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    /// True for errors caused by the caller's inputs rather than a defect.
    pub fn is_input_error(&self) -> bool {
        let tree_defect = |e: &TreeError| matches!(e, TreeError::EmptyNode | TreeError::WrongKind(..));
        match self {
            Error::Internal(_) => false,
            Error::Tree(e) | Error::Eval(EvalError::Tree(e)) => !tree_defect(e),
            _ => true,
        }
    }
}

//! Binary-split decision trees (classification and regression) and
//! bagged regression forests.
//!
//! Splits are numeric and axis-aligned: an internal node sends `x` left iff
//! `x[feature] <= threshold`. Candidate thresholds are midpoints between
//! consecutive distinct sorted values, searched exhaustively.

mod criteria;
pub mod dot;
mod forest;
mod model;
mod split;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use criteria::{entropy_impurity, gini_impurity, mae_criterion, median};
pub use forest::{predict_ratios, train_forest, ForestModel, RatioPrediction, RatioPredictor};
pub use model::{predict_phase, train_tree, Leaf, Node, TreeKind, TreeModel};
pub use split::{best_split, midpoint, Split, SCORE_TIE_TOLERANCE};

#[derive(Debug, Error, PartialEq)]
pub enum TreeError {
    #[error("cannot train on an empty dataset")]
    EmptyDataset,
    #[error("feature vector has {got} values, model expects {expected}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("row {row} has {got} features, expected {expected}")]
    RaggedRows { row: usize, expected: usize, got: usize },
    #[error("feature {feature} of row {row} is not finite")]
    NonFinite { row: usize, feature: usize },
    #[error("{0} targets given for {1} rows")]
    TargetLength(usize, usize),
    #[error("class label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("criterion {criterion:?} cannot be used for a {task} task")]
    CriterionMismatch { criterion: Criterion, task: &'static str },
    #[error("invalid training parameters: {0}")]
    InvalidParams(String),
    #[error("impurity is undefined for an empty node")]
    EmptyNode,
    #[error("model is a {0}, expected a {1}")]
    WrongKind(&'static str, &'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Gini,
    Entropy,
    Mae,
}

impl Criterion {
    pub fn is_classification(self) -> bool {
        matches!(self, Criterion::Gini | Criterion::Entropy)
    }
}

/// Training targets for one dataset.
#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    Classes { labels: &'a [usize], n_classes: usize },
    Values(&'a [f64]),
}

impl Target<'_> {
    pub fn len(&self) -> usize {
        match self {
            Target::Classes { labels, .. } => labels.len(),
            Target::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn task(&self) -> &'static str {
        match self {
            Target::Classes { .. } => "classification",
            Target::Values(_) => "regression",
        }
    }

    pub(crate) fn check_criterion(&self, criterion: Criterion) -> Result<(), TreeError> {
        let ok = match self {
            Target::Classes { .. } => criterion.is_classification(),
            Target::Values(_) => criterion == Criterion::Mae,
        };
        if ok {
            Ok(())
        } else {
            Err(TreeError::CriterionMismatch {
                criterion,
                task: self.task(),
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainParams {
    pub min_leaf: usize,
    pub min_split: usize,
    pub max_depth: Option<usize>,
    pub criterion: Criterion,
    /// Forests only.
    pub n_trees: usize,
    /// Candidate features drawn per split (forests only); `None` means
    /// `floor(log2(m)) + 1`.
    pub feature_subsample: Option<usize>,
    /// Forests only.
    pub bootstrap: bool,
    pub rng_seed: u64,
}

impl TrainParams {
    /// Unpruned Gini tree: leaf size 1, split size 2, unlimited depth.
    pub fn classifier_defaults() -> Self {
        TrainParams {
            min_leaf: 1,
            min_split: 2,
            max_depth: None,
            criterion: Criterion::Gini,
            n_trees: 10,
            feature_subsample: None,
            bootstrap: true,
            rng_seed: 1,
        }
    }

    /// Ten bagged MAE regression trees, otherwise as the classifier.
    pub fn forest_defaults() -> Self {
        TrainParams {
            criterion: Criterion::Mae,
            ..Self::classifier_defaults()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn validate(&self, n_features: usize) -> Result<(), TreeError> {
        let bad = |msg: String| Err(TreeError::InvalidParams(msg));
        if self.min_leaf < 1 {
            return bad("min_leaf must be at least 1".into());
        }
        if self.min_split < 2 {
            return bad("min_split must be at least 2".into());
        }
        if self.n_trees < 1 {
            return bad("n_trees must be at least 1".into());
        }
        if let Some(k) = self.feature_subsample {
            if k < 1 || k > n_features {
                return bad(format!("feature_subsample {k} outside 1..={n_features}"));
            }
        }
        Ok(())
    }

    /// Number of candidate features per split for `m` features.
    pub fn resolved_subsample(&self, m: usize) -> usize {
        self.feature_subsample
            .unwrap_or_else(|| default_subsample(m))
            .clamp(1, m.max(1))
    }
}

/// `floor(log2(m)) + 1`, at least 1 and at most `m`.
pub fn default_subsample(m: usize) -> usize {
    if m == 0 {
        return 1;
    }
    ((m as f64).log2().floor() as usize + 1).min(m)
}

pub(crate) fn check_rows(x: &[Vec<f64>]) -> Result<usize, TreeError> {
    let m = x.first().map(Vec::len).ok_or(TreeError::EmptyDataset)?;
    for (row, v) in x.iter().enumerate() {
        if v.len() != m {
            return Err(TreeError::RaggedRows {
                row,
                expected: m,
                got: v.len(),
            });
        }
        if let Some(feature) = v.iter().position(|f| !f.is_finite()) {
            return Err(TreeError::NonFinite { row, feature });
        }
    }
    Ok(m)
}

/// SplitMix64 finalizer, used to derive independent RNG streams.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subsample_default() {
        assert_eq!(default_subsample(1), 1);
        assert_eq!(default_subsample(6), 3);
        assert_eq!(default_subsample(10), 4);
        assert_eq!(default_subsample(16), 5);
    }

    #[test]
    fn params_validation() {
        let p = TrainParams::classifier_defaults();
        assert!(p.validate(4).is_ok());
        assert!(TrainParams { min_leaf: 0, ..p }.validate(4).is_err());
        assert!(TrainParams { min_split: 1, ..p }.validate(4).is_err());
        assert!(TrainParams { n_trees: 0, ..p }.validate(4).is_err());
        assert!(TrainParams { feature_subsample: Some(5), ..p }.validate(4).is_err());
        assert!(TrainParams { feature_subsample: Some(0), ..p }.validate(4).is_err());
    }
}

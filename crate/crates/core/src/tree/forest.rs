use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{Canonical, FeatureSampling};
use super::{mix64, Target, TrainParams, TreeError, TreeKind, TreeModel};
use crate::features::NymphStageRatios;

/// Bagged regression trees whose prediction is the mean of the trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    /// Nymphal stage (1..=5) this forest predicts, when part of a ratio predictor.
    pub target_stage: Option<u8>,
    pub params: TrainParams,
    pub trees: Vec<TreeModel>,
}

impl ForestModel {
    pub fn features(&self) -> &[String] {
        &self.trees[0].features
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64, TreeError> {
        let mut sum = 0.0;
        for tree in &self.trees {
            sum += tree.predict_value(x)?;
        }
        Ok(sum / self.trees.len() as f64)
    }

    pub fn node_count(&self) -> usize {
        self.trees.iter().map(TreeModel::node_count).sum()
    }
}

/// Trains `params.n_trees` regression trees.
///
/// Tree `t` draws its bootstrap sample from a stream seeded by
/// `(rng_seed, t)` and each node draws its candidate features from a stream
/// seeded by `(rng_seed, t, path to the node)`, so the result does not depend
/// on thread scheduling or on input row order.
pub fn train_forest(
    x: &[Vec<f64>],
    y: &[f64],
    feature_names: &[String],
    params: &TrainParams,
) -> Result<ForestModel, TreeError> {
    let data = Canonical::new(x, Target::Values(y), feature_names)?;
    params.validate(data.m)?;
    let n = data.x.len();
    let per_split = params.resolved_subsample(data.m);

    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let rows = if params.bootstrap {
                bootstrap_rows(n, params.rng_seed, t as u64)
            } else {
                (0..n).collect()
            };
            let sampling = FeatureSampling {
                per_split,
                seed: params.rng_seed,
                tree_index: t as u64,
            };
            data.grow(rows, params, Some(sampling))
        })
        .collect::<Result<Vec<_>, _>>()?;

    Ok(ForestModel {
        target_stage: None,
        params: *params,
        trees,
    })
}

fn bootstrap_rows(n: usize, seed: u64, tree_index: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ 0xb007_5742_0000_0000 ^ mix64(tree_index)));
    let mut rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    rows.sort_unstable();
    rows
}

/// One forest per nymphal stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioPredictor {
    pub forests: Vec<ForestModel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioPrediction {
    pub ratios: NymphStageRatios,
    /// Per-stage forest means before clamping.
    pub raw: [f64; 5],
    /// All clamped outputs were zero; `ratios` fell back to stage 1.
    pub degenerate: bool,
}

impl RatioPredictor {
    /// Trains the five stage forests. Stage `s` uses seed
    /// `mix(rng_seed, s)` so the forests draw independent samples.
    pub fn train(
        x: &[Vec<f64>],
        ratios: &[NymphStageRatios],
        feature_names: &[String],
        params: &TrainParams,
    ) -> Result<Self, TreeError> {
        if ratios.len() != x.len() {
            return Err(TreeError::TargetLength(ratios.len(), x.len()));
        }
        let forests = (1..=5u8)
            .into_par_iter()
            .map(|stage| {
                let y: Vec<f64> = ratios.iter().map(|r| r.stage(stage as usize)).collect();
                let stage_params = TrainParams {
                    rng_seed: stage_seed(params.rng_seed, stage),
                    ..*params
                };
                let mut forest = train_forest(x, &y, feature_names, &stage_params)?;
                forest.target_stage = Some(stage);
                Ok(forest)
            })
            .collect::<Result<Vec<_>, TreeError>>()?;
        Ok(RatioPredictor { forests })
    }

    pub fn features(&self) -> &[String] {
        self.forests[0].features()
    }

    /// Checks the structural invariants a deserialized predictor must hold.
    pub fn check(&self) -> Result<(), String> {
        if self.forests.len() != 5 {
            return Err(format!("expected 5 stage forests, found {}", self.forests.len()));
        }
        for (i, f) in self.forests.iter().enumerate() {
            if f.trees.is_empty() {
                return Err(format!("stage {} forest has no trees", i + 1));
            }
            if f.target_stage != Some(i as u8 + 1) {
                return Err(format!("forest {} targets stage {:?}", i + 1, f.target_stage));
            }
            for t in &f.trees {
                if t.kind != TreeKind::Regressor || t.features != self.forests[0].trees[0].features {
                    return Err(format!("stage {} forest has an incompatible tree", i + 1));
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn stage_seed(seed: u64, stage: u8) -> u64 {
    mix64(seed ^ mix64(0x5747_0000 + stage as u64))
}

/// Per-stage forest means clamped to [0, 1] and renormalized to sum to one.
pub fn predict_ratios(p: &RatioPredictor, x: &[f64]) -> Result<RatioPrediction, TreeError> {
    let mut raw = [0.0; 5];
    for (slot, forest) in raw.iter_mut().zip(&p.forests) {
        *slot = forest.predict(x)?;
    }
    Ok(compose_ratios(raw))
}

pub(crate) fn compose_ratios(raw: [f64; 5]) -> RatioPrediction {
    let clamped = raw.map(|v| v.clamp(0.0, 1.0));
    let total: f64 = clamped.iter().sum();
    if total <= 0.0 {
        return RatioPrediction {
            ratios: NymphStageRatios::new([1.0, 0.0, 0.0, 0.0, 0.0]).expect("valid"),
            raw,
            degenerate: true,
        };
    }
    let normalized = clamped.map(|v| v / total);
    let ratios = NymphStageRatios::new(normalized).expect("clamped shares renormalize to one");
    RatioPrediction {
        ratios,
        raw,
        degenerate: false,
    }
}

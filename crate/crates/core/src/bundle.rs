//! Persisted model bundle: phase tree, stage forests and the feature set they
//! were trained on.

use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::features::{Dataset, FeatureSetSpec, PhaseLabel, SeasonClock};
use crate::tree::{predict_phase, predict_ratios, RatioPrediction, RatioPredictor, TrainParams, TreeKind, TreeModel};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("cannot access bundle {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bundle is not valid JSON at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("bundle format version {found} is not supported (expected {expected})")]
    Version { found: u64, expected: u32 },
    #[error("bundle is inconsistent: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    /// SHA-256 over the training instances in order.
    pub dataset_digest: String,
    pub instances: usize,
    pub regression_instances: usize,
    pub dropped_no_features: usize,
    pub dropped_no_label: usize,
    pub stations: Vec<String>,
    pub first_date: NaiveDate,
    /// Latest training day. Stands in for a creation time so that identical
    /// inputs give identical files.
    pub last_date: NaiveDate,
    pub max_gap: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub format_version: u32,
    pub feature_set: FeatureSetSpec,
    pub season_clock: SeasonClock,
    pub classifier_params: TrainParams,
    pub forest_params: TrainParams,
    pub rng_seed: u64,
    pub metadata: TrainingMetadata,
    pub phase_tree: TreeModel,
    pub ratio_predictor: RatioPredictor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BundlePrediction {
    pub phase: PhaseLabel,
    pub phase_distribution: [f64; 3],
    pub ratios: RatioPrediction,
}

/// Hex SHA-256 of the dataset's keys, features and labels.
pub fn dataset_digest(ds: &Dataset) -> String {
    let mut h = Sha256::new();
    for f in &ds.spec.fields {
        h.update(f.as_bytes());
        h.update([0]);
    }
    for i in &ds.instances {
        h.update(i.station_id.as_bytes());
        h.update([0]);
        h.update(i.date.to_string().as_bytes());
        for v in &i.features {
            h.update(v.to_bits().to_le_bytes());
        }
        h.update([i.phase.number()]);
        match &i.ratios {
            Some(r) => {
                h.update([1]);
                for v in r.as_array() {
                    h.update(v.to_bits().to_le_bytes());
                }
            }
            None => h.update([0]),
        }
    }
    hex::encode(h.finalize())
}

impl ModelBundle {
    pub fn check(&self) -> Result<(), BundleError> {
        let bad = |m: String| Err(BundleError::Invalid(m));
        if self.format_version != FORMAT_VERSION {
            return Err(BundleError::Version {
                found: self.format_version as u64,
                expected: FORMAT_VERSION,
            });
        }
        if !self.feature_set.is_canonical() {
            return bad(format!("feature set {:?} is not a known model layout", self.feature_set.fields));
        }
        if self.phase_tree.features != self.feature_set.fields {
            return bad("phase tree features differ from the bundle feature set".into());
        }
        if self.phase_tree.kind != (TreeKind::Classifier { n_classes: 3 }) {
            return bad("phase tree is not a three-class classifier".into());
        }
        self.ratio_predictor.check().or_else(bad)?;
        if self.ratio_predictor.features() != self.feature_set.fields.as_slice() {
            return bad("stage forests' features differ from the bundle feature set".into());
        }
        for (i, t) in std::iter::once(&self.phase_tree)
            .chain(self.ratio_predictor.forests.iter().flat_map(|f| &f.trees))
            .enumerate()
        {
            t.check().map_err(|m| BundleError::Invalid(format!("tree {i}: {m}")))?;
        }
        Ok(())
    }

    pub fn predict(&self, features: &[f64]) -> Result<BundlePrediction, crate::tree::TreeError> {
        let (phase, phase_distribution) = predict_phase(&self.phase_tree, features)?;
        let ratios = predict_ratios(&self.ratio_predictor, features)?;
        Ok(BundlePrediction {
            phase,
            phase_distribution,
            ratios,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("bundle serializes");
        s.push('\n');
        s
    }

    /// Parses and validates a bundle. The version is checked before the body
    /// so newer files fail with a version message rather than a schema error.
    pub fn from_json(text: &str) -> Result<Self, BundleError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| BundleError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        match value.get("format_version").and_then(|v| v.as_u64()) {
            Some(v) if v == FORMAT_VERSION as u64 => {}
            Some(v) => {
                return Err(BundleError::Version {
                    found: v,
                    expected: FORMAT_VERSION,
                })
            }
            None => return Err(BundleError::Invalid("missing format_version".into())),
        }
        let bundle: ModelBundle =
            serde_json::from_value(value).map_err(|e| BundleError::Invalid(e.to_string()))?;
        bundle.check()?;
        Ok(bundle)
    }
}

/// Writes to a sibling temporary file and renames it into place, so readers
/// never observe a partial bundle.
pub fn save_bundle(b: &ModelBundle, path: &Path) -> Result<(), BundleError> {
    let io = |source| BundleError::Io {
        path: path.display().to_string(),
        source,
    };
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(b.to_json().as_bytes())?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(io)
}

pub fn load_bundle(path: &Path) -> Result<ModelBundle, BundleError> {
    let text = fs::read_to_string(path).map_err(|source| BundleError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ModelBundle::from_json(&text)
}

use std::collections::BTreeMap;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::{ci_mean, ci_proportion, pearson_r, Interval};
use super::EvalError;
use crate::features::{Dataset, ModelId, NymphStageRatios, PhaseLabel};
use crate::tree::{predict_ratios, train_tree, RatioPredictor, Target, TrainParams};

/// Assigns each of `n` instances to one of `k` folds.
///
/// Fold sizes differ by at most one. With `strata`, each class is shuffled
/// and dealt round-robin, continuing from the fold where the previous class
/// stopped, so per-fold counts of every class also differ by at most one.
pub fn kfold_assign(n: usize, k: usize, seed: u64, strata: Option<&[usize]>) -> Result<Vec<usize>, EvalError> {
    if k < 2 {
        return Err(EvalError::TooFewFolds(k));
    }
    if n < k {
        return Err(EvalError::NotEnoughInstances { n, k });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![0usize; n];
    match strata {
        None => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            for (i, idx) in order.into_iter().enumerate() {
                folds[idx] = i % k;
            }
        }
        Some(labels) => {
            if labels.len() != n {
                return Err(EvalError::StrataLength(labels.len(), n));
            }
            let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for (i, &c) in labels.iter().enumerate() {
                by_class.entry(c).or_default().push(i);
            }
            let mut next = 0;
            for (_, mut members) in by_class {
                members.shuffle(&mut rng);
                for idx in members {
                    folds[idx] = next;
                    next = (next + 1) % k;
                }
            }
        }
    }
    Ok(folds)
}

/// Rows are actual classes, columns predicted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(labels: Vec<String>) -> Self {
        let k = labels.len();
        ConfusionMatrix {
            labels,
            counts: vec![vec![0; k]; k],
        }
    }

    pub fn record(&mut self, actual: usize, predicted: usize) {
        self.counts[actual][predicted] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn misclassified(&self) -> u64 {
        self.total() - self.trace()
    }

    pub fn accuracy(&self) -> f64 {
        self.trace() as f64 / self.total() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationEval {
    pub instances: usize,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
    /// Interval on the error rate `1 - accuracy`.
    pub error_interval: Interval,
    pub params: TrainParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEval {
    pub stage: u8,
    /// `None` when predictions or actuals are constant.
    pub pearson_r: Option<f64>,
    pub mae: f64,
}

/// Out-of-fold prediction for one counted day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutOfFoldRatios {
    pub station_id: String,
    pub date: NaiveDate,
    pub fold: usize,
    pub predicted: [f64; 5],
    pub actual: [f64; 5],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionEval {
    pub instances: usize,
    pub stages: Vec<StageEval>,
    /// Interval on the mean per-instance absolute error, averaged over the five stages.
    pub error_interval: Interval,
    pub params: TrainParams,
    pub predictions: Vec<OutOfFoldRatios>,
}

impl RegressionEval {
    /// Stages whose correlation is undefined.
    pub fn undefined_stages(&self) -> Vec<u8> {
        self.stages
            .iter()
            .filter(|s| s.pearson_r.is_none())
            .map(|s| s.stage)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_id: ModelId,
    pub feature_set: Vec<String>,
    pub folds: usize,
    pub seed: u64,
    pub confidence_level: f64,
    pub classification: Option<ClassificationEval>,
    pub regression: Option<RegressionEval>,
}

impl EvalReport {
    fn empty(ds: &Dataset, k: usize, seed: u64, level: f64) -> Self {
        EvalReport {
            model_id: ds.spec.model_id,
            feature_set: ds.spec.fields.clone(),
            folds: k,
            seed,
            confidence_level: level,
            classification: None,
            regression: None,
        }
    }

    /// Combines a classification and a regression report for the same data.
    pub fn merge(mut self, other: EvalReport) -> EvalReport {
        self.classification = self.classification.or(other.classification);
        self.regression = self.regression.or(other.regression);
        self
    }
}

fn split_fold<'a, T>(items: &'a [T], folds: &[usize], f: usize) -> (Vec<&'a T>, Vec<usize>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, item) in items.iter().enumerate() {
        if folds[i] == f {
            test.push(i);
        } else {
            train.push(item);
        }
    }
    (train, test)
}

/// Stratified k-fold evaluation of the phase tree with one pooled confusion
/// matrix over all out-of-fold predictions.
pub fn cross_validate_classifier(
    ds: &Dataset,
    params: &TrainParams,
    k: usize,
    seed: u64,
    level: f64,
) -> Result<EvalReport, EvalError> {
    let labels = ds.phase_classes();
    let folds = kfold_assign(ds.len(), k, seed, Some(&labels))?;

    let per_fold = (0..k)
        .into_par_iter()
        .map(|f| {
            let (train, test) = split_fold(&ds.instances, &folds, f);
            let x: Vec<Vec<f64>> = train.iter().map(|i| i.features.clone()).collect();
            let y: Vec<usize> = train.iter().map(|i| i.phase.index()).collect();
            let tree = train_tree(
                &x,
                Target::Classes {
                    labels: &y,
                    n_classes: 3,
                },
                &ds.spec.fields,
                params,
            )?;
            test.into_iter()
                .map(|i| Ok((i, tree.predict_class(&ds.instances[i].features)?.0)))
                .collect::<Result<Vec<_>, EvalError>>()
        })
        .collect::<Result<Vec<_>, EvalError>>()?;

    let mut confusion = ConfusionMatrix::new(PhaseLabel::ALL.iter().map(|p| format!("phase {p}")).collect());
    for (i, predicted) in per_fold.into_iter().flatten() {
        confusion.record(labels[i], predicted);
    }
    let accuracy = confusion.accuracy();
    let error_interval = ci_proportion(1.0 - accuracy, confusion.total(), level)?;

    let mut report = EvalReport::empty(ds, k, seed, level);
    report.classification = Some(ClassificationEval {
        instances: ds.len(),
        accuracy,
        confusion,
        error_interval,
        params: *params,
    });
    Ok(report)
}

/// Plain k-fold evaluation of the five stage forests on the counted days of
/// `ds`, with correlations computed on pooled out-of-fold predictions.
pub fn cross_validate_regressor(
    ds: &Dataset,
    params: &TrainParams,
    k: usize,
    seed: u64,
    level: f64,
) -> Result<EvalReport, EvalError> {
    let reg = ds.regression_subset();
    if reg.is_empty() {
        return Err(EvalError::NoRegressionInstances);
    }
    let folds = kfold_assign(reg.len(), k, seed, None)?;

    let per_fold = (0..k)
        .into_par_iter()
        .map(|f| {
            let (train, test) = split_fold(&reg.instances, &folds, f);
            let x: Vec<Vec<f64>> = train.iter().map(|i| i.features.clone()).collect();
            let y: Vec<NymphStageRatios> = train.iter().map(|i| i.ratios.expect("counted day")).collect();
            let predictor = RatioPredictor::train(&x, &y, &reg.spec.fields, params)?;
            test.into_iter()
                .map(|i| {
                    let inst = &reg.instances[i];
                    let pred = predict_ratios(&predictor, &inst.features)?;
                    Ok((
                        i,
                        OutOfFoldRatios {
                            station_id: inst.station_id.clone(),
                            date: inst.date,
                            fold: f,
                            predicted: *pred.ratios.as_array(),
                            actual: *inst.ratios.expect("counted day").as_array(),
                        },
                    ))
                })
                .collect::<Result<Vec<_>, EvalError>>()
        })
        .collect::<Result<Vec<_>, EvalError>>()?;

    let mut predictions: Vec<(usize, OutOfFoldRatios)> = per_fold.into_iter().flatten().collect();
    predictions.sort_by_key(|(i, _)| *i);
    let predictions: Vec<OutOfFoldRatios> = predictions.into_iter().map(|(_, p)| p).collect();

    let mut stages = Vec::with_capacity(5);
    for s in 0..5 {
        let pred: Vec<f64> = predictions.iter().map(|p| p.predicted[s]).collect();
        let actual: Vec<f64> = predictions.iter().map(|p| p.actual[s]).collect();
        let r = if predictions.len() >= 2 {
            pearson_r(&pred, &actual)?
        } else {
            None
        };
        let mae = pred.iter().zip(&actual).map(|(p, a)| (p - a).abs()).sum::<f64>() / pred.len() as f64;
        stages.push(StageEval {
            stage: s as u8 + 1,
            pearson_r: r,
            mae,
        });
    }
    let abs_errors: Vec<f64> = predictions
        .iter()
        .map(|p| {
            p.predicted
                .iter()
                .zip(&p.actual)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
                / 5.0
        })
        .collect();
    let error_interval = ci_mean(&abs_errors, level)?;

    let mut report = EvalReport::empty(ds, k, seed, level);
    report.regression = Some(RegressionEval {
        instances: reg.len(),
        stages,
        error_interval,
        params: *params,
        predictions,
    });
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureSetSpec, LabeledInstance};
    use proptest::prelude::*;

    #[test]
    fn one_per_fold() {
        let folds = kfold_assign(10, 10, 3, None).unwrap();
        let mut sorted = folds.clone();
        sorted.sort();
        assert_eq!(sorted, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn sizes_for_2925() {
        let folds = kfold_assign(2925, 10, 1, None).unwrap();
        let mut sizes = [0usize; 10];
        for f in folds {
            sizes[f] += 1;
        }
        assert_eq!(sizes.iter().filter(|&&s| s == 293).count(), 5);
        assert_eq!(sizes.iter().filter(|&&s| s == 292).count(), 5);
    }

    #[test]
    fn stratified_split() {
        let strata = [0, 0, 0, 0, 0, 0, 1, 1, 1, 1];
        let folds = kfold_assign(10, 2, 9, Some(&strata)).unwrap();
        for f in 0..2 {
            let a = (0..10).filter(|&i| folds[i] == f && strata[i] == 0).count();
            let b = (0..10).filter(|&i| folds[i] == f && strata[i] == 1).count();
            assert_eq!((a, b), (3, 2));
        }
    }

    #[test]
    fn fold_errors() {
        assert_eq!(kfold_assign(9, 10, 0, None), Err(EvalError::NotEnoughInstances { n: 9, k: 10 }));
        assert_eq!(kfold_assign(9, 1, 0, None), Err(EvalError::TooFewFolds(1)));
        assert!(kfold_assign(4, 2, 0, Some(&[0, 1])).is_err());
    }

    fn dataset(rows: Vec<(f64, PhaseLabel, Option<[f64; 5]>)>) -> Dataset {
        let start = NaiveDate::from_ymd_opt(2016, 1, 1).unwrap();
        Dataset {
            spec: FeatureSetSpec {
                model_id: ModelId::M3AccumulatedReduced,
                fields: vec!["acc_sr_avg".into()],
            },
            instances: rows
                .into_iter()
                .enumerate()
                .map(|(i, (x, phase, r))| LabeledInstance {
                    station_id: "S".into(),
                    date: start + chrono::Days::new(i as u64),
                    features: vec![x],
                    phase,
                    ratios: r.map(|r| NymphStageRatios::new(r).unwrap()),
                })
                .collect(),
            dropped_no_features: 0,
            dropped_no_label: 0,
        }
    }

    #[test]
    fn separable_classification_is_perfect() {
        // Classes sit in well separated clusters so any held-out point falls
        // on the right side of the learned thresholds.
        let rows = (0..60)
            .map(|i| {
                let phase = PhaseLabel::ALL[i / 20];
                let x = (i / 20) as f64 * 10_000.0 + (i % 20) as f64 * 10.0;
                (x, phase, None)
            })
            .collect();
        let ds = dataset(rows);
        let report = cross_validate_classifier(&ds, &TrainParams::classifier_defaults(), 10, 4, 0.99).unwrap();
        let c = report.classification.unwrap();
        assert_eq!(c.accuracy, 1.0);
        assert_eq!(c.confusion.total(), 60);
        assert_eq!(c.confusion.misclassified(), 0);
        assert_eq!(c.confusion.counts.len(), 3);
        assert_eq!((c.error_interval.lower, c.error_interval.upper), (0.0, 0.0));
    }

    #[test]
    fn constant_ratios_have_undefined_correlation() {
        let rows = (0..30)
            .map(|i| (i as f64, PhaseLabel::WheatField, Some([0.2, 0.2, 0.2, 0.2, 0.2])))
            .collect();
        let ds = dataset(rows);
        let report = cross_validate_regressor(&ds, &TrainParams::forest_defaults(), 10, 4, 0.99).unwrap();
        let r = report.regression.unwrap();
        assert_eq!(r.undefined_stages(), vec![1, 2, 3, 4, 5]);
        assert!(r.stages.iter().all(|s| s.mae < 1e-15));
        assert!(r.error_interval.upper < 1e-15);
    }

    #[test]
    fn regression_needs_counted_days() {
        let ds = dataset(vec![(1.0, PhaseLabel::WinterQuarters, None); 12]);
        assert_eq!(
            cross_validate_regressor(&ds, &TrainParams::forest_defaults(), 10, 1, 0.99),
            Err(EvalError::NoRegressionInstances)
        );
    }

    proptest! {
        #[test]
        fn folds_partition(n in 2usize..300, k in 2usize..12, seed in any::<u64>(), classes in 1usize..4) {
            prop_assume!(n >= k);
            let strata: Vec<usize> = (0..n).map(|i| (i * 7 + 3) % classes).collect();
            for s in [None, Some(strata.as_slice())] {
                let folds = kfold_assign(n, k, seed, s).unwrap();
                prop_assert_eq!(folds.len(), n);
                let mut sizes = vec![0usize; k];
                for &f in &folds {
                    prop_assert!(f < k);
                    sizes[f] += 1;
                }
                let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
                prop_assert!(hi - lo <= 1);
                if let Some(strata) = s {
                    for c in 0..classes {
                        let per: Vec<usize> = (0..k)
                            .map(|f| (0..n).filter(|&i| folds[i] == f && strata[i] == c).count())
                            .collect();
                        prop_assert!(per.iter().max().unwrap() - per.iter().min().unwrap() <= 1);
                    }
                }
            }
        }
    }
}

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::split::best_split;
use super::{check_rows, mix64, Target, TrainParams, TreeError};
use crate::features::PhaseLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeKind {
    Classifier { n_classes: usize },
    Regressor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Leaf {
    /// Class shares, non-negative and summing to one.
    Distribution(Vec<f64>),
    Value(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf(Leaf),
}

/// A trained tree. `nodes[0]` is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub kind: TreeKind,
    pub features: Vec<String>,
    pub nodes: Vec<Node>,
}

impl TreeModel {
    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        if self.nodes.is_empty() {
            0
        } else {
            walk(&self.nodes, 0)
        }
    }

    /// Structural validation for trees that did not come from `train_tree`:
    /// children point forward, every node is reachable exactly once, features
    /// are in range and leaves match the tree kind.
    pub fn check(&self) -> Result<(), String> {
        if self.nodes.is_empty() {
            return Err("tree has no nodes".into());
        }
        let mut parents = vec![0usize; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            match node {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if *feature >= self.features.len() {
                        return Err(format!("node {i} splits on missing feature {feature}"));
                    }
                    if !threshold.is_finite() {
                        return Err(format!("node {i} has a non-finite threshold"));
                    }
                    for &c in [left, right] {
                        if c <= i || c >= self.nodes.len() {
                            return Err(format!("node {i} has invalid child {c}"));
                        }
                        parents[c] += 1;
                    }
                }
                Node::Leaf(Leaf::Distribution(d)) => match self.kind {
                    TreeKind::Classifier { n_classes } if d.len() == n_classes && d.iter().all(|p| p.is_finite()) => {}
                    _ => return Err(format!("node {i} has a malformed class distribution")),
                },
                Node::Leaf(Leaf::Value(v)) => {
                    if self.kind != TreeKind::Regressor || !v.is_finite() {
                        return Err(format!("node {i} has a malformed regression value"));
                    }
                }
            }
        }
        if parents[0] != 0 || parents[1..].iter().any(|&p| p != 1) {
            return Err("nodes do not form a single tree".into());
        }
        Ok(())
    }

    pub fn leaf(&self, x: &[f64]) -> Result<&Leaf, TreeError> {
        if x.len() != self.features.len() {
            return Err(TreeError::ArityMismatch {
                expected: self.features.len(),
                got: x.len(),
            });
        }
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf(leaf) => return Ok(leaf),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    /// Argmax class (ties to the lowest index) and the leaf distribution.
    pub fn predict_class(&self, x: &[f64]) -> Result<(usize, &[f64]), TreeError> {
        match self.leaf(x)? {
            Leaf::Distribution(dist) => {
                let mut best = 0;
                for (i, p) in dist.iter().enumerate() {
                    if *p > dist[best] {
                        best = i;
                    }
                }
                Ok((best, dist))
            }
            Leaf::Value(_) => Err(TreeError::WrongKind("regressor", "classifier")),
        }
    }

    pub fn predict_value(&self, x: &[f64]) -> Result<f64, TreeError> {
        match self.leaf(x)? {
            Leaf::Value(v) => Ok(*v),
            Leaf::Distribution(_) => Err(TreeError::WrongKind("classifier", "regressor")),
        }
    }
}

/// Life-cycle phase for `x` with the leaf's three-way class distribution.
pub fn predict_phase(tree: &TreeModel, x: &[f64]) -> Result<(PhaseLabel, [f64; 3]), TreeError> {
    if tree.kind != (TreeKind::Classifier { n_classes: 3 }) {
        return Err(TreeError::WrongKind("non-phase model", "three-class classifier"));
    }
    let (class, dist) = tree.predict_class(x)?;
    let phase = PhaseLabel::from_index(class).expect("three classes");
    Ok((phase, [dist[0], dist[1], dist[2]]))
}

/// Grows one unpruned tree on the whole dataset with every feature as a
/// split candidate.
///
/// Rows are put in a canonical order first, so permuting the input changes
/// nothing in the result.
pub fn train_tree(
    x: &[Vec<f64>],
    target: Target<'_>,
    feature_names: &[String],
    params: &TrainParams,
) -> Result<TreeModel, TreeError> {
    let data = Canonical::new(x, target, feature_names)?;
    params.validate(data.m)?;
    let rows: Vec<usize> = (0..data.x.len()).collect();
    data.grow(rows, params, None)
}

/// Per-node feature sampling for forest trees.
#[derive(Debug, Clone, Copy)]
pub(crate) struct FeatureSampling {
    pub per_split: usize,
    pub seed: u64,
    pub tree_index: u64,
}

/// A dataset copied into canonical row order.
pub(crate) struct Canonical {
    pub x: Vec<Vec<f64>>,
    labels: Vec<usize>,
    values: Vec<f64>,
    n_classes: Option<usize>,
    pub m: usize,
    names: Vec<String>,
}

impl Canonical {
    pub fn new(x: &[Vec<f64>], target: Target<'_>, feature_names: &[String]) -> Result<Self, TreeError> {
        let m = check_rows(x)?;
        if target.len() != x.len() {
            return Err(TreeError::TargetLength(target.len(), x.len()));
        }
        if feature_names.len() != m {
            return Err(TreeError::ArityMismatch {
                expected: feature_names.len(),
                got: m,
            });
        }
        let mut order: Vec<usize> = (0..x.len()).collect();
        let cmp_rows = |a: &usize, b: &usize| {
            x[*a]
                .iter()
                .zip(&x[*b])
                .map(|(u, v)| u.total_cmp(v))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        };
        let (labels, values, n_classes) = match target {
            Target::Classes { labels, n_classes } => {
                if let Some(&label) = labels.iter().find(|&&l| l >= n_classes) {
                    return Err(TreeError::LabelOutOfRange { label, n_classes });
                }
                order.sort_by(|a, b| cmp_rows(a, b).then(labels[*a].cmp(&labels[*b])));
                (order.iter().map(|&i| labels[i]).collect(), Vec::new(), Some(n_classes))
            }
            Target::Values(y) => {
                if y.iter().any(|v| !v.is_finite()) {
                    return Err(TreeError::InvalidParams("regression targets must be finite".into()));
                }
                order.sort_by(|a, b| cmp_rows(a, b).then(y[*a].total_cmp(&y[*b])));
                (Vec::new(), order.iter().map(|&i| y[i]).collect(), None)
            }
        };
        Ok(Canonical {
            x: order.iter().map(|&i| x[i].clone()).collect(),
            labels,
            values,
            n_classes,
            m,
            names: feature_names.to_vec(),
        })
    }

    fn target(&self) -> Target<'_> {
        match self.n_classes {
            Some(n_classes) => Target::Classes {
                labels: &self.labels,
                n_classes,
            },
            None => Target::Values(&self.values),
        }
    }

    fn make_leaf(&self, rows: &[usize]) -> Leaf {
        match self.n_classes {
            Some(k) => {
                let mut counts = vec![0usize; k];
                for &r in rows {
                    counts[self.labels[r]] += 1;
                }
                let n = rows.len() as f64;
                Leaf::Distribution(counts.iter().map(|&c| c as f64 / n).collect())
            }
            // Equal targets keep their exact value rather than a rounded mean.
            None if self.is_homogeneous(rows) => Leaf::Value(self.values[rows[0]]),
            None => Leaf::Value(rows.iter().map(|&r| self.values[r]).sum::<f64>() / rows.len() as f64),
        }
    }

    fn is_homogeneous(&self, rows: &[usize]) -> bool {
        match self.n_classes {
            Some(_) => rows.iter().all(|&r| self.labels[r] == self.labels[rows[0]]),
            None => rows.iter().all(|&r| self.values[r] == self.values[rows[0]]),
        }
    }

    /// Greedy top-down growth over `rows` (indices into the canonical data,
    /// possibly repeated by bootstrap).
    pub fn grow(
        &self,
        rows: Vec<usize>,
        params: &TrainParams,
        sampling: Option<FeatureSampling>,
    ) -> Result<TreeModel, TreeError> {
        if rows.is_empty() {
            return Err(TreeError::EmptyDataset);
        }
        let target = self.target();
        target.check_criterion(params.criterion)?;
        let kind = match self.n_classes {
            Some(n_classes) => TreeKind::Classifier { n_classes },
            None => TreeKind::Regressor,
        };
        let all_features: Vec<usize> = (0..self.m).collect();
        let root_key = sampling.map_or(0, |s| mix64(s.seed ^ mix64(s.tree_index.wrapping_add(1))));

        let mut nodes = vec![Node::Leaf(Leaf::Value(0.0))];
        // (slot, rows, depth, node key)
        let mut stack = vec![(0usize, rows, 0usize, root_key)];
        while let Some((slot, rows, depth, key)) = stack.pop() {
            let at_limit = params.max_depth.is_some_and(|d| depth >= d);
            let split = if rows.len() < params.min_split || at_limit || self.is_homogeneous(&rows) {
                None
            } else {
                let candidates = match sampling {
                    Some(s) if s.per_split < self.m => sample_features(self.m, s.per_split, key),
                    _ => all_features.clone(),
                };
                best_split(&self.x, &target, &rows, &candidates, params.criterion, params.min_leaf)?
            };
            match split {
                None => nodes[slot] = Node::Leaf(self.make_leaf(&rows)),
                Some(s) => {
                    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
                        rows.iter().partition(|&&r| self.x[r][s.feature] <= s.threshold);
                    let (left, right) = (nodes.len(), nodes.len() + 1);
                    nodes.push(Node::Leaf(Leaf::Value(0.0)));
                    nodes.push(Node::Leaf(Leaf::Value(0.0)));
                    nodes[slot] = Node::Split {
                        feature: s.feature,
                        threshold: s.threshold,
                        left,
                        right,
                    };
                    stack.push((right, right_rows, depth + 1, mix64(key ^ 2)));
                    stack.push((left, left_rows, depth + 1, mix64(key ^ 1)));
                }
            }
        }
        Ok(TreeModel {
            kind,
            features: self.names.clone(),
            nodes,
        })
    }
}

fn sample_features(m: usize, k: usize, key: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    let mut picked = rand::seq::index::sample(&mut rng, m, k).into_vec();
    picked.sort_unstable();
    picked
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(m: usize) -> Vec<String> {
        (0..m).map(|i| format!("f{i}")).collect()
    }

    #[test]
    fn four_points_depth_one() {
        let x: Vec<Vec<f64>> = [1.0, 2.0, 10.0, 11.0].iter().map(|v| vec![*v]).collect();
        let labels = [0, 0, 1, 1];
        let tree = train_tree(
            &x,
            Target::Classes {
                labels: &labels,
                n_classes: 2,
            },
            &names(1),
            &TrainParams::classifier_defaults(),
        )
        .unwrap();
        assert_eq!(tree.depth(), 1);
        assert_eq!(tree.node_count(), 3);
        for (row, label) in x.iter().zip(labels) {
            assert_eq!(tree.predict_class(row).unwrap().0, label);
        }
    }

    #[test]
    fn single_class_is_one_leaf() {
        let x = vec![vec![1.0], vec![2.0], vec![3.0]];
        let labels = [2, 2, 2];
        let tree = train_tree(
            &x,
            Target::Classes {
                labels: &labels,
                n_classes: 3,
            },
            &names(1),
            &TrainParams::classifier_defaults(),
        )
        .unwrap();
        assert_eq!(tree.node_count(), 1);
        let (phase, dist) = predict_phase(&tree, &[100.0]).unwrap();
        assert_eq!(phase, PhaseLabel::WheatField);
        assert_eq!(dist, [0.0, 0.0, 1.0]);
    }

    #[test]
    fn xor_is_fit_exactly() {
        // no single split reduces impurity here; growth must continue anyway
        let x = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]];
        let labels = [0, 0, 1, 1];
        let tree = train_tree(
            &x,
            Target::Classes {
                labels: &labels,
                n_classes: 2,
            },
            &names(2),
            &TrainParams::classifier_defaults(),
        )
        .unwrap();
        for (row, label) in x.iter().zip(labels) {
            assert_eq!(tree.predict_class(row).unwrap().0, label);
        }
    }

    #[test]
    fn max_depth_and_min_split_stop_growth() {
        let x: Vec<Vec<f64>> = (0..16).map(|v| vec![v as f64]).collect();
        let labels: Vec<usize> = (0..16).map(|v| v % 2).collect();
        let target = Target::Classes {
            labels: &labels,
            n_classes: 2,
        };
        let p = TrainParams {
            max_depth: Some(2),
            ..TrainParams::classifier_defaults()
        };
        assert!(train_tree(&x, target, &names(1), &p).unwrap().depth() <= 2);
        let p = TrainParams {
            min_split: 17,
            ..TrainParams::classifier_defaults()
        };
        assert_eq!(train_tree(&x, target, &names(1), &p).unwrap().node_count(), 1);
    }

    #[test]
    fn regression_leaves_store_means() {
        let x = vec![vec![0.0], vec![0.0], vec![5.0], vec![5.0]];
        let y = [1.0, 2.0, 10.0, 20.0];
        let tree = train_tree(&x, Target::Values(&y), &names(1), &TrainParams::forest_defaults()).unwrap();
        assert_eq!(tree.predict_value(&[0.0]).unwrap(), 1.5);
        assert_eq!(tree.predict_value(&[9.0]).unwrap(), 15.0);
    }

    #[test]
    fn prediction_errors() {
        let x = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let y = [0.0, 1.0];
        let tree = train_tree(&x, Target::Values(&y), &names(2), &TrainParams::forest_defaults()).unwrap();
        assert_eq!(
            tree.predict_value(&[1.0]),
            Err(TreeError::ArityMismatch { expected: 2, got: 1 })
        );
        assert!(tree.predict_class(&[0.0, 0.0]).is_err());
        assert!(predict_phase(&tree, &[0.0, 0.0]).is_err());
        assert_eq!(
            train_tree(&[], Target::Values(&[]), &[], &TrainParams::forest_defaults()),
            Err(TreeError::EmptyDataset)
        );
        assert!(train_tree(&[vec![f64::NAN]], Target::Values(&[1.0]), &names(1), &TrainParams::forest_defaults()).is_err());
    }

    #[test]
    fn row_order_does_not_matter() {
        let x: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![((i * 37) % 11) as f64, ((i * 13) % 7) as f64 * 0.5])
            .collect();
        let y: Vec<f64> = (0..40).map(|i| ((i * 7) % 5) as f64 / 3.0).collect();
        let a = train_tree(&x, Target::Values(&y), &names(2), &TrainParams::forest_defaults()).unwrap();
        let mut perm: Vec<usize> = (0..40).collect();
        perm.reverse();
        perm.swap(3, 17);
        let xp: Vec<Vec<f64>> = perm.iter().map(|&i| x[i].clone()).collect();
        let yp: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
        let b = train_tree(&xp, Target::Values(&yp), &names(2), &TrainParams::forest_defaults()).unwrap();
        assert_eq!(a, b);
    }
}

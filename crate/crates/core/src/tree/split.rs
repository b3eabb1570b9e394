use std::cmp::Reverse;
use std::collections::BinaryHeap;

use ordered_float::OrderedFloat;
use serde::{Deserialize, Serialize};

use super::criteria::{entropy_of, gini_of};
use super::{Criterion, Target, TreeError};

/// Relative tolerance under which two split scores count as tied.
pub const SCORE_TIE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    /// Size-weighted mean of the two children's criterion values.
    pub score: f64,
}

/// Threshold between two consecutive distinct values, guaranteed to satisfy
/// `lo <= t < hi` so that `lo` routes left and `hi` routes right.
pub fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = 0.5 * (lo + hi);
    if m < hi {
        m
    } else {
        lo
    }
}

/// Whether `score` beats `best` by more than the tie tolerance.
pub(crate) fn improves(score: f64, best: f64) -> bool {
    score < best - SCORE_TIE_TOLERANCE * best.abs().max(1.0)
}

/// Best legal split of `rows` over the `features` candidates.
///
/// Both children must hold at least `min_leaf` rows. Candidates are scanned in
/// ascending feature index then ascending threshold, and a later candidate
/// replaces the incumbent only when it is strictly better beyond
/// [`SCORE_TIE_TOLERANCE`], so ties resolve to the lowest feature and lowest
/// threshold. Returns `None` when no candidate feature has two distinct values
/// with enough rows on each side.
pub fn best_split(
    x: &[Vec<f64>],
    target: &Target<'_>,
    rows: &[usize],
    features: &[usize],
    criterion: Criterion,
    min_leaf: usize,
) -> Result<Option<Split>, TreeError> {
    target.check_criterion(criterion)?;
    if rows.len() < 2 {
        return Ok(None);
    }
    let min_leaf = min_leaf.max(1);
    let mut features = features.to_vec();
    features.sort_unstable();
    features.dedup();

    let mut best: Option<Split> = None;
    let mut order: Vec<usize> = rows.to_vec();
    for &feature in &features {
        order.sort_by(|&a, &b| x[a][feature].total_cmp(&x[b][feature]).then(a.cmp(&b)));
        let values: Vec<f64> = order.iter().map(|&r| x[r][feature]).collect();
        let mut consider = |i: usize, score: f64| {
            // candidate between sorted positions i and i+1
            let threshold = midpoint(values[i], values[i + 1]);
            let replace = match &best {
                None => true,
                Some(b) => improves(score, b.score),
            };
            if replace {
                best = Some(Split {
                    feature,
                    threshold,
                    score,
                });
            }
        };
        match target {
            Target::Classes { labels, n_classes } => {
                sweep_classes(&order, &values, labels, *n_classes, criterion, min_leaf, &mut consider)
            }
            Target::Values(y) => sweep_mae(&order, &values, y, min_leaf, &mut consider),
        }
    }
    Ok(best)
}

fn legal_positions(values: &[f64], min_leaf: usize) -> impl Iterator<Item = usize> + '_ {
    let n = values.len();
    (0..n.saturating_sub(1)).filter(move |&i| {
        let left = i + 1;
        left >= min_leaf && n - left >= min_leaf && values[i] < values[i + 1]
    })
}

fn sweep_classes(
    order: &[usize],
    values: &[f64],
    labels: &[usize],
    n_classes: usize,
    criterion: Criterion,
    min_leaf: usize,
    consider: &mut impl FnMut(usize, f64),
) {
    let n = order.len();
    let impurity = match criterion {
        Criterion::Entropy => entropy_of,
        _ => gini_of,
    };
    let mut left = vec![0usize; n_classes];
    let mut right = vec![0usize; n_classes];
    for &r in order {
        right[labels[r]] += 1;
    }
    let mut legal = legal_positions(values, min_leaf).peekable();
    for (i, &r) in order.iter().enumerate().take(n - 1) {
        left[labels[r]] += 1;
        right[labels[r]] -= 1;
        if legal.peek() == Some(&i) {
            legal.next();
            let (nl, nr) = (i + 1, n - i - 1);
            let score = (nl as f64 * impurity(&left, nl) + nr as f64 * impurity(&right, nr)) / n as f64;
            consider(i, score);
        }
    }
}

fn sweep_mae(
    order: &[usize],
    values: &[f64],
    y: &[f64],
    min_leaf: usize,
    consider: &mut impl FnMut(usize, f64),
) {
    let n = order.len();
    // prefix[i]: sum |y - median| over sorted positions 0..=i
    let mut prefix = Vec::with_capacity(n);
    let mut tracker = MedianTracker::default();
    for &r in order {
        tracker.push(y[r]);
        prefix.push(tracker.abs_deviation());
    }
    // suffix[i]: same over positions i..n
    let mut suffix = vec![0.0; n];
    let mut tracker = MedianTracker::default();
    for i in (0..n).rev() {
        tracker.push(y[order[i]]);
        suffix[i] = tracker.abs_deviation();
    }
    for i in legal_positions(values, min_leaf) {
        consider(i, (prefix[i] + suffix[i + 1]) / n as f64);
    }
}

/// Running median of an insert-only multiset, with the total absolute
/// deviation from it.
#[derive(Default)]
struct MedianTracker {
    low: BinaryHeap<OrderedFloat<f64>>,
    high: BinaryHeap<Reverse<OrderedFloat<f64>>>,
    sum_low: f64,
    sum_high: f64,
}

impl MedianTracker {
    fn push(&mut self, v: f64) {
        match self.low.peek() {
            Some(top) if v > top.0 => {
                self.high.push(Reverse(OrderedFloat(v)));
                self.sum_high += v;
            }
            _ => {
                self.low.push(OrderedFloat(v));
                self.sum_low += v;
            }
        }
        // keep len(low) == len(high) or len(high) + 1
        if self.low.len() > self.high.len() + 1 {
            let moved = self.low.pop().unwrap().0;
            self.sum_low -= moved;
            self.high.push(Reverse(OrderedFloat(moved)));
            self.sum_high += moved;
        } else if self.high.len() > self.low.len() {
            let moved = self.high.pop().unwrap().0 .0;
            self.sum_high -= moved;
            self.low.push(OrderedFloat(moved));
            self.sum_low += moved;
        }
    }

    fn abs_deviation(&self) -> f64 {
        if self.low.len() == self.high.len() {
            // any point between the two middle values gives the same total
            self.sum_high - self.sum_low
        } else {
            let m = self.low.peek().map(|t| t.0).unwrap_or(0.0);
            m - self.sum_low + self.sum_high
        }
    }
}

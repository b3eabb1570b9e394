use super::TreeError;

/// `1 - sum(p_i^2)` over class counts.
pub fn gini_impurity(class_counts: &[usize]) -> Result<f64, TreeError> {
    let total: usize = class_counts.iter().sum();
    if total == 0 {
        return Err(TreeError::EmptyNode);
    }
    Ok(gini_of(class_counts, total))
}

/// Shannon entropy in bits over class counts.
pub fn entropy_impurity(class_counts: &[usize]) -> Result<f64, TreeError> {
    let total: usize = class_counts.iter().sum();
    if total == 0 {
        return Err(TreeError::EmptyNode);
    }
    Ok(entropy_of(class_counts, total))
}

pub(crate) fn gini_of(counts: &[usize], total: usize) -> f64 {
    let n = total as f64;
    let sq: f64 = counts
        .iter()
        .map(|&c| {
            let p = c as f64 / n;
            p * p
        })
        .sum();
    1.0 - sq
}

pub(crate) fn entropy_of(counts: &[usize], total: usize) -> f64 {
    let n = total as f64;
    -counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * p.log2()
        })
        .sum::<f64>()
}

/// Median with the midpoint convention for even lengths.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Mean absolute deviation from the median.
pub fn mae_criterion(values: &[f64]) -> Result<f64, TreeError> {
    let m = median(values).ok_or(TreeError::EmptyNode)?;
    Ok(values.iter().map(|v| (v - m).abs()).sum::<f64>() / values.len() as f64)
}

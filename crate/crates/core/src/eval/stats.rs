//! Interval estimates and correlation.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IntervalMethod {
    /// Normal approximation to a binomial error rate.
    ProportionZ,
    /// Student-t interval for a mean.
    MeanT,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
    pub confidence_level: f64,
    pub method: IntervalMethod,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

fn check_level(level: f64) -> Result<(), EvalError> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(EvalError::InvalidLevel(level))
    }
}

/// Two-sided standard-normal critical value: `P(|Z| <= z) = level`.
pub fn z_quantile(level: f64) -> Result<f64, EvalError> {
    check_level(level)?;
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(normal.inverse_cdf(0.5 + level / 2.0))
}

/// Two-sided Student-t critical value with `df` degrees of freedom.
pub fn t_quantile(level: f64, df: f64) -> Result<f64, EvalError> {
    check_level(level)?;
    if !(df > 0.0 && df.is_finite()) {
        return Err(EvalError::InvalidDegreesOfFreedom(df));
    }
    let t = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    Ok(t.inverse_cdf(0.5 + level / 2.0))
}

/// `e ± z * sqrt(e(1-e)/n)`, clamped to [0, 1].
pub fn ci_proportion(error_rate: f64, n: u64, level: f64) -> Result<Interval, EvalError> {
    check_level(level)?;
    if !(0.0..=1.0).contains(&error_rate) {
        return Err(EvalError::InvalidProportion(error_rate));
    }
    if n == 0 {
        return Err(EvalError::TooFewValues { need: 1, got: 0 });
    }
    let z = z_quantile(level)?;
    let half = z * (error_rate * (1.0 - error_rate) / n as f64).sqrt();
    Ok(Interval {
        lower: (error_rate - half).clamp(0.0, 1.0),
        upper: (error_rate + half).clamp(0.0, 1.0),
        confidence_level: level,
        method: IntervalMethod::ProportionZ,
    })
}

/// `mean ± t_{n-1} * s / sqrt(n)` with `s` the sample standard deviation.
pub fn ci_mean(values: &[f64], level: f64) -> Result<Interval, EvalError> {
    check_level(level)?;
    let n = values.len();
    if n < 2 {
        return Err(EvalError::TooFewValues { need: 2, got: n });
    }
    let mean = if is_constant(values) {
        values[0]
    } else {
        values.iter().sum::<f64>() / n as f64
    };
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = t_quantile(level, (n - 1) as f64)?;
    let half = t * var.sqrt() / (n as f64).sqrt();
    Ok(Interval {
        lower: mean - half,
        upper: mean + half,
        confidence_level: level,
        method: IntervalMethod::MeanT,
    })
}

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|&x| x == v[0])
}

/// Product-moment correlation; `None` when either side has zero variance.
pub fn pearson_r(pred: &[f64], actual: &[f64]) -> Result<Option<f64>, EvalError> {
    if pred.len() != actual.len() {
        return Err(EvalError::LengthMismatch(pred.len(), actual.len()));
    }
    let n = pred.len();
    if n < 2 {
        return Err(EvalError::TooFewValues { need: 2, got: n });
    }
    if is_constant(pred) || is_constant(actual) {
        return Ok(None);
    }
    let mp = pred.iter().sum::<f64>() / n as f64;
    let ma = actual.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (p, a) in pred.iter().zip(actual) {
        let (dp, da) = (p - mp, a - ma);
        sxy += dp * da;
        sxx += dp * dp;
        syy += da * da;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(None);
    }
    Ok(Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)))
}

//! MRE-based accuracy metrics. Generic so they can be evaluated exactly on
//! rationals as well as on floats.

use std::collections::BTreeMap;

use num_traits::{FromPrimitive, Num, Signed};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

fn check<T: Num + PartialOrd>(actuals: &[T], predictions: &[T]) -> Result<()> {
    if actuals.is_empty() {
        return Err(Error::InsufficientData("accuracy metrics need at least one row".into()));
    }
    if actuals.len() != predictions.len() {
        return Err(Error::InvalidArgument(format!(
            "{} actuals but {} predictions",
            actuals.len(),
            predictions.len()
        )));
    }
    if let Some(i) = actuals.iter().position(|a| !(*a > T::zero())) {
        return Err(Error::InvalidArgument(format!("actual value in row {} is not positive", i + 1)));
    }
    Ok(())
}

/// `|actual − prediction| / actual` per row.
pub fn mre<T>(actuals: &[T], predictions: &[T]) -> Result<Vec<T>>
where
    T: Num + Signed + PartialOrd + Clone,
{
    check(actuals, predictions)?;
    Ok(actuals
        .iter()
        .zip(predictions)
        .map(|(a, p)| (a.clone() - p.clone()).abs() / a.clone())
        .collect())
}

pub fn mmre<T>(actuals: &[T], predictions: &[T]) -> Result<T>
where
    T: Num + Signed + PartialOrd + FromPrimitive + Clone,
{
    let m = mre(actuals, predictions)?;
    let n = T::from_usize(m.len()).ok_or_else(|| Error::InvalidArgument("row count not representable".into()))?;
    Ok(m.into_iter().fold(T::zero(), |a, b| a + b) / n)
}

/// Fraction of rows with MRE ≤ m.
pub fn pred_at<T>(actuals: &[T], predictions: &[T], m: T) -> Result<T>
where
    T: Num + Signed + PartialOrd + FromPrimitive + Clone,
{
    if m < T::zero() {
        return Err(Error::InvalidArgument("Pred level must be nonnegative".into()));
    }
    let e = mre(actuals, predictions)?;
    let hits = e.iter().filter(|v| **v <= m).count();
    let (h, n) = (T::from_usize(hits), T::from_usize(e.len()));
    match (h, n) {
        (Some(h), Some(n)) => Ok(h / n),
        _ => Err(Error::InvalidArgument("row count not representable".into())),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub mmre: f64,
    /// Keyed by the level formatted as a decimal, e.g. `"0.25"`.
    pub pred: BTreeMap<String, f64>,
    pub n: usize,
}

pub fn evaluate_predictions(actuals: &[f64], predictions: &[f64], levels: &[f64]) -> Result<EvalMetrics> {
    let mut pred = BTreeMap::new();
    for &m in levels {
        pred.insert(format!("{m}"), pred_at(actuals, predictions, m)?);
    }
    Ok(EvalMetrics {
        mmre: mmre(actuals, predictions)?,
        pred,
        n: actuals.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num::rational::Ratio;

    #[test]
    fn worked_example_exact() {
        let r = |v: i64| Ratio::from_integer(v);
        let a = [r(100), r(50), r(20), r(10)];
        let p = [r(120), r(40), r(30), r(10)];
        assert_eq!(mmre(&a, &p).unwrap(), Ratio::new(9, 40));
        assert_eq!(pred_at(&a, &p, Ratio::new(1, 4)).unwrap(), Ratio::new(3, 4));
        assert_eq!(pred_at(&a, &p, r(1000)).unwrap(), r(1));
    }

    #[test]
    fn float_and_errors() {
        assert_eq!(mmre(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), 0.0);
        assert_eq!(pred_at(&[2.0, 4.0], &[3.0, 5.0], 0.0).unwrap(), 0.0);
        assert!(mmre(&[1.0, 0.0], &[1.0, 1.0]).is_err());
        assert!(mmre::<f64>(&[], &[]).is_err());
        assert!(mmre(&[1.0], &[1.0, 2.0]).is_err());
        let m = evaluate_predictions(&[100.0, 50.0], &[120.0, 50.0], &[0.25]).unwrap();
        assert_eq!(m.pred["0.25"], 1.0);
    }
}

//! Variable transformations: log transforms, VAF from GSC ratings, normal
//! QQ diagnostics and tie-averaged ranks.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::dataset::{Column, Dataset, Transform};
use crate::numerics::{normal_quantile, pearson};
use crate::{Error, Result, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogMode {
    Ln,
    Ln1p,
}

impl LogMode {
    fn name(self) -> &'static str {
        match self {
            LogMode::Ln => "ln",
            LogMode::Ln1p => "ln1p",
        }
    }
}

/// Elementwise `ln` or `ln(1 + x)`; missing cells stay missing.
///
/// Reports the first offending row (1-based) through [`Error::Domain`] with
/// an empty column name; [`apply_transforms`] fills it in.
pub fn ln_transform<T: Scalar>(values: &[Option<T>], mode: LogMode) -> Result<Vec<Option<T>>> {
    values
        .iter()
        .enumerate()
        .map(|(i, v)| match *v {
            None => Ok(None),
            Some(x) => {
                let ok = match mode {
                    LogMode::Ln => x > T::zero(),
                    LogMode::Ln1p => x >= T::zero(),
                };
                if !ok || x.is_nan() {
                    return Err(Error::Domain {
                        column: String::new(),
                        row: i + 1,
                        value: x.to_f64().unwrap_or(f64::NAN),
                        transform: mode.name(),
                    });
                }
                Ok(Some(match mode {
                    LogMode::Ln => x.ln(),
                    LogMode::Ln1p => x.ln_1p(),
                }))
            }
        })
        .collect()
}

/// Applies every schema-declared transform to its column.
pub fn apply_transforms(ds: &Dataset) -> Result<Dataset> {
    let mut out = ds.clone();
    for spec in ds.schema() {
        let mode = match spec.transform {
            Transform::None => continue,
            Transform::Ln => LogMode::Ln,
            Transform::Ln1p => LogMode::Ln1p,
        };
        let values = ds.numeric(&spec.name)?;
        let transformed = ln_transform(values, mode).map_err(|e| match e {
            Error::Domain {
                row, value, transform, ..
            } => Error::Domain {
                column: spec.name.clone(),
                row,
                value,
                transform,
            },
            other => other,
        })?;
        out = out.with_column(spec.clone(), Column::Numeric(transformed))?;
    }
    Ok(out)
}

/// The 14 General System Characteristic ratings, each in `0..=5`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<i64>", into = "Vec<i64>")]
pub struct GscVector([u8; 14]);

impl GscVector {
    pub const LEN: usize = 14;
    pub const MAX_RATING: u8 = 5;

    pub fn new(ratings: &[i64]) -> Result<Self> {
        if ratings.len() != Self::LEN {
            return Err(Error::InvalidArgument(format!(
                "GSC vector needs exactly 14 ratings, got {}",
                ratings.len()
            )));
        }
        let mut out = [0u8; 14];
        for (i, &r) in ratings.iter().enumerate() {
            if !(0..=Self::MAX_RATING as i64).contains(&r) {
                return Err(Error::InvalidArgument(format!(
                    "GSC rating {} is {r}, must be in 0..=5",
                    i + 1
                )));
            }
            out[i] = r as u8;
        }
        Ok(GscVector(out))
    }

    pub fn ratings(&self) -> &[u8; 14] {
        &self.0
    }

    pub fn total(&self) -> u32 {
        self.0.iter().map(|&r| r as u32).sum()
    }
}

impl TryFrom<Vec<i64>> for GscVector {
    type Error = Error;
    fn try_from(v: Vec<i64>) -> Result<Self> {
        GscVector::new(&v)
    }
}

impl From<GscVector> for Vec<i64> {
    fn from(g: GscVector) -> Self {
        g.0.iter().map(|&r| r as i64).collect()
    }
}

/// `VAF = 0.65 + 0.01 · Σ ratings`, evaluated as `(65 + Σ) / 100` so both
/// endpoints (0.65 and 1.35) come out correctly rounded.
pub fn compute_vaf<T: Scalar>(gsc: &GscVector) -> T {
    T::from_count(65 + gsc.total() as usize) / T::lit(100.0)
}

/// Normal QQ plot data plus the correlation of its points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QqResult<T> {
    /// `(theoretical quantile, sample order statistic)`, sorted.
    pub points: Vec<(T, T)>,
    pub correlation: T,
}

impl<T: Scalar> QqResult<T> {
    /// Two-column CSV for external plotting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("theoretical,sample\n");
        for (t, s) in &self.points {
            out.push_str(&format!("{t},{s}\n"));
        }
        out
    }
}

/// Pairs order statistics with standard-normal quantiles at Blom plotting
/// positions `(i − 0.375) / (n + 0.25)`.
pub fn qq_normal<T: Scalar>(values: &[Option<T>]) -> Result<QqResult<T>> {
    let mut xs: Vec<T> = values.iter().flatten().copied().collect();
    if xs.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "QQ plot needs at least 3 values, got {}",
            xs.len()
        )));
    }
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let n = T::from_count(xs.len());
    let theoretical: Vec<T> = (1..=xs.len())
        .map(|i| normal_quantile((T::from_count(i) - T::lit(0.375)) / (n + T::lit(0.25))))
        .collect();
    let correlation = pearson(&theoretical, &xs).unwrap_or_else(T::zero);
    Ok(QqResult {
        points: theoretical.into_iter().zip(xs).collect(),
        correlation,
    })
}

/// Ranks `1..=n`, ties receive the average of the ranks they span.
pub fn rank_average<T: Scalar>(values: &[T]) -> Result<Vec<T>> {
    if values.is_empty() {
        return Err(Error::InsufficientData("cannot rank an empty list".into()));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("cannot rank NaN".into()));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![T::zero(); values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j hold ranks i+1..=j+1
        let avg = T::from_count(i + j + 2) / T::lit(2.0);
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    Ok(ranks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Prng;
    use proptest::prelude::*;

    #[test]
    fn exact_logs() {
        let e = std::f64::consts::E;
        let out = ln_transform(&[Some(1.0), Some(e), Some(e * e), None], LogMode::Ln).unwrap();
        assert_eq!(out[0], Some(0.0));
        assert!((out[1].unwrap() - 1.0).abs() < 1e-15);
        assert!((out[2].unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(out[3], None);
        assert_eq!(ln_transform(&[Some(0.0)], LogMode::Ln1p).unwrap(), vec![Some(0.0)]);
        let v = ln_transform(&[Some(18.0f64)], LogMode::Ln).unwrap()[0].unwrap();
        assert!((v - 2.8904).abs() < 5e-5);
    }

    #[test]
    fn nonpositive_under_ln_names_row() {
        let err = ln_transform(&[Some(2.0), None, Some(0.0)], LogMode::Ln).unwrap_err();
        assert!(matches!(err, Error::Domain { row: 3, .. }));
        assert!(ln_transform(&[Some(-1.0)], LogMode::Ln1p).is_err());
    }

    #[test]
    fn vaf_endpoints_and_midpoint() {
        let zeros = GscVector::new(&[0; 14]).unwrap();
        let fives = GscVector::new(&[5; 14]).unwrap();
        assert_eq!(compute_vaf::<f64>(&zeros), 0.65);
        assert_eq!(compute_vaf::<f64>(&fives), 1.35);
        let mut r = [2i64; 14];
        r[0] = 5;
        r[1] = 4;
        r[2] = 3;
        r[3] = 3;
        assert_eq!(r.iter().sum::<i64>(), 35);
        assert_eq!(compute_vaf::<f64>(&GscVector::new(&r).unwrap()), 1.0);
        assert_eq!(compute_vaf::<f32>(&fives), 1.35f32);
    }

    #[test]
    fn gsc_validation() {
        assert!(GscVector::new(&[0; 13]).is_err());
        let mut r = [0i64; 14];
        r[5] = 6;
        assert!(GscVector::new(&r).is_err());
        r[5] = -1;
        assert!(GscVector::new(&r).is_err());
    }

    #[test]
    fn qq_of_exact_quantiles_is_perfect() {
        let n = 25;
        let q: Vec<Option<f64>> = (1..=n)
            .map(|i| Some(normal_quantile((i as f64 - 0.375) / (n as f64 + 0.25))))
            .collect();
        let r = qq_normal(&q).unwrap();
        assert!((r.correlation - 1.0).abs() < 1e-12);
        assert!(r.points.windows(2).all(|w| w[0].0 <= w[1].0));
        assert!(qq_normal(&[Some(1.0), Some(2.0)]).is_err());
        assert!(r.to_csv().starts_with("theoretical,sample\n"));
    }

    #[test]
    fn qq_of_normal_draws() {
        let mut rng = Prng::new(11);
        let v: Vec<Option<f64>> = (0..200).map(|_| Some(rng.normal())).collect();
        assert!(qq_normal(&v).unwrap().correlation > 0.99);
    }

    #[test]
    fn ranks_with_ties() {
        assert_eq!(rank_average(&[10.0, 20.0, 30.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(rank_average(&[5.0, 5.0, 9.0]).unwrap(), vec![1.5, 1.5, 3.0]);
        assert_eq!(rank_average(&[3.0, 1.0, 4.0, 1.0]).unwrap(), vec![3.0, 1.5, 4.0, 1.5]);
        assert!(rank_average::<f64>(&[]).is_err());
    }

    proptest! {
        #[test]
        fn ranks_sum_to_triangular(v in proptest::collection::vec(-5i32..5, 1..40)) {
            let xs: Vec<f64> = v.iter().map(|&x| x as f64).collect();
            let n = xs.len() as f64;
            let s: f64 = rank_average(&xs).unwrap().iter().sum();
            prop_assert!((s - n * (n + 1.0) / 2.0).abs() < 1e-9);
        }

        #[test]
        fn vaf_monotone_in_each_rating(base in proptest::collection::vec(0i64..5, 14), k in 0usize..14) {
            let lo = GscVector::new(&base).unwrap();
            let mut up = base.clone();
            up[k] += 1;
            let hi = GscVector::new(&up).unwrap();
            prop_assert!(compute_vaf::<f64>(&hi) >= compute_vaf::<f64>(&lo));
        }

        #[test]
        fn ln_inverts_exp(v in proptest::collection::vec(-20.0f64..20.0, 1..30)) {
            let col: Vec<Option<f64>> = v.iter().map(|x| Some(x.exp())).collect();
            let back = ln_transform(&col, LogMode::Ln).unwrap();
            for (a, b) in v.iter().zip(back) {
                prop_assert!((a - b.unwrap()).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }
    }
}

//! Shared numerical kernels.

pub mod dist;
pub mod linalg;
pub mod prng;
pub mod quadrature;
pub mod special;

pub use dist::{f_cdf, f_sf, normal_cdf, normal_pdf, normal_quantile, studentized_range_cdf, t_cdf, t_two_sided_p};
pub use linalg::{solve_least_squares, LeastSquaresSolution, LsqError, Matrix};
pub use prng::{derive_seed, Prng};

use crate::Scalar;

pub fn mean<T: Scalar>(xs: &[T]) -> Option<T> {
    if xs.is_empty() {
        return None;
    }
    Some(xs.iter().fold(T::zero(), |a, &b| a + b) / T::from_count(xs.len()))
}

/// Sample (n − 1) standard deviation; `None` below two values.
pub fn sample_sd<T: Scalar>(xs: &[T]) -> Option<T> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs)?;
    let ss = xs.iter().fold(T::zero(), |a, &x| a + (x - m) * (x - m));
    Some((ss / T::from_count(xs.len() - 1)).sqrt())
}

/// Population (n) standard deviation; `None` for empty input.
pub fn population_sd<T: Scalar>(xs: &[T]) -> Option<T> {
    let m = mean(xs)?;
    let ss = xs.iter().fold(T::zero(), |a, &x| a + (x - m) * (x - m));
    Some((ss / T::from_count(xs.len())).sqrt())
}

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson<T: Scalar>(x: &[T], y: &[T]) -> Option<T> {
    assert_eq!(x.len(), y.len());
    let mx = mean(x)?;
    let my = mean(y)?;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy = sxy + da * db;
        sxx = sxx + da * da;
        syy = syy + db * db;
    }
    if sxx == T::zero() || syy == T::zero() {
        return None;
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());
    Some(r.max(-T::one()).min(T::one()))
}

//! Dense matrices and least squares by Householder QR with column pivoting.

use std::fmt;

use crate::Scalar;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    /// Builds a matrix from equally long rows. Panics on ragged input.
    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Matrix {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    /// Builds a matrix from equally long columns. Panics on ragged input.
    pub fn from_columns(columns: &[Vec<T>]) -> Self {
        let rows = columns.first().map_or(0, Vec::len);
        assert!(columns.iter().all(|c| c.len() == rows), "ragged columns");
        let mut m = Self::zeros(rows, columns.len());
        for (j, col) in columns.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(v)
                    .fold(T::zero(), |acc, (&a, &b)| acc + a * b)
            })
            .collect()
    }

    /// `selfᵀ · v`
    pub fn tr_mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.rows);
        let mut out = vec![T::zero(); self.cols];
        for (i, &vi) in v.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o = *o + a * vi;
            }
        }
        out
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LeastSquaresSolution<T> {
    pub coefficients: Vec<T>,
    pub residuals: Vec<T>,
    pub residual_sum_squares: T,
    pub rank: usize,
    /// Diagonal of `(XᵀX)⁻¹`, in original column order. Scaled by the
    /// residual variance this gives the coefficient variances.
    pub unscaled_variances: Vec<T>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LsqError {
    /// Fewer rows than columns.
    Underdetermined { rows: usize, cols: usize },
    DimensionMismatch { rows: usize, target: usize },
    /// Column (original index) that is numerically a combination of the others.
    RankDeficient { column: usize },
}

impl fmt::Display for LsqError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LsqError::Underdetermined { rows, cols } => {
                write!(f, "{rows} rows cannot determine {cols} coefficients")
            }
            LsqError::DimensionMismatch { rows, target } => {
                write!(f, "design has {rows} rows but target has {target}")
            }
            LsqError::RankDeficient { column } => write!(f, "column {column} is linearly dependent"),
        }
    }
}

impl std::error::Error for LsqError {}

/// Relative tolerance below which a pivoted column counts as dependent.
fn rank_tolerance<T: Scalar>() -> T {
    T::epsilon().sqrt() * T::lit(1e-2)
}

/// Minimizes `‖design·β − target‖²`.
///
/// The caller includes the intercept column. Columns are pivoted by their
/// remaining norm relative to their original norm, so the rank decision does
/// not depend on column scaling. When the remaining candidates all fall below
/// tolerance the highest-indexed one is reported as dependent.
pub fn solve_least_squares<T: Scalar>(
    design: &Matrix<T>,
    target: &[T],
) -> Result<LeastSquaresSolution<T>, LsqError> {
    let (n, p) = (design.rows(), design.cols());
    if target.len() != n {
        return Err(LsqError::DimensionMismatch {
            rows: n,
            target: target.len(),
        });
    }
    if n < p {
        return Err(LsqError::Underdetermined { rows: n, cols: p });
    }

    let mut cols: Vec<Vec<T>> = (0..p).map(|j| design.column(j)).collect();
    let orig_norm: Vec<T> = cols.iter().map(|c| norm(c)).collect();
    if let Some(j) = orig_norm.iter().position(|&v| v == T::zero()) {
        return Err(LsqError::RankDeficient { column: j });
    }
    let mut perm: Vec<usize> = (0..p).collect();
    let mut qtb = target.to_vec();
    let tol = rank_tolerance::<T>();

    for k in 0..p {
        let mut best = k;
        let mut best_ratio = -T::one();
        for j in k..p {
            let ratio = norm(&cols[j][k..]) / orig_norm[perm[j]];
            if ratio > best_ratio {
                best_ratio = ratio;
                best = j;
            }
        }
        if !(best_ratio > tol) {
            let column = perm[k..].iter().copied().max().unwrap_or(k);
            return Err(LsqError::RankDeficient { column });
        }
        cols.swap(k, best);
        perm.swap(k, best);

        // Householder reflector zeroing cols[k][k+1..].
        let x = &cols[k][k..];
        let alpha = {
            let nx = norm(x);
            if x[0] > T::zero() {
                -nx
            } else {
                nx
            }
        };
        let mut v: Vec<T> = x.to_vec();
        v[0] = v[0] - alpha;
        let vtv = v.iter().fold(T::zero(), |acc, &a| acc + a * a);
        if vtv > T::zero() {
            let two = T::lit(2.0);
            for col in cols.iter_mut().skip(k + 1) {
                reflect(&v, vtv, two, &mut col[k..]);
            }
            reflect(&v, vtv, two, &mut qtb[k..]);
        }
        cols[k][k] = alpha;
        for c in cols[k].iter_mut().skip(k + 1) {
            *c = T::zero();
        }
    }

    // R z = (Qᵀb)[..p]
    let r = |i: usize, j: usize| cols[j][i];
    let mut z = vec![T::zero(); p];
    for i in (0..p).rev() {
        let mut s = qtb[i];
        for j in i + 1..p {
            s = s - r(i, j) * z[j];
        }
        z[i] = s / r(i, i);
    }
    let mut coefficients = vec![T::zero(); p];
    for (i, &zi) in z.iter().enumerate() {
        coefficients[perm[i]] = zi;
    }

    // R⁻¹ column by column; diag((XᵀX)⁻¹) is the squared row norms.
    let mut rinv = vec![vec![T::zero(); p]; p];
    for c in 0..p {
        for i in (0..=c).rev() {
            let mut s = if i == c { T::one() } else { T::zero() };
            for j in i + 1..=c {
                s = s - r(i, j) * rinv[j][c];
            }
            rinv[i][c] = s / r(i, i);
        }
    }
    let mut unscaled_variances = vec![T::zero(); p];
    for i in 0..p {
        unscaled_variances[perm[i]] = rinv[i].iter().fold(T::zero(), |acc, &a| acc + a * a);
    }

    let fitted = design.mul_vec(&coefficients);
    let residuals: Vec<T> = target.iter().zip(&fitted).map(|(&y, &f)| y - f).collect();
    let residual_sum_squares = residuals.iter().fold(T::zero(), |acc, &e| acc + e * e);

    Ok(LeastSquaresSolution {
        coefficients,
        residuals,
        residual_sum_squares,
        rank: p,
        unscaled_variances,
    })
}

fn reflect<T: Scalar>(v: &[T], vtv: T, two: T, y: &mut [T]) {
    let dot = v.iter().zip(y.iter()).fold(T::zero(), |acc, (&a, &b)| acc + a * b);
    let f = two * dot / vtv;
    for (yi, &vi) in y.iter_mut().zip(v) {
        *yi = *yi - f * vi;
    }
}

fn norm<T: Scalar>(x: &[T]) -> T {
    // Scaled to avoid overflow on large magnitudes.
    let scale = x.iter().fold(T::zero(), |m, &a| m.max(a.abs()));
    if scale == T::zero() {
        return T::zero();
    }
    let ss = x.iter().fold(T::zero(), |acc, &a| {
        let s = a / scale;
        acc + s * s
    });
    scale * ss.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_system() {
        let sol = solve_least_squares(&Matrix::<f64>::identity(3), &[1.0, 2.0, 3.0]).unwrap();
        for (c, e) in sol.coefficients.iter().zip([1.0, 2.0, 3.0]) {
            assert!((c - e).abs() < 1e-14);
        }
        assert!(sol.residual_sum_squares < 1e-28);
        assert_eq!(sol.rank, 3);
    }

    #[test]
    fn exact_line() {
        let x = Matrix::from_rows(&[vec![1.0f64, 0.0], vec![1.0, 1.0], vec![1.0, 2.0]]);
        let sol = solve_least_squares(&x, &[1.0, 3.0, 5.0]).unwrap();
        assert!((sol.coefficients[0] - 1.0).abs() < 1e-12);
        assert!((sol.coefficients[1] - 2.0).abs() < 1e-12);
        assert!(sol.residual_sum_squares < 1e-24);
    }

    #[test]
    fn dependent_column_is_named() {
        let x = Matrix::from_rows(&[
            vec![1.0, 1.0, 2.0],
            vec![1.0, 2.0, 4.0],
            vec![1.0, 3.0, 6.0],
            vec![1.0, 5.0, 10.0],
        ]);
        let err = solve_least_squares(&x, &[1.0, 2.0, 3.0, 4.0]).unwrap_err();
        assert_eq!(err, LsqError::RankDeficient { column: 2 });
    }

    #[test]
    fn zero_column_and_shape_errors() {
        let x = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![1.0, 0.0]]);
        assert_eq!(
            solve_least_squares(&x, &[1.0, 2.0, 3.0]).unwrap_err(),
            LsqError::RankDeficient { column: 1 }
        );
        let wide = Matrix::<f64>::zeros(2, 3);
        assert!(matches!(
            solve_least_squares(&wide, &[0.0, 0.0]),
            Err(LsqError::Underdetermined { .. })
        ));
    }

    #[test]
    fn works_in_single_precision() {
        let x = Matrix::from_rows(&[vec![1.0f32, 0.0], vec![1.0, 1.0], vec![1.0, 2.0], vec![1.0, 3.0]]);
        let sol = solve_least_squares(&x, &[1.0, 3.0, 5.0, 7.0]).unwrap();
        assert!((sol.coefficients[1] - 2.0).abs() < 1e-5);
    }

    #[test]
    fn unscaled_variances_match_inverse_gram() {
        // XᵀX = [[3, 3], [3, 5]] → inverse diag = [5/6, 1/2]
        let x = Matrix::from_rows(&[vec![1.0f64, 0.0], vec![1.0, 1.0], vec![1.0, 2.0]]);
        let sol = solve_least_squares(&x, &[0.0, 1.0, 1.0]).unwrap();
        assert!((sol.unscaled_variances[0] - 5.0 / 6.0).abs() < 1e-12);
        assert!((sol.unscaled_variances[1] - 0.5).abs() < 1e-12);
    }
}

//! Normal, Student t, F and studentized-range distribution functions.

use super::quadrature::Integrator;
use super::special::{erfc, ln_gamma, reg_inc_beta};
use crate::{Error, Result, Scalar};

/// Convergence threshold for the node-doubling quadrature.
pub const QUADRATURE_TOL: f64 = 1e-7;

pub fn normal_pdf<T: Scalar>(x: T) -> T {
    let two = T::lit(2.0);
    (-x * x / two).exp() / (two * T::PI()).sqrt()
}

/// Standard normal CDF `Φ(x)`.
pub fn normal_cdf<T: Scalar>(x: T) -> T {
    if x.is_nan() {
        return x;
    }
    if x == T::infinity() {
        return T::one();
    }
    if x == T::neg_infinity() {
        return T::zero();
    }
    T::lit(0.5) * erfc(-x / T::SQRT_2())
}

/// Inverse of [`normal_cdf`] on `(0, 1)`; safeguarded Newton inside a
/// shrinking bracket.
pub fn normal_quantile<T: Scalar>(p: T) -> T {
    if p.is_nan() || p < T::zero() || p > T::one() {
        return T::nan();
    }
    if p == T::zero() {
        return T::neg_infinity();
    }
    if p == T::one() {
        return T::infinity();
    }
    let mut lo = T::lit(-40.0);
    let mut hi = T::lit(40.0);
    let mut x = T::zero();
    for _ in 0..300 {
        let f = normal_cdf(x) - p;
        if f == T::zero() {
            return x;
        }
        if f < T::zero() {
            lo = x;
        } else {
            hi = x;
        }
        let d = normal_pdf(x);
        let mut next = if d > T::zero() { x - f / d } else { T::nan() };
        if !(next > lo && next < hi) {
            next = (lo + hi) * T::lit(0.5);
        }
        let step = (next - x).abs();
        x = next;
        if step <= T::epsilon() * T::lit(4.0) * x.abs().max(T::one()) {
            break;
        }
    }
    x
}

fn check_df(df: u64) -> Result<()> {
    if df < 1 {
        return Err(Error::InvalidArgument("degrees of freedom must be at least 1".into()));
    }
    Ok(())
}

/// Student t CDF with `df` degrees of freedom.
pub fn t_cdf<T: Scalar>(x: T, df: u64) -> Result<T> {
    check_df(df)?;
    if x.is_nan() {
        return Ok(x);
    }
    if x == T::zero() {
        return Ok(T::lit(0.5));
    }
    let tail = t_tail(x.abs(), df);
    Ok(if x > T::zero() { T::one() - tail } else { tail })
}

/// Two-sided p-value `P(|T| ≥ |t|)`, computed without cancellation.
pub fn t_two_sided_p<T: Scalar>(t: T, df: u64) -> Result<T> {
    check_df(df)?;
    if t.is_nan() {
        return Ok(t);
    }
    Ok((t_tail(t.abs(), df) * T::lit(2.0)).min(T::one()))
}

/// `P(T > x)` for `x ≥ 0`.
fn t_tail<T: Scalar>(x: T, df: u64) -> T {
    if x.is_infinite() {
        return T::zero();
    }
    let v = T::from_u64(df).expect("df fits scalar");
    let half = T::lit(0.5);
    half * reg_inc_beta(v * half, half, v / (v + x * x))
}

fn check_f_args<T: Scalar>(x: T, df1: u64, df2: u64) -> Result<()> {
    if df1 < 1 || df2 < 1 {
        return Err(Error::InvalidArgument("F degrees of freedom must be at least 1".into()));
    }
    if x < T::zero() {
        return Err(Error::InvalidArgument("F statistic must be nonnegative".into()));
    }
    Ok(())
}

/// F-distribution CDF.
pub fn f_cdf<T: Scalar>(x: T, df1: u64, df2: u64) -> Result<T> {
    check_f_args(x, df1, df2)?;
    if x == T::zero() {
        return Ok(T::zero());
    }
    if x.is_infinite() {
        return Ok(T::one());
    }
    let (a, b) = (T::from_u64(df1).unwrap(), T::from_u64(df2).unwrap());
    let half = T::lit(0.5);
    Ok(reg_inc_beta(a * half, b * half, a * x / (a * x + b)))
}

/// Upper tail `1 − F(x)`, computed directly.
pub fn f_sf<T: Scalar>(x: T, df1: u64, df2: u64) -> Result<T> {
    check_f_args(x, df1, df2)?;
    if x == T::zero() {
        return Ok(T::one());
    }
    if x.is_infinite() {
        return Ok(T::zero());
    }
    let (a, b) = (T::from_u64(df1).unwrap(), T::from_u64(df2).unwrap());
    let half = T::lit(0.5);
    Ok(reg_inc_beta(b * half, a * half, b / (a * x + b)))
}

/// CDF of the studentized range of `k` normal means with `df` error degrees
/// of freedom:
///
/// `P(Q ≤ q) = ∫₀^∞ f_df(s) · k ∫ φ(z) [Φ(z) − Φ(z − q s)]^(k−1) dz ds`
///
/// where `f_df` is the density of `χ_df / √df`. Both integrals are composite
/// Gauss–Legendre rules whose node counts double until successive estimates
/// agree to [`QUADRATURE_TOL`].
pub fn studentized_range_cdf<T: Scalar>(q: T, k: usize, df: u64) -> Result<T> {
    if k < 2 {
        return Err(Error::InvalidArgument("studentized range needs k >= 2".into()));
    }
    check_df(df)?;
    if q.is_nan() || q < T::zero() {
        return Err(Error::InvalidArgument("studentized range statistic must be nonnegative".into()));
    }
    if q == T::zero() {
        return Ok(T::zero());
    }
    if q.is_infinite() {
        return Ok(T::one());
    }

    let tol = T::lit(QUADRATURE_TOL);
    let kf = T::from_count(k);
    let z_lim = T::lit(8.5);
    let mut inner = Integrator::new();
    let mut range_prob = |w: T| -> T {
        let integrand = |z: T| {
            let band = normal_cdf(z) - normal_cdf(z - w);
            normal_pdf(z) * band.max(T::zero()).powi(k as i32 - 1)
        };
        (kf * inner.integrate(integrand, -z_lim, z_lim, 16, tol)).min(T::one())
    };

    let v = T::from_u64(df).expect("df fits scalar");
    let half = T::lit(0.5);
    let two = T::lit(2.0);
    // log normalizing constant of the χ/√ν density
    let ln_c = half * v * v.ln() - ln_gamma(half * v) - (half * v - T::one()) * two.ln();
    let sigma = (T::one() / (two * v)).sqrt();
    let s_lo = (T::one() - T::lit(12.0) * sigma).max(T::zero());
    let s_hi = T::one() + T::lit(12.0) * sigma.max(T::lit(0.75));

    let mut outer = Integrator::new();
    let total = outer.integrate(
        |s: T| {
            if s <= T::zero() {
                return T::zero();
            }
            let dens = (ln_c + (v - T::one()) * s.ln() - half * v * s * s).exp();
            if dens == T::zero() {
                T::zero()
            } else {
                dens * range_prob(q * s)
            }
        },
        s_lo,
        s_hi,
        8,
        tol,
    );
    Ok(total.max(T::zero()).min(T::one()))
}

//! Independent oracles and fixtures shared by the integration suites.
#![allow(dead_code)]

use defectcal::dataset::{Column, Dataset, Role, VariableSpec};
use defectcal::evaluation::{generate_synthetic, SynthConfig};
use defectcal::numerics::Prng;
use defectcal::screening::merge_dataset_categories;
use defectcal::transform::apply_transforms;
use num::{BigInt, BigRational, One, Signed, ToPrimitive, Zero};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};

pub fn rat(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

/// Exact Gauss–Jordan inverse of a square rational matrix.
pub fn rational_inverse(a: &[Vec<BigRational>]) -> Vec<Vec<BigRational>> {
    let n = a.len();
    let mut m: Vec<Vec<BigRational>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { BigRational::one() } else { BigRational::zero() }));
            r
        })
        .collect();
    for c in 0..n {
        let p = (c..n).find(|&r| !m[r][c].is_zero()).expect("nonsingular");
        m.swap(c, p);
        let inv = BigRational::one() / m[c][c].clone();
        for v in m[c].iter_mut() {
            *v = v.clone() * inv.clone();
        }
        for r in 0..n {
            if r != c && !m[r][c].is_zero() {
                let f = m[r][c].clone();
                for k in 0..2 * n {
                    let d = f.clone() * m[c][k].clone();
                    m[r][k] = m[r][k].clone() - d;
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

pub struct OlsOracle {
    /// Intercept first.
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub p_values: Vec<f64>,
    pub r_squared: f64,
}

fn sqrt_big(r: &BigRational) -> f64 {
    r.to_f64().unwrap().sqrt()
}

/// OLS with intercept via exact normal equations; p-values from statrs.
pub fn ols_oracle(xs: &[Vec<f64>], y: &[f64]) -> OlsOracle {
    let n = y.len();
    let p = xs.len() + 1;
    let design: Vec<Vec<BigRational>> = (0..n)
        .map(|i| std::iter::once(BigRational::one()).chain(xs.iter().map(|c| rat(c[i]))).collect())
        .collect();
    let yr: Vec<BigRational> = y.iter().map(|&v| rat(v)).collect();
    let mut xtx = vec![vec![BigRational::zero(); p]; p];
    let mut xty = vec![BigRational::zero(); p];
    for i in 0..n {
        for a in 0..p {
            xty[a] += design[i][a].clone() * yr[i].clone();
            for b in 0..p {
                xtx[a][b] += design[i][a].clone() * design[i][b].clone();
            }
        }
    }
    let inv = rational_inverse(&xtx);
    let beta: Vec<BigRational> = (0..p)
        .map(|a| (0..p).fold(BigRational::zero(), |s, b| s + inv[a][b].clone() * xty[b].clone()))
        .collect();
    let mut rss = BigRational::zero();
    let ybar = yr.iter().fold(BigRational::zero(), |s, v| s + v.clone()) / BigRational::from_integer(BigInt::from(n));
    let mut tss = BigRational::zero();
    for i in 0..n {
        let fit = (0..p).fold(BigRational::zero(), |s, a| s + design[i][a].clone() * beta[a].clone());
        let r = yr[i].clone() - fit;
        rss += r.clone() * r;
        let d = yr[i].clone() - ybar.clone();
        tss += d.clone() * d;
    }
    let df = n - p;
    let sigma2 = rss.clone() / BigRational::from_integer(BigInt::from(df));
    let t_dist = StudentsT::new(0.0, 1.0, df as f64).unwrap();
    let mut std_errors = Vec::new();
    let mut p_values = Vec::new();
    for a in 0..p {
        let se = sqrt_big(&(sigma2.clone() * inv[a][a].clone()));
        let t = beta[a].to_f64().unwrap() / se;
        std_errors.push(se);
        p_values.push(2.0 * t_dist.cdf(-t.abs()));
    }
    let r2 = BigRational::one() - rss / tss;
    OlsOracle {
        coefficients: beta.iter().map(|b| b.to_f64().unwrap()).collect(),
        std_errors,
        p_values,
        r_squared: r2.abs().to_f64().unwrap(),
    }
}

/// Average ranks by counting: rank = #less + (#equal + 1) / 2.
pub fn brute_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&a| {
            let less = v.iter().filter(|&&b| b < a).count() as f64;
            let eq = v.iter().filter(|&&b| b == a).count() as f64;
            less + (eq + 1.0) / 2.0
        })
        .collect()
}

pub fn brute_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Spearman rho and its t-approximation p-value.
pub fn spearman_oracle(x: &[f64], y: &[f64]) -> (f64, f64) {
    let rho = brute_pearson(&brute_ranks(x), &brute_ranks(y));
    let df = x.len() as f64 - 2.0;
    let t = rho * (df / (1.0 - rho * rho)).sqrt();
    let p = 2.0 * StudentsT::new(0.0, 1.0, df).unwrap().cdf(-t.abs());
    (rho, p)
}

/// One-way ANOVA by explicit sums of squares: (F, p, df_between, df_within).
pub fn anova_oracle(groups: &[Vec<f64>]) -> (f64, f64, usize, usize) {
    let all: Vec<f64> = groups.iter().flatten().copied().collect();
    let grand = all.iter().sum::<f64>() / all.len() as f64;
    let mut ssb = 0.0;
    let mut ssw = 0.0;
    for g in groups {
        let m = g.iter().sum::<f64>() / g.len() as f64;
        ssb += g.len() as f64 * (m - grand) * (m - grand);
        ssw += g.iter().map(|v| (v - m) * (v - m)).sum::<f64>();
    }
    let (d1, d2) = (groups.len() - 1, all.len() - groups.len());
    let f = (ssb / d1 as f64) / (ssw / d2 as f64);
    let p = 1.0 - FisherSnedecor::new(d1 as f64, d2 as f64).unwrap().cdf(f);
    (f, p, d1, d2)
}

/// Population sd by the definition.
pub fn pop_sd(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

pub fn sdr_oracle(parent: &[f64], left: &[f64], right: &[f64]) -> f64 {
    let n = parent.len() as f64;
    pop_sd(parent) - left.len() as f64 / n * pop_sd(left) - right.len() as f64 / n * pop_sd(right)
}

pub enum BruteFeature {
    Numeric(Vec<f64>),
    Categorical(Vec<usize>, usize),
}

/// Maximum SDR over every threshold of every numeric feature and every
/// nonempty proper subset of every categorical feature, subject to both
/// sides holding at least `min_leaf` rows.
pub fn brute_best_sdr(y: &[f64], feats: &[BruteFeature], min_leaf: usize) -> Option<f64> {
    let mut best: Option<f64> = None;
    let mut consider = |mask: &dyn Fn(usize) -> bool| {
        let (mut l, mut r) = (Vec::new(), Vec::new());
        for (i, &v) in y.iter().enumerate() {
            if mask(i) {
                l.push(v)
            } else {
                r.push(v)
            }
        }
        if l.len() >= min_leaf && r.len() >= min_leaf {
            let s = sdr_oracle(y, &l, &r);
            if best.is_none_or(|b| s > b) {
                best = Some(s);
            }
        }
    };
    for f in feats {
        match f {
            BruteFeature::Numeric(x) => {
                let mut vals = x.clone();
                vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
                vals.dedup();
                for t in vals.iter().skip(1) {
                    consider(&|i| x[i] < *t);
                }
            }
            BruteFeature::Categorical(c, k) => {
                for bits in 1..(1u32 << k) - 1 {
                    consider(&|i| bits & (1 << c[i]) != 0);
                }
            }
        }
    }
    best
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().partial_cmp(&a[j][c].abs()).unwrap()).unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Synthetic data with development types merged into a binary variable and
/// declared log transforms applied.
pub fn prepared_synthetic(cfg: &SynthConfig, seed: u64) -> Dataset {
    let raw = generate_synthetic(cfg, seed).unwrap().dataset;
    let merged = merge_dataset_categories(
        &raw,
        "dev_type",
        &[("New Development".to_string(), "Re-development".to_string())],
    )
    .unwrap();
    apply_transforms(&merged).unwrap()
}

/// y = 1 for x < 0 and 10 + x for x ≥ 0, 50 rows each, plus N(0, 0.25²)
/// noise and an unrelated predictor z.
pub fn piecewise(seed: u64) -> Dataset {
    let mut rng = Prng::new(seed);
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut z = Vec::new();
    for i in 0..100 {
        let xi = if i < 50 { -0.1 - 4.9 * rng.uniform() } else { 5.0 * rng.uniform() };
        let base = if xi < 0.0 { 1.0 } else { 10.0 + xi };
        x.push(Some(xi));
        y.push(Some(base + 0.25 * rng.normal()));
        z.push(Some(rng.normal()));
    }
    Dataset::new(
        vec![
            VariableSpec::numeric("y", Role::Response),
            VariableSpec::numeric("x", Role::Predictor),
            VariableSpec::numeric("z", Role::Predictor),
        ],
        vec![Column::Numeric(y), Column::Numeric(x), Column::Numeric(z)],
    )
    .unwrap()
}

/// Four ordered grades with monotone, unevenly spaced true effects.
pub const GRADE_EFFECTS: [f64; 4] = [0.0, 0.4, 1.6, 2.0];

pub fn monotone_ordinal(seed: u64) -> Dataset {
    let mut rng = Prng::new(seed);
    let n = 200;
    let mut g = Vec::new();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for _ in 0..n {
        let gi = rng.below(4) as usize;
        let xi = rng.normal();
        g.push(Some(gi));
        x.push(Some(xi));
        y.push(Some(1.0 + 0.5 * xi + GRADE_EFFECTS[gi] + 0.3 * rng.normal()));
    }
    Dataset::new(
        vec![
            VariableSpec::numeric("y", Role::Response),
            VariableSpec::numeric("x", Role::Predictor),
            VariableSpec::categorical("grade", Role::Predictor, &["g1", "g2", "g3", "g4"]),
        ],
        vec![Column::Numeric(y), Column::Numeric(x), Column::Categorical(g)],
    )
    .unwrap()
}

/// Numeric x plus a binary category and a three-level nominal category.
pub fn mixed_categorical(seed: u64, n: usize) -> Dataset {
    let mut rng = Prng::new(seed);
    let mut x = Vec::new();
    let mut b = Vec::new();
    let mut c = Vec::new();
    let mut y = Vec::new();
    let effect = [0.0, 1.5, -0.7];
    for _ in 0..n {
        let xi = rng.normal();
        let bi = rng.below(2) as usize;
        let ci = rng.below(3) as usize;
        x.push(Some(xi));
        b.push(Some(bi));
        c.push(Some(ci));
        y.push(Some(2.0 + xi + 0.8 * bi as f64 + effect[ci] + 0.5 * rng.normal()));
    }
    Dataset::new(
        vec![
            VariableSpec::numeric("y", Role::Response),
            VariableSpec::numeric("x", Role::Predictor),
            VariableSpec::categorical("b", Role::Predictor, &["no", "yes"]),
            VariableSpec::categorical("c", Role::Predictor, &["p", "q", "r"]),
        ],
        vec![Column::Numeric(y), Column::Numeric(x), Column::Categorical(b), Column::Categorical(c)],
    )
    .unwrap()
}

pub fn numeric_col(ds: &Dataset, name: &str) -> Vec<f64> {
    ds.numeric(name).unwrap().iter().map(|v| v.unwrap()).collect()
}

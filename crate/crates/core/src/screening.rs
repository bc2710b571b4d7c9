//! Metric screening: Spearman correlation for quantitative predictors,
//! one-way ANOVA and Tukey HSD for qualitative ones, and category merging.

use serde::{Deserialize, Serialize};

use crate::dataset::{Column, Dataset, Kind, VariableSpec};
use crate::numerics::{f_sf, pearson, studentized_range_cdf, t_two_sided_p};
use crate::transform::rank_average;
use crate::{Error, Result, Scalar};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult<T> {
    pub variable: String,
    pub rho: T,
    pub n: usize,
    pub p_two_sided: T,
}

/// Labels plus per-row category codes.
#[derive(Clone, Copy, Debug)]
pub struct Grouping<'a> {
    pub labels: &'a [String],
    pub codes: &'a [Option<usize>],
}

/// Spearman's rank correlation over rows where both values are present.
///
/// `rho` is the Pearson correlation of tie-averaged ranks; the p-value uses
/// `t = rho·√((n−2)/(1−rho²))` against Student t with `n − 2` df.
pub fn spearman<T: Scalar>(x: &[Option<T>], y: &[Option<T>]) -> Result<CorrelationResult<T>> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument("spearman: columns differ in length".into()));
    }
    let (xs, ys): (Vec<T>, Vec<T>) = x
        .iter()
        .zip(y)
        .filter_map(|(a, b)| Some(((*a)?, (*b)?)))
        .unzip();
    let n = xs.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!(
            "spearman needs at least 3 paired values, got {n}"
        )));
    }
    let rx = rank_average(&xs)?;
    let ry = rank_average(&ys)?;
    let rho = pearson(&rx, &ry)
        .ok_or_else(|| Error::InsufficientData("spearman: a ranked column has zero variance".into()))?;
    let p_two_sided = if rho.abs() >= T::one() {
        T::zero()
    } else {
        let df = n - 2;
        let t = rho * (T::from_count(df) / (T::one() - rho * rho)).sqrt();
        t_two_sided_p(t, df as u64)?
    };
    Ok(CorrelationResult {
        variable: String::new(),
        rho,
        n,
        p_two_sided,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult<T> {
    pub variable: String,
    /// `+∞` when the within-group sum of squares is zero; serialized as null.
    pub f_value: T,
    pub df_between: usize,
    pub df_within: usize,
    pub p: T,
    pub ss_between: T,
    pub ss_within: T,
    pub groups: Vec<GroupStat<T>>,
    /// Groups holding a single observation; allowed but worth a look.
    pub singleton_groups: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupStat<T> {
    pub label: String,
    pub n: usize,
    pub mean: T,
}

struct GroupSums<T> {
    stats: Vec<GroupStat<T>>,
    ss_between: T,
    ss_within: T,
    total_n: usize,
}

fn group_sums<T: Scalar>(response: &[Option<T>], group: Grouping<'_>) -> Result<GroupSums<T>> {
    if response.len() != group.codes.len() {
        return Err(Error::InvalidArgument("response and group differ in length".into()));
    }
    let k = group.labels.len();
    let mut members: Vec<Vec<T>> = vec![Vec::new(); k];
    for (y, g) in response.iter().zip(group.codes) {
        if let (Some(y), Some(g)) = (y, g) {
            members[*g].push(*y);
        }
    }
    let stats: Vec<(String, Vec<T>)> = members
        .into_iter()
        .enumerate()
        .filter(|(_, m)| !m.is_empty())
        .map(|(i, m)| (group.labels[i].clone(), m))
        .collect();
    let total_n: usize = stats.iter().map(|(_, m)| m.len()).sum();
    if stats.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "ANOVA needs at least 2 non-empty groups, found {}",
            stats.len()
        )));
    }
    if total_n <= stats.len() {
        return Err(Error::InsufficientData(format!(
            "ANOVA needs more observations ({total_n}) than groups ({})",
            stats.len()
        )));
    }
    let grand = stats
        .iter()
        .flat_map(|(_, m)| m.iter())
        .fold(T::zero(), |a, &b| a + b)
        / T::from_count(total_n);
    let mut ss_between = T::zero();
    let mut ss_within = T::zero();
    let mut out = Vec::with_capacity(stats.len());
    for (label, m) in stats {
        let n = m.len();
        let mean = m.iter().fold(T::zero(), |a, &b| a + b) / T::from_count(n);
        ss_between = ss_between + T::from_count(n) * (mean - grand) * (mean - grand);
        ss_within = m.iter().fold(ss_within, |a, &y| a + (y - mean) * (y - mean));
        out.push(GroupStat { label, n, mean });
    }
    Ok(GroupSums {
        stats: out,
        ss_between,
        ss_within,
        total_n,
    })
}

/// One-way ANOVA over the non-empty groups.
pub fn anova_oneway<T: Scalar>(response: &[Option<T>], group: Grouping<'_>) -> Result<AnovaResult<T>> {
    let s = group_sums(response, group)?;
    let k = s.stats.len();
    let df_between = k - 1;
    let df_within = s.total_n - k;
    let (f_value, p) = if s.ss_within == T::zero() {
        if s.ss_between == T::zero() {
            (T::zero(), T::one())
        } else {
            (T::infinity(), T::zero())
        }
    } else {
        let f = (s.ss_between / T::from_count(df_between)) / (s.ss_within / T::from_count(df_within));
        (f, f_sf(f, df_between as u64, df_within as u64)?)
    };
    let singleton_groups = s
        .stats
        .iter()
        .filter(|g| g.n == 1)
        .map(|g| g.label.clone())
        .collect();
    Ok(AnovaResult {
        variable: String::new(),
        f_value,
        df_between,
        df_within,
        p,
        ss_between: s.ss_between,
        ss_within: s.ss_within,
        groups: s.stats,
        singleton_groups,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TukeyPair<T> {
    pub group_i: String,
    pub group_j: String,
    /// `mean_i − mean_j`, in response units.
    pub mean_difference: T,
    pub std_error: T,
    pub q: T,
    pub p_adjusted: T,
    pub significant: bool,
}

/// Tukey–Kramer pairwise comparisons over the non-empty groups.
pub fn tukey_hsd<T: Scalar>(response: &[Option<T>], group: Grouping<'_>, alpha: T) -> Result<Vec<TukeyPair<T>>> {
    let s = group_sums(response, group)?;
    let k = s.stats.len();
    let df_within = s.total_n - k;
    let msw = s.ss_within / T::from_count(df_within);
    let half = T::lit(0.5);
    let mut pairs = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in i + 1..k {
            let (gi, gj) = (&s.stats[i], &s.stats[j]);
            let diff = gi.mean - gj.mean;
            let se = (msw * half * (T::one() / T::from_count(gi.n) + T::one() / T::from_count(gj.n))).sqrt();
            let (q, p) = if se == T::zero() {
                if diff == T::zero() {
                    (T::zero(), T::one())
                } else {
                    (T::infinity(), T::zero())
                }
            } else {
                let q = diff.abs() / se;
                let cdf = studentized_range_cdf(q, k, df_within as u64)?;
                (q, (T::one() - cdf).max(T::zero()).min(T::one()))
            };
            pairs.push(TukeyPair {
                group_i: gi.label.clone(),
                group_j: gj.label.clone(),
                mean_difference: diff,
                std_error: se,
                q,
                p_adjusted: p,
                significant: p < alpha,
            });
        }
    }
    Ok(pairs)
}

/// Merges each listed label pair into one category named `a+b`, placed at
/// the position of the earlier member. Returns the new spec and the old →
/// new index map. A variable left with two categories becomes binary.
pub fn merge_categories(var: &VariableSpec, pairs: &[(String, String)]) -> Result<(VariableSpec, Vec<usize>)> {
    if !var.is_categorical() {
        return Err(Error::InvalidArgument(format!("'{}' is not categorical", var.name)));
    }
    let n = var.categories.len();
    let mut target: Vec<usize> = (0..n).collect();
    let mut used = vec![false; n];
    for (a, b) in pairs {
        let ia = var
            .category_index(a)
            .ok_or_else(|| Error::InvalidArgument(format!("'{}' has no category '{a}'", var.name)))?;
        let ib = var
            .category_index(b)
            .ok_or_else(|| Error::InvalidArgument(format!("'{}' has no category '{b}'", var.name)))?;
        if ia == ib || used[ia] || used[ib] {
            return Err(Error::InvalidArgument(format!(
                "overlapping merge clusters on '{}' ({a}, {b})",
                var.name
            )));
        }
        used[ia] = true;
        used[ib] = true;
        let (lo, hi) = (ia.min(ib), ia.max(ib));
        target[hi] = lo;
    }
    let mut new_labels: Vec<String> = Vec::new();
    let mut remap = vec![0usize; n];
    let mut slot_of = vec![usize::MAX; n];
    for i in 0..n {
        if target[i] == i {
            slot_of[i] = new_labels.len();
            new_labels.push(var.categories[i].clone());
        }
    }
    for i in 0..n {
        let root = target[i];
        remap[i] = slot_of[root];
        if root != i {
            let label = &mut new_labels[slot_of[root]];
            label.push('+');
            label.push_str(&var.categories[i]);
        }
    }
    if new_labels.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "merging would leave '{}' with a single category",
            var.name
        )));
    }
    let kind = if new_labels.len() == 2 { Kind::Binary } else { Kind::Categorical };
    Ok((
        VariableSpec {
            categories: new_labels,
            kind,
            ..var.clone()
        },
        remap,
    ))
}

/// Applies [`merge_categories`] to a dataset column.
pub fn merge_dataset_categories(ds: &Dataset, variable: &str, pairs: &[(String, String)]) -> Result<Dataset> {
    let (spec, codes) = ds.categorical(variable)?;
    let (merged, remap) = merge_categories(spec, pairs)?;
    let codes = codes.iter().map(|c| c.map(|i| remap[i])).collect();
    ds.with_column(merged, Column::Categorical(codes))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScreeningConfig {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Quantitative predictors screened with Spearman.
    #[serde(default)]
    pub numeric: Vec<String>,
    /// Qualitative predictors screened with ANOVA (+ Tukey for 3+ groups).
    #[serde(default)]
    pub categorical: Vec<String>,
    /// Numeric predictors also screened as nominal, one group per distinct value.
    #[serde(default)]
    pub nominal_numeric: Vec<String>,
}

fn default_alpha() -> f64 {
    0.05
}

impl Default for ScreeningConfig {
    fn default() -> Self {
        ScreeningConfig {
            alpha: default_alpha(),
            numeric: Vec::new(),
            categorical: Vec::new(),
            nominal_numeric: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TukeyTable {
    pub variable: String,
    pub pairs: Vec<TukeyPair<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScreeningReport {
    pub alpha: f64,
    pub correlations: Vec<CorrelationResult<f64>>,
    pub anova: Vec<AnovaResult<f64>>,
    pub multiple_comparisons: Vec<TukeyTable>,
    /// Predictors passing the significance cutoff, in schema order.
    pub selected: Vec<String>,
    pub notes: Vec<String>,
}

/// Distinct values of a numeric column as group labels and codes.
pub fn distinct_value_groups(values: &[Option<f64>]) -> (Vec<String>, Vec<Option<usize>>) {
    let mut distinct: Vec<f64> = values.iter().flatten().copied().collect();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    distinct.dedup();
    let labels = distinct.iter().map(|v| v.to_string()).collect();
    let codes = values
        .iter()
        .map(|v| v.and_then(|x| distinct.iter().position(|&d| d == x)))
        .collect();
    (labels, codes)
}

/// Runs every configured screening test against the response.
pub fn screen(ds: &Dataset, response: &str, cfg: &ScreeningConfig) -> Result<ScreeningReport> {
    let y = ds.numeric(response)?;
    let mut correlations = Vec::new();
    let mut anova = Vec::new();
    let mut multiple_comparisons = Vec::new();
    let mut notes = Vec::new();
    let mut passed: Vec<&str> = Vec::new();

    for name in &cfg.numeric {
        let x = ds.numeric(name)?;
        let mut r = spearman(x, y)?;
        r.variable = name.clone();
        if r.p_two_sided < cfg.alpha {
            passed.push(name);
        }
        correlations.push(r);
    }

    let mut run_groups = |name: &str, labels: &[String], codes: &[Option<usize>], numeric_origin: bool| -> Result<()> {
        let g = Grouping { labels, codes };
        let mut a = anova_oneway(y, g)?;
        a.variable = name.to_string();
        if !a.singleton_groups.is_empty() {
            notes.push(format!(
                "{name}: groups with a single observation: {}",
                a.singleton_groups.join(", ")
            ));
        }
        if numeric_origin {
            notes.push(format!(
                "{name}: treated as nominal with one group per distinct value ({} groups)",
                a.groups.len()
            ));
        }
        if a.p < cfg.alpha {
            passed.push(ds.spec(name)?.name.as_str());
        }
        if a.groups.len() >= 3 {
            multiple_comparisons.push(TukeyTable {
                variable: name.to_string(),
                pairs: tukey_hsd(y, g, cfg.alpha)?,
            });
        }
        anova.push(a);
        Ok(())
    };

    for name in &cfg.categorical {
        let (spec, codes) = ds.categorical(name)?;
        run_groups(name, &spec.categories, codes, false)?;
    }
    for name in &cfg.nominal_numeric {
        let (labels, codes) = distinct_value_groups(ds.numeric(name)?);
        run_groups(name, &labels, &codes, true)?;
    }

    let selected = ds
        .schema()
        .iter()
        .filter(|v| passed.contains(&v.name.as_str()))
        .map(|v| v.name.clone())
        .collect();
    Ok(ScreeningReport {
        alpha: cfg.alpha,
        correlations,
        anova,
        multiple_comparisons,
        selected,
        notes,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairCorrelation {
    pub a: String,
    pub b: String,
    pub rho: f64,
    pub n: usize,
    pub p_two_sided: f64,
}

/// Spearman correlations between every pair of numeric predictors.
pub fn pairwise_spearman(ds: &Dataset, vars: &[String]) -> Result<Vec<PairCorrelation>> {
    let mut out = Vec::new();
    for (i, a) in vars.iter().enumerate() {
        for b in &vars[i + 1..] {
            let r = spearman(ds.numeric(a)?, ds.numeric(b)?)?;
            out.push(PairCorrelation {
                a: a.clone(),
                b: b.clone(),
                rho: r.rho,
                n: r.n,
                p_two_sided: r.p_two_sided,
            });
        }
    }
    Ok(out)
}

/// Numeric predictors among `vars` (categoricals are skipped).
pub fn numeric_only(ds: &Dataset, vars: &[String]) -> Vec<String> {
    vars.iter()
        .filter(|v| matches!(ds.column(v), Ok(Column::Numeric(_))))
        .cloned()
        .collect()
}

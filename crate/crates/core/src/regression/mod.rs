//! Linear models: OLS with significance reporting, stepwise selection,
//! CATREG optimal scaling and prediction on the modeling (log) scale.

pub mod catreg;
pub mod stepwise;

use std::collections::BTreeMap;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::dataset::{Column, Dataset, Kind, Row, Transform, Value};
use crate::numerics::{sample_sd, solve_least_squares, t_two_sided_p, LsqError, Matrix};
use crate::{Error, Result};

pub use catreg::{catreg_fit, CatregFit, Scaling};
pub use stepwise::{stepwise_fit, Step, StepAction, StepwiseConfig, StepwiseTrace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingLevel {
    Nominal,
    Ordinal,
}

/// Numeric values assigned to the categories of a qualitative variable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quantification {
    pub variable: String,
    /// Category label → value, in declared category order.
    pub mapping: IndexMap<String, f64>,
    pub scaling_level: ScalingLevel,
}

impl Quantification {
    /// Dummy coding: the i-th declared category gets value `i`.
    pub fn index_coding(variable: &str, categories: &[String]) -> Self {
        Quantification {
            variable: variable.to_string(),
            mapping: categories
                .iter()
                .enumerate()
                .map(|(i, c)| (c.clone(), i as f64))
                .collect(),
            scaling_level: ScalingLevel::Nominal,
        }
    }

    pub fn value(&self, label: &str) -> Result<f64> {
        self.mapping.get(label).copied().ok_or_else(|| {
            Error::InvalidArgument(format!(
                "no quantification for category '{label}' of '{}'",
                self.variable
            ))
        })
    }
}

/// Quantifications keyed by variable name.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QuantificationSet(pub BTreeMap<String, Quantification>);

impl QuantificationSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, variable: &str) -> Option<&Quantification> {
        self.0.get(variable)
    }

    pub fn insert(&mut self, q: Quantification) {
        self.0.insert(q.variable.clone(), q);
    }

    pub fn iter(&self) -> impl Iterator<Item = &Quantification> {
        self.0.values()
    }
}

impl FromIterator<Quantification> for QuantificationSet {
    fn from_iter<I: IntoIterator<Item = Quantification>>(iter: I) -> Self {
        let mut s = QuantificationSet::new();
        for q in iter {
            s.insert(q);
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub variable: String,
    /// Unstandardized coefficient B.
    pub coefficient: f64,
    /// Standardized Beta = B · sd(x) / sd(y), sample sds.
    pub std_coefficient: f64,
    pub std_error: f64,
    pub t_value: f64,
    pub p_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub response: String,
    /// Transform of the response; predictions are on the transformed scale.
    pub response_transform: Transform,
    pub intercept: f64,
    pub intercept_std_error: f64,
    pub intercept_p_value: f64,
    pub terms: Vec<Term>,
    pub r_squared: f64,
    pub adjusted_r_squared: f64,
    pub n: usize,
    pub residual_df: usize,
    pub residual_sd: f64,
    /// Category codings used for the qualitative terms at fit time.
    #[serde(default)]
    pub codings: QuantificationSet,
}

impl LinearModel {
    /// A model with fixed coefficients and no fit statistics.
    pub fn from_coefficients(
        response: &str,
        response_transform: Transform,
        intercept: f64,
        terms: &[(&str, f64)],
        codings: QuantificationSet,
    ) -> Self {
        LinearModel {
            response: response.to_string(),
            response_transform,
            intercept,
            intercept_std_error: f64::NAN,
            intercept_p_value: f64::NAN,
            terms: terms
                .iter()
                .map(|&(v, b)| Term {
                    variable: v.to_string(),
                    coefficient: b,
                    std_coefficient: f64::NAN,
                    std_error: f64::NAN,
                    t_value: f64::NAN,
                    p_value: f64::NAN,
                })
                .collect(),
            r_squared: f64::NAN,
            adjusted_r_squared: f64::NAN,
            n: 0,
            residual_df: 0,
            residual_sd: f64::NAN,
            codings,
        }
    }

    pub fn variables(&self) -> Vec<String> {
        self.terms.iter().map(|t| t.variable.clone()).collect()
    }

    pub fn term(&self, variable: &str) -> Option<&Term> {
        self.terms.iter().find(|t| t.variable == variable)
    }

    /// `defects = -5.939 + 0.704*fp + …`, three decimals.
    pub fn formula(&self) -> String {
        let mut s = format!("{} = {:.3}", self.response, self.intercept);
        for t in &self.terms {
            let sign = if t.coefficient < 0.0 { '-' } else { '+' };
            let c = t.coefficient.abs();
            if c != 0.0 && c < 1e-3 {
                s.push_str(&format!(" {sign} {c:.3e}*{}", t.variable));
            } else {
                s.push_str(&format!(" {sign} {c:.3}*{}", t.variable));
            }
        }
        s
    }
}

/// Numeric value of a predictor cell: numbers pass through, categories go
/// through the quantification for the variable.
pub(crate) fn coded_value(
    variable: &str,
    value: &Value,
    overrides: Option<&QuantificationSet>,
    codings: &QuantificationSet,
) -> Result<f64> {
    match value {
        Value::Number(x) => Ok(*x),
        Value::Category(label) => overrides
            .and_then(|o| o.get(variable))
            .or_else(|| codings.get(variable))
            .ok_or_else(|| Error::InvalidArgument(format!("no quantification for categorical variable '{variable}'")))?
            .value(label),
        Value::Missing => Err(Error::InvalidArgument(format!("row is missing variable '{variable}'"))),
    }
}

fn row_value<'r>(row: &'r Row, variable: &str) -> Result<&'r Value> {
    row.get(variable)
        .ok_or_else(|| Error::InvalidArgument(format!("row does not supply variable '{variable}'")))
}

/// Linear predictor, optionally mapped back through the response transform
/// (`exp` for a log response).
pub fn model_predict(
    model: &LinearModel,
    quantifications: Option<&QuantificationSet>,
    row: &Row,
    back_transform: bool,
) -> Result<f64> {
    let mut eta = model.intercept;
    for t in &model.terms {
        let v = coded_value(&t.variable, row_value(row, &t.variable)?, quantifications, &model.codings)?;
        eta += t.coefficient * v;
    }
    Ok(if back_transform {
        model.response_transform.inverse(eta)
    } else {
        eta
    })
}

/// Resolves the coding for each categorical predictor: supplied
/// quantification first, then the implicit 0/1 coding of a binary variable.
pub(crate) fn resolve_codings(
    ds: &Dataset,
    predictors: &[String],
    supplied: Option<&QuantificationSet>,
) -> Result<QuantificationSet> {
    let mut out = QuantificationSet::new();
    for p in predictors {
        let spec = ds.spec(p)?;
        if !spec.is_categorical() {
            continue;
        }
        if let Some(q) = supplied.and_then(|s| s.get(p)) {
            for c in &spec.categories {
                q.value(c)?;
            }
            out.insert(q.clone());
        } else if spec.kind == Kind::Binary {
            out.insert(Quantification::index_coding(p, &spec.categories));
        } else {
            return Err(Error::Config(format!(
                "categorical predictor '{p}' has {} categories and no quantification; merge it to binary or quantify it with CATREG",
                spec.categories.len()
            )));
        }
    }
    Ok(out)
}

/// Numeric predictor columns (codings applied) over the given rows.
pub(crate) fn coded_columns(
    ds: &Dataset,
    predictors: &[String],
    codings: &QuantificationSet,
    rows: &[usize],
) -> Result<Vec<Vec<f64>>> {
    predictors
        .iter()
        .map(|p| {
            let i = ds.index_of(p)?;
            match &ds.columns()[i] {
                Column::Numeric(v) => rows
                    .iter()
                    .map(|&r| v[r].ok_or_else(|| Error::InvalidArgument(format!("missing '{p}' in row {}", r + 1))))
                    .collect(),
                Column::Categorical(v) => {
                    let spec = &ds.schema()[i];
                    let q = codings
                        .get(p)
                        .ok_or_else(|| Error::Config(format!("no coding for categorical predictor '{p}'")))?;
                    let lut: Vec<f64> = spec.categories.iter().map(|c| q.value(c)).collect::<Result<_>>()?;
                    rows.iter()
                        .map(|&r| {
                            v[r].map(|c| lut[c])
                                .ok_or_else(|| Error::InvalidArgument(format!("missing '{p}' in row {}", r + 1)))
                        })
                        .collect()
                }
            }
        })
        .collect()
}

/// Rows with no missing cell among `vars`.
pub(crate) fn complete_rows(ds: &Dataset, vars: &[String]) -> Result<Vec<usize>> {
    let cols: Vec<&Column> = vars.iter().map(|v| ds.column(v)).collect::<Result<_>>()?;
    Ok((0..ds.row_count())
        .filter(|&r| cols.iter().all(|c| !c.is_missing(r)))
        .collect())
}

/// Matrix-level OLS output shared by the model builders.
#[derive(Clone, Debug)]
pub(crate) struct OlsCore {
    pub intercept: f64,
    pub intercept_se: f64,
    pub intercept_p: f64,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub t_values: Vec<f64>,
    pub p_values: Vec<f64>,
    pub std_coefficients: Vec<f64>,
    pub residuals: Vec<f64>,
    pub rss: f64,
    pub r_squared: f64,
    pub adjusted_r_squared: f64,
    pub residual_df: usize,
}

fn t_and_p(b: f64, se: f64, df: usize) -> Result<(f64, f64)> {
    if se > 0.0 && se.is_finite() {
        let t = b / se;
        Ok((t, t_two_sided_p(t, df as u64)?))
    } else if b == 0.0 {
        Ok((0.0, 1.0))
    } else {
        Ok((b.signum() * f64::INFINITY, 0.0))
    }
}

/// OLS with intercept on raw columns. `names` label the columns in errors.
pub(crate) fn ols_core(names: &[String], xs: &[Vec<f64>], y: &[f64]) -> Result<OlsCore> {
    let n = y.len();
    let p = xs.len();
    if n < p + 2 {
        return Err(Error::InsufficientData(format!(
            "{n} rows are too few for {p} predictors plus intercept (need at least {})",
            p + 2
        )));
    }
    let mut cols = Vec::with_capacity(p + 1);
    cols.push(vec![1.0; n]);
    cols.extend(xs.iter().cloned());
    let design = Matrix::from_columns(&cols);
    let sol = solve_least_squares(&design, y).map_err(|e| match e {
        LsqError::RankDeficient { column } => Error::RankDeficient {
            column: if column == 0 {
                "(intercept)".to_string()
            } else {
                names[column - 1].clone()
            },
        },
        other => Error::InsufficientData(other.to_string()),
    })?;
    let df = n - p - 1;
    let sigma2 = sol.residual_sum_squares / df as f64;
    let ybar = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - ybar).powi(2)).sum();
    let r_squared = if tss > 0.0 {
        (1.0 - sol.residual_sum_squares / tss).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let adjusted_r_squared = 1.0 - (1.0 - r_squared) * (n - 1) as f64 / df as f64;
    let sd_y = sample_sd(y).unwrap_or(0.0);

    let se: Vec<f64> = sol.unscaled_variances.iter().map(|u| (sigma2 * u).sqrt()).collect();
    let (intercept_t, intercept_p) = t_and_p(sol.coefficients[0], se[0], df)?;
    let _ = intercept_t;
    let mut t_values = Vec::with_capacity(p);
    let mut p_values = Vec::with_capacity(p);
    let mut std_coefficients = Vec::with_capacity(p);
    for j in 0..p {
        let b = sol.coefficients[j + 1];
        let (t, pv) = t_and_p(b, se[j + 1], df)?;
        t_values.push(t);
        p_values.push(pv);
        let sd_x = sample_sd(&xs[j]).unwrap_or(0.0);
        std_coefficients.push(if sd_y > 0.0 { b * sd_x / sd_y } else { 0.0 });
    }
    Ok(OlsCore {
        intercept: sol.coefficients[0],
        intercept_se: se[0],
        intercept_p,
        coefficients: sol.coefficients[1..].to_vec(),
        std_errors: se[1..].to_vec(),
        t_values,
        p_values,
        std_coefficients,
        residuals: sol.residuals,
        rss: sol.residual_sum_squares,
        r_squared,
        adjusted_r_squared,
        residual_df: df,
    })
}

pub(crate) fn model_from_core(
    response: &str,
    response_transform: Transform,
    predictors: &[String],
    core: &OlsCore,
    n: usize,
    codings: QuantificationSet,
) -> LinearModel {
    LinearModel {
        response: response.to_string(),
        response_transform,
        intercept: core.intercept,
        intercept_std_error: core.intercept_se,
        intercept_p_value: core.intercept_p,
        terms: predictors
            .iter()
            .enumerate()
            .map(|(j, v)| Term {
                variable: v.clone(),
                coefficient: core.coefficients[j],
                std_coefficient: core.std_coefficients[j],
                std_error: core.std_errors[j],
                t_value: core.t_values[j],
                p_value: core.p_values[j],
            })
            .collect(),
        r_squared: core.r_squared,
        adjusted_r_squared: core.adjusted_r_squared,
        n,
        residual_df: core.residual_df,
        residual_sd: (core.rss / core.residual_df as f64).sqrt(),
        codings,
    }
}

/// Ordinary least squares over the listwise-complete rows.
///
/// Categorical predictors need a quantification unless they are binary, in
/// which case they are coded 0/1 in declared category order.
pub fn ols_fit(
    ds: &Dataset,
    response: &str,
    predictors: &[String],
    quantifications: Option<&QuantificationSet>,
) -> Result<LinearModel> {
    let codings = resolve_codings(ds, predictors, quantifications)?;
    let mut vars = vec![response.to_string()];
    vars.extend(predictors.iter().cloned());
    let rows = complete_rows(ds, &vars)?;
    let y: Vec<f64> = {
        let col = ds.numeric(response)?;
        rows.iter().map(|&r| col[r].expect("complete row")).collect()
    };
    let xs = coded_columns(ds, predictors, &codings, &rows)?;
    let core = ols_core(predictors, &xs, &y)?;
    let transform = ds.spec(response)?.transform;
    Ok(model_from_core(response, transform, predictors, &core, rows.len(), codings))
}

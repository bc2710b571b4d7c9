//! Neuro-fuzzy recalibration of quantified inputs.
//!
//! Each quantified model variable gets its own single-input agency (NFA): one
//! generalized-bell membership per anchor value, normalized firing strengths
//! and a constant (zero-order) consequent per rule. Premises stay frozen and
//! only the consequents are trained, so the loss is a convex quadratic in the
//! trainable parameters.

use std::collections::BTreeMap;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::dataset::{Column, Dataset, Row};
use crate::regression::{coded_value, complete_rows, LinearModel, Quantification, QuantificationSet, ScalingLevel};
use crate::{Error, Result, Scalar};

/// Exponent `b` of the bell `1 / (1 + |(x − c) / w|^(2b))`. At a neighbouring
/// anchor `|z| ≥ 2`, so its membership is below `2^-40`.
pub const BELL_SLOPE: i32 = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Nfa<T> {
    pub variable: String,
    /// Strictly increasing membership centers.
    pub anchors: Vec<T>,
    pub widths: Vec<T>,
    pub consequents: Vec<T>,
    pub trained: bool,
}

impl<T: Scalar> Nfa<T> {
    /// Builds an untrained agency from raw values (sorted and deduplicated).
    pub fn from_values(variable: &str, values: &[T]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument(format!("no quantification values for '{variable}'")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite quantification for '{variable}'")));
        }
        let mut anchors = values.to_vec();
        anchors.sort_by(|a, b| a.partial_cmp(b).unwrap());
        anchors.dedup();
        let half = T::lit(0.5);
        let widths = (0..anchors.len())
            .map(|k| {
                let left = (k > 0).then(|| anchors[k] - anchors[k - 1]);
                let right = (k + 1 < anchors.len()).then(|| anchors[k + 1] - anchors[k]);
                match (left, right) {
                    (Some(l), Some(r)) => l.min(r) * half,
                    (Some(g), None) | (None, Some(g)) => g * half,
                    (None, None) => T::one(),
                }
            })
            .collect();
        Ok(Nfa {
            variable: variable.to_string(),
            consequents: anchors.clone(),
            anchors,
            widths,
            trained: false,
        })
    }

    pub fn rule_count(&self) -> usize {
        self.anchors.len()
    }
}

/// Untrained agency over the distinct values of a quantification.
pub fn init_nfa(quantification: &Quantification) -> Result<Nfa<f64>> {
    let values: Vec<f64> = quantification.mapping.values().copied().collect();
    Nfa::from_values(&quantification.variable, &values)
}

fn softplus<T: Scalar>(a: T) -> T {
    if a > T::zero() {
        a + (-a).exp().ln_1p()
    } else {
        a.exp().ln_1p()
    }
}

/// Normalized firing strengths at `x`; they sum to one for every real input.
/// Computed in log space so inputs far from every anchor still resolve to the
/// nearest rules instead of underflowing.
pub fn firing_strengths<T: Scalar>(nfa: &Nfa<T>, x: T) -> Vec<T> {
    let two_b = T::from_count(2 * BELL_SLOPE as usize);
    let logs: Vec<T> = nfa
        .anchors
        .iter()
        .zip(&nfa.widths)
        .map(|(&c, &w)| {
            let z = ((x - c) / w).abs();
            if z == T::zero() {
                T::zero()
            } else {
                -softplus(two_b * z.ln())
            }
        })
        .collect();
    let m = logs.iter().copied().fold(T::neg_infinity(), T::max);
    let raw: Vec<T> = logs.iter().map(|&l| (l - m).exp()).collect();
    let total = raw.iter().fold(T::zero(), |a, &b| a + b);
    raw.into_iter().map(|r| r / total).collect()
}

pub fn nfa_eval<T: Scalar>(nfa: &Nfa<T>, x: T) -> T {
    firing_strengths(nfa, x)
        .iter()
        .zip(&nfa.consequents)
        .fold(T::zero(), |acc, (&w, &q)| acc + w * q)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecalibrationConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Stop when the relative change of epoch MSE falls below this.
    pub tolerance: f64,
    pub rate_halving: bool,
    /// Stop when the gradient's max-norm falls below this.
    pub gradient_tolerance: f64,
}

fn default_gradient_tolerance() -> f64 {
    1e-10
}

impl Default for RecalibrationConfig {
    fn default() -> Self {
        RecalibrationConfig {
            learning_rate: 0.01,
            max_epochs: 1000,
            tolerance: 1e-6,
            rate_halving: true,
            gradient_tolerance: default_gradient_tolerance(),
        }
    }
}

impl RecalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be positive".into()));
        }
        if !(self.tolerance > 0.0) || !(self.gradient_tolerance >= 0.0) {
            return Err(Error::Config("tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Tolerance,
    Gradient,
    MaxEpochs,
    StepUnderflow,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    /// Training MSE before any update, then after each accepted epoch.
    pub epoch_mse: Vec<f64>,
    /// Max-norm of the gradient at the start of each epoch.
    pub gradient_norms: Vec<f64>,
    pub epochs: usize,
    pub final_learning_rate: f64,
    pub stop_reason: StopReason,
}

/// Precomputed training problem: prediction is linear in the consequents,
/// `ŷ_i = base_i + Σ_v b_v Σ_k w̄_ivk q_vk`.
#[derive(Clone, Debug)]
pub struct TrainingProblem {
    targets: Vec<f64>,
    base: Vec<f64>,
    coefficients: Vec<f64>,
    /// `[agency][row][rule]`
    strengths: Vec<Vec<Vec<f64>>>,
}

impl TrainingProblem {
    pub fn new(model: &LinearModel, nfas: &[Nfa<f64>], ds: &Dataset) -> Result<Self> {
        for term in &model.terms {
            let has_nfa = nfas.iter().any(|n| n.variable == term.variable);
            if !has_nfa && matches!(ds.column(&term.variable)?, Column::Categorical(_)) {
                return Err(Error::InvalidArgument(format!(
                    "categorical term '{}' has no neuro-fuzzy agency",
                    term.variable
                )));
            }
        }
        let mut coefficients = Vec::with_capacity(nfas.len());
        for nfa in nfas {
            let t = model.term(&nfa.variable).ok_or_else(|| {
                Error::InvalidArgument(format!("agency variable '{}' is not a model term", nfa.variable))
            })?;
            coefficients.push(t.coefficient);
        }
        let mut vars = vec![model.response.clone()];
        vars.extend(model.variables());
        let rows = complete_rows(ds, &vars)?;
        if rows.is_empty() {
            return Err(Error::InsufficientData("no complete rows to train on".into()));
        }
        let y = ds.numeric(&model.response)?;
        let mut targets = Vec::with_capacity(rows.len());
        let mut base = Vec::with_capacity(rows.len());
        let mut strengths = vec![Vec::with_capacity(rows.len()); nfas.len()];
        for &r in &rows {
            let row = ds.row(r);
            targets.push(y[r].expect("complete row"));
            let mut b = model.intercept;
            for t in &model.terms {
                let x = coded_value(&t.variable, &row[&t.variable], None, &model.codings)?;
                match nfas.iter().position(|n| n.variable == t.variable) {
                    Some(v) => strengths[v].push(firing_strengths(&nfas[v], x)),
                    None => b += t.coefficient * x,
                }
            }
            base.push(b);
        }
        Ok(TrainingProblem {
            targets,
            base,
            coefficients,
            strengths,
        })
    }

    pub fn rows(&self) -> usize {
        self.targets.len()
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Part of each prediction that does not pass through an agency.
    pub fn base(&self) -> &[f64] {
        &self.base
    }

    fn predictions(&self, consequents: &[Vec<f64>]) -> Vec<f64> {
        (0..self.rows())
            .map(|i| {
                let mut p = self.base[i];
                for (v, q) in consequents.iter().enumerate() {
                    let s: f64 = self.strengths[v][i].iter().zip(q).map(|(w, q)| w * q).sum();
                    p += self.coefficients[v] * s;
                }
                p
            })
            .collect()
    }

    pub fn mse(&self, consequents: &[Vec<f64>]) -> f64 {
        let p = self.predictions(consequents);
        p.iter().zip(&self.targets).map(|(p, y)| (y - p).powi(2)).sum::<f64>() / self.rows() as f64
    }

    /// `∂MSE/∂q_vk = −(2/n) Σ_i r_i · b_v · w̄_ivk`.
    pub fn gradient(&self, consequents: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let p = self.predictions(consequents);
        let scale = -2.0 / self.rows() as f64;
        consequents
            .iter()
            .enumerate()
            .map(|(v, q)| {
                let mut g = vec![0.0; q.len()];
                for i in 0..self.rows() {
                    let r = self.targets[i] - p[i];
                    for (k, w) in self.strengths[v][i].iter().enumerate() {
                        g[k] += r * w;
                    }
                }
                g.iter().map(|s| scale * self.coefficients[v] * s).collect()
            })
            .collect()
    }
}

fn max_norm(g: &[Vec<f64>]) -> f64 {
    g.iter().flatten().fold(0.0, |m: f64, v| m.max(v.abs()))
}

/// Batch gradient descent on the modeling-scale MSE of `model` with every
/// agency's output substituted for its variable. Only consequents move.
pub fn train_recalibration(
    model: &LinearModel,
    nfas: &[Nfa<f64>],
    ds: &Dataset,
    cfg: &RecalibrationConfig,
) -> Result<(Vec<Nfa<f64>>, TrainingTrace)> {
    cfg.validate()?;
    let problem = TrainingProblem::new(model, nfas, ds)?;
    let mut q: Vec<Vec<f64>> = nfas.iter().map(|n| n.consequents.clone()).collect();
    let mut lr = cfg.learning_rate;
    let mut mse = problem.mse(&q);
    let mut epoch_mse = vec![mse];
    let mut gradient_norms = Vec::new();
    let mut stop_reason = StopReason::MaxEpochs;
    let mut epochs = 0;
    while epochs < cfg.max_epochs {
        let g = problem.gradient(&q);
        let gn = max_norm(&g);
        gradient_norms.push(gn);
        if gn < cfg.gradient_tolerance {
            stop_reason = StopReason::Gradient;
            break;
        }
        let step = |lr: f64| -> Vec<Vec<f64>> {
            q.iter()
                .zip(&g)
                .map(|(qv, gv)| qv.iter().zip(gv).map(|(a, b)| a - lr * b).collect())
                .collect()
        };
        let mut next = step(lr);
        let mut next_mse = problem.mse(&next);
        if cfg.rate_halving {
            let mut halvings = 0;
            while next_mse > mse {
                lr *= 0.5;
                halvings += 1;
                if halvings > 60 {
                    break;
                }
                next = step(lr);
                next_mse = problem.mse(&next);
            }
            if next_mse > mse {
                stop_reason = StopReason::StepUnderflow;
                break;
            }
        }
        epochs += 1;
        let change = (mse - next_mse).abs() / mse.max(f64::MIN_POSITIVE);
        q = next;
        mse = next_mse;
        epoch_mse.push(mse);
        if change < cfg.tolerance {
            stop_reason = StopReason::Tolerance;
            break;
        }
    }
    let trained = nfas
        .iter()
        .zip(q)
        .map(|(n, consequents)| Nfa {
            consequents,
            trained: true,
            ..n.clone()
        })
        .collect();
    Ok((
        trained,
        TrainingTrace {
            epoch_mse,
            gradient_norms,
            epochs,
            final_learning_rate: lr,
            stop_reason,
        },
    ))
}

/// [`crate::regression::model_predict`] with every agency-wrapped input
/// replaced by the agency's output.
pub fn recalibrated_predict(model: &LinearModel, nfas: &[Nfa<f64>], row: &Row, back_transform: bool) -> Result<f64> {
    let mut eta = model.intercept;
    for t in &model.terms {
        let cell = row
            .get(&t.variable)
            .ok_or_else(|| Error::InvalidArgument(format!("row does not supply variable '{}'", t.variable)))?;
        let x = coded_value(&t.variable, cell, None, &model.codings)?;
        let x = match nfas.iter().find(|n| n.variable == t.variable) {
            Some(nfa) => nfa_eval(nfa, x),
            None => x,
        };
        eta += t.coefficient * x;
    }
    Ok(if back_transform {
        model.response_transform.inverse(eta)
    } else {
        eta
    })
}

/// Treats each distinct observed value of a numeric variable as a level whose
/// quantification is the value itself (labels are the shortest decimal form).
pub fn level_quantification(ds: &Dataset, variable: &str) -> Result<Quantification> {
    let values = ds.numeric(variable)?;
    let mut distinct: Vec<f64> = values.iter().flatten().copied().collect();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    if distinct.is_empty() {
        return Err(Error::InsufficientData(format!("'{variable}' has no observed values")));
    }
    Ok(Quantification {
        variable: variable.to_string(),
        mapping: distinct.into_iter().map(|v| (format!("{v}"), v)).collect(),
        scaling_level: ScalingLevel::Ordinal,
    })
}

/// Starting quantifications and agencies for `variables`: the model's coding
/// for categorical terms, observed levels for numeric ones.
pub fn initial_agencies(
    model: &LinearModel,
    ds: &Dataset,
    variables: &[String],
) -> Result<(QuantificationSet, Vec<Nfa<f64>>)> {
    let mut set = QuantificationSet::new();
    let mut nfas = Vec::new();
    for v in variables {
        if model.term(v).is_none() {
            continue;
        }
        let q = match model.codings.get(v) {
            Some(q) => q.clone(),
            None => level_quantification(ds, v)?,
        };
        nfas.push(init_nfa(&q)?);
        set.insert(q);
    }
    Ok((set, nfas))
}

/// Categorical model terms, which must be wrapped by an agency.
pub fn categorical_terms(model: &LinearModel, ds: &Dataset) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for t in &model.terms {
        if ds.spec(&t.variable)?.is_categorical() {
            out.push(t.variable.clone());
        }
    }
    Ok(out)
}

/// Recalibrated quantification of every category: the trained agency's output
/// at the category's original value.
pub fn recalibrated_quantifications(initial: &QuantificationSet, nfas: &[Nfa<f64>]) -> QuantificationSet {
    initial
        .iter()
        .map(|q| match nfas.iter().find(|n| n.variable == q.variable) {
            Some(nfa) => Quantification {
                mapping: q.mapping.iter().map(|(k, &v)| (k.clone(), nfa_eval(nfa, v))).collect(),
                ..q.clone()
            },
            None => q.clone(),
        })
        .collect()
}

/// `{variable: {category: value}}` for reuse in later estimates.
pub fn export_quantifications(set: &QuantificationSet) -> BTreeMap<String, IndexMap<String, f64>> {
    set.iter().map(|q| (q.variable.clone(), q.mapping.clone())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_init() {
        let nfa = Nfa::from_values("d", &[1.0f64, 0.0]).unwrap();
        assert_eq!(nfa.anchors, vec![0.0, 1.0]);
        assert_eq!(nfa.widths, vec![0.5, 0.5]);
        assert_eq!(nfa.consequents, vec![0.0, 1.0]);
        assert_eq!(nfa_eval(&nfa, 0.5), 0.5);
        assert!(Nfa::<f64>::from_values("d", &[]).is_err());
    }

    #[test]
    fn vaf_level_widths() {
        let nfa = Nfa::from_values("vaf", &[0.65f64, 0.90, 1.00, 1.10, 1.35]).unwrap();
        let expect = [0.125, 0.05, 0.05, 0.05, 0.125];
        for (w, e) in nfa.widths.iter().zip(expect) {
            assert!((w - e).abs() < 1e-12, "{w} vs {e}");
        }
        for &a in &nfa.anchors {
            assert!((nfa_eval(&nfa, a) - a).abs() < 1e-9);
        }
    }

    #[test]
    fn single_anchor_is_constant() {
        let nfa = Nfa::from_values("c", &[2.5f32]).unwrap();
        assert_eq!(nfa.widths, vec![1.0]);
        for x in [-1e6f32, 0.0, 2.5, 1e6] {
            assert_eq!(nfa_eval(&nfa, x), 2.5);
        }
    }

    #[test]
    fn output_stays_in_consequent_hull() {
        let nfa = Nfa::from_values("v", &[0.0f64, 1.0, 3.0]).unwrap();
        for x in [-1e9, -3.0, 0.4, 2.2, 1e9] {
            let y = nfa_eval(&nfa, x);
            assert!((0.0..=3.0).contains(&y), "{x} -> {y}");
        }
        let s: f64 = firing_strengths(&nfa, 1e300).iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(RecalibrationConfig::default().validate().is_ok());
        let bad = RecalibrationConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }
}

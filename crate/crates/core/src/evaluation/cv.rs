//! Fold plans, cross-validation and repeated random splits comparing the
//! regression model with its recalibrated counterpart.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{mmre, pred_at};
use crate::dataset::Dataset;
use crate::numerics::{mean, Prng};
use crate::recalibration::{
    categorical_terms, initial_agencies, recalibrated_predict, train_recalibration, Nfa, RecalibrationConfig,
    TrainingTrace,
};
use crate::regression::{model_predict, ols_fit, stepwise_fit, LinearModel, QuantificationSet, StepwiseConfig};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    /// Fold index of every row.
    pub assignment: Vec<usize>,
}

impl FoldPlan {
    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&r| self.assignment[r] == fold).collect()
    }

    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&r| self.assignment[r] != fold).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &f in &self.assignment {
            s[f] += 1;
        }
        s
    }
}

/// Seeded shuffle, then round-robin: fold sizes differ by at most one.
pub fn kfold_plan(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 || k > n {
        return Err(Error::InvalidArgument(format!("need 2 <= k <= n, got k = {k}, n = {n}")));
    }
    let perm = Prng::new(seed).permutation(n);
    let mut assignment = vec![0; n];
    for (i, &r) in perm.iter().enumerate() {
        assignment[r] = i % k;
    }
    Ok(FoldPlan { k, seed, assignment })
}

/// `round(n · fraction)` with halves rounded up.
pub fn train_size(n: usize, fraction: f64) -> usize {
    (n as f64 * fraction + 0.5).floor() as usize
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum Selection {
    /// Stepwise over the candidates.
    Stepwise { p_enter: f64, p_remove: f64 },
    /// OLS on all candidates.
    All,
}

impl Default for Selection {
    fn default() -> Self {
        let d = StepwiseConfig::default();
        Selection::Stepwise {
            p_enter: d.p_enter,
            p_remove: d.p_remove,
        }
    }
}

/// How a model is built from a training set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelingPlan {
    pub response: String,
    pub candidates: Vec<String>,
    #[serde(default)]
    pub selection: Selection,
    #[serde(default)]
    pub quantifications: Option<QuantificationSet>,
    /// Variables wrapped by an agency in addition to every categorical term.
    #[serde(default)]
    pub recalibrate: Vec<String>,
    #[serde(default)]
    pub recalibration: RecalibrationConfig,
    #[serde(default = "default_pred_levels")]
    pub pred_levels: Vec<f64>,
    /// Pred(m) is reported only for test sets at least this large.
    #[serde(default = "default_min_pred_rows")]
    pub min_pred_rows: usize,
}

fn default_pred_levels() -> Vec<f64> {
    vec![0.25]
}

fn default_min_pred_rows() -> usize {
    10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub model: LinearModel,
    pub initial_quantifications: QuantificationSet,
    pub nfas: Vec<Nfa<f64>>,
    pub trace: TrainingTrace,
}

fn regress(train: &Dataset, plan: &ModelingPlan) -> Result<LinearModel> {
    match plan.selection {
        Selection::Stepwise { p_enter, p_remove } => Ok(stepwise_fit(
            train,
            &plan.response,
            &plan.candidates,
            StepwiseConfig { p_enter, p_remove },
            plan.quantifications.as_ref(),
        )?
        .final_model),
        Selection::All => ols_fit(train, &plan.response, &plan.candidates, plan.quantifications.as_ref()),
    }
}

pub(crate) fn recalibrate(train: &Dataset, plan: &ModelingPlan, model: LinearModel) -> Result<FittedModel> {
    let mut vars = categorical_terms(&model, train)?;
    for v in &plan.recalibrate {
        if !vars.contains(v) {
            vars.push(v.clone());
        }
    }
    let (initial_quantifications, nfas) = initial_agencies(&model, train, &vars)?;
    let (nfas, trace) = train_recalibration(&model, &nfas, train, &plan.recalibration)?;
    Ok(FittedModel {
        model,
        initial_quantifications,
        nfas,
        trace,
    })
}

/// Regression (per `plan.selection`) followed by recalibration, both on `train`.
pub fn fit_plan(train: &Dataset, plan: &ModelingPlan) -> Result<FittedModel> {
    let model = regress(train, plan)?;
    recalibrate(train, plan, model)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrainMode {
    /// Regression and recalibration both refitted on each training set.
    RefitRegression,
    /// Regression fitted once on all rows; only recalibration uses the
    /// training set.
    FixedRegression,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub label: String,
    pub n_train: usize,
    pub n_test: usize,
    pub regression_mmre: f64,
    pub recalibrated_mmre: f64,
    /// `(regression − recalibrated) / regression × 100`; 0 when the
    /// regression MMRE is 0.
    pub improvement_pct: f64,
    pub regression_pred: Option<f64>,
    pub recalibrated_pred: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AverageRow {
    pub regression_mmre: f64,
    pub recalibrated_mmre: f64,
    pub improvement_pct: f64,
    pub regression_pred: Option<f64>,
    pub recalibrated_pred: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    /// `refit_regression`, `fixed_regression` or `resubstitution`.
    pub mode: String,
    pub seed: u64,
    /// Level used for the Pred columns.
    pub pred_level: f64,
    pub rows: Vec<ExperimentRow>,
    pub average: AverageRow,
}

pub(crate) fn improvement(baseline: f64, recalibrated: f64) -> f64 {
    if baseline == 0.0 {
        0.0
    } else {
        (baseline - recalibrated) / baseline * 100.0
    }
}

fn average_of(rows: &[ExperimentRow]) -> AverageRow {
    let col = |f: &dyn Fn(&ExperimentRow) -> f64| mean(&rows.iter().map(f).collect::<Vec<_>>()).unwrap_or(f64::NAN);
    let opt = |f: &dyn Fn(&ExperimentRow) -> Option<f64>| mean(&rows.iter().filter_map(f).collect::<Vec<_>>());
    let (base, recal) = (col(&|r| r.regression_mmre), col(&|r| r.recalibrated_mmre));
    AverageRow {
        regression_mmre: base,
        recalibrated_mmre: recal,
        // from the averaged columns, so the row is self-consistent
        improvement_pct: improvement(base, recal),
        regression_pred: opt(&|r| r.regression_pred),
        recalibrated_pred: opt(&|r| r.recalibrated_pred),
    }
}

impl ExperimentReport {
    fn new(name: String, mode: &str, seed: u64, pred_level: f64, rows: Vec<ExperimentRow>) -> Self {
        let average = average_of(&rows);
        ExperimentReport {
            name,
            mode: mode.to_string(),
            seed,
            pred_level,
            rows,
            average,
        }
    }

    /// Aligned text table: one line per experiment plus the averages.
    pub fn to_text(&self) -> String {
        let fmt_opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
        let mut out = format!("{} ({})\n", self.name, self.mode);
        let _ = writeln!(
            out,
            "{:<10} {:>7} {:>6} {:>15} {:>17} {:>12} {:>10} {:>10}",
            "", "n_train", "n_test", "Regression MMRE", "Recalibrated MMRE", "Improvement", "Reg Pred", "Recal Pred"
        );
        let line = |out: &mut String, label: &str, nt: String, ns: String, a: f64, b: f64, c: f64, p: Option<f64>, q: Option<f64>| {
            let _ = writeln!(
                out,
                "{label:<10} {nt:>7} {ns:>6} {a:>15.4} {b:>17.4} {:>12} {:>10} {:>10}",
                format!("{c:.2}%"),
                fmt_opt(p),
                fmt_opt(q)
            );
        };
        for r in &self.rows {
            line(
                &mut out,
                &r.label,
                r.n_train.to_string(),
                r.n_test.to_string(),
                r.regression_mmre,
                r.recalibrated_mmre,
                r.improvement_pct,
                r.regression_pred,
                r.recalibrated_pred,
            );
        }
        let a = &self.average;
        line(
            &mut out,
            "Average",
            String::new(),
            String::new(),
            a.regression_mmre,
            a.recalibrated_mmre,
            a.improvement_pct,
            a.regression_pred,
            a.recalibrated_pred,
        );
        out
    }
}

fn score_rows(
    ds: &Dataset,
    fitted: &FittedModel,
    rows: &[usize],
    plan: &ModelingPlan,
    label: String,
    n_train: usize,
) -> Result<ExperimentRow> {
    let y = ds.numeric(&plan.response)?;
    let transform = fitted.model.response_transform;
    let (mut actual, mut base, mut recal) = (Vec::new(), Vec::new(), Vec::new());
    for &r in rows {
        let Some(v) = y[r] else { continue };
        let row = ds.row(r);
        actual.push(transform.inverse(v));
        base.push(model_predict(&fitted.model, None, &row, true)?);
        recal.push(recalibrated_predict(&fitted.model, &fitted.nfas, &row, true)?);
    }
    let regression_mmre = mmre(&actual, &base)?;
    let recalibrated_mmre = mmre(&actual, &recal)?;
    let level = plan.pred_levels.first().copied().unwrap_or(0.25);
    let (regression_pred, recalibrated_pred) = if actual.len() >= plan.min_pred_rows {
        (Some(pred_at(&actual, &base, level)?), Some(pred_at(&actual, &recal, level)?))
    } else {
        (None, None)
    };
    Ok(ExperimentRow {
        label,
        n_train,
        n_test: actual.len(),
        regression_mmre,
        recalibrated_mmre,
        improvement_pct: improvement(regression_mmre, recalibrated_mmre),
        regression_pred,
        recalibrated_pred,
    })
}

fn in_context(what: &str, e: Error) -> Error {
    match e {
        Error::InsufficientData(m) => Error::InsufficientData(format!("{what}: {m}")),
        Error::RankDeficient { column } => Error::RankDeficient {
            column: format!("{column} ({what})"),
        },
        Error::NonConvergence(m) => Error::NonConvergence(format!("{what}: {m}")),
        other => other,
    }
}

fn run_split(
    ds: &Dataset,
    plan: &ModelingPlan,
    mode: RetrainMode,
    fixed: Option<&LinearModel>,
    train: &[usize],
    test: &[usize],
    label: String,
) -> Result<ExperimentRow> {
    assert!(train.iter().all(|r| !test.contains(r)), "training and test rows overlap");
    let train_ds = ds.select_rows(train);
    let fitted = match (mode, fixed) {
        (RetrainMode::FixedRegression, Some(m)) => recalibrate(&train_ds, plan, m.clone()),
        _ => fit_plan(&train_ds, plan),
    }
    .map_err(|e| in_context(&label, e))?;
    score_rows(ds, &fitted, test, plan, label, train.len())
}

fn mode_name(mode: RetrainMode) -> &'static str {
    match mode {
        RetrainMode::RefitRegression => "refit_regression",
        RetrainMode::FixedRegression => "fixed_regression",
    }
}

/// k-fold cross-validation; recalibration always trains on the training folds
/// only.
pub fn cross_validate(ds: &Dataset, plan: &ModelingPlan, k: usize, seed: u64, mode: RetrainMode) -> Result<ExperimentReport> {
    let fp = kfold_plan(ds.row_count(), k, seed)?;
    let fixed = match mode {
        RetrainMode::FixedRegression => Some(regress(ds, plan)?),
        RetrainMode::RefitRegression => None,
    };
    let mut rows = Vec::with_capacity(k);
    for f in 0..k {
        let (train, test) = (fp.train_rows(f), fp.test_rows(f));
        rows.push(run_split(ds, plan, mode, fixed.as_ref(), &train, &test, format!("fold {}", f + 1))?);
    }
    Ok(ExperimentReport::new(
        format!("{k}-fold cross-validation"),
        mode_name(mode),
        seed,
        plan.pred_levels.first().copied().unwrap_or(0.25),
        rows,
    ))
}

/// Repeated seeded splits with `round(n · train_fraction)` training rows.
pub fn random_split_experiment(
    ds: &Dataset,
    plan: &ModelingPlan,
    train_fraction: f64,
    repetitions: usize,
    seed: u64,
    mode: RetrainMode,
) -> Result<ExperimentReport> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) || repetitions == 0 {
        return Err(Error::InvalidArgument(format!(
            "need 0 < train_fraction < 1 and repetitions > 0, got {train_fraction} and {repetitions}"
        )));
    }
    let n = ds.row_count();
    let n_train = train_size(n, train_fraction);
    if n_train < 2 || n_train >= n {
        return Err(Error::InsufficientData(format!(
            "train fraction {train_fraction} of {n} rows leaves {n_train} training rows"
        )));
    }
    let fixed = match mode {
        RetrainMode::FixedRegression => Some(regress(ds, plan)?),
        RetrainMode::RefitRegression => None,
    };
    let mut rows = Vec::with_capacity(repetitions);
    for rep in 0..repetitions {
        let perm = Prng::child(seed, rep as u64).permutation(n);
        let mut train = perm[..n_train].to_vec();
        let mut test = perm[n_train..].to_vec();
        train.sort_unstable();
        test.sort_unstable();
        rows.push(run_split(ds, plan, mode, fixed.as_ref(), &train, &test, format!("run {}", rep + 1))?);
    }
    Ok(ExperimentReport::new(
        format!("random splits, {:.0}% training", train_fraction * 100.0),
        mode_name(mode),
        seed,
        plan.pred_levels.first().copied().unwrap_or(0.25),
        rows,
    ))
}

/// Fit, recalibrate and evaluate on the same rows.
pub fn resubstitution(ds: &Dataset, plan: &ModelingPlan) -> Result<(FittedModel, ExperimentReport)> {
    let fitted = fit_plan(ds, plan)?;
    let all: Vec<usize> = (0..ds.row_count()).collect();
    let row = score_rows(ds, &fitted, &all, plan, "all rows".into(), all.len())?;
    let report = ExperimentReport::new(
        "all-data training".into(),
        "resubstitution",
        0,
        plan.pred_levels.first().copied().unwrap_or(0.25),
        vec![row],
    );
    Ok((fitted, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fold_sizes() {
        assert_eq!(kfold_plan(64, 8, 1).unwrap().fold_sizes(), vec![8; 8]);
        let mut s = kfold_plan(10, 4, 1).unwrap().fold_sizes();
        s.sort_unstable_by(|a, b| b.cmp(a));
        assert_eq!(s, vec![3, 3, 2, 2]);
        assert_eq!(kfold_plan(10, 4, 7).unwrap(), kfold_plan(10, 4, 7).unwrap());
        assert_ne!(kfold_plan(64, 8, 1).unwrap(), kfold_plan(64, 8, 2).unwrap());
        assert!(kfold_plan(3, 4, 0).is_err());
        assert!(kfold_plan(3, 1, 0).is_err());
    }

    #[test]
    fn train_size_rounds_half_up() {
        assert_eq!(train_size(64, 0.8), 51);
        assert_eq!(train_size(64, 0.6), 38);
        assert_eq!(train_size(64, 0.7), 45);
        assert_eq!(train_size(10, 0.25), 3);
    }

    #[test]
    fn improvement_definition() {
        assert_eq!(improvement(2.0, 1.0), 50.0);
        assert_eq!(improvement(0.0, 0.0), 0.0);
        assert!(improvement(1.0, 1.5) < 0.0);
    }
}

//! Forward-entry / backward-removal stepwise selection on partial-t p-values.

use serde::{Deserialize, Serialize};

use super::{coded_columns, complete_rows, model_from_core, ols_core, resolve_codings, LinearModel, QuantificationSet};
use crate::dataset::Dataset;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepwiseConfig {
    pub p_enter: f64,
    pub p_remove: f64,
}

impl Default for StepwiseConfig {
    fn default() -> Self {
        StepwiseConfig {
            p_enter: 0.05,
            p_remove: 0.10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepAction {
    Enter,
    Remove,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub action: StepAction,
    pub variable: String,
    pub p_value: f64,
    /// Variables in the model after this step.
    pub model_variables: Vec<String>,
    pub r_squared: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepwiseTrace {
    pub steps: Vec<Step>,
    pub final_model: LinearModel,
    /// Rows used throughout (complete on the response and every candidate).
    pub n: usize,
    pub hit_iteration_cap: bool,
}

/// Stepwise selection. Each pass enters the excluded candidate with the
/// smallest partial p-value below `p_enter` (ties: larger |t|, then candidate
/// order), then removes the included term with the largest p-value above
/// `p_remove`. Stops when a pass changes nothing or after `2 · |candidates|`
/// passes.
///
/// Rows are fixed up front by listwise deletion over all candidates, so every
/// intermediate model is fitted on the same sample.
pub fn stepwise_fit(
    ds: &Dataset,
    response: &str,
    candidates: &[String],
    config: StepwiseConfig,
    quantifications: Option<&QuantificationSet>,
) -> Result<StepwiseTrace> {
    if !(0.0 < config.p_enter && config.p_enter <= config.p_remove && config.p_remove < 1.0) {
        return Err(Error::Config(format!(
            "stepwise thresholds need 0 < p_enter ({}) <= p_remove ({}) < 1",
            config.p_enter, config.p_remove
        )));
    }
    let codings = resolve_codings(ds, candidates, quantifications)?;
    let mut vars = vec![response.to_string()];
    vars.extend(candidates.iter().cloned());
    let rows = complete_rows(ds, &vars)?;
    let y: Vec<f64> = {
        let col = ds.numeric(response)?;
        rows.iter().map(|&r| col[r].expect("complete row")).collect()
    };
    let xs = coded_columns(ds, candidates, &codings, &rows)?;
    let transform = ds.spec(response)?.transform;

    let fit = |included: &[usize]| {
        let names: Vec<String> = included.iter().map(|&j| candidates[j].clone()).collect();
        let cols: Vec<Vec<f64>> = included.iter().map(|&j| xs[j].clone()).collect();
        ols_core(&names, &cols, &y).map(|core| (names, core))
    };

    let mut included: Vec<usize> = Vec::new();
    let mut steps = Vec::new();
    let cap = 2 * candidates.len();
    let mut passes = 0;
    let mut hit_iteration_cap = false;
    loop {
        if passes == cap {
            hit_iteration_cap = !candidates.is_empty();
            break;
        }
        passes += 1;
        let mut changed = false;

        // entry
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..candidates.len() {
            if included.contains(&j) {
                continue;
            }
            let mut trial = included.clone();
            trial.push(j);
            let core = match fit(&trial) {
                Ok((_, core)) => core,
                Err(Error::RankDeficient { .. }) | Err(Error::InsufficientData(_)) => continue,
                Err(e) => return Err(e),
            };
            let (p, t) = (core.p_values[trial.len() - 1], core.t_values[trial.len() - 1].abs());
            let better = match best {
                None => true,
                Some((_, bp, bt)) => p < bp || (p == bp && t > bt),
            };
            if better {
                best = Some((j, p, t));
            }
        }
        if let Some((j, p, _)) = best {
            if p < config.p_enter {
                included.push(j);
                let (names, core) = fit(&included)?;
                steps.push(Step {
                    action: StepAction::Enter,
                    variable: candidates[j].clone(),
                    p_value: p,
                    model_variables: names,
                    r_squared: core.r_squared,
                });
                changed = true;
            }
        }

        // removal
        if !included.is_empty() {
            let (_, core) = fit(&included)?;
            let (k, p) = core
                .p_values
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (k, &p)| if p > acc.1 { (k, p) } else { acc });
            if p > config.p_remove {
                let j = included.remove(k);
                let (names, core) = fit(&included)?;
                steps.push(Step {
                    action: StepAction::Remove,
                    variable: candidates[j].clone(),
                    p_value: p,
                    model_variables: names,
                    r_squared: core.r_squared,
                });
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let (names, core) = fit(&included)?;
    let model_codings = names.iter().filter_map(|v| codings.get(v).cloned()).collect();
    Ok(StepwiseTrace {
        steps,
        final_model: model_from_core(response, transform, &names, &core, rows.len(), model_codings),
        n: rows.len(),
        hit_iteration_cap,
    })
}

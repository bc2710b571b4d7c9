//! M5-style model trees: greedy standard-deviation-reduction splits with an
//! OLS model in every leaf. No pruning and no smoothing.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::{Column, Dataset, Row, Value};
use crate::numerics::population_sd;
use crate::regression::{
    coded_columns, complete_rows, model_from_core, model_predict, ols_core, resolve_codings, LinearModel,
    QuantificationSet,
};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeParams {
    /// `None` resolves to `max(4, ⌈0.1·n⌉)`.
    pub min_leaf_size: Option<usize>,
    pub sd_stop_fraction: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            min_leaf_size: None,
            sd_stop_fraction: 0.05,
        }
    }
}

impl TreeParams {
    pub fn resolve_min_leaf(&self, n: usize) -> usize {
        self.min_leaf_size.unwrap_or_else(|| 4.max(n.div_ceil(10)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRule {
    /// Rows with `x >= threshold` go right.
    Threshold(f64),
    /// Rows whose category is in the set go left; everything else right.
    Subset(Vec<String>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        variable: String,
        rule: SplitRule,
        n: usize,
        sd: f64,
        sdr: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        n: usize,
        sd: f64,
        model: LinearModel,
    },
}

impl TreeNode {
    pub fn leaf_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }

    pub fn leaves(&self) -> Vec<&TreeNode> {
        match self {
            TreeNode::Leaf { .. } => vec![self],
            TreeNode::Split { left, right, .. } => {
                let mut v = left.leaves();
                v.extend(right.leaves());
                v
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelTree {
    pub response: String,
    pub predictors: Vec<String>,
    pub min_leaf_size: usize,
    pub sd_stop_fraction: f64,
    pub root: TreeNode,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeRole {
    Split,
    LeafModel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeVariable {
    pub variable: String,
    pub role: TreeRole,
    /// Largest |Beta| over the leaf models using the variable.
    pub max_abs_std_coefficient: Option<f64>,
}

/// Candidate split found by [`best_split`].
#[derive(Clone, Debug, PartialEq)]
pub struct SplitCandidate {
    pub variable: usize,
    pub rule: SplitRule,
    pub sdr: f64,
    pub left: Vec<usize>,
    pub right: Vec<usize>,
}

enum Feature<'a> {
    Numeric(Vec<f64>),
    Categorical { codes: Vec<usize>, labels: &'a [String] },
}

fn sd_of(y: &[f64], rows: &[usize]) -> f64 {
    let v: Vec<f64> = rows.iter().map(|&r| y[r]).collect();
    population_sd(&v).unwrap_or(0.0)
}

/// `sd(parent) − Σ (n_child / n) · sd(child)`, population sds.
pub fn sdr(parent: &[f64], left: &[f64], right: &[f64]) -> f64 {
    let n = parent.len() as f64;
    let sd = |v: &[f64]| population_sd(v).unwrap_or(0.0);
    sd(parent) - (left.len() as f64 / n) * sd(left) - (right.len() as f64 / n) * sd(right)
}

fn score(y: &[f64], node: &[usize], left: &[usize], right: &[usize], parent_sd: f64) -> f64 {
    let n = node.len() as f64;
    parent_sd - (left.len() as f64 / n) * sd_of(y, left) - (right.len() as f64 / n) * sd_of(y, right)
}

/// Best split over all features for the rows in `node`; ties keep the
/// lowest feature index, then the lowest threshold.
fn best_split_inner(y: &[f64], features: &[Feature], node: &[usize], min_leaf: usize) -> Option<SplitCandidate> {
    let parent_sd = sd_of(y, node);
    let mut best: Option<SplitCandidate> = None;
    let mut consider = |cand: SplitCandidate| {
        if best.as_ref().is_none_or(|b| cand.sdr > b.sdr) {
            best = Some(cand);
        }
    };
    for (j, f) in features.iter().enumerate() {
        match f {
            Feature::Numeric(x) => {
                let mut sorted: Vec<usize> = node.to_vec();
                sorted.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap_or(Ordering::Equal));
                for i in min_leaf..=sorted.len().saturating_sub(min_leaf) {
                    let (lo, hi) = (x[sorted[i - 1]], x[sorted[i]]);
                    if lo >= hi {
                        continue;
                    }
                    let mut threshold = lo + (hi - lo) / 2.0;
                    if threshold <= lo {
                        threshold = hi;
                    }
                    let (left, right) = (sorted[..i].to_vec(), sorted[i..].to_vec());
                    let s = score(y, node, &left, &right, parent_sd);
                    consider(SplitCandidate {
                        variable: j,
                        rule: SplitRule::Threshold(threshold),
                        sdr: s,
                        left,
                        right,
                    });
                }
            }
            Feature::Categorical { codes, labels } => {
                let mut present: Vec<(usize, f64)> = Vec::new();
                for c in 0..labels.len() {
                    let ys: Vec<f64> = node.iter().filter(|&&r| codes[r] == c).map(|&r| y[r]).collect();
                    if !ys.is_empty() {
                        present.push((c, ys.iter().sum::<f64>() / ys.len() as f64));
                    }
                }
                present.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
                for cut in 1..present.len() {
                    let set: Vec<usize> = present[..cut].iter().map(|p| p.0).collect();
                    let (left, right): (Vec<usize>, Vec<usize>) = node.iter().partition(|&&r| set.contains(&codes[r]));
                    if left.len() < min_leaf || right.len() < min_leaf {
                        continue;
                    }
                    let s = score(y, node, &left, &right, parent_sd);
                    let mut subset: Vec<usize> = set.clone();
                    subset.sort_unstable();
                    consider(SplitCandidate {
                        variable: j,
                        rule: SplitRule::Subset(subset.into_iter().map(|c| labels[c].clone()).collect()),
                        sdr: s,
                        left,
                        right,
                    });
                }
            }
        }
    }
    best
}

struct Builder<'a> {
    ds: &'a Dataset,
    response: &'a str,
    predictors: &'a [String],
    codings: QuantificationSet,
    rows: Vec<usize>,
    y: Vec<f64>,
    features: Vec<Feature<'a>>,
    min_leaf: usize,
    sd_stop: f64,
}

impl Builder<'_> {
    fn leaf(&self, node: &[usize]) -> Result<TreeNode> {
        let local: Vec<usize> = node.iter().map(|&i| self.rows[i]).collect();
        let y: Vec<f64> = node.iter().map(|&i| self.y[i]).collect();
        let mut names: Vec<String> = self.predictors.to_vec();
        let mut xs = coded_columns(self.ds, &names, &self.codings, &local)?;
        while names.len() + 2 > y.len() {
            names.pop();
            xs.pop();
        }
        let core = loop {
            match ols_core(&names, &xs, &y) {
                Ok(core) => break core,
                Err(Error::RankDeficient { column }) => match names.iter().position(|n| *n == column) {
                    Some(k) => {
                        names.remove(k);
                        xs.remove(k);
                    }
                    None => return Err(Error::RankDeficient { column }),
                },
                Err(Error::InsufficientData(_)) if !names.is_empty() => {
                    names.pop();
                    xs.pop();
                }
                Err(e) => return Err(e),
            }
        };
        let codings = names.iter().filter_map(|v| self.codings.get(v).cloned()).collect();
        let transform = self.ds.spec(self.response)?.transform;
        Ok(TreeNode::Leaf {
            n: node.len(),
            sd: sd_of(&self.y, node),
            model: model_from_core(self.response, transform, &names, &core, node.len(), codings),
        })
    }

    fn grow(&self, node: &[usize]) -> Result<TreeNode> {
        let sd = sd_of(&self.y, node);
        if node.len() < 2 * self.min_leaf || sd < self.sd_stop {
            return self.leaf(node);
        }
        match best_split_inner(&self.y, &self.features, node, self.min_leaf) {
            Some(c) if c.sdr > 0.0 => Ok(TreeNode::Split {
                variable: self.predictors[c.variable].clone(),
                rule: c.rule,
                n: node.len(),
                sd,
                sdr: c.sdr,
                left: Box::new(self.grow(&c.left)?),
                right: Box::new(self.grow(&c.right)?),
            }),
            _ => self.leaf(node),
        }
    }
}

fn features<'a>(ds: &'a Dataset, predictors: &[String], rows: &[usize]) -> Result<Vec<Feature<'a>>> {
    predictors
        .iter()
        .map(|p| {
            Ok(match ds.column(p)? {
                Column::Numeric(v) => Feature::Numeric(rows.iter().map(|&r| v[r].unwrap()).collect()),
                Column::Categorical(v) => Feature::Categorical {
                    codes: rows.iter().map(|&r| v[r].unwrap()).collect(),
                    labels: &ds.spec(p)?.categories,
                },
            })
        })
        .collect()
}

fn complete_numeric_response(ds: &Dataset, response: &str, predictors: &[String]) -> Result<(Vec<usize>, Vec<f64>)> {
    let col = match ds.column(response)? {
        Column::Numeric(v) => v,
        Column::Categorical(_) => {
            return Err(Error::InvalidArgument(format!("response '{response}' must be numeric")))
        }
    };
    let mut vars = vec![response.to_string()];
    vars.extend(predictors.iter().cloned());
    let rows = complete_rows(ds, &vars)?;
    let y = rows.iter().map(|&r| col[r].unwrap()).collect();
    Ok((rows, y))
}

/// Best root split of `predictors` on the complete rows (exposed for
/// inspection and testing). Indices in the candidate refer to complete rows.
pub fn best_split(
    ds: &Dataset,
    response: &str,
    predictors: &[String],
    min_leaf: usize,
) -> Result<Option<SplitCandidate>> {
    let (rows, y) = complete_numeric_response(ds, response, predictors)?;
    let feats = features(ds, predictors, &rows)?;
    let node: Vec<usize> = (0..rows.len()).collect();
    Ok(best_split_inner(&y, &feats, &node, min_leaf.max(1)))
}

pub fn build_model_tree(
    ds: &Dataset,
    response: &str,
    predictors: &[String],
    params: TreeParams,
    quantifications: Option<&QuantificationSet>,
) -> Result<ModelTree> {
    if !(params.sd_stop_fraction >= 0.0) || params.min_leaf_size == Some(0) {
        return Err(Error::Config("tree parameters must be nonnegative and min_leaf_size ≥ 1".into()));
    }
    let codings = resolve_codings(ds, predictors, quantifications)?;
    let (rows, y) = complete_numeric_response(ds, response, predictors)?;
    if rows.is_empty() {
        return Err(Error::InsufficientData("model tree needs at least one complete row".into()));
    }
    let min_leaf = params.resolve_min_leaf(rows.len());
    let root_sd = population_sd(&y).unwrap_or(0.0);
    let builder = Builder {
        ds,
        response,
        predictors,
        codings,
        features: features(ds, predictors, &rows)?,
        rows,
        y,
        min_leaf,
        sd_stop: params.sd_stop_fraction * root_sd,
    };
    let node: Vec<usize> = (0..builder.rows.len()).collect();
    let root = builder.grow(&node)?;
    Ok(ModelTree {
        response: response.to_string(),
        predictors: predictors.to_vec(),
        min_leaf_size: min_leaf,
        sd_stop_fraction: params.sd_stop_fraction,
        root,
    })
}

fn goes_right(variable: &str, rule: &SplitRule, row: &Row) -> Result<bool> {
    let value = row
        .get(variable)
        .ok_or_else(|| Error::InvalidArgument(format!("row does not supply variable '{variable}'")))?;
    match (rule, value) {
        (SplitRule::Threshold(t), Value::Number(x)) => Ok(*x >= *t),
        (SplitRule::Subset(set), Value::Category(label)) => Ok(!set.contains(label)),
        (_, Value::Missing) => Err(Error::InvalidArgument(format!("row is missing variable '{variable}'"))),
        _ => Err(Error::InvalidArgument(format!("value of '{variable}' has the wrong kind for its split"))),
    }
}

/// Leaf reached by `row`.
pub fn route<'t>(tree: &'t ModelTree, row: &Row) -> Result<&'t TreeNode> {
    let mut node = &tree.root;
    loop {
        match node {
            TreeNode::Leaf { .. } => return Ok(node),
            TreeNode::Split {
                variable,
                rule,
                left,
                right,
                ..
            } => node = if goes_right(variable, rule, row)? { right } else { left },
        }
    }
}

/// Prediction on the response's modeling scale.
pub fn tree_predict(tree: &ModelTree, row: &Row) -> Result<f64> {
    match route(tree, row)? {
        TreeNode::Leaf { model, .. } => model_predict(model, None, row, false),
        TreeNode::Split { .. } => unreachable!("route ends at a leaf"),
    }
}

/// Each variable used anywhere in the tree, once, in predictor order. A
/// variable that splits is reported as a split even if leaves also use it.
pub fn tree_variable_report(tree: &ModelTree) -> Vec<TreeVariable> {
    fn walk(node: &TreeNode, split: &mut Vec<String>, beta: &mut Vec<(String, f64)>) {
        match node {
            TreeNode::Leaf { model, .. } => {
                for t in &model.terms {
                    beta.push((t.variable.clone(), t.std_coefficient.abs()));
                }
            }
            TreeNode::Split {
                variable, left, right, ..
            } => {
                split.push(variable.clone());
                walk(left, split, beta);
                walk(right, split, beta);
            }
        }
    }
    let (mut split, mut beta) = (Vec::new(), Vec::new());
    walk(&tree.root, &mut split, &mut beta);
    tree.predictors
        .iter()
        .filter_map(|p| {
            let max_beta = beta
                .iter()
                .filter(|(v, _)| v == p)
                .map(|(_, b)| *b)
                .fold(None, |acc: Option<f64>, b| Some(acc.map_or(b, |a| a.max(b))));
            let role = if split.contains(p) {
                TreeRole::Split
            } else if max_beta.is_some() {
                TreeRole::LeafModel
            } else {
                return None;
            };
            Some(TreeVariable {
                variable: p.clone(),
                role,
                max_abs_std_coefficient: max_beta,
            })
        })
        .collect()
}

/// Indented text dump.
pub fn tree_to_text(tree: &ModelTree) -> String {
    fn walk(node: &TreeNode, depth: usize, label: &str, out: &mut String) {
        let pad = "  ".repeat(depth);
        match node {
            TreeNode::Leaf { n, sd, model } => {
                let _ = writeln!(out, "{pad}{label}leaf n={n} sd={sd:.4}: {}", model.formula());
            }
            TreeNode::Split {
                variable,
                rule,
                n,
                sd,
                sdr,
                left,
                right,
            } => {
                let (l, r) = match rule {
                    SplitRule::Threshold(t) => (format!("{variable} < {t}"), format!("{variable} >= {t}")),
                    SplitRule::Subset(s) => {
                        let set = s.join(", ");
                        (format!("{variable} in {{{set}}}"), format!("{variable} not in {{{set}}}"))
                    }
                };
                let _ = writeln!(out, "{pad}{label}split n={n} sd={sd:.4} sdr={sdr:.4}");
                walk(left, depth + 1, &format!("[{l}] "), out);
                walk(right, depth + 1, &format!("[{r}] "), out);
            }
        }
    }
    let mut out = format!(
        "model tree for {} (M5-style SDR splits, min_leaf_size={}, sd_stop_fraction={})\n",
        tree.response, tree.min_leaf_size, tree.sd_stop_fraction
    );
    walk(&tree.root, 0, "", &mut out);
    out
}

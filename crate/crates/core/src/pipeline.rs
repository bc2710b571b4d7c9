//! Config-driven orchestration of the full procedure: prepare → screen →
//! tree → fit → recalibrate → evaluate, plus synthetic data generation.
//!
//! Every stage is a pure function of (config, data bytes, seed). Outputs are
//! written atomically (temp file, then rename).

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{
    filter_indices, load_csv, summarize, Column, Dataset, FilterRule, Kind, Role, SummaryReport, VariableSpec,
};
use crate::evaluation::cv::{cross_validate, kfold_plan, random_split_experiment, resubstitution};
use crate::evaluation::synth::{generate_synthetic, synthetic_schema, SynthConfig, SynthMetadata};
use crate::evaluation::{ExperimentReport, ModelingPlan, RetrainMode, Selection};
use crate::modeltree::{build_model_tree, tree_to_text, tree_variable_report, ModelTree, TreeParams, TreeVariable};
use crate::numerics::derive_seed;
use crate::recalibration::{
    export_quantifications, recalibrated_quantifications, Nfa, RecalibrationConfig, TrainingTrace,
};
use crate::regression::{
    catreg_fit, ols_fit, stepwise_fit, CatregFit, LinearModel, QuantificationSet, Scaling, StepwiseConfig,
    StepwiseTrace,
};
use crate::screening::{
    merge_dataset_categories, pairwise_spearman, screen, PairCorrelation, ScreeningConfig, ScreeningReport,
    TukeyTable,
};
use crate::transform::{apply_transforms, qq_normal};
use crate::{AnovaResult64, CorrelationResult64, Error, Result};

pub const OUT_DIR_ENV: &str = "DEFECTCAL_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "defectcal-out";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeRule {
    pub variable: String,
    pub pairs: Vec<(String, String)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeSection {
    /// Defaults to the numeric and binary regression candidates.
    #[serde(default)]
    pub predictors: Vec<String>,
    #[serde(default)]
    pub params: TreeParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionSection {
    pub candidates: Vec<String>,
    #[serde(default)]
    pub selection: Selection,
    /// Drop candidates that were screened and failed the cutoff.
    #[serde(default = "yes")]
    pub screened_only: bool,
    #[serde(default)]
    pub quantifications: Option<QuantificationSet>,
    /// Predictors for CATREG; its quantifications feed the regression.
    #[serde(default)]
    pub catreg: Vec<(String, Scaling)>,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecalibrationSection {
    /// Variables wrapped by an agency besides the categorical terms.
    #[serde(default)]
    pub variables: Vec<String>,
    #[serde(default)]
    pub config: RecalibrationConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    pub k_values: Vec<usize>,
    pub train_fractions: Vec<f64>,
    pub repetitions: usize,
    pub mode: RetrainMode,
    pub pred_levels: Vec<f64>,
    pub min_pred_rows: usize,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        EvaluationSection {
            k_values: vec![8, 4],
            train_fractions: vec![0.6, 0.7, 0.8],
            repetitions: 10,
            mode: RetrainMode::RefitRegression,
            pred_levels: vec![0.25],
            min_pred_rows: 10,
        }
    }
}

/// JSON pipeline configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// CSV path, relative to the config file. Absent means synthetic data.
    #[serde(default)]
    pub data: Option<String>,
    #[serde(default)]
    pub synthetic: Option<SynthConfig>,
    /// Required for CSV data; synthetic data brings its own.
    #[serde(default)]
    pub schema: Option<Vec<VariableSpec>>,
    #[serde(default)]
    pub filters: Vec<FilterRule>,
    #[serde(default)]
    pub merges: Vec<MergeRule>,
    pub response: String,
    #[serde(default)]
    pub screening: ScreeningConfig,
    #[serde(default)]
    pub tree: Option<TreeSection>,
    pub regression: RegressionSection,
    #[serde(default)]
    pub recalibration: RecalibrationSection,
    #[serde(default)]
    pub evaluation: EvaluationSection,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output_dir: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Prepare,
    Screen,
    Tree,
    Fit,
    Recalibrate,
    Evaluate,
    Synth,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Prepare,
        Stage::Screen,
        Stage::Tree,
        Stage::Fit,
        Stage::Recalibrate,
        Stage::Evaluate,
        Stage::Synth,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Prepare => "prepare",
            Stage::Screen => "screen",
            Stage::Tree => "tree",
            Stage::Fit => "fit",
            Stage::Recalibrate => "recalibrate",
            Stage::Evaluate => "evaluate",
            Stage::Synth => "synth",
        }
    }
}

impl FromStr for Stage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL.into_iter().find(|st| st.name() == s).ok_or_else(|| {
            let valid: Vec<&str> = Stage::ALL.iter().map(|s| s.name()).collect();
            Error::Config(format!("unknown stage '{s}'; valid stages: {}", valid.join(" | ")))
        })
    }
}

/// A failure tagged with the step that produced it.
#[derive(Debug)]
pub struct PipelineError {
    pub step: &'static str,
    pub error: Error,
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "step '{}' failed: {}", self.step, self.error)
    }
}

impl std::error::Error for PipelineError {}

trait StepContext<T> {
    fn step(self, step: &'static str) -> std::result::Result<T, PipelineError>;
}

impl<T> StepContext<T> for Result<T> {
    fn step(self, step: &'static str) -> std::result::Result<T, PipelineError> {
        self.map_err(|error| PipelineError { step, error })
    }
}

type StepResult<T> = std::result::Result<T, PipelineError>;

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub config_path: PathBuf,
    pub data: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    /// `None` runs everything except `synth`.
    pub stage: Option<Stage>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub data_source: String,
    pub generator: Option<SynthMetadata>,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataSection {
    pub rows_loaded: usize,
    pub rows_after_filters: usize,
    pub rows_analyzed: usize,
    pub summary: SummaryReport,
    pub qq_correlation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScreeningSection {
    pub alpha: f64,
    pub selected: Vec<String>,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelTreeSection {
    pub algorithm: String,
    pub leaf_count: usize,
    pub variables: Vec<TreeVariable>,
    pub tree: ModelTree,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecalibrationReport {
    pub variables: Vec<String>,
    pub initial_quantifications: QuantificationSet,
    pub recalibrated_quantifications: QuantificationSet,
    pub nfas: Vec<Nfa<f64>>,
    pub trace: TrainingTrace,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvSection {
    pub k: usize,
    pub seed: u64,
    pub fold_assignment: Vec<usize>,
    pub report: ExperimentReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalModel {
    pub formula: String,
    pub model: LinearModel,
}

/// Everything a run produced. Absent sections were not computed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub provenance: Provenance,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_summary: Option<DataSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table1_correlations: Option<Vec<CorrelationResult64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table2_anova: Option<Vec<AnovaResult64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table3_multiple_comparisons: Option<Vec<TukeyTable>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub screening: Option<ScreeningSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_tree: Option<ModelTreeSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table4_ols: Option<LinearModel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table5_stepwise: Option<StepwiseTrace>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table6_predictor_correlations: Option<Vec<PairCorrelation>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub catreg: Option<CatregFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_model: Option<FinalModel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recalibration: Option<RecalibrationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resubstitution: Option<ExperimentReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table7_8_cross_validation: Option<Vec<CvSection>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table9_random_splits: Option<Vec<ExperimentReport>>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub fixed_regression_note: Vec<String>,
}

/// Model artifact: the fitted regression and its codings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub formula: String,
    pub model: LinearModel,
    pub quantifications: std::collections::BTreeMap<String, indexmap::IndexMap<String, f64>>,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub summary: String,
    pub report: Report,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Reads and validates a config file. Returns the parsed config and its raw bytes.
pub fn load_config(path: &Path) -> Result<(PipelineConfig, Vec<u8>)> {
    let raw = fs::read(path).map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    let cfg: PipelineConfig =
        serde_json::from_slice(&raw).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok((cfg, raw))
}

impl PipelineConfig {
    pub fn schema(&self) -> Result<Vec<VariableSpec>> {
        match (&self.schema, &self.data) {
            (Some(s), _) => Ok(s.clone()),
            (None, None) => Ok(synthetic_schema()),
            (None, Some(_)) => Err(Error::Config("CSV data needs a 'schema'".into())),
        }
    }

    /// Checks that every referenced variable exists and thresholds are sane.
    pub fn validate(&self) -> Result<()> {
        let schema = self.schema()?;
        crate::dataset::validate_schema(&schema)?;
        let known = |v: &str, what: &str| -> Result<()> {
            if schema.iter().any(|s| s.name == v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{what} references unknown variable '{v}'")))
            }
        };
        known(&self.response, "response")?;
        for f in &self.filters {
            known(&f.variable, "filter")?;
        }
        for m in &self.merges {
            known(&m.variable, "merge")?;
        }
        for v in self
            .screening
            .numeric
            .iter()
            .chain(&self.screening.categorical)
            .chain(&self.screening.nominal_numeric)
        {
            known(v, "screening")?;
        }
        if let Some(t) = &self.tree {
            for v in &t.predictors {
                known(v, "tree")?;
            }
        }
        for v in &self.regression.candidates {
            known(v, "regression")?;
        }
        for (v, _) in &self.regression.catreg {
            known(v, "catreg")?;
        }
        for v in &self.recalibration.variables {
            known(v, "recalibration")?;
        }
        if !(self.screening.alpha > 0.0 && self.screening.alpha < 1.0) {
            return Err(Error::Config(format!("screening alpha must be in (0, 1), got {}", self.screening.alpha)));
        }
        if let Selection::Stepwise { p_enter, p_remove } = self.regression.selection {
            if !(0.0 < p_enter && p_enter <= p_remove && p_remove < 1.0) {
                return Err(Error::Config(format!(
                    "stepwise thresholds need 0 < p_enter ({p_enter}) <= p_remove ({p_remove}) < 1"
                )));
            }
        }
        self.recalibration.config.validate()?;
        if let Some(s) = &self.synthetic {
            s.validate()?;
        }
        let e = &self.evaluation;
        if e.k_values.iter().any(|&k| k < 2) {
            return Err(Error::Config("every k in k_values must be at least 2".into()));
        }
        if e.train_fractions.iter().any(|&f| !(f > 0.0 && f < 1.0)) {
            return Err(Error::Config("train_fractions must lie in (0, 1)".into()));
        }
        if !e.train_fractions.is_empty() && e.repetitions == 0 {
            return Err(Error::Config("repetitions must be positive".into()));
        }
        Ok(())
    }
}

/// Prepared analysis data plus bookkeeping for the report.
struct Prepared {
    ds: Dataset,
    section: DataSection,
    qq_csv: String,
}

struct Runner {
    cfg: PipelineConfig,
    config_hash: String,
    seed: u64,
    data_path: Option<PathBuf>,
    out_dir: PathBuf,
    files: Vec<PathBuf>,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp{}",
        path.extension().and_then(|e| e.to_str()).unwrap_or(""),
        std::process::id()
    ));
    fs::write(&tmp, bytes).map_err(|e| Error::io(tmp.display().to_string(), e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path.display().to_string(), e))
}

fn to_json<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(v)?;
    out.push(b'\n');
    Ok(out)
}

impl Runner {
    fn new(opts: &RunOptions) -> Result<Self> {
        let (cfg, raw) = load_config(&opts.config_path)?;
        cfg.validate()?;
        let base = opts.config_path.parent().map(Path::to_path_buf).unwrap_or_default();
        let data_path = match (&opts.data, &cfg.data) {
            (Some(p), _) => Some(p.clone()),
            (None, Some(p)) => Some(base.join(p)),
            (None, None) => None,
        };
        if data_path.is_some() && cfg.schema.is_none() && cfg.data.is_some() {
            return Err(Error::Config("CSV data needs a 'schema'".into()));
        }
        let seed = opts
            .seed
            .or(cfg.seed)
            .ok_or_else(|| Error::Config("a seed is required (config 'seed' or --seed)".into()))?;
        let out_dir = opts
            .out_dir
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .or_else(|| cfg.output_dir.as_ref().map(|d| base.join(d)))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
        fs::create_dir_all(&out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
        Ok(Runner {
            config_hash: sha256_hex(&raw),
            cfg,
            seed,
            data_path,
            out_dir,
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.out_dir.join(name);
        write_atomic(&path, bytes)?;
        self.files.push(path);
        Ok(())
    }

    fn synth_config(&self) -> SynthConfig {
        self.cfg.synthetic.clone().unwrap_or_default()
    }

    fn synth_seed(&self) -> u64 {
        derive_seed(self.seed, 1)
    }

    /// Raw data and, for synthetic runs, the generator metadata.
    fn load_raw(&self) -> Result<(Dataset, String, Option<SynthMetadata>)> {
        let schema = self.cfg.schema()?;
        match &self.data_path {
            Some(p) => {
                let f = fs::File::open(p).map_err(|e| Error::io(p.display().to_string(), e))?;
                Ok((load_csv(f, &schema)?, p.display().to_string(), None))
            }
            None => {
                let out = generate_synthetic(&self.synth_config(), self.synth_seed())?;
                Ok((out.dataset, "synthetic".into(), Some(out.metadata)))
            }
        }
    }

    fn analysis_vars(&self) -> Vec<String> {
        let mut vars = vec![self.cfg.response.clone()];
        let s = &self.cfg.screening;
        let extra = s
            .numeric
            .iter()
            .chain(&s.categorical)
            .chain(&s.nominal_numeric)
            .chain(&self.cfg.regression.candidates)
            .chain(self.cfg.tree.iter().flat_map(|t| t.predictors.iter()))
            .chain(self.cfg.regression.catreg.iter().map(|(v, _)| v))
            .chain(&self.cfg.recalibration.variables);
        for v in extra {
            if !vars.contains(v) {
                vars.push(v.clone());
            }
        }
        vars
    }

    fn prepare(&self) -> Result<(Prepared, Provenance)> {
        let (raw, source, generator) = self.load_raw()?;
        let rows_loaded = raw.row_count();
        let kept = filter_indices(&raw, &self.cfg.filters)?;
        let mut ds = raw.select_rows(&kept);
        let rows_after_filters = ds.row_count();
        for m in &self.cfg.merges {
            ds = merge_dataset_categories(&ds, &m.variable, &m.pairs)?;
        }
        // listwise deletion over every analysed variable, then transforms
        let vars = self.analysis_vars();
        let idx: Vec<usize> = vars.iter().map(|v| ds.index_of(v)).collect::<Result<_>>()?;
        let complete: Vec<usize> = (0..ds.row_count())
            .filter(|&r| idx.iter().all(|&j| !ds.columns()[j].is_missing(r)))
            .collect();
        let ds = ds.select_rows(&complete);
        let ds = apply_transforms(&ds).map_err(|e| match e {
            Error::Domain {
                column,
                row,
                value,
                transform,
            } => Error::Domain {
                column,
                row: kept[complete[row - 1]] + 1,
                value,
                transform,
            },
            other => other,
        })?;
        let qq = qq_normal(ds.numeric(&self.cfg.response)?)?;
        let mut notes = vec![
            "model tree: M5-style standard-deviation-reduction reconstruction".to_string(),
            "rows with a missing value in any analysed variable are dropped (listwise deletion)".to_string(),
            "numeric variables screened as nominal use one group per distinct value".to_string(),
            "recalibration trains agency consequents on modeling-scale (ln) error; MMRE is on raw counts"
                .to_string(),
        ];
        if !self.cfg.regression.catreg.is_empty() {
            notes.push("CATREG quantifications are estimated once on all analysed rows".into());
        }
        let provenance = Provenance {
            tool: "defectcal".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_sha256: self.config_hash.clone(),
            seed: self.seed,
            data_source: source,
            generator,
            notes,
        };
        let section = DataSection {
            rows_loaded,
            rows_after_filters,
            rows_analyzed: ds.row_count(),
            summary: summarize(&ds),
            qq_correlation: qq.correlation,
        };
        Ok((
            Prepared {
                ds,
                section,
                qq_csv: qq.to_csv(),
            },
            provenance,
        ))
    }

    fn screening_config(&self, ds: &Dataset) -> ScreeningConfig {
        let mut s = self.cfg.screening.clone();
        if s.numeric.is_empty() && s.categorical.is_empty() && s.nominal_numeric.is_empty() {
            for v in ds.schema() {
                if v.role != Role::Predictor {
                    continue;
                }
                if v.is_categorical() {
                    s.categorical.push(v.name.clone());
                } else {
                    s.numeric.push(v.name.clone());
                }
            }
        }
        s
    }

    fn candidates(&self, screening: &ScreeningReport) -> Vec<String> {
        let screened: Vec<&String> = screening
            .correlations
            .iter()
            .map(|c| &c.variable)
            .chain(screening.anova.iter().map(|a| &a.variable))
            .collect();
        self.cfg
            .regression
            .candidates
            .iter()
            .filter(|c| {
                !self.cfg.regression.screened_only || !screened.contains(c) || screening.selected.contains(c)
            })
            .cloned()
            .collect()
    }

    fn catreg(&self, ds: &Dataset) -> Result<Option<CatregFit>> {
        if self.cfg.regression.catreg.is_empty() {
            return Ok(None);
        }
        catreg_fit(ds, &self.cfg.response, &self.cfg.regression.catreg).map(Some)
    }

    fn quantifications(&self, catreg: Option<&CatregFit>) -> Option<QuantificationSet> {
        let mut set = self.cfg.regression.quantifications.clone().unwrap_or_default();
        if let Some(c) = catreg {
            for q in &c.quantifications {
                set.insert(q.clone());
            }
        }
        (!set.0.is_empty()).then_some(set)
    }

    fn tree(&self, ds: &Dataset, candidates: &[String], q: Option<&QuantificationSet>) -> Result<ModelTreeSection> {
        let section = self.cfg.tree.clone().unwrap_or(TreeSection {
            predictors: Vec::new(),
            params: TreeParams::default(),
        });
        let predictors = if section.predictors.is_empty() {
            candidates
                .iter()
                .filter(|c| {
                    ds.spec(c)
                        .map(|s| s.kind != Kind::Categorical || q.is_some_and(|q| q.get(c).is_some()))
                        .unwrap_or(false)
                })
                .cloned()
                .collect()
        } else {
            section.predictors
        };
        let tree = build_model_tree(ds, &self.cfg.response, &predictors, section.params, q)?;
        Ok(ModelTreeSection {
            algorithm: "M5-style model tree (SDR splits, OLS leaves, no pruning)".into(),
            leaf_count: tree.root.leaf_count(),
            variables: tree_variable_report(&tree),
            tree,
        })
    }

    fn plan(&self, candidates: Vec<String>, q: Option<QuantificationSet>) -> ModelingPlan {
        ModelingPlan {
            response: self.cfg.response.clone(),
            candidates,
            selection: self.cfg.regression.selection.clone(),
            quantifications: q,
            recalibrate: self.cfg.recalibration.variables.clone(),
            recalibration: self.cfg.recalibration.config,
            pred_levels: self.cfg.evaluation.pred_levels.clone(),
            min_pred_rows: self.cfg.evaluation.min_pred_rows,
        }
    }

    fn fit(&self, ds: &Dataset, plan: &ModelingPlan) -> Result<(LinearModel, Option<StepwiseTrace>)> {
        match plan.selection {
            Selection::Stepwise { p_enter, p_remove } => {
                let trace = stepwise_fit(
                    ds,
                    &plan.response,
                    &plan.candidates,
                    StepwiseConfig { p_enter, p_remove },
                    plan.quantifications.as_ref(),
                )?;
                Ok((trace.final_model.clone(), Some(trace)))
            }
            Selection::All => Ok((
                ols_fit(ds, &plan.response, &plan.candidates, plan.quantifications.as_ref())?,
                None,
            )),
        }
    }

    fn model_artifact(model: &LinearModel) -> ModelArtifact {
        ModelArtifact {
            formula: model.formula(),
            model: model.clone(),
            quantifications: export_quantifications(&model.codings),
        }
    }

    fn evaluate(
        &self,
        ds: &Dataset,
        plan: &ModelingPlan,
    ) -> Result<(ExperimentReport, Vec<CvSection>, Vec<ExperimentReport>, RecalibrationReport)> {
        let (fitted, resub) = resubstitution(ds, plan)?;
        let mode = self.cfg.evaluation.mode;
        let mut cv = Vec::new();
        for (i, &k) in self.cfg.evaluation.k_values.iter().enumerate() {
            let seed = derive_seed(self.seed, 100 + i as u64);
            let report = cross_validate(ds, plan, k, seed, mode)?;
            cv.push(CvSection {
                k,
                seed,
                fold_assignment: kfold_plan(ds.row_count(), k, seed)?.assignment,
                report,
            });
        }
        let mut splits = Vec::new();
        for (i, &f) in self.cfg.evaluation.train_fractions.iter().enumerate() {
            let seed = derive_seed(self.seed, 200 + i as u64);
            splits.push(random_split_experiment(ds, plan, f, self.cfg.evaluation.repetitions, seed, mode)?);
        }
        let vars = fitted.nfas.iter().map(|n| n.variable.clone()).collect();
        let recal = RecalibrationReport {
            variables: vars,
            recalibrated_quantifications: recalibrated_quantifications(&fitted.initial_quantifications, &fitted.nfas),
            initial_quantifications: fitted.initial_quantifications,
            nfas: fitted.nfas,
            trace: fitted.trace,
        };
        Ok((resub, cv, splits, recal))
    }
}

fn empty_report(provenance: Provenance) -> Report {
    Report {
        provenance,
        data_summary: None,
        table1_correlations: None,
        table2_anova: None,
        table3_multiple_comparisons: None,
        screening: None,
        model_tree: None,
        table4_ols: None,
        table5_stepwise: None,
        table6_predictor_correlations: None,
        catreg: None,
        final_model: None,
        recalibration: None,
        resubstitution: None,
        table7_8_cross_validation: None,
        table9_random_splits: None,
        fixed_regression_note: Vec::new(),
    }
}

fn fmt_list(v: &[String]) -> String {
    if v.is_empty() {
        "(none)".into()
    } else {
        v.join(", ")
    }
}

/// One-screen summary built only from values stored in the report.
pub fn render_summary(r: &Report) -> String {
    let mut lines = vec![format!(
        "defectcal {} seed {} config {}",
        r.provenance.version,
        r.provenance.seed,
        &r.provenance.config_sha256[..12]
    )];
    if let Some(d) = &r.data_summary {
        lines.push(format!(
            "data: {} rows loaded, {} after filters, {} analysed; QQ r = {:.4}",
            d.rows_loaded, d.rows_after_filters, d.rows_analyzed, d.qq_correlation
        ));
    }
    if let Some(s) = &r.screening {
        lines.push(format!("screening (alpha {}): selected {}", s.alpha, fmt_list(&s.selected)));
    }
    if let Some(t) = &r.model_tree {
        let splits: Vec<String> = t
            .variables
            .iter()
            .filter(|v| v.role == crate::modeltree::TreeRole::Split)
            .map(|v| v.variable.clone())
            .collect();
        lines.push(format!("model tree: {} leaves, split variables {}", t.leaf_count, fmt_list(&splits)));
    }
    if let Some(m) = &r.final_model {
        lines.push(format!("model: {} (R2 {:.4}, n {})", m.formula, m.model.r_squared, m.model.n));
    }
    if let Some(e) = &r.resubstitution {
        lines.push(format!(
            "all-data MMRE: regression {:.4}, recalibrated {:.4}, improvement {:.2}%",
            e.average.regression_mmre, e.average.recalibrated_mmre, e.average.improvement_pct
        ));
    }
    for c in r.table7_8_cross_validation.iter().flatten() {
        lines.push(format!(
            "{}-fold CV MMRE: regression {:.4}, recalibrated {:.4}, improvement {:.2}%",
            c.k, c.report.average.regression_mmre, c.report.average.recalibrated_mmre, c.report.average.improvement_pct
        ));
    }
    for s in r.table9_random_splits.iter().flatten() {
        lines.push(format!(
            "{}: improvement {:.2}% over {} runs",
            s.name,
            s.average.improvement_pct,
            s.rows.len()
        ));
    }
    let mut out = lines.join("\n");
    out.push('\n');
    out
}

fn finish(mut runner: Runner, report: Report, report_name: &str) -> StepResult<RunOutcome> {
    let bytes = to_json(&report).step("write")?;
    runner.write(report_name, &bytes).step("write")?;
    Ok(RunOutcome {
        out_dir: runner.out_dir,
        files: runner.files,
        summary: render_summary(&report),
        report,
    })
}

/// Runs the whole procedure, or a single stage when `opts.stage` is set.
pub fn run(opts: &RunOptions) -> StepResult<RunOutcome> {
    let mut runner = Runner::new(opts).step("config")?;

    if opts.stage == Some(Stage::Synth) {
        let out = generate_synthetic(&runner.synth_config(), runner.synth_seed()).step("synth")?;
        let csv = out.dataset.to_csv().step("synth")?;
        runner.write("data.csv", &csv).step("synth")?;
        let meta = to_json(&out.metadata).step("synth")?;
        runner.write("synth_metadata.json", &meta).step("synth")?;
        let provenance = Provenance {
            tool: "defectcal".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_sha256: runner.config_hash.clone(),
            seed: runner.seed,
            data_source: "synthetic".into(),
            generator: Some(out.metadata),
            notes: Vec::new(),
        };
        return finish(runner, empty_report(provenance), "stage-synth.json");
    }

    let (prepared, provenance) = runner.prepare().step("prepare")?;
    let mut report = empty_report(provenance);
    let ds = &prepared.ds;
    let only = opts.stage;
    let wants = |s: Stage| only.is_none() || only == Some(s);

    if wants(Stage::Prepare) {
        runner.write("qq.csv", prepared.qq_csv.as_bytes()).step("prepare")?;
        let csv = ds.to_csv().step("prepare")?;
        runner.write("prepared.csv", &csv).step("prepare")?;
        report.data_summary = Some(prepared.section.clone());
        if only == Some(Stage::Prepare) {
            return finish(runner, report, "stage-prepare.json");
        }
    }

    let screening_cfg = runner.screening_config(ds);
    let screening = screen(ds, &runner.cfg.response, &screening_cfg).step("screen")?;
    if wants(Stage::Screen) {
        report.table1_correlations = Some(screening.correlations.clone());
        report.table2_anova = Some(screening.anova.clone());
        report.table3_multiple_comparisons = Some(screening.multiple_comparisons.clone());
        report.screening = Some(ScreeningSection {
            alpha: screening.alpha,
            selected: screening.selected.clone(),
            notes: screening.notes.clone(),
        });
        if only == Some(Stage::Screen) {
            return finish(runner, report, "stage-screen.json");
        }
    }

    let candidates = runner.candidates(&screening);
    let catreg = runner.catreg(ds).step("fit")?;
    let quantifications = runner.quantifications(catreg.as_ref());

    if wants(Stage::Tree) {
        let tree = runner.tree(ds, &candidates, quantifications.as_ref()).step("tree")?;
        runner.write("tree.txt", tree_to_text(&tree.tree).as_bytes()).step("tree")?;
        report.model_tree = Some(tree);
        if only == Some(Stage::Tree) {
            return finish(runner, report, "stage-tree.json");
        }
    }

    let plan = runner.plan(candidates.clone(), quantifications.clone());
    let (model, trace) = runner.fit(ds, &plan).step("fit")?;
    if wants(Stage::Fit) {
        let numeric: Vec<String> = candidates
            .iter()
            .filter(|c| matches!(ds.column(c), Ok(Column::Numeric(_))))
            .cloned()
            .collect();
        report.table4_ols = Some(ols_fit(ds, &runner.cfg.response, &candidates, quantifications.as_ref()).step("fit")?);
        report.table5_stepwise = trace;
        report.table6_predictor_correlations = Some(pairwise_spearman(ds, &numeric).step("fit")?);
        report.catreg = catreg;
        report.final_model = Some(FinalModel {
            formula: model.formula(),
            model: model.clone(),
        });
        let artifact = to_json(&Runner::model_artifact(&model)).step("fit")?;
        runner.write("model.json", &artifact).step("fit")?;
        if only == Some(Stage::Fit) {
            return finish(runner, report, "stage-fit.json");
        }
    }

    if only == Some(Stage::Recalibrate) {
        // reuse a fitted model from the output directory when one is there
        let model = match fs::read(runner.out_dir.join("model.json")) {
            Ok(bytes) => {
                serde_json::from_slice::<ModelArtifact>(&bytes)
                    .map_err(|e| Error::Config(format!("model.json: {e}")))
                    .step("recalibrate")?
                    .model
            }
            Err(_) => model,
        };
        let fitted = crate::evaluation::cv::recalibrate(ds, &plan, model).step("recalibrate")?;
        let recal = RecalibrationReport {
            variables: fitted.nfas.iter().map(|n| n.variable.clone()).collect(),
            recalibrated_quantifications: recalibrated_quantifications(&fitted.initial_quantifications, &fitted.nfas),
            initial_quantifications: fitted.initial_quantifications,
            nfas: fitted.nfas,
            trace: fitted.trace,
        };
        let q = to_json(&export_quantifications(&recal.recalibrated_quantifications)).step("recalibrate")?;
        runner.write("quantifications.json", &q).step("recalibrate")?;
        report.recalibration = Some(recal);
        return finish(runner, report, "stage-recalibrate.json");
    }

    let (resub, cv, splits, recal) = runner.evaluate(ds, &plan).step("evaluate")?;
    if only.is_none() {
        let q = to_json(&export_quantifications(&recal.recalibrated_quantifications)).step("recalibrate")?;
        runner.write("quantifications.json", &q).step("recalibrate")?;
        report.recalibration = Some(recal);
    }
    report.resubstitution = Some(resub);
    report.table7_8_cross_validation = Some(cv);
    report.table9_random_splits = Some(splits);
    let name = if only.is_none() { "report.json" } else { "stage-evaluate.json" };
    finish(runner, report, name)
}

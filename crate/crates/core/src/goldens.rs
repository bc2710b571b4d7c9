//! Golden fixtures.
//!
//! A manifest lists fixtures. Each names a command that regenerates a JSON
//! value and the fields (JSON pointers) expected in it, each with a tolerance
//! and a `basis` saying where the expected value comes from.

use std::fs;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

use crate::dataset::{Row, Value};
use crate::evaluation::synth::reference_model;
use crate::evaluation::{mmre, pred_at};
use crate::pipeline::{run, RunOptions};
use crate::regression::model_predict;
use crate::{Error, Result};

/// Where an expected value comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    /// Quoted from the published study.
    Published,
    /// Follows from a definition or by hand arithmetic.
    Definitional,
    /// Measured from a seeded run of this tool.
    Computed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FixtureCommand {
    /// Reference model prediction on raw inputs; output `{"defects": ..}`.
    ReferencePrediction { fp: f64, vaf: f64, dev_type: String },
    /// Output `{"mmre": .., "pred": ..}`.
    Metrics {
        actuals: Vec<f64>,
        predictions: Vec<f64>,
        level: f64,
    },
    /// Full pipeline run; output is report.json. `config` is relative to the manifest.
    Pipeline { config: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expected {
    pub value: Json,
    #[serde(default)]
    pub tolerance: f64,
    pub basis: Basis,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoldenFixture {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub command: FixtureCommand,
    /// JSON pointer into the command output → expected value.
    pub expected: IndexMap<String, Expected>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoldenManifest {
    pub fixtures: Vec<GoldenFixture>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FieldCheck {
    pub field: String,
    pub expected: Json,
    pub actual: Option<Json>,
    pub delta: Option<f64>,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FixtureOutcome {
    pub name: String,
    pub passed: bool,
    pub checks: Vec<FieldCheck>,
    pub error: Option<String>,
}

impl FixtureOutcome {
    pub fn failures(&self) -> impl Iterator<Item = &FieldCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

pub fn load_manifest(path: &Path) -> Result<GoldenManifest> {
    let raw = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let m: GoldenManifest =
        serde_json::from_slice(&raw).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    for f in &m.fixtures {
        if f.expected.is_empty() {
            return Err(Error::Config(format!("golden '{}' has no expected fields", f.name)));
        }
        for (field, e) in &f.expected {
            if !(e.tolerance >= 0.0) {
                return Err(Error::Config(format!("golden '{}' field {field}: negative tolerance", f.name)));
            }
        }
    }
    Ok(m)
}

fn scratch_dir(name: &str) -> PathBuf {
    let nanos = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_nanos())
        .unwrap_or(0);
    std::env::temp_dir().join(format!("defectcal-golden-{}-{}-{nanos}", std::process::id(), name.replace('/', "_")))
}

/// Regenerates the output of a fixture command.
pub fn run_command(cmd: &FixtureCommand, base: &Path, name: &str) -> Result<Json> {
    match cmd {
        FixtureCommand::ReferencePrediction { fp, vaf, dev_type } => {
            if !(*fp > 0.0) {
                return Err(Error::Config(format!("fp must be positive, got {fp}")));
            }
            let row: Row = [
                ("fp".to_string(), Value::Number(fp.ln())),
                ("vaf".to_string(), Value::Number(*vaf)),
                ("dev_type".to_string(), Value::Category(dev_type.clone())),
            ]
            .into_iter()
            .collect();
            Ok(json!({ "defects": model_predict(&reference_model(), None, &row, true)? }))
        }
        FixtureCommand::Metrics {
            actuals,
            predictions,
            level,
        } => Ok(json!({
            "mmre": mmre(actuals, predictions)?,
            "pred": pred_at(actuals, predictions, *level)?,
        })),
        FixtureCommand::Pipeline { config } => {
            let out = scratch_dir(name);
            let res = run(&RunOptions {
                config_path: base.join(config),
                out_dir: Some(out.clone()),
                ..RunOptions::default()
            });
            let report = res.map_err(|e| e.error).and_then(|o| serde_json::to_value(&o.report).map_err(Error::from));
            let _ = fs::remove_dir_all(&out);
            report
        }
    }
}

/// Compares one regenerated field against its golden value.
pub fn check_field(field: &str, expected: &Expected, output: &Json) -> FieldCheck {
    let actual = output.pointer(field).cloned();
    let (delta, passed) = match (&expected.value, &actual) {
        (Json::Number(e), Some(Json::Number(a))) => {
            let (e, a) = (e.as_f64().unwrap_or(f64::NAN), a.as_f64().unwrap_or(f64::NAN));
            let d = (a - e).abs();
            (Some(a - e), d <= expected.tolerance)
        }
        (e, Some(a)) => (None, e == a),
        (_, None) => (None, false),
    };
    FieldCheck {
        field: field.to_string(),
        expected: expected.value.clone(),
        actual,
        delta,
        tolerance: expected.tolerance,
        passed,
    }
}

pub fn verify_fixture(f: &GoldenFixture, base: &Path) -> FixtureOutcome {
    match run_command(&f.command, base, &f.name) {
        Ok(output) => {
            let checks: Vec<FieldCheck> = f.expected.iter().map(|(k, e)| check_field(k, e, &output)).collect();
            FixtureOutcome {
                name: f.name.clone(),
                passed: checks.iter().all(|c| c.passed),
                checks,
                error: None,
            }
        }
        Err(e) => FixtureOutcome {
            name: f.name.clone(),
            passed: false,
            checks: Vec::new(),
            error: Some(e.to_string()),
        },
    }
}

/// Re-runs every fixture of the manifest at `path`.
pub fn verify_goldens(path: &Path) -> Result<Vec<FixtureOutcome>> {
    let manifest = load_manifest(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(manifest.fixtures.iter().map(|f| verify_fixture(f, &base)).collect())
}

/// One line per fixture, then one per failing field.
pub fn render_outcomes(outcomes: &[FixtureOutcome]) -> String {
    let mut s = String::new();
    for o in outcomes {
        s.push_str(&format!("{} {}\n", if o.passed { "PASS" } else { "FAIL" }, o.name));
        if let Some(e) = &o.error {
            s.push_str(&format!("    error: {e}\n"));
        }
        for c in o.failures() {
            let actual = c.actual.as_ref().map_or("(absent)".to_string(), Json::to_string);
            match c.delta {
                Some(d) => s.push_str(&format!(
                    "    {}: expected {} got {} (delta {d:e}, tolerance {})\n",
                    c.field, c.expected, actual, c.tolerance
                )),
                None => s.push_str(&format!("    {}: expected {} got {}\n", c.field, c.expected, actual)),
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp(v: f64, tol: f64) -> Expected {
        Expected {
            value: json!(v),
            tolerance: tol,
            basis: Basis::Definitional,
        }
    }

    #[test]
    fn metrics_command() {
        let out = run_command(
            &FixtureCommand::Metrics {
                actuals: vec![100.0, 50.0, 20.0, 10.0],
                predictions: vec![120.0, 40.0, 30.0, 10.0],
                level: 0.25,
            },
            Path::new("."),
            "m",
        )
        .unwrap();
        assert!(check_field("/mmre", &exp(0.225, 1e-12), &out).passed);
        assert!(check_field("/pred", &exp(0.75, 0.0), &out).passed);
    }

    #[test]
    fn drift_names_field_and_delta() {
        let out = json!({"a": 1.5});
        let c = check_field("/a", &exp(1.0, 0.1), &out);
        assert!(!c.passed);
        assert_eq!(c.delta, Some(0.5));
        let missing = check_field("/b", &exp(1.0, 0.1), &out);
        assert!(!missing.passed && missing.actual.is_none());
    }

    #[test]
    fn untagged_golden_rejected() {
        let raw = r#"{"fixtures":[{"name":"x","command":{"kind":"metrics","actuals":[1],"predictions":[1],"level":0.25},
                     "expected":{"/mmre":{"value":0}}}]}"#;
        assert!(serde_json::from_str::<GoldenManifest>(raw).is_err());
    }
}

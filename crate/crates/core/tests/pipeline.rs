use std::fs;
use std::path::{Path, PathBuf};

use defectcal::goldens::{verify_goldens, FixtureOutcome};
use defectcal::pipeline::{run, RunOptions, Stage};
use defectcal::{Error, ErrorClass};
use serde_json::Value as Json;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn opts(out: &Path, stage: Option<Stage>) -> RunOptions {
    RunOptions {
        config_path: fixtures().join("synthetic.json"),
        out_dir: Some(out.to_path_buf()),
        stage,
        ..Default::default()
    }
}

fn numbers(v: &Json, acc: &mut Vec<f64>) {
    match v {
        Json::Number(n) => acc.extend(n.as_f64()),
        Json::Array(a) => a.iter().for_each(|x| numbers(x, acc)),
        Json::Object(o) => o.values().for_each(|x| numbers(x, acc)),
        _ => {}
    }
}

fn decimals(tok: &str) -> i32 {
    match tok.split_once('.') {
        Some((_, frac)) if !tok.contains('e') => frac.len() as i32,
        _ => 0,
    }
}

/// Writes the bundled synthetic CSV into `dir` and returns its rows.
fn synth_rows(dir: &Path) -> Vec<Vec<String>> {
    run(&opts(dir, Some(Stage::Synth))).unwrap();
    fs::read_to_string(dir.join("data.csv"))
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn write_rows(path: &Path, rows: &[Vec<String>]) {
    let body: Vec<String> = rows.iter().map(|r| r.join(",")).collect();
    fs::write(path, body.join("\n") + "\n").unwrap();
}

#[test]
fn summary_numbers_appear_in_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let outcome = run(&opts(dir.path(), None)).unwrap();
    let report: Json = serde_json::from_slice(&fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    let mut pool = Vec::new();
    numbers(&report, &mut pool);

    let mut checked = 0;
    for line in outcome.summary.lines().skip(1) {
        for raw in line.split(|c: char| c.is_whitespace() || ",;()=*".contains(c)) {
            let tok = raw.trim_end_matches(['%', ':']);
            let Ok(x) = tok.parse::<f64>() else { continue };
            let half = 0.5 * 10f64.powi(-decimals(tok));
            let hit = pool.iter().any(|&p| {
                let near = |q: f64| {
                    if tok.contains('e') {
                        (q - x).abs() <= 1e-3 * x.abs()
                    } else {
                        (q - x).abs() <= half + 1e-12
                    }
                };
                near(p) || near(-p) || near(100.0 * p)
            });
            assert!(hit, "'{tok}' in summary line '{line}' has no source in report.json");
            checked += 1;
        }
    }
    assert!(checked > 30, "only {checked} numbers checked");
}

#[test]
fn screen_stage_writes_only_screening_sections() {
    let dir = tempfile::tempdir().unwrap();
    let outcome = run(&opts(dir.path(), Some(Stage::Screen))).unwrap();
    let files: Vec<String> = outcome
        .files
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(files, vec!["stage-screen.json".to_string()]);
    let json: Json = serde_json::from_slice(&fs::read(dir.path().join("stage-screen.json")).unwrap()).unwrap();
    let mut present: Vec<&str> = json
        .as_object()
        .unwrap()
        .iter()
        .filter(|(_, v)| !v.is_null())
        .map(|(k, _)| k.as_str())
        .collect();
    present.sort_unstable();
    assert_eq!(
        present,
        ["provenance", "screening", "table1_correlations", "table2_anova", "table3_multiple_comparisons"]
    );
}

#[test]
fn runs_are_deterministic_for_a_seed() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run(&opts(a.path(), None)).unwrap();
    run(&opts(b.path(), None)).unwrap();
    for f in ["report.json", "model.json", "quantifications.json", "prepared.csv", "tree.txt"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let c = tempfile::tempdir().unwrap();
    run(&RunOptions { seed: Some(7), ..opts(c.path(), None) }).unwrap();
    assert_ne!(fs::read(a.path().join("report.json")).unwrap(), fs::read(c.path().join("report.json")).unwrap());
}

#[test]
fn missing_column_is_a_config_error_naming_it() {
    let dir = tempfile::tempdir().unwrap();
    let rows = synth_rows(dir.path());
    let drop = rows[0].iter().position(|h| h == "efforts").unwrap();
    let cut: Vec<Vec<String>> = rows
        .iter()
        .map(|r| r.iter().enumerate().filter(|(i, _)| *i != drop).map(|(_, c)| c.clone()).collect())
        .collect();
    let csv = dir.path().join("cut.csv");
    write_rows(&csv, &cut);
    let err = run(&RunOptions { data: Some(csv), ..opts(dir.path(), None) }).unwrap_err();
    assert_eq!(err.error.class(), ErrorClass::Config);
    assert!(err.to_string().contains("'efforts'"), "{err}");
}

#[test]
fn nonpositive_response_names_the_original_row() {
    let dir = tempfile::tempdir().unwrap();
    let mut rows = synth_rows(dir.path());
    let header = rows[0].clone();
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let (q, d, v) = (col("data_quality"), col("defects"), col("vaf"));
    // the 20th row that survives filtering, so filtered and original indices differ
    let target = (1..rows.len())
        .filter(|&i| matches!(rows[i][q].as_str(), "A" | "B") && !rows[i][d].is_empty() && !rows[i][v].is_empty())
        .nth(19)
        .unwrap();
    rows[target][d] = "0".into();
    let csv = dir.path().join("zero.csv");
    write_rows(&csv, &rows);
    let err = run(&RunOptions { data: Some(csv), ..opts(dir.path(), None) }).unwrap_err();
    match &err.error {
        Error::Domain { column, row, .. } => {
            assert_eq!(column, "defects");
            assert_eq!(*row, target);
        }
        other => panic!("expected a domain error, got {other}"),
    }
    assert_eq!(err.error.class(), ErrorClass::Data);
}

fn copy_goldens(dir: &Path) -> PathBuf {
    let text = fs::read_to_string(fixtures().join("goldens.json")).unwrap();
    fs::copy(fixtures().join("synthetic.json"), dir.join("synthetic.json")).unwrap();
    let path = dir.join("goldens.json");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn bundled_goldens_pass() {
    let outcomes = verify_goldens(&fixtures().join("goldens.json")).unwrap();
    assert!(outcomes.len() >= 4);
    for o in &outcomes {
        assert!(o.passed, "{}: {:?}", o.name, o.failures().collect::<Vec<_>>());
    }
}

#[test]
fn drifted_golden_fails_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = copy_goldens(dir.path());
    let mut manifest: Json = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
    let field = "/final_model/model/r_squared";
    let fixture = manifest["fixtures"]
        .as_array_mut()
        .unwrap()
        .iter_mut()
        .find(|f| f["expected"].get(field).is_some())
        .expect("a fixture pins r_squared");
    let slot = &mut fixture["expected"][field]["value"];
    *slot = Json::from(slot.as_f64().unwrap() + 0.01);
    fs::write(&path, serde_json::to_vec_pretty(&manifest).unwrap()).unwrap();

    let outcomes = verify_goldens(&path).unwrap();
    let failed: Vec<&FixtureOutcome> = outcomes.iter().filter(|o| !o.passed).collect();
    assert_eq!(failed.len(), 1);
    let fields: Vec<&str> = failed[0].failures().map(|c| c.field.as_str()).collect();
    assert_eq!(fields, vec![field]);
}

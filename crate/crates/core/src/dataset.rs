//! Typed project-record tables: CSV loading, selection filters, listwise
//! deletion and summaries.
//!
//! Missing values are encoded as the empty CSV cell and nothing else.
//! Category order is the pre-declared order when the schema lists
//! categories, otherwise first-seen order in the file.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::numerics::{mean, sample_sd};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Response,
    Predictor,
    Identifier,
    Excluded,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Numeric,
    Categorical,
    Binary,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    #[default]
    None,
    Ln,
    Ln1p,
}

impl Transform {
    pub fn inverse(self, v: f64) -> f64 {
        match self {
            Transform::None => v,
            Transform::Ln => v.exp(),
            Transform::Ln1p => v.exp_m1(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub name: String,
    pub role: Role,
    pub kind: Kind,
    #[serde(default)]
    pub transform: Transform,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
}

impl VariableSpec {
    pub fn numeric(name: &str, role: Role) -> Self {
        VariableSpec {
            name: name.to_string(),
            role,
            kind: Kind::Numeric,
            transform: Transform::None,
            categories: Vec::new(),
        }
    }

    pub fn categorical(name: &str, role: Role, categories: &[&str]) -> Self {
        VariableSpec {
            name: name.to_string(),
            role,
            kind: if categories.len() == 2 { Kind::Binary } else { Kind::Categorical },
            transform: Transform::None,
            categories: categories.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn with_transform(mut self, transform: Transform) -> Self {
        self.transform = transform;
        self
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, Kind::Categorical | Kind::Binary)
    }

    pub fn category_index(&self, label: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == label)
    }

    /// Category-count invariants; learned lists are checked after loading.
    fn check_categories(&self) -> Result<()> {
        if matches!(self.role, Role::Identifier | Role::Excluded) {
            return Ok(());
        }
        match self.kind {
            Kind::Binary if self.categories.len() != 2 => Err(Error::InvalidSchema(format!(
                "binary variable '{}' must have exactly 2 categories, has {}",
                self.name,
                self.categories.len()
            ))),
            Kind::Categorical if self.categories.len() < 2 => Err(Error::InvalidSchema(format!(
                "categorical variable '{}' needs at least 2 categories, has {}",
                self.name,
                self.categories.len()
            ))),
            Kind::Numeric if !self.categories.is_empty() => Err(Error::InvalidSchema(format!(
                "numeric variable '{}' cannot declare categories",
                self.name
            ))),
            _ => Ok(()),
        }
    }
}

/// Checks schema-level invariants. Category lists may still be empty here
/// (they are learned while loading).
pub fn validate_schema(schema: &[VariableSpec]) -> Result<()> {
    let responses = schema.iter().filter(|v| v.role == Role::Response).count();
    if responses != 1 {
        return Err(Error::InvalidSchema(format!(
            "schema must have exactly one response variable, found {responses}"
        )));
    }
    let mut seen = std::collections::HashSet::new();
    for v in schema {
        if !seen.insert(v.name.as_str()) {
            return Err(Error::InvalidSchema(format!("duplicate variable '{}'", v.name)));
        }
        if !v.categories.is_empty() {
            v.check_categories()?;
        }
        if v.transform != Transform::None && v.kind != Kind::Numeric {
            return Err(Error::InvalidSchema(format!(
                "transform on non-numeric variable '{}'",
                v.name
            )));
        }
    }
    Ok(())
}

/// One column of values; `None` marks a missing cell.
#[derive(Clone, Debug, PartialEq)]
pub enum Column {
    Numeric(Vec<Option<f64>>),
    /// Category indices into the variable's `categories`.
    Categorical(Vec<Option<usize>>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_missing(&self, row: usize) -> bool {
        match self {
            Column::Numeric(v) => v[row].is_none(),
            Column::Categorical(v) => v[row].is_none(),
        }
    }

    fn select(&self, rows: &[usize]) -> Column {
        match self {
            Column::Numeric(v) => Column::Numeric(rows.iter().map(|&r| v[r]).collect()),
            Column::Categorical(v) => Column::Categorical(rows.iter().map(|&r| v[r]).collect()),
        }
    }
}

/// A cell value addressed by variable name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Number(f64),
    Category(String),
    Missing,
}

/// One record, keyed by variable name.
pub type Row = BTreeMap<String, Value>;

/// Immutable table of project records.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    schema: Vec<VariableSpec>,
    columns: Vec<Column>,
    row_count: usize,
}

impl Dataset {
    /// Validates lengths, kinds and category indices.
    pub fn new(schema: Vec<VariableSpec>, columns: Vec<Column>) -> Result<Self> {
        validate_schema(&schema)?;
        if schema.len() != columns.len() {
            return Err(Error::InvalidSchema(format!(
                "{} variables but {} columns",
                schema.len(),
                columns.len()
            )));
        }
        let row_count = columns.first().map_or(0, Column::len);
        for (spec, col) in schema.iter().zip(&columns) {
            spec.check_categories()?;
            if col.len() != row_count {
                return Err(Error::InvalidSchema(format!(
                    "column '{}' has {} rows, expected {row_count}",
                    spec.name,
                    col.len()
                )));
            }
            match (spec.is_categorical(), col) {
                (false, Column::Numeric(_)) => {}
                (true, Column::Categorical(idx)) => {
                    if let Some(bad) = idx.iter().flatten().find(|&&i| i >= spec.categories.len()) {
                        return Err(Error::InvalidSchema(format!(
                            "column '{}' has category index {bad} out of range",
                            spec.name
                        )));
                    }
                }
                _ => {
                    return Err(Error::InvalidSchema(format!(
                        "column '{}' storage does not match its kind",
                        spec.name
                    )))
                }
            }
        }
        Ok(Dataset {
            schema,
            columns,
            row_count,
        })
    }

    pub fn schema(&self) -> &[VariableSpec] {
        &self.schema
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn row_count(&self) -> usize {
        self.row_count
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.schema
            .iter()
            .position(|v| v.name == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn spec(&self, name: &str) -> Result<&VariableSpec> {
        Ok(&self.schema[self.index_of(name)?])
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        Ok(&self.columns[self.index_of(name)?])
    }

    pub fn response(&self) -> &VariableSpec {
        self.schema
            .iter()
            .find(|v| v.role == Role::Response)
            .expect("validated schema has a response")
    }

    pub fn numeric(&self, name: &str) -> Result<&[Option<f64>]> {
        match self.column(name)? {
            Column::Numeric(v) => Ok(v),
            Column::Categorical(_) => Err(Error::InvalidArgument(format!(
                "variable '{name}' is categorical, expected numeric"
            ))),
        }
    }

    pub fn categorical(&self, name: &str) -> Result<(&VariableSpec, &[Option<usize>])> {
        let i = self.index_of(name)?;
        match &self.columns[i] {
            Column::Categorical(v) => Ok((&self.schema[i], v)),
            Column::Numeric(_) => Err(Error::InvalidArgument(format!(
                "variable '{name}' is numeric, expected categorical"
            ))),
        }
    }

    /// Rows in the given order (indices may repeat).
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            columns: self.columns.iter().map(|c| c.select(rows)).collect(),
            row_count: rows.len(),
        }
    }

    /// Replaces a variable's spec and column together.
    pub fn with_column(&self, spec: VariableSpec, column: Column) -> Result<Dataset> {
        let i = self.index_of(&spec.name)?;
        let mut schema = self.schema.clone();
        let mut columns = self.columns.clone();
        schema[i] = spec;
        columns[i] = column;
        Dataset::new(schema, columns)
    }

    pub fn row(&self, i: usize) -> Row {
        self.schema
            .iter()
            .zip(&self.columns)
            .map(|(spec, col)| {
                let v = match col {
                    Column::Numeric(v) => v[i].map_or(Value::Missing, Value::Number),
                    Column::Categorical(v) => {
                        v[i].map_or(Value::Missing, |c| Value::Category(spec.categories[c].clone()))
                    }
                };
                (spec.name.clone(), v)
            })
            .collect()
    }

    /// Serializes to CSV in schema order. Numbers use the shortest
    /// round-tripping representation, so `load_csv` recovers them exactly.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.schema.iter().map(|v| v.name.as_str()))
            .map_err(csv_write_err)?;
        for r in 0..self.row_count {
            let record: Vec<String> = self
                .schema
                .iter()
                .zip(&self.columns)
                .map(|(spec, col)| match col {
                    Column::Numeric(v) => v[r].map(|x| x.to_string()).unwrap_or_default(),
                    Column::Categorical(v) => v[r].map(|c| spec.categories[c].clone()).unwrap_or_default(),
                })
                .collect();
            w.write_record(&record).map_err(csv_write_err)?;
        }
        w.into_inner()
            .map_err(|e| Error::InvalidArgument(format!("CSV buffer: {e}")))
    }
}

fn csv_write_err(e: csv::Error) -> Error {
    Error::InvalidArgument(format!("CSV write failed: {e}"))
}

/// Parses an RFC-4180 CSV with a header row into a typed [`Dataset`].
///
/// Columns not named in the schema are ignored. Categories of variables
/// without a declared list are collected in first-seen order.
pub fn load_csv<R: Read>(source: R, schema: &[VariableSpec]) -> Result<Dataset> {
    validate_schema(schema)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(source);
    let headers = reader.headers().map_err(|e| csv_read_err(&e))?.clone();
    let positions: Vec<usize> = schema
        .iter()
        .map(|v| {
            headers
                .iter()
                .position(|h| h == v.name)
                .ok_or_else(|| Error::MissingColumn(v.name.clone()))
        })
        .collect::<Result<_>>()?;

    let mut specs: Vec<VariableSpec> = schema.to_vec();
    let learn: Vec<bool> = specs.iter().map(|v| v.is_categorical() && v.categories.is_empty()).collect();
    let mut lookup: Vec<HashMap<String, usize>> = specs
        .iter()
        .map(|v| v.categories.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect())
        .collect();
    let mut columns: Vec<Column> = specs
        .iter()
        .map(|v| {
            if v.is_categorical() {
                Column::Categorical(Vec::new())
            } else {
                Column::Numeric(Vec::new())
            }
        })
        .collect();

    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_read_err(&e))?;
        let row = r + 1;
        for (j, &pos) in positions.iter().enumerate() {
            let cell = record.get(pos).unwrap_or("");
            match &mut columns[j] {
                Column::Numeric(values) => {
                    if cell.is_empty() {
                        values.push(None);
                    } else {
                        let v: f64 = cell.trim().parse().map_err(|_| Error::NonNumeric {
                            column: specs[j].name.clone(),
                            row,
                            token: cell.to_string(),
                        })?;
                        values.push(Some(v));
                    }
                }
                Column::Categorical(values) => {
                    if cell.is_empty() {
                        values.push(None);
                        continue;
                    }
                    let idx = match lookup[j].get(cell) {
                        Some(&i) => i,
                        None if learn[j] => {
                            let i = specs[j].categories.len();
                            specs[j].categories.push(cell.to_string());
                            lookup[j].insert(cell.to_string(), i);
                            i
                        }
                        None => {
                            return Err(Error::UnknownCategory {
                                column: specs[j].name.clone(),
                                row,
                                label: cell.to_string(),
                            })
                        }
                    };
                    values.push(Some(idx));
                }
            }
        }
    }
    Dataset::new(specs, columns)
}

fn csv_read_err(e: &csv::Error) -> Error {
    let row = e.position().map_or(0, |p| p.record());
    let message = match e.kind() {
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
            format!("expected {expected_len} fields, found {len}")
        }
        csv::ErrorKind::Utf8 { .. } => "invalid UTF-8".to_string(),
        _ => e.to_string(),
    };
    Error::MalformedCsv { row, message }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    InSet(Vec<String>),
    NonMissing,
    Range { lo: f64, hi: f64 },
}

/// Row selection rule; a row is kept when every rule holds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterRule {
    pub variable: String,
    pub predicate: Predicate,
}

impl FilterRule {
    pub fn new(variable: &str, predicate: Predicate) -> Self {
        FilterRule {
            variable: variable.to_string(),
            predicate,
        }
    }

    fn matcher<'a>(&'a self, ds: &'a Dataset) -> Result<Box<dyn Fn(usize) -> bool + 'a>> {
        let i = ds.index_of(&self.variable)?;
        let spec = &ds.schema[i];
        let col = &ds.columns[i];
        Ok(match (&self.predicate, col) {
            (Predicate::NonMissing, _) => Box::new(move |r| !col.is_missing(r)),
            (Predicate::InSet(labels), Column::Categorical(v)) => {
                let wanted: Vec<bool> = spec.categories.iter().map(|c| labels.contains(c)).collect();
                Box::new(move |r| v[r].is_some_and(|c| wanted[c]))
            }
            (Predicate::Range { lo, hi }, Column::Numeric(v)) => {
                let (lo, hi) = (*lo, *hi);
                Box::new(move |r| v[r].is_some_and(|x| x >= lo && x <= hi))
            }
            (Predicate::InSet(_), Column::Numeric(_)) => {
                return Err(Error::InvalidArgument(format!(
                    "in_set filter needs a categorical variable, '{}' is numeric",
                    self.variable
                )))
            }
            (Predicate::Range { .. }, Column::Categorical(_)) => {
                return Err(Error::InvalidArgument(format!(
                    "range filter needs a numeric variable, '{}' is categorical",
                    self.variable
                )))
            }
        })
    }
}

/// Indices of the rows satisfying all rules, ascending.
pub fn filter_indices(ds: &Dataset, rules: &[FilterRule]) -> Result<Vec<usize>> {
    let matchers: Vec<_> = rules.iter().map(|r| r.matcher(ds)).collect::<Result<_>>()?;
    Ok((0..ds.row_count).filter(|&r| matchers.iter().all(|m| m(r))).collect())
}

/// Keeps the rows satisfying all rules, in their original order.
pub fn apply_filters(ds: &Dataset, rules: &[FilterRule]) -> Result<Dataset> {
    Ok(ds.select_rows(&filter_indices(ds, rules)?))
}

/// Listwise deletion: keeps rows with no missing cell among `vars`.
pub fn listwise_complete(ds: &Dataset, vars: &[String]) -> Result<Dataset> {
    let idx: Vec<usize> = vars.iter().map(|v| ds.index_of(v)).collect::<Result<_>>()?;
    let keep: Vec<usize> = (0..ds.row_count)
        .filter(|&r| idx.iter().all(|&j| !ds.columns[j].is_missing(r)))
        .collect();
    Ok(ds.select_rows(&keep))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryCount {
    pub label: String,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariableSummary {
    pub name: String,
    pub kind: Kind,
    pub n: usize,
    pub missing: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sd: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frequencies: Option<Vec<CategoryCount>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub rows: usize,
    pub variables: Vec<VariableSummary>,
}

/// Per-variable counts, mean and sample sd, or category frequencies.
pub fn summarize(ds: &Dataset) -> SummaryReport {
    let variables = ds
        .schema
        .iter()
        .zip(&ds.columns)
        .map(|(spec, col)| match col {
            Column::Numeric(v) => {
                let present: Vec<f64> = v.iter().flatten().copied().collect();
                VariableSummary {
                    name: spec.name.clone(),
                    kind: spec.kind,
                    n: present.len(),
                    missing: v.len() - present.len(),
                    mean: mean(&present),
                    sd: sample_sd(&present),
                    min: present.iter().copied().reduce(f64::min),
                    max: present.iter().copied().reduce(f64::max),
                    frequencies: None,
                }
            }
            Column::Categorical(v) => {
                let mut counts = vec![0usize; spec.categories.len()];
                for &c in v.iter().flatten() {
                    counts[c] += 1;
                }
                let n = counts.iter().sum();
                VariableSummary {
                    name: spec.name.clone(),
                    kind: spec.kind,
                    n,
                    missing: v.len() - n,
                    mean: None,
                    sd: None,
                    min: None,
                    max: None,
                    frequencies: Some(
                        spec.categories
                            .iter()
                            .zip(counts)
                            .map(|(label, count)| CategoryCount {
                                label: label.clone(),
                                count,
                            })
                            .collect(),
                    ),
                }
            }
        })
        .collect();
    SummaryReport {
        rows: ds.row_count,
        variables,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Vec<VariableSpec> {
        vec![
            VariableSpec::numeric("defects", Role::Response),
            VariableSpec::numeric("fp", Role::Predictor),
            VariableSpec {
                name: "dev".into(),
                role: Role::Predictor,
                kind: Kind::Categorical,
                transform: Transform::None,
                categories: vec![],
            },
        ]
    }

    #[test]
    fn loads_three_rows() {
        let csv = "defects,fp,dev\n3,100,New\n5,250,Enh\n1,80,New\n";
        let ds = load_csv(csv.as_bytes(), &schema()).unwrap();
        assert_eq!(ds.row_count(), 3);
        assert!(ds.columns().iter().all(|c| (0..3).all(|r| !c.is_missing(r))));
        assert_eq!(ds.spec("dev").unwrap().categories, vec!["New", "Enh"]);
    }

    #[test]
    fn empty_cell_is_missing() {
        let csv = "defects,fp,dev\n3,,New\n4,5,Enh\n";
        let ds = load_csv(csv.as_bytes(), &schema()).unwrap();
        assert_eq!(ds.numeric("fp").unwrap()[0], None);
    }

    #[test]
    fn ragged_row_is_rejected() {
        let csv = "defects,fp,dev,x\n3,1,New,0\n3,1,New,0,9\n";
        match load_csv(csv.as_bytes(), &schema()) {
            Err(Error::MalformedCsv { row, .. }) => assert_eq!(row, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_and_token_errors() {
        let err = load_csv("defects,dev\n1,A\n".as_bytes(), &schema()).unwrap_err();
        assert!(matches!(err, Error::MissingColumn(ref c) if c == "fp"));
        let err = load_csv("defects,fp,dev\n1,abc,A\n".as_bytes(), &schema()).unwrap_err();
        assert!(matches!(err, Error::NonNumeric { row: 1, .. }));
        let mut declared = schema();
        declared[2].categories = vec!["A".into(), "B".into()];
        let err = load_csv("defects,fp,dev\n1,2,C\n".as_bytes(), &declared).unwrap_err();
        assert!(matches!(err, Error::UnknownCategory { ref label, .. } if label == "C"));
    }

    #[test]
    fn schema_needs_one_response() {
        let mut s = schema();
        s[0].role = Role::Predictor;
        assert!(matches!(validate_schema(&s), Err(Error::InvalidSchema(_))));
    }

    #[test]
    fn non_missing_filter_counts() {
        let mut csv = String::from("defects,fp,dev\n");
        for i in 0..10 {
            let d = if i % 3 == 0 { String::new() } else { i.to_string() };
            csv.push_str(&format!("{d},{},A\n", i + 1));
        }
        csv.push_str(",1,B\n");
        let ds = load_csv(csv.as_bytes(), &schema()).unwrap();
        let ds = ds.select_rows(&(0..10).collect::<Vec<_>>());
        // rows 0, 3, 6, 9 lack defects
        let kept = apply_filters(&ds, &[FilterRule::new("defects", Predicate::NonMissing)]).unwrap();
        assert_eq!(kept.row_count(), 6);
        assert!(apply_filters(&ds, &[FilterRule::new("nope", Predicate::NonMissing)]).is_err());
        assert_eq!(apply_filters(&ds, &[]).unwrap(), ds);
    }

    #[test]
    fn listwise_deletion() {
        let csv = "defects,fp,dev\n1,2,A\n1,,B\n1,3,A\n2,4,B\n5,1,A\n";
        let ds = load_csv(csv.as_bytes(), &schema()).unwrap();
        let all: Vec<String> = ds.schema().iter().map(|v| v.name.clone()).collect();
        assert_eq!(listwise_complete(&ds, &all).unwrap().row_count(), 4);
        assert_eq!(listwise_complete(&ds, &["defects".into()]).unwrap().row_count(), 5);
        let csv = "defects,fp,dev\n1,,A\n1,,B\n";
        let ds = load_csv(csv.as_bytes(), &schema()).unwrap();
        let empty = listwise_complete(&ds, &all).unwrap();
        assert_eq!(empty.row_count(), 0);
    }

    #[test]
    fn summary_statistics() {
        let csv = "defects,fp,dev\n1,2,A\n2,2,A\n3,2,B\n";
        let ds = load_csv(csv.as_bytes(), &schema()).unwrap();
        let s = summarize(&ds);
        assert_eq!(s.variables[0].mean, Some(2.0));
        assert_eq!(s.variables[0].sd, Some(1.0));
        let f = s.variables[2].frequencies.as_ref().unwrap();
        assert_eq!((f[0].count, f[1].count), (2, 1));

        let empty = summarize(&ds.select_rows(&[]));
        assert!(empty.variables.iter().all(|v| v.n == 0 && v.mean.is_none()));
    }
}

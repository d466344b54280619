//! Typed tabular data, formula encoding and row partitioning.
//!
//! A [`Dataset`] holds named numeric or categorical columns as read from a
//! CSV file. [`encode`] turns a dataset and a [`Formula`] into the numeric
//! [`DesignMatrix`] consumed by every estimator in the crate, and
//! [`make_folds`] / [`bootstrap`] produce the row partitions used for
//! validation.

mod design;
pub(crate) mod folds;
mod formula;

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use design::{DesignMatrix, EncodedFactor, Standardization};
pub use folds::{bootstrap, make_folds, make_stratified_folds, BootstrapSample, FoldPlan};
pub use formula::{encode, Coding, Formula, Term};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ColumnValues {
    Numeric(Vec<f64>),
    /// Level index per row into `levels`.
    Categorical { levels: Vec<String>, codes: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub values: ColumnValues,
}

impl Column {
    pub fn numeric(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self { name: name.into(), values: ColumnValues::Numeric(values) }
    }

    /// Builds a categorical column with levels in first-appearance order.
    pub fn categorical<S: AsRef<str>>(name: impl Into<String>, values: &[S]) -> Self {
        let mut levels: Vec<String> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let codes = values
            .iter()
            .map(|v| {
                let v = v.as_ref();
                *index.entry(v.to_string()).or_insert_with(|| {
                    levels.push(v.to_string());
                    levels.len() - 1
                })
            })
            .collect();
        Self { name: name.into(), values: ColumnValues::Categorical { levels, codes } }
    }

    pub fn kind(&self) -> ColumnKind {
        match self.values {
            ColumnValues::Numeric(_) => ColumnKind::Numeric,
            ColumnValues::Categorical { .. } => ColumnKind::Categorical,
        }
    }

    pub fn len(&self) -> usize {
        match &self.values {
            ColumnValues::Numeric(v) => v.len(),
            ColumnValues::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_numeric(&self) -> Option<&[f64]> {
        match &self.values {
            ColumnValues::Numeric(v) => Some(v),
            ColumnValues::Categorical { .. } => None,
        }
    }

    pub fn levels(&self) -> Option<&[String]> {
        match &self.values {
            ColumnValues::Categorical { levels, .. } => Some(levels),
            ColumnValues::Numeric(_) => None,
        }
    }

    /// Row value rendered as text (level name for categoricals).
    pub fn label(&self, row: usize) -> String {
        match &self.values {
            ColumnValues::Numeric(v) => v[row].to_string(),
            ColumnValues::Categorical { levels, codes } => levels[codes[row]].clone(),
        }
    }
}

/// Named collection of equally long columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    name: String,
    columns: Vec<Column>,
    n_rows: usize,
}

impl Dataset {
    pub fn new(name: impl Into<String>, columns: Vec<Column>) -> Result<Self> {
        let name = name.into();
        let Some(first) = columns.first() else {
            return Err(Error::Empty(format!("dataset `{name}` has no columns")));
        };
        let n_rows = first.len();
        if n_rows == 0 {
            return Err(Error::Empty(format!("dataset `{name}` has no rows")));
        }
        let mut seen = HashSet::new();
        for c in &columns {
            if c.len() != n_rows {
                return Err(Error::InvalidArgument(format!(
                    "column `{}` has {} values, expected {n_rows}",
                    c.name,
                    c.len()
                )));
            }
            if !seen.insert(c.name.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate column name `{}`", c.name)));
            }
            if let ColumnValues::Categorical { levels, codes } = &c.values {
                let distinct: HashSet<&String> = levels.iter().collect();
                if distinct.len() != levels.len() || codes.iter().any(|&k| k >= levels.len()) {
                    return Err(Error::InvalidArgument(format!(
                        "categorical column `{}` has inconsistent levels",
                        c.name
                    )));
                }
            }
        }
        Ok(Self { name, columns, n_rows })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    /// Removes the named columns; unknown names are an error.
    pub fn drop_columns(mut self, names: &[impl AsRef<str>]) -> Result<Self> {
        for n in names {
            let n = n.as_ref();
            let pos = self
                .columns
                .iter()
                .position(|c| c.name == n)
                .ok_or_else(|| Error::UnknownColumn(n.to_string()))?;
            self.columns.remove(pos);
        }
        Dataset::new(self.name, self.columns)
    }

    /// Reorders every categorical column's levels lexicographically, so the
    /// first level in sort order becomes the reference level.
    pub fn sort_levels(mut self) -> Self {
        for c in &mut self.columns {
            if let ColumnValues::Categorical { levels, codes } = &mut c.values {
                let mut order: Vec<usize> = (0..levels.len()).collect();
                order.sort_by(|&a, &b| levels[a].cmp(&levels[b]));
                let mut remap = vec![0; levels.len()];
                for (new, &old) in order.iter().enumerate() {
                    remap[old] = new;
                }
                *levels = order.iter().map(|&i| levels[i].clone()).collect();
                for code in codes.iter_mut() {
                    *code = remap[*code];
                }
            }
        }
        self
    }
}

/// Column-kind overrides, read from `column=numeric|categorical` lines.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub kinds: HashMap<String, ColumnKind>,
}

impl Schema {
    pub fn parse(text: &str) -> Result<Self> {
        let mut kinds = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, kind) = line.split_once('=').ok_or_else(|| Error::Parse {
                row: i + 1,
                message: format!("expected `column=kind`, got `{line}`"),
            })?;
            let kind = match kind.trim() {
                "numeric" => ColumnKind::Numeric,
                "categorical" => ColumnKind::Categorical,
                other => {
                    return Err(Error::Parse {
                        row: i + 1,
                        message: format!("unknown column kind `{other}`"),
                    })
                }
            };
            kinds.insert(name.trim().to_string(), kind);
        }
        Ok(Self { kinds })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    pub fn with(mut self, column: &str, kind: ColumnKind) -> Self {
        self.kinds.insert(column.to_string(), kind);
        self
    }
}

/// Reads a rectangular CSV file with a header row.
pub fn load_csv(path: &Path, schema: Option<&Schema>) -> Result<Dataset> {
    let text =
        fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
    parse_csv(name, &text, schema)
}

fn is_missing(field: &str) -> bool {
    matches!(field, "" | "NA" | "NaN" | "nan" | "null")
}

/// Parses CSV text. Numeric columns are those whose every field parses as a
/// finite number with a `.` decimal separator; the rest become categorical.
pub fn parse_csv(name: &str, text: &str, schema: Option<&Schema>) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse { row: 1, message: e.to_string() })?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(Error::Empty(format!("`{name}` has no header row")));
    }
    let mut raw: Vec<Vec<String>> = vec![Vec::new(); headers.len()];
    for (i, record) in reader.records().enumerate() {
        // header is row 1
        let row = i + 2;
        let record = record.map_err(|e| Error::Parse { row, message: e.to_string() })?;
        if record.len() != headers.len() {
            return Err(Error::Parse {
                row,
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        for (j, field) in record.iter().enumerate() {
            if is_missing(field) {
                return Err(Error::Parse {
                    row,
                    message: format!("missing value in column `{}`", headers[j]),
                });
            }
            raw[j].push(field.to_string());
        }
    }
    if raw[0].is_empty() {
        return Err(Error::Empty(format!("`{name}` has a header but no data rows")));
    }
    if let Some(schema) = schema {
        if let Some(unknown) = schema.kinds.keys().find(|k| !headers.contains(k)) {
            return Err(Error::UnknownColumn(unknown.clone()));
        }
    }

    let mut columns = Vec::with_capacity(headers.len());
    for (header, fields) in headers.into_iter().zip(raw) {
        let forced = schema.and_then(|s| s.kinds.get(&header)).copied();
        let parsed: Option<Vec<f64>> = fields
            .iter()
            .map(|f| f.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect();
        let column = match (forced, parsed) {
            (Some(ColumnKind::Categorical), _) | (None, None) => {
                Column::categorical(header, &fields)
            }
            (_, Some(values)) => Column::numeric(header, values),
            (Some(ColumnKind::Numeric), None) => {
                let row = fields
                    .iter()
                    .position(|f| f.parse::<f64>().map(|v| !v.is_finite()).unwrap_or(true))
                    .unwrap_or(0);
                return Err(Error::Parse {
                    row: row + 2,
                    message: format!("column `{header}` declared numeric but holds `{}`", fields[row]),
                });
            }
        };
        columns.push(column);
    }
    Dataset::new(name, columns)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_numeric_and_categorical() {
        let ds = parse_csv("t", "y,sex\n1.5,F\n2,M\n3,F\n", None).unwrap();
        assert_eq!(ds.n_rows(), 3);
        assert_eq!(ds.column("y").unwrap().kind(), ColumnKind::Numeric);
        let sex = ds.column("sex").unwrap();
        assert_eq!(sex.levels().unwrap(), ["F", "M"]);
    }

    #[test]
    fn mixed_column_falls_back_to_categorical() {
        let ds = parse_csv("t", "a\n1\n2\nx\n", None).unwrap();
        let a = ds.column("a").unwrap();
        assert_eq!(a.kind(), ColumnKind::Categorical);
        assert_eq!(a.levels().unwrap().len(), 3);
    }

    #[test]
    fn ragged_row_reports_row_number() {
        let err = parse_csv("t", "a,b\n1,2\n3\n", None).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 3, .. }), "{err}");
    }

    #[test]
    fn empty_inputs_are_rejected() {
        assert!(matches!(parse_csv("t", "", None), Err(Error::Empty(_))));
        assert!(matches!(parse_csv("t", "a,b\n", None), Err(Error::Empty(_))));
    }

    #[test]
    fn missing_values_are_rejected() {
        let err = parse_csv("t", "a,b\n1,NA\n", None).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 2, .. }));
    }

    #[test]
    fn schema_overrides_kind() {
        let schema = Schema::parse("# comment\nzip = categorical\n").unwrap();
        let ds = parse_csv("t", "zip,v\n1,2\n2,3\n1,4\n", Some(&schema)).unwrap();
        assert_eq!(ds.column("zip").unwrap().levels().unwrap(), ["1", "2"]);

        let schema = Schema::default().with("v", ColumnKind::Numeric);
        let err = parse_csv("t", "v\n1\nabc\n", Some(&schema)).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 3, .. }));
        assert!(Schema::parse("a=blob").is_err());
    }

    #[test]
    fn sort_levels_keeps_row_labels() {
        let ds = parse_csv("t", "p\nA43\nA40\nA410\nA43\n", None).unwrap();
        let before: Vec<String> = (0..4).map(|i| ds.column("p").unwrap().label(i)).collect();
        let ds = ds.sort_levels();
        let p = ds.column("p").unwrap();
        assert_eq!(p.levels().unwrap(), ["A40", "A410", "A43"]);
        let after: Vec<String> = (0..4).map(|i| p.label(i)).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn duplicate_names_rejected() {
        let cols = vec![Column::numeric("a", vec![1.0]), Column::numeric("a", vec![2.0])];
        assert!(Dataset::new("t", cols).is_err());
    }
}

//! Typed feature matrices, CSV ingestion, synthetic contrast data and
//! subsampling.
//!
//! Matrices are stored column-major. Categorical columns keep a sorted
//! alphabet of observed symbols and one code per row, so code order is
//! lexicographic symbol order.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use rand::Rng as _;
use serde::Serialize;
use thiserror::Error;

use crate::rng_from;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("input file not found: {0}")]
    MissingFile(String),
    #[error("i/o error reading {path}: {message}")]
    Io { path: String, message: String },
    #[error("csv has no header row")]
    MissingHeader,
    #[error("line {line}: expected {expected} fields, found {found}")]
    RaggedRow {
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: empty cell in column `{column}`")]
    EmptyCell { line: u64, column: String },
    #[error("line {line}: non-finite value in numeric column `{column}`")]
    NonFiniteValue { line: u64, column: String },
    #[error("line {line}: `{value}` is not a number (column `{column}`)")]
    InvalidNumber {
        line: u64,
        column: String,
        value: String,
    },
    #[error("line {line}: quoted cells are not supported")]
    QuotedCell { line: u64 },
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("a feature matrix needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("subsample of {0} rows is too small (need at least 2)")]
    EmptySample(usize),
    #[error("sampling fraction {0} outside (0, 1]")]
    InvalidFraction(f64),
    #[error("column `{0}` not found")]
    MissingColumn(String),
    #[error("row {row}: label `{value}` is not 0 or 1")]
    InvalidLabel { row: usize, value: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

impl fmt::Display for ColumnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ColumnKind::Numeric => "NUMERIC",
            ColumnKind::Categorical => "CATEGORICAL",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
}

impl ColumnSpec {
    pub fn new(name: impl Into<String>, kind: ColumnKind) -> Self {
        Self {
            name: name.into(),
            kind,
        }
    }
}

/// Ordered, uniquely named column list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FeatureSchema {
    columns: Vec<ColumnSpec>,
}

impl FeatureSchema {
    pub fn new(columns: Vec<ColumnSpec>) -> Result<Self, DataError> {
        if columns.is_empty() {
            return Err(DataError::InvalidSchema("no columns".into()));
        }
        let mut seen = BTreeSet::new();
        for c in &columns {
            if c.name.is_empty() {
                return Err(DataError::InvalidSchema("empty column name".into()));
            }
            if !seen.insert(c.name.as_str()) {
                return Err(DataError::InvalidSchema(format!(
                    "duplicate column `{}`",
                    c.name
                )));
            }
        }
        Ok(Self { columns })
    }

    /// Parse the schema file format: one `name,NUMERIC|CATEGORICAL` per line.
    pub fn parse(text: &str) -> Result<Self, DataError> {
        let mut columns = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (name, kind) = line.split_once(',').ok_or_else(|| {
                DataError::InvalidSchema(format!("line {}: expected `name,KIND`", i + 1))
            })?;
            let kind = match kind.trim() {
                "NUMERIC" => ColumnKind::Numeric,
                "CATEGORICAL" => ColumnKind::Categorical,
                other => {
                    return Err(DataError::InvalidSchema(format!(
                        "line {}: unknown kind `{other}`",
                        i + 1
                    )))
                }
            };
            columns.push(ColumnSpec::new(name.trim(), kind));
        }
        Self::new(columns)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        Self::parse(&text)
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Column {
    Numeric(Vec<f64>),
    Categorical {
        levels: Vec<String>,
        codes: Vec<u32>,
    },
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> ColumnKind {
        match self {
            Column::Numeric(_) => ColumnKind::Numeric,
            Column::Categorical { .. } => ColumnKind::Categorical,
        }
    }

    /// Build a categorical column from raw symbols.
    pub fn categorical<S: AsRef<str>>(symbols: &[S]) -> Self {
        let levels: Vec<String> = symbols
            .iter()
            .map(|s| s.as_ref())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(str::to_owned)
            .collect();
        let codes = symbols
            .iter()
            .map(|s| level_code(&levels, s.as_ref()))
            .collect();
        Column::Categorical { levels, codes }
    }

    fn select(&self, rows: &[usize]) -> Self {
        match self {
            Column::Numeric(v) => Column::Numeric(rows.iter().map(|&r| v[r]).collect()),
            Column::Categorical { levels, codes } => Column::Categorical {
                levels: levels.clone(),
                codes: rows.iter().map(|&r| codes[r]).collect(),
            },
        }
    }
}

fn level_code(levels: &[String], symbol: &str) -> u32 {
    levels
        .binary_search_by(|l| l.as_str().cmp(symbol))
        .expect("symbol belongs to its alphabet") as u32
}

/// One cell of a record.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Cell<'a> {
    Num(f64),
    Cat(&'a str),
}

/// N records over a [`FeatureSchema`], stored by column.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    schema: FeatureSchema,
    columns: Vec<Column>,
    n_rows: usize,
}

impl FeatureMatrix {
    pub fn new(schema: FeatureSchema, columns: Vec<Column>) -> Result<Self, DataError> {
        if columns.len() != schema.len() {
            return Err(DataError::SchemaMismatch(format!(
                "{} columns for a {}-column schema",
                columns.len(),
                schema.len()
            )));
        }
        let n_rows = columns[0].len();
        for (spec, col) in schema.columns().iter().zip(&columns) {
            if col.kind() != spec.kind {
                return Err(DataError::SchemaMismatch(format!(
                    "column `{}` declared {} but holds {} data",
                    spec.name,
                    spec.kind,
                    col.kind()
                )));
            }
            if col.len() != n_rows {
                return Err(DataError::SchemaMismatch(format!(
                    "column `{}` has {} rows, expected {n_rows}",
                    spec.name,
                    col.len()
                )));
            }
            if let Column::Numeric(v) = col {
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(DataError::NonFiniteValue {
                        line: 0,
                        column: spec.name.clone(),
                    });
                }
            }
        }
        if n_rows < 2 {
            return Err(DataError::TooFewRows(n_rows));
        }
        Ok(Self {
            schema,
            columns,
            n_rows,
        })
    }

    /// All-numeric matrix from row-major values; columns are named `f0, f1, ...`.
    pub fn from_numeric_rows(rows: &[Vec<f64>]) -> Result<Self, DataError> {
        let m = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != m) {
            return Err(DataError::RaggedRow {
                line: bad as u64 + 1,
                expected: m,
                found: rows[bad].len(),
            });
        }
        let schema = FeatureSchema::new(
            (0..m)
                .map(|j| ColumnSpec::new(format!("f{j}"), ColumnKind::Numeric))
                .collect(),
        )?;
        let columns = (0..m)
            .map(|j| Column::Numeric(rows.iter().map(|r| r[j]).collect()))
            .collect();
        Self::new(schema, columns)
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, j: usize) -> &Column {
        &self.columns[j]
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn cell(&self, row: usize, col: usize) -> Cell<'_> {
        match &self.columns[col] {
            Column::Numeric(v) => Cell::Num(v[row]),
            Column::Categorical { levels, codes } => Cell::Cat(&levels[codes[row] as usize]),
        }
    }

    pub fn row(&self, row: usize) -> Vec<Cell<'_>> {
        (0..self.n_cols()).map(|j| self.cell(row, j)).collect()
    }

    /// Rows `rows` in the given order (duplicates allowed). Categorical
    /// alphabets are kept whole.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self, DataError> {
        Self::new(
            self.schema.clone(),
            self.columns.iter().map(|c| c.select(rows)).collect(),
        )
    }

    /// Split off a 0/1 label column, returning the remaining features and the
    /// labels.
    pub fn split_label(&self, name: &str) -> Result<(FeatureMatrix, Vec<u8>), DataError> {
        let idx = self
            .schema
            .index_of(name)
            .ok_or_else(|| DataError::MissingColumn(name.to_owned()))?;
        let labels = (0..self.n_rows)
            .map(|r| match self.cell(r, idx) {
                Cell::Num(0.0) => Ok(0),
                Cell::Num(1.0) => Ok(1),
                Cell::Num(v) => Err(DataError::InvalidLabel {
                    row: r,
                    value: v.to_string(),
                }),
                Cell::Cat("0") => Ok(0),
                Cell::Cat("1") => Ok(1),
                Cell::Cat(s) => Err(DataError::InvalidLabel {
                    row: r,
                    value: s.to_owned(),
                }),
            })
            .collect::<Result<Vec<u8>, _>>()?;
        Ok((self.drop_column(idx)?, labels))
    }

    /// Remove a column by name if present.
    pub fn without_column(&self, name: &str) -> Result<FeatureMatrix, DataError> {
        match self.schema.index_of(name) {
            Some(idx) => self.drop_column(idx),
            None => Err(DataError::MissingColumn(name.to_owned())),
        }
    }

    fn drop_column(&self, idx: usize) -> Result<FeatureMatrix, DataError> {
        let mut specs = self.schema.columns().to_vec();
        specs.remove(idx);
        let mut columns = self.columns.clone();
        columns.remove(idx);
        Self::new(FeatureSchema::new(specs)?, columns)
    }
}

fn io_error(path: &Path, e: std::io::Error) -> DataError {
    if e.kind() == std::io::ErrorKind::NotFound {
        DataError::MissingFile(path.display().to_string())
    } else {
        DataError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}

/// Read a headed CSV file into a [`FeatureMatrix`].
///
/// Without a hint, a column is numeric iff every cell parses as a real.
/// Empty cells and quoted cells are rejected; no imputation is done.
pub fn load_dataset(
    path: impl AsRef<Path>,
    schema_hint: Option<&FeatureSchema>,
) -> Result<FeatureMatrix, DataError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    parse_csv(&text, schema_hint).map_err(|e| match e {
        DataError::Io { message, .. } => DataError::Io {
            path: path.display().to_string(),
            message,
        },
        other => other,
    })
}

/// [`load_dataset`] over in-memory CSV text.
pub fn parse_csv(
    text: &str,
    schema_hint: Option<&FeatureSchema>,
) -> Result<FeatureMatrix, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .quoting(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r.map_err(csv_error)?,
        None => return Err(DataError::MissingHeader),
    };
    let names: Vec<String> = header.iter().map(str::to_owned).collect();
    if header.iter().any(|c| c.contains('"')) {
        return Err(DataError::QuotedCell { line: 1 });
    }
    let m = names.len();

    let mut cells: Vec<Vec<String>> = vec![Vec::new(); m];
    let mut lines = Vec::new();
    for rec in records {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != m {
            return Err(DataError::RaggedRow {
                line,
                expected: m,
                found: rec.len(),
            });
        }
        for (j, cell) in rec.iter().enumerate() {
            if cell.contains('"') {
                return Err(DataError::QuotedCell { line });
            }
            if cell.is_empty() {
                return Err(DataError::EmptyCell {
                    line,
                    column: names[j].clone(),
                });
            }
            cells[j].push(cell.to_owned());
        }
        lines.push(line);
    }

    let specs = match schema_hint {
        Some(hint) => {
            let hinted: Vec<&str> = hint.columns().iter().map(|c| c.name.as_str()).collect();
            if hinted != names {
                return Err(DataError::SchemaMismatch(format!(
                    "header {names:?} does not match schema {hinted:?}"
                )));
            }
            hint.columns().to_vec()
        }
        None => names
            .iter()
            .zip(&cells)
            .map(|(name, col)| {
                let numeric = col.iter().all(|c| c.parse::<f64>().is_ok());
                let kind = if numeric {
                    ColumnKind::Numeric
                } else {
                    ColumnKind::Categorical
                };
                ColumnSpec::new(name.clone(), kind)
            })
            .collect(),
    };
    let schema = FeatureSchema::new(specs)?;

    let columns = schema
        .columns()
        .iter()
        .zip(&cells)
        .map(|(spec, col)| match spec.kind {
            ColumnKind::Categorical => Ok(Column::categorical(col)),
            ColumnKind::Numeric => col
                .iter()
                .zip(&lines)
                .map(|(c, &line)| match c.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    Ok(_) => Err(DataError::NonFiniteValue {
                        line,
                        column: spec.name.clone(),
                    }),
                    Err(_) => Err(DataError::InvalidNumber {
                        line,
                        column: spec.name.clone(),
                        value: c.clone(),
                    }),
                })
                .collect::<Result<Vec<f64>, _>>()
                .map(Column::Numeric),
        })
        .collect::<Result<Vec<_>, _>>()?;

    FeatureMatrix::new(schema, columns)
}

fn csv_error(e: csv::Error) -> DataError {
    DataError::Io {
        path: String::new(),
        message: e.to_string(),
    }
}

/// Draw a contrast dataset from the product of the empirical marginals of
/// `x`: every column is resampled independently, with replacement, N times.
pub fn generate_synthetic(x: &FeatureMatrix, seed: u64) -> FeatureMatrix {
    let n = x.n_rows();
    let mut rng = rng_from(seed);
    let columns = x
        .columns()
        .iter()
        .map(|col| {
            let picks: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            col.select(&picks)
        })
        .collect();
    FeatureMatrix::new(x.schema().clone(), columns).expect("resampled matrix keeps the schema")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Class {
    Real,
    Synthetic,
}

/// Real rows followed by synthetic rows, with class labels.
#[derive(Clone, Debug)]
pub struct LabeledDataset {
    pub matrix: FeatureMatrix,
    pub labels: Vec<Class>,
    pub real_count: usize,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Stack `x` (labelled [`Class::Real`]) on top of `y` ([`Class::Synthetic`]).
pub fn label_real_vs_synthetic(
    x: &FeatureMatrix,
    y: &FeatureMatrix,
) -> Result<LabeledDataset, DataError> {
    if x.schema() != y.schema() {
        return Err(DataError::SchemaMismatch(
            "real and synthetic matrices have different schemas".into(),
        ));
    }
    let columns = x
        .columns()
        .iter()
        .zip(y.columns())
        .map(|(a, b)| match (a, b) {
            (Column::Numeric(a), Column::Numeric(b)) => {
                Column::Numeric(a.iter().chain(b).copied().collect())
            }
            (
                Column::Categorical {
                    levels: la,
                    codes: ca,
                },
                Column::Categorical {
                    levels: lb,
                    codes: cb,
                },
            ) => {
                let symbols: Vec<&str> = ca
                    .iter()
                    .map(|&c| la[c as usize].as_str())
                    .chain(cb.iter().map(|&c| lb[c as usize].as_str()))
                    .collect();
                Column::categorical(&symbols)
            }
            _ => unreachable!("schemas compared equal"),
        })
        .collect();
    let matrix = FeatureMatrix::new(x.schema().clone(), columns)?;
    let mut labels = vec![Class::Real; x.n_rows()];
    labels.extend(std::iter::repeat_n(Class::Synthetic, y.n_rows()));
    Ok(LabeledDataset {
        matrix,
        labels,
        real_count: x.n_rows(),
    })
}

/// Number of rows kept by [`subsample`] for a fraction of `n`.
pub fn subsample_size(n: usize, fraction: f64) -> usize {
    // The small slack keeps products such as 0.1 * 30 from rounding up.
    ((fraction * n as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Uniform sample without replacement of `ceil(fraction * N)` rows, with
/// labels kept aligned. Selected rows keep their original relative order.
pub fn subsample<L: Clone>(
    x: &FeatureMatrix,
    labels: &[L],
    fraction: f64,
    seed: u64,
) -> Result<(FeatureMatrix, Vec<L>), DataError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(DataError::InvalidFraction(fraction));
    }
    if labels.len() != x.n_rows() {
        return Err(DataError::SchemaMismatch(format!(
            "{} labels for {} rows",
            labels.len(),
            x.n_rows()
        )));
    }
    if fraction == 1.0 {
        return Ok((x.clone(), labels.to_vec()));
    }
    let n = x.n_rows();
    let size = subsample_size(n, fraction);
    if size < 2 {
        return Err(DataError::EmptySample(size));
    }
    let mut rng = rng_from(seed);
    let mut rows = rand::seq::index::sample(&mut rng, n, size).into_vec();
    rows.sort_unstable();
    let sub = x.select_rows(&rows)?;
    let sub_labels = rows.iter().map(|&r| labels[r].clone()).collect();
    Ok((sub, sub_labels))
}

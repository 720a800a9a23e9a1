//! Typed tabular data flowing between pipeline primitives.
//!
//! A [`Table`] is immutable once built. Columns are reference counted so
//! that merges, selections and row subsets share storage where they can.

mod csvio;
mod meta;
mod split;

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use csvio::{load_csv, read_csv, write_csv, write_csv_string};
pub use meta::{metafeatures, MetaFeatures};
pub use split::{kfold_indices, kfold_split, split_train_test, Fold};

#[derive(Debug, Error)]
pub enum TableError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("file has no header row")]
    NoHeader,
    #[error("duplicate column name {0:?} in header")]
    DuplicateHeader(String),
    #[error("target column {0:?} not found")]
    TargetNotFound(String),
    #[error("row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        row: u64,
        expected: usize,
        found: usize,
    },
    #[error("target column has a missing value at row {0}")]
    MissingTargetValue(u64),
    #[error("table has no target column")]
    NoTarget,
    #[error("table has no feature columns")]
    NoColumns,
    #[error("class {class:?} has {count} rows, need at least {needed}")]
    ClassTooSmall {
        class: String,
        count: usize,
        needed: usize,
    },
    #[error("split ratio must lie strictly between 0 and 1, got {0}")]
    InvalidRatio(f64),
    #[error("fold count must be at least 2, got {0}")]
    InvalidFoldCount(usize),
    #[error("column {name:?} has {found} values, table has {expected} rows")]
    LengthMismatch {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("lineage id {0} appears twice")]
    DuplicateLineage(Lineage),
}

/// Provenance id of a column: originating cell plus the chain of
/// transforms applied to it. Raw columns are `raw/<name>`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Lineage(String);

impl Lineage {
    pub fn new(id: impl Into<String>) -> Self {
        Lineage(id.into())
    }

    pub fn raw(column: &str) -> Self {
        Lineage(format!("raw/{column}"))
    }

    /// A column computed at `cell` from a single parent column.
    pub fn derived(cell: usize, tag: &str, parent: &Lineage) -> Self {
        Lineage(format!("c{cell}.{tag}:{parent}"))
    }

    /// A column computed at `cell` from several parents (projections,
    /// products, predictions).
    pub fn synthesized(cell: usize, tag: &str, index: usize) -> Self {
        Lineage(format!("c{cell}.{tag}/{index}"))
    }

    pub fn prediction(cell: usize) -> Self {
        Lineage(format!("cellpredict/{cell}"))
    }

    pub fn class_score(cell: usize, class: usize) -> Self {
        Lineage(format!("cellscore/{cell}/{class}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Lineage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

/// Cell values. Missing cells hold `0.0` / code `0` and are flagged in
/// the owning column's mask.
#[derive(Clone, Debug, PartialEq)]
pub enum ColumnData {
    Numeric(Vec<f64>),
    Categorical {
        codes: Vec<u32>,
        levels: Arc<Vec<String>>,
    },
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Column {
    name: String,
    lineage: Lineage,
    data: ColumnData,
    missing: Vec<bool>,
}

impl Column {
    pub fn numeric(name: impl Into<String>, lineage: Lineage, values: Vec<f64>) -> Self {
        let missing = vec![false; values.len()];
        Column {
            name: name.into(),
            lineage,
            data: ColumnData::Numeric(values),
            missing,
        }
    }

    pub fn numeric_with_missing(
        name: impl Into<String>,
        lineage: Lineage,
        values: Vec<Option<f64>>,
    ) -> Self {
        let missing = values.iter().map(Option::is_none).collect();
        let values = values.into_iter().map(|v| v.unwrap_or(0.0)).collect();
        Column {
            name: name.into(),
            lineage,
            data: ColumnData::Numeric(values),
            missing,
        }
    }

    pub fn categorical(
        name: impl Into<String>,
        lineage: Lineage,
        codes: Vec<Option<u32>>,
        levels: Arc<Vec<String>>,
    ) -> Self {
        let missing = codes.iter().map(Option::is_none).collect();
        let codes = codes.into_iter().map(|c| c.unwrap_or(0)).collect();
        Column {
            name: name.into(),
            lineage,
            data: ColumnData::Categorical { codes, levels },
            missing,
        }
    }

    /// Builds a categorical column from string cells, assigning level codes
    /// in order of first appearance.
    pub fn categorical_from_strings<S: AsRef<str>>(
        name: impl Into<String>,
        lineage: Lineage,
        cells: &[Option<S>],
    ) -> Self {
        let mut levels: Vec<String> = Vec::new();
        let mut codes = Vec::with_capacity(cells.len());
        for cell in cells {
            codes.push(cell.as_ref().map(|s| {
                let s = s.as_ref();
                match levels.iter().position(|l| l == s) {
                    Some(i) => i as u32,
                    None => {
                        levels.push(s.to_string());
                        (levels.len() - 1) as u32
                    }
                }
            }));
        }
        Column::categorical(name, lineage, codes, Arc::new(levels))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn lineage(&self) -> &Lineage {
        &self.lineage
    }

    pub fn data(&self) -> &ColumnData {
        &self.data
    }

    pub fn kind(&self) -> ColumnKind {
        match self.data {
            ColumnData::Numeric(_) => ColumnKind::Numeric,
            ColumnData::Categorical { .. } => ColumnKind::Categorical,
        }
    }

    pub fn len(&self) -> usize {
        self.missing.len()
    }

    pub fn is_empty(&self) -> bool {
        self.missing.is_empty()
    }

    pub fn missing_mask(&self) -> &[bool] {
        &self.missing
    }

    pub fn is_missing(&self, row: usize) -> bool {
        self.missing[row]
    }

    pub fn missing_count(&self) -> usize {
        self.missing.iter().filter(|m| **m).count()
    }

    pub fn any_missing(&self) -> bool {
        self.missing.iter().any(|m| *m)
    }

    pub fn as_numeric(&self) -> Option<&[f64]> {
        match &self.data {
            ColumnData::Numeric(v) => Some(v),
            ColumnData::Categorical { .. } => None,
        }
    }

    pub fn as_categorical(&self) -> Option<(&[u32], &Arc<Vec<String>>)> {
        match &self.data {
            ColumnData::Categorical { codes, levels } => Some((codes, levels)),
            ColumnData::Numeric(_) => None,
        }
    }

    /// Numeric value at `row`, or `None` when missing or categorical.
    pub fn value(&self, row: usize) -> Option<f64> {
        match &self.data {
            ColumnData::Numeric(v) if !self.missing[row] => Some(v[row]),
            _ => None,
        }
    }

    /// True if any present numeric cell is negative.
    pub fn has_negative(&self) -> bool {
        match &self.data {
            ColumnData::Numeric(v) => v
                .iter()
                .zip(&self.missing)
                .any(|(x, m)| !*m && *x < 0.0),
            ColumnData::Categorical { .. } => false,
        }
    }

    pub fn with_name_and_lineage(&self, name: impl Into<String>, lineage: Lineage) -> Column {
        Column {
            name: name.into(),
            lineage,
            data: self.data.clone(),
            missing: self.missing.clone(),
        }
    }

    pub fn take_rows(&self, rows: &[usize]) -> Column {
        let data = match &self.data {
            ColumnData::Numeric(v) => ColumnData::Numeric(rows.iter().map(|&r| v[r]).collect()),
            ColumnData::Categorical { codes, levels } => ColumnData::Categorical {
                codes: rows.iter().map(|&r| codes[r]).collect(),
                levels: Arc::clone(levels),
            },
        };
        Column {
            name: self.name.clone(),
            lineage: self.lineage.clone(),
            data,
            missing: rows.iter().map(|&r| self.missing[r]).collect(),
        }
    }
}

/// Class labels of a classification table. The class list is shared by
/// every table split from the same source so indices stay comparable.
#[derive(Clone, Debug, PartialEq)]
pub struct Target {
    name: String,
    classes: Arc<Vec<String>>,
    labels: Vec<u32>,
}

impl Target {
    pub fn new(name: impl Into<String>, classes: Arc<Vec<String>>, labels: Vec<u32>) -> Self {
        Target {
            name: name.into(),
            classes,
            labels,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn classes(&self) -> &Arc<Vec<String>> {
        &self.classes
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Row count per class index.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes.len()];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    pub fn take_rows(&self, rows: &[usize]) -> Target {
        Target {
            name: self.name.clone(),
            classes: Arc::clone(&self.classes),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
        }
    }
}

/// Summary flags consulted by primitive capability checks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TableFlags {
    pub has_missing: bool,
    pub has_categorical: bool,
    pub has_negative: bool,
    pub n_columns: usize,
}

impl TableFlags {
    /// Flags of a deduplicated merge: duplicates carry identical data, so
    /// the union of the inputs' flags is exact.
    pub fn union(self, other: TableFlags) -> TableFlags {
        TableFlags {
            has_missing: self.has_missing || other.has_missing,
            has_categorical: self.has_categorical || other.has_categorical,
            has_negative: self.has_negative || other.has_negative,
            n_columns: self.n_columns.max(other.n_columns),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    columns: Vec<Arc<Column>>,
    n_rows: usize,
    target: Option<Arc<Target>>,
}

impl Table {
    pub fn new(
        columns: Vec<Arc<Column>>,
        n_rows: usize,
        target: Option<Arc<Target>>,
    ) -> Result<Self, TableError> {
        let mut seen = HashSet::with_capacity(columns.len());
        for col in &columns {
            if col.len() != n_rows {
                return Err(TableError::LengthMismatch {
                    name: col.name.clone(),
                    expected: n_rows,
                    found: col.len(),
                });
            }
            if !seen.insert(col.lineage()) {
                return Err(TableError::DuplicateLineage(col.lineage().clone()));
            }
        }
        if let Some(t) = &target {
            if t.labels.len() != n_rows {
                return Err(TableError::LengthMismatch {
                    name: t.name.clone(),
                    expected: n_rows,
                    found: t.labels.len(),
                });
            }
        }
        Ok(Table {
            columns,
            n_rows,
            target,
        })
    }

    pub fn from_columns(
        columns: Vec<Column>,
        n_rows: usize,
        target: Option<Target>,
    ) -> Result<Self, TableError> {
        Table::new(
            columns.into_iter().map(Arc::new).collect(),
            n_rows,
            target.map(Arc::new),
        )
    }

    pub fn columns(&self) -> &[Arc<Column>] {
        &self.columns
    }

    pub fn column(&self, index: usize) -> &Column {
        &self.columns[index]
    }

    pub fn column_by_lineage(&self, lineage: &Lineage) -> Option<&Column> {
        self.columns
            .iter()
            .find(|c| c.lineage() == lineage)
            .map(|c| c.as_ref())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn target(&self) -> Option<&Target> {
        self.target.as_deref()
    }

    pub fn target_arc(&self) -> Option<&Arc<Target>> {
        self.target.as_ref()
    }

    pub fn lineage_signature(&self) -> Vec<Lineage> {
        self.columns.iter().map(|c| c.lineage().clone()).collect()
    }

    pub fn flags(&self) -> TableFlags {
        TableFlags {
            has_missing: self.columns.iter().any(|c| c.any_missing()),
            has_categorical: self
                .columns
                .iter()
                .any(|c| c.kind() == ColumnKind::Categorical),
            has_negative: self.columns.iter().any(|c| c.has_negative()),
            n_columns: self.columns.len(),
        }
    }

    pub fn take_rows(&self, rows: &[usize]) -> Table {
        Table {
            columns: self
                .columns
                .iter()
                .map(|c| Arc::new(c.take_rows(rows)))
                .collect(),
            n_rows: rows.len(),
            target: self.target.as_ref().map(|t| Arc::new(t.take_rows(rows))),
        }
    }

    /// Same rows and target, different feature columns.
    pub fn with_columns(&self, columns: Vec<Arc<Column>>) -> Result<Table, TableError> {
        Table::new(columns, self.n_rows, self.target.clone())
    }
}

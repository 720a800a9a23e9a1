use serde::{Deserialize, Serialize};

use super::{ColumnData, ColumnKind, Table, TableError};

/// Fixed-length dataset descriptor. Order:
///
/// | idx | feature                                   |
/// |-----|-------------------------------------------|
/// | 0   | ln(1 + rows)                              |
/// | 1   | ln(1 + feature columns)                   |
/// | 2   | fraction of numeric columns               |
/// | 3   | fraction of categorical columns           |
/// | 4   | fraction of missing cells                 |
/// | 5   | mean of numeric-column means              |
/// | 6   | std of numeric-column means               |
/// | 7   | mean of numeric-column stds               |
/// | 8   | number of classes                         |
/// | 9   | majority class ratio                      |
/// | 10  | ln(1 + mean categorical cardinality)      |
/// | 11  | fraction of columns with any missing cell |
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaFeatures(pub [f64; MetaFeatures::LEN]);

impl MetaFeatures {
    pub const LEN: usize = 12;

    pub const NAMES: [&'static str; MetaFeatures::LEN] = [
        "log_rows",
        "log_cols",
        "pct_numeric",
        "pct_categorical",
        "pct_missing",
        "mean_numeric_mean",
        "std_numeric_mean",
        "mean_numeric_std",
        "n_classes",
        "majority_class_ratio",
        "log_mean_cardinality",
        "pct_cols_with_missing",
    ];

    pub fn zeros() -> Self {
        MetaFeatures([0.0; Self::LEN])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

fn mean_std(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let mut n = 0usize;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for v in values {
        n += 1;
        sum += v;
        sum_sq += v * v;
    }
    if n == 0 {
        return None;
    }
    let mean = sum / n as f64;
    let var = (sum_sq / n as f64 - mean * mean).max(0.0);
    Some((mean, var.sqrt()))
}

pub fn metafeatures(t: &Table) -> Result<MetaFeatures, TableError> {
    let n_cols = t.n_cols();
    if n_cols == 0 {
        return Err(TableError::NoColumns);
    }
    let n_rows = t.n_rows();
    let mut n_numeric = 0usize;
    let mut missing_cells = 0usize;
    let mut cols_with_missing = 0usize;
    let mut numeric_means = Vec::new();
    let mut numeric_stds = Vec::new();
    let mut cardinalities = Vec::new();

    for col in t.columns() {
        let missing = col.missing_count();
        missing_cells += missing;
        if missing > 0 {
            cols_with_missing += 1;
        }
        match col.data() {
            ColumnData::Numeric(values) => {
                n_numeric += 1;
                let present = values
                    .iter()
                    .zip(col.missing_mask())
                    .filter(|(_, m)| !**m)
                    .map(|(v, _)| *v);
                let (mean, std) = mean_std(present).unwrap_or((0.0, 0.0));
                numeric_means.push(mean);
                numeric_stds.push(std);
            }
            ColumnData::Categorical { codes, .. } => {
                let mut seen: Vec<u32> = codes
                    .iter()
                    .zip(col.missing_mask())
                    .filter(|(_, m)| !**m)
                    .map(|(c, _)| *c)
                    .collect();
                seen.sort_unstable();
                seen.dedup();
                cardinalities.push(seen.len() as f64);
            }
        }
    }
    debug_assert_eq!(
        n_numeric,
        t.columns()
            .iter()
            .filter(|c| c.kind() == ColumnKind::Numeric)
            .count()
    );

    let (mean_of_means, std_of_means) = mean_std(numeric_means.iter().copied()).unwrap_or((0.0, 0.0));
    let mean_of_stds = mean_std(numeric_stds.iter().copied()).map_or(0.0, |(m, _)| m);
    let mean_cardinality = mean_std(cardinalities.iter().copied()).map_or(0.0, |(m, _)| m);

    let (n_classes, majority) = match t.target() {
        Some(target) if n_rows > 0 => {
            let counts = target.class_counts();
            let present = counts.iter().filter(|&&c| c > 0).count();
            let max = counts.iter().copied().max().unwrap_or(0);
            (present as f64, max as f64 / n_rows as f64)
        }
        _ => (0.0, 0.0),
    };

    let total_cells = (n_rows * n_cols) as f64;
    let mf = MetaFeatures([
        (n_rows as f64).ln_1p(),
        (n_cols as f64).ln_1p(),
        n_numeric as f64 / n_cols as f64,
        (n_cols - n_numeric) as f64 / n_cols as f64,
        if total_cells > 0.0 {
            missing_cells as f64 / total_cells
        } else {
            0.0
        },
        mean_of_means,
        std_of_means,
        mean_of_stds,
        n_classes,
        majority,
        mean_cardinality.ln_1p(),
        cols_with_missing as f64 / n_cols as f64,
    ]);
    Ok(mf)
}

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

use super::{Algorithm, FitContext, PrimitiveError, PrimitiveSpec};
use crate::seed;
use crate::tabular::{Column, ColumnData, Lineage, Table};

#[derive(Clone, Debug)]
pub(crate) enum Fill {
    Numeric(f64),
    Code(u32),
    Nothing,
}

/// Learned state of a feature transformer.
#[derive(Clone, Debug)]
pub(crate) enum TransformParams {
    Identity,
    Impute {
        fills: Vec<Fill>,
        had_missing: Vec<bool>,
    },
    OneHot {
        seen: Vec<Option<Vec<u32>>>,
    },
    Keep {
        keep: Vec<usize>,
    },
    MinMax {
        ranges: Vec<Option<(f64, f64)>>,
    },
    Standardize {
        stats: Vec<Option<(f64, f64)>>,
    },
    Discretize {
        ranges: Vec<Option<(f64, f64)>>,
        bins: usize,
    },
    Project {
        tag: &'static str,
        mean: Vec<f64>,
        basis: Vec<Vec<f64>>,
    },
    Interactions {
        pairs: Vec<(usize, usize)>,
    },
}

fn present(col: &Column) -> impl Iterator<Item = f64> + '_ {
    let values = col.as_numeric().unwrap_or(&[]);
    values
        .iter()
        .zip(col.missing_mask())
        .filter(|(_, m)| !**m)
        .map(|(v, _)| *v)
}

fn mean_std(col: &Column) -> Option<(f64, f64)> {
    col.as_numeric()?;
    let values: Vec<f64> = present(col).collect();
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

fn min_max(col: &Column) -> Option<(f64, f64)> {
    col.as_numeric()?;
    present(col).fold(None, |acc, v| match acc {
        None => Some((v, v)),
        Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
    })
}

fn keep_count(m: usize, fraction: f64) -> usize {
    ((m as f64 * fraction).ceil() as usize).clamp(1, m.max(1))
}

/// Indices of the `k` highest scores (ties to the lower index), ascending.
fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut keep: Vec<usize> = order.into_iter().take(k).collect();
    keep.sort_unstable();
    keep
}

fn is_constant(col: &Column) -> bool {
    let mask = col.missing_mask();
    match col.data() {
        ColumnData::Numeric(v) => {
            let mut it = v.iter().zip(mask).filter(|(_, m)| !**m).map(|(x, _)| *x);
            match it.next() {
                None => true,
                Some(first) => it.all(|x| x == first),
            }
        }
        ColumnData::Categorical { codes, .. } => {
            let mut it = codes.iter().zip(mask).filter(|(_, m)| !**m).map(|(x, _)| *x);
            match it.next() {
                None => true,
                Some(first) => it.all(|x| x == first),
            }
        }
    }
}

/// Discrete symbol per row for mutual information: bin index for numeric
/// columns, level code for categorical ones.
fn symbols(col: &Column, bins: usize) -> (Vec<usize>, usize) {
    match col.data() {
        ColumnData::Categorical { codes, levels } => (
            codes.iter().map(|&c| c as usize).collect(),
            levels.len().max(1 + codes.iter().copied().max().unwrap_or(0) as usize),
        ),
        ColumnData::Numeric(v) => {
            let (lo, hi) = min_max(col).unwrap_or((0.0, 0.0));
            let width = (hi - lo) / bins as f64;
            let sym = v
                .iter()
                .map(|&x| {
                    if width > 0.0 {
                        (((x - lo) / width) as usize).min(bins - 1)
                    } else {
                        0
                    }
                })
                .collect();
            (sym, bins)
        }
    }
}

/// Mutual information (nats) between a discrete feature and the labels,
/// from joint counts.
pub(crate) fn mutual_information(x: &[usize], x_card: usize, y: &[u32], y_card: usize) -> f64 {
    let n = x.len() as f64;
    if x.is_empty() {
        return 0.0;
    }
    let mut joint = vec![0usize; x_card * y_card];
    let mut px = vec![0usize; x_card];
    let mut py = vec![0usize; y_card];
    for (&a, &b) in x.iter().zip(y) {
        joint[a * y_card + b as usize] += 1;
        px[a] += 1;
        py[b as usize] += 1;
    }
    let mut mi = 0.0;
    for a in 0..x_card {
        for b in 0..y_card {
            let c = joint[a * y_card + b];
            if c > 0 {
                let pxy = c as f64 / n;
                mi += pxy * (pxy / ((px[a] as f64 / n) * (py[b] as f64 / n))).ln();
            }
        }
    }
    mi
}

fn chi_square(col: &Column, labels: &[u32], n_classes: usize) -> f64 {
    let Some(values) = col.as_numeric() else {
        return 0.0;
    };
    let mut observed = vec![0.0; n_classes];
    let mut class_n = vec![0.0; n_classes];
    let mut total = 0.0;
    for (&v, &l) in values.iter().zip(labels) {
        observed[l as usize] += v;
        class_n[l as usize] += 1.0;
        total += v;
    }
    let n = labels.len() as f64;
    let mut chi = 0.0;
    for c in 0..n_classes {
        let expected = total * class_n[c] / n;
        if expected > 0.0 {
            chi += (observed[c] - expected).powi(2) / expected;
        }
    }
    if chi.is_finite() {
        chi
    } else {
        0.0
    }
}

fn numeric_matrix(t: &Table) -> Vec<&[f64]> {
    t.columns()
        .iter()
        .map(|c| c.as_numeric().unwrap_or(&[]))
        .collect()
}

fn pca(t: &Table, max_components: usize) -> Option<TransformParams> {
    let cols = numeric_matrix(t);
    let m = cols.len();
    let n = t.n_rows();
    if n == 0 || cols.iter().any(|c| c.len() != n) {
        return None;
    }
    let mean: Vec<f64> = cols.iter().map(|c| c.iter().sum::<f64>() / n as f64).collect();
    let mut cov = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let s: f64 = cols[i]
                .iter()
                .zip(cols[j])
                .map(|(a, b)| (a - mean[i]) * (b - mean[j]))
                .sum::<f64>()
                / n as f64;
            cov[(i, j)] = s;
            cov[(j, i)] = s;
        }
    }
    if cov.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let eig = SymmetricEigen::new(cov);
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let k = max_components.min(m);
    let basis = order[..k]
        .iter()
        .map(|&idx| {
            let mut v: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
            // sign convention: largest-magnitude loading is positive
            let pivot = v
                .iter()
                .copied()
                .fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
            if pivot < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect();
    Some(TransformParams::Project {
        tag: "pc",
        mean,
        basis,
    })
}

fn random_projection(m: usize, max_components: usize, seed: u64) -> TransformParams {
    let k = max_components.min(m).max(1);
    let scale = 1.0 / (k as f64).sqrt();
    let mut rng = seed::rng(seed);
    let basis = (0..k)
        .map(|_| {
            (0..m)
                .map(|_| if rng.gen::<bool>() { scale } else { -scale })
                .collect()
        })
        .collect();
    TransformParams::Project {
        tag: "rp",
        mean: vec![0.0; m],
        basis,
    }
}

/// Returns `None` on numerical failure.
pub(crate) fn fit(p: &PrimitiveSpec, input: &Table, ctx: FitContext) -> Option<TransformParams> {
    let cols = input.columns();
    let params = match p.algorithm {
        Algorithm::MeanModeImputer => {
            let fills = cols
                .iter()
                .map(|c| match c.data() {
                    ColumnData::Numeric(_) => {
                        Fill::Numeric(mean_std(c).map_or(0.0, |(m, _)| m))
                    }
                    ColumnData::Categorical { codes, levels } => {
                        let mut counts = vec![0usize; levels.len()];
                        for (&code, &miss) in codes.iter().zip(c.missing_mask()) {
                            if !miss && (code as usize) < counts.len() {
                                counts[code as usize] += 1;
                            }
                        }
                        match counts.iter().enumerate().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0))) {
                            Some((code, &count)) if count > 0 => Fill::Code(code as u32),
                            _ => Fill::Nothing,
                        }
                    }
                })
                .collect();
            TransformParams::Impute {
                fills,
                had_missing: cols.iter().map(|c| c.any_missing()).collect(),
            }
        }
        Algorithm::OneHotEncoder => TransformParams::OneHot {
            seen: cols
                .iter()
                .map(|c| {
                    c.as_categorical().map(|(codes, _)| {
                        let mut s: Vec<u32> = codes
                            .iter()
                            .zip(c.missing_mask())
                            .filter(|(_, m)| !**m)
                            .map(|(v, _)| *v)
                            .collect();
                        s.sort_unstable();
                        s.dedup();
                        s
                    })
                })
                .collect(),
        },
        Algorithm::DropConstantColumns => {
            let mut keep: Vec<usize> = (0..cols.len()).filter(|&i| !is_constant(&cols[i])).collect();
            if keep.is_empty() {
                keep.push(0);
            }
            TransformParams::Keep { keep }
        }
        Algorithm::MinMaxScaler => TransformParams::MinMax {
            ranges: cols.iter().map(|c| min_max(c)).collect(),
        },
        Algorithm::Standardizer => TransformParams::Standardize {
            stats: cols.iter().map(|c| mean_std(c)).collect(),
        },
        Algorithm::EqualWidthDiscretizer => TransformParams::Discretize {
            ranges: cols.iter().map(|c| min_max(c)).collect(),
            bins: p.hyper("bins") as usize,
        },
        Algorithm::VarianceThreshold => {
            let scores: Vec<f64> = cols
                .iter()
                .map(|c| mean_std(c).map_or(f64::NEG_INFINITY, |(_, s)| s * s))
                .collect();
            TransformParams::Keep {
                keep: top_k(&scores, keep_count(cols.len(), p.hyper("keep_fraction"))),
            }
        }
        Algorithm::MutualInfoTopK => {
            let target = input.target()?;
            let bins = p.hyper("bins") as usize;
            let scores: Vec<f64> = cols
                .iter()
                .map(|c| {
                    let (sym, card) = symbols(c, bins);
                    mutual_information(&sym, card, target.labels(), target.n_classes())
                })
                .collect();
            TransformParams::Keep {
                keep: top_k(&scores, keep_count(cols.len(), p.hyper("keep_fraction"))),
            }
        }
        Algorithm::ChiSquareTopK => {
            let target = input.target()?;
            let scores: Vec<f64> = cols
                .iter()
                .map(|c| chi_square(c, target.labels(), target.n_classes()))
                .collect();
            TransformParams::Keep {
                keep: top_k(&scores, keep_count(cols.len(), p.hyper("keep_fraction"))),
            }
        }
        Algorithm::PcaProjection => pca(input, p.hyper("max_components") as usize)?,
        Algorithm::RandomProjection => {
            random_projection(cols.len(), p.hyper("max_components") as usize, ctx.seed)
        }
        Algorithm::InteractionFeatures => {
            let m = cols.len();
            let cap = p.hyper("max_new_features") as usize;
            let pairs = (0..m)
                .flat_map(|i| (i..m).map(move |j| (i, j)))
                .take(cap)
                .collect();
            TransformParams::Interactions { pairs }
        }
        _ => unreachable!("{} is not a transformer", p.name),
    };
    Some(params)
}

fn map_numeric<S>(
    input: &Table,
    cell: usize,
    tag: &str,
    stats: &[Option<S>],
    f: impl Fn(&S, f64) -> f64,
) -> Result<Table, PrimitiveError> {
    let columns = input
        .columns()
        .iter()
        .zip(stats)
        .map(|(col, st)| match (st, col.as_numeric()) {
            (Some(st), Some(values)) => {
                let mapped = values
                    .iter()
                    .zip(col.missing_mask())
                    .map(|(&v, &m)| if m { None } else { Some(f(st, v)) })
                    .collect();
                Arc::new(Column::numeric_with_missing(
                    col.name(),
                    Lineage::derived(cell, tag, col.lineage()),
                    mapped,
                ))
            }
            _ => Arc::clone(col),
        })
        .collect();
    Ok(input.with_columns(columns)?)
}

pub(crate) fn apply(
    params: &TransformParams,
    input: &Table,
    cell: usize,
) -> Result<Table, PrimitiveError> {
    let cols = input.columns();
    match params {
        TransformParams::Identity => Ok(input.clone()),
        TransformParams::Impute { fills, had_missing } => {
            let columns = cols
                .iter()
                .zip(fills.iter().zip(had_missing))
                .map(|(col, (fill, &had))| {
                    if !had && !col.any_missing() {
                        return Arc::clone(col);
                    }
                    let lineage = if had {
                        Lineage::derived(cell, "impute", col.lineage())
                    } else {
                        col.lineage().clone()
                    };
                    let filled = match (col.data(), fill) {
                        (ColumnData::Numeric(v), Fill::Numeric(x)) => Column::numeric_with_missing(
                            col.name(),
                            lineage,
                            v.iter()
                                .zip(col.missing_mask())
                                .map(|(&v, &m)| Some(if m { *x } else { v }))
                                .collect(),
                        ),
                        (ColumnData::Categorical { codes, levels }, Fill::Code(c)) => Column::categorical(
                            col.name(),
                            lineage,
                            codes
                                .iter()
                                .zip(col.missing_mask())
                                .map(|(&v, &m)| Some(if m { *c } else { v }))
                                .collect(),
                            Arc::clone(levels),
                        ),
                        _ => col.with_name_and_lineage(col.name(), lineage),
                    };
                    Arc::new(filled)
                })
                .collect();
            Ok(input.with_columns(columns)?)
        }
        TransformParams::OneHot { seen } => {
            let mut columns = Vec::new();
            for (col, seen) in cols.iter().zip(seen) {
                match (seen, col.as_categorical()) {
                    (Some(levels_seen), Some((codes, levels))) => {
                        for &level in levels_seen {
                            let values = codes
                                .iter()
                                .zip(col.missing_mask())
                                .map(|(&c, &m)| if !m && c == level { 1.0 } else { 0.0 })
                                .collect();
                            let label = levels.get(level as usize).map_or("?", String::as_str);
                            columns.push(Arc::new(Column::numeric(
                                format!("{}={}", col.name(), label),
                                Lineage::derived(cell, &format!("onehot{level}"), col.lineage()),
                                values,
                            )));
                        }
                    }
                    _ => columns.push(Arc::clone(col)),
                }
            }
            Ok(input.with_columns(columns)?)
        }
        TransformParams::Keep { keep } => {
            Ok(input.with_columns(keep.iter().map(|&i| Arc::clone(&cols[i])).collect())?)
        }
        TransformParams::MinMax { ranges } => map_numeric(input, cell, "minmax", ranges, |&(lo, hi), v| {
            if hi > lo {
                (v - lo) / (hi - lo)
            } else {
                0.0
            }
        }),
        TransformParams::Standardize { stats } => {
            map_numeric(input, cell, "std", stats, |&(mean, std), v| {
                if std > 0.0 {
                    (v - mean) / std
                } else {
                    v - mean
                }
            })
        }
        TransformParams::Discretize { ranges, bins } => {
            let bins = *bins;
            map_numeric(input, cell, "bin", ranges, move |&(lo, hi), v| {
                if hi > lo {
                    let b = ((v - lo) / (hi - lo) * bins as f64).floor();
                    b.clamp(0.0, (bins - 1) as f64)
                } else {
                    0.0
                }
            })
        }
        TransformParams::Project { tag, mean, basis } => {
            let x = numeric_matrix(input);
            let n = input.n_rows();
            let columns = basis
                .iter()
                .enumerate()
                .map(|(j, w)| {
                    let values = (0..n)
                        .map(|r| {
                            x.iter()
                                .zip(mean)
                                .zip(w)
                                .map(|((c, mu), wi)| (c[r] - mu) * wi)
                                .sum()
                        })
                        .collect();
                    Arc::new(Column::numeric(
                        format!("{tag}{}", j + 1),
                        Lineage::synthesized(cell, tag, j),
                        values,
                    ))
                })
                .collect();
            Ok(input.with_columns(columns)?)
        }
        TransformParams::Interactions { pairs } => {
            let x = numeric_matrix(input);
            let mut columns: Vec<Arc<Column>> = cols.to_vec();
            for (idx, &(a, b)) in pairs.iter().enumerate() {
                let values = x[a].iter().zip(x[b]).map(|(p, q)| p * q).collect();
                columns.push(Arc::new(Column::numeric(
                    format!("{}*{}", cols[a].name(), cols[b].name()),
                    Lineage::synthesized(cell, "ix", idx),
                    values,
                )));
            }
            Ok(input.with_columns(columns)?)
        }
    }
}

/// Every present numeric cell is finite.
pub(crate) fn all_finite(t: &Table) -> bool {
    t.columns().iter().all(|c| match c.as_numeric() {
        Some(v) => v
            .iter()
            .zip(c.missing_mask())
            .all(|(x, m)| *m || x.is_finite()),
        None => true,
    })
}

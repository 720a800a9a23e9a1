use std::sync::Arc;

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Algorithm, FitContext, PrimitiveError, PrimitiveSpec};
use crate::seed;
use crate::tabular::{Column, ColumnData, Lineage, Table};

/// Index of the largest score; ties go to the lowest index.
pub(crate) fn argmax_lowest(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug)]
pub(crate) struct Model {
    n_features: usize,
    n_classes: usize,
    kind: ModelKind,
}

#[derive(Clone, Debug)]
enum ModelKind {
    Tree(Tree),
    Forest(Vec<Tree>),
    Knn(Knn),
    NaiveBayes(NaiveBayes),
    Logistic(Logistic),
}

/// Column-major feature values; categorical codes become their numeric
/// value and missing cells become NaN.
fn features(t: &Table) -> Vec<Vec<f64>> {
    t.columns()
        .iter()
        .map(|c| {
            let mask = c.missing_mask();
            match c.data() {
                ColumnData::Numeric(v) => v
                    .iter()
                    .zip(mask)
                    .map(|(&x, &m)| if m { f64::NAN } else { x })
                    .collect(),
                ColumnData::Categorical { codes, .. } => codes
                    .iter()
                    .zip(mask)
                    .map(|(&x, &m)| if m { f64::NAN } else { x as f64 })
                    .collect(),
            }
        })
        .collect()
}

#[derive(Clone, Debug)]
enum Node {
    Leaf {
        dist: Vec<f64>,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, x: &[Vec<f64>], row: usize) -> &[f64] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { dist } => return dist,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[*feature][row] <= *threshold { *left } else { *right },
            }
        }
    }
}

/// n times the Gini impurity.
fn weighted_gini(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let sq: f64 = counts.iter().map(|&c| (c * c) as f64).sum();
    n as f64 - sq / n as f64
}

struct Grower<'a> {
    x: &'a [Vec<f64>],
    y: &'a [u32],
    n_classes: usize,
    max_depth: usize,
    min_split: usize,
    max_features: usize,
    rng: Option<ChaCha8Rng>,
    nodes: Vec<Node>,
    buf: Vec<(f64, u32)>,
}

impl Grower<'_> {
    fn leaf(&mut self, counts: &[usize], n: usize) -> usize {
        let dist = counts.iter().map(|&c| c as f64 / n.max(1) as f64).collect();
        self.nodes.push(Node::Leaf { dist });
        self.nodes.len() - 1
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let n = rows.len();
        let mut counts = vec![0usize; self.n_classes];
        for &r in &rows {
            counts[self.y[r] as usize] += 1;
        }
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if depth >= self.max_depth || n < self.min_split || pure {
            return self.leaf(&counts, n);
        }
        let d = self.x.len();
        let candidates: Vec<usize> = match self.rng.as_mut() {
            Some(rng) if self.max_features < d => {
                let mut f = sample(rng, d, self.max_features).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..d).collect(),
        };
        let parent = weighted_gini(&counts, n);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut left = vec![0usize; self.n_classes];
        let mut right = vec![0usize; self.n_classes];
        for f in candidates {
            self.buf.clear();
            self.buf
                .extend(rows.iter().map(|&r| (self.x[f][r], self.y[r])));
            self.buf.sort_by(|a, b| a.0.total_cmp(&b.0));
            left.iter_mut().for_each(|c| *c = 0);
            right.copy_from_slice(&counts);
            for i in 0..n - 1 {
                let (v, label) = self.buf[i];
                left[label as usize] += 1;
                right[label as usize] -= 1;
                let next = self.buf[i + 1].0;
                if v < next {
                    let imp = weighted_gini(&left, i + 1) + weighted_gini(&right, n - i - 1);
                    if best.map_or(true, |(b, _, _)| imp < b - 1e-12) {
                        let mid = 0.5 * (v + next);
                        let threshold = if mid < next { mid } else { v };
                        best = Some((imp, f, threshold));
                    }
                }
            }
        }
        match best {
            Some((imp, feature, threshold)) if imp < parent - 1e-12 => {
                let (l, r): (Vec<usize>, Vec<usize>) =
                    rows.iter().partition(|&&row| self.x[feature][row] <= threshold);
                let at = self.nodes.len();
                self.nodes.push(Node::Leaf { dist: Vec::new() });
                let left = self.grow(l, depth + 1);
                let right = self.grow(r, depth + 1);
                self.nodes[at] = Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                };
                at
            }
            _ => self.leaf(&counts, n),
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn grow_tree(
    x: &[Vec<f64>],
    y: &[u32],
    rows: Vec<usize>,
    n_classes: usize,
    max_depth: usize,
    min_split: usize,
    max_features: usize,
    rng: Option<ChaCha8Rng>,
) -> Tree {
    let mut g = Grower {
        x,
        y,
        n_classes,
        max_depth,
        min_split: min_split.max(2),
        max_features,
        rng,
        nodes: Vec::new(),
        buf: Vec::with_capacity(rows.len()),
    };
    g.grow(rows, 0);
    Tree { nodes: g.nodes }
}

#[derive(Clone, Debug)]
struct Knn {
    /// Row-major training matrix.
    x: Vec<f64>,
    y: Vec<u32>,
    k: usize,
}

#[derive(Clone, Debug)]
enum NbColumn {
    Gaussian { mean: Vec<f64>, var: Vec<f64> },
    /// `log_prob[class][code]`; the last slot holds unseen codes.
    Categorical { log_prob: Vec<Vec<f64>> },
}

#[derive(Clone, Debug)]
struct NaiveBayes {
    log_prior: Vec<f64>,
    columns: Vec<NbColumn>,
}

#[derive(Clone, Debug)]
struct Logistic {
    mean: Vec<f64>,
    scale: Vec<f64>,
    /// `weights[class]` = coefficients followed by the bias.
    weights: Vec<Vec<f64>>,
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

fn fit_naive_bayes(p: &PrimitiveSpec, input: &Table, y: &[u32], n_classes: usize) -> NaiveBayes {
    let n = y.len();
    let alpha = p.hyper("alpha");
    let mut class_n = vec![0usize; n_classes];
    for &l in y {
        class_n[l as usize] += 1;
    }
    let log_prior = class_n
        .iter()
        .map(|&c| if c > 0 { (c as f64 / n as f64).ln() } else { f64::NEG_INFINITY })
        .collect();

    let mut max_var = 0.0f64;
    let mut columns: Vec<NbColumn> = input
        .columns()
        .iter()
        .map(|col| {
            let mask = col.missing_mask();
            match col.data() {
                ColumnData::Numeric(v) => {
                    let mut sum = vec![0.0; n_classes];
                    let mut cnt = vec![0.0; n_classes];
                    for ((&x, &m), &l) in v.iter().zip(mask).zip(y) {
                        if !m {
                            sum[l as usize] += x;
                            cnt[l as usize] += 1.0;
                        }
                    }
                    let mean: Vec<f64> = sum
                        .iter()
                        .zip(&cnt)
                        .map(|(s, c)| if *c > 0.0 { s / c } else { 0.0 })
                        .collect();
                    let mut var = vec![0.0; n_classes];
                    for ((&x, &m), &l) in v.iter().zip(mask).zip(y) {
                        if !m {
                            var[l as usize] += (x - mean[l as usize]).powi(2);
                        }
                    }
                    for (v, c) in var.iter_mut().zip(&cnt) {
                        if *c > 0.0 {
                            *v /= c;
                        }
                        max_var = max_var.max(*v);
                    }
                    NbColumn::Gaussian { mean, var }
                }
                ColumnData::Categorical { codes, levels } => {
                    let card = levels.len() + 1;
                    let mut counts = vec![vec![0.0; card]; n_classes];
                    let mut totals = vec![0.0; n_classes];
                    for ((&c, &m), &l) in codes.iter().zip(mask).zip(y) {
                        if !m {
                            counts[l as usize][(c as usize).min(card - 1)] += 1.0;
                            totals[l as usize] += 1.0;
                        }
                    }
                    let log_prob = counts
                        .iter()
                        .zip(&totals)
                        .map(|(row, t)| {
                            row.iter()
                                .map(|c| ((c + alpha) / (t + alpha * card as f64)).ln())
                                .collect()
                        })
                        .collect();
                    NbColumn::Categorical { log_prob }
                }
            }
        })
        .collect();
    let eps = p.hyper("var_smoothing") * max_var + 1e-9;
    for col in &mut columns {
        if let NbColumn::Gaussian { var, .. } = col {
            var.iter_mut().for_each(|v| *v += eps);
        }
    }
    NaiveBayes { log_prior, columns }
}

fn fit_logistic(p: &PrimitiveSpec, x: &[Vec<f64>], y: &[u32], n_classes: usize) -> Logistic {
    let n = y.len();
    let d = x.len();
    let mut mean = Vec::with_capacity(d);
    let mut scale = Vec::with_capacity(d);
    for col in x {
        let m = col.iter().sum::<f64>() / n as f64;
        let s = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt();
        mean.push(m);
        scale.push(if s > 0.0 { s } else { 1.0 });
    }
    let z: Vec<Vec<f64>> = x
        .iter()
        .zip(mean.iter().zip(&scale))
        .map(|(col, (m, s))| col.iter().map(|v| (v - m) / s).collect())
        .collect();
    let lr = p.hyper("learning_rate");
    let l2 = p.hyper("l2");
    let mut w = vec![vec![0.0; d + 1]; n_classes];
    let mut grad = vec![vec![0.0; d + 1]; n_classes];
    let mut probs = vec![0.0; n_classes];
    for _ in 0..p.hyper("iterations") as usize {
        grad.iter_mut().for_each(|g| g.iter_mut().for_each(|v| *v = 0.0));
        for r in 0..n {
            for (c, wc) in w.iter().enumerate() {
                probs[c] = wc[d] + (0..d).map(|j| wc[j] * z[j][r]).sum::<f64>();
            }
            softmax_in_place(&mut probs);
            for c in 0..n_classes {
                let err = probs[c] - if y[r] as usize == c { 1.0 } else { 0.0 };
                for j in 0..d {
                    grad[c][j] += err * z[j][r];
                }
                grad[c][d] += err;
            }
        }
        for (wc, gc) in w.iter_mut().zip(&grad) {
            for j in 0..=d {
                let reg = if j < d { l2 * wc[j] } else { 0.0 };
                wc[j] -= lr * (gc[j] / n as f64 + reg);
            }
        }
    }
    Logistic {
        mean,
        scale,
        weights: w,
    }
}

pub(crate) fn fit(p: &PrimitiveSpec, input: &Table, ctx: FitContext) -> Result<Model, PrimitiveError> {
    let target = input
        .target()
        .ok_or_else(|| PrimitiveError::NoTarget(p.name.clone()))?;
    let y = target.labels();
    let n_classes = target.n_classes();
    let n = input.n_rows();
    if n == 0 {
        return Err(PrimitiveError::EstimatorFailed {
            primitive: p.name.clone(),
            reason: "no training rows".into(),
        });
    }
    let x = features(input);
    let depth = |p: &PrimitiveSpec| p.hyper("max_depth") as usize;
    let min_split = |p: &PrimitiveSpec| p.hyper("min_samples_split") as usize;
    let kind = match p.algorithm {
        Algorithm::DecisionTree => ModelKind::Tree(grow_tree(
            &x,
            y,
            (0..n).collect(),
            n_classes,
            depth(p),
            min_split(p),
            x.len(),
            None,
        )),
        Algorithm::RandomForest => {
            let max_features = ((x.len() as f64).sqrt().floor() as usize).max(1);
            let trees = (0..p.hyper("n_trees") as u64)
                .map(|t| {
                    let mut rng = seed::rng_for(ctx.seed, t);
                    let rows = (0..n).map(|_| rng.gen_range(0..n)).collect();
                    grow_tree(
                        &x,
                        y,
                        rows,
                        n_classes,
                        depth(p),
                        min_split(p),
                        max_features,
                        Some(rng),
                    )
                })
                .collect();
            ModelKind::Forest(trees)
        }
        Algorithm::KNearestNeighbors => {
            let d = x.len();
            let mut flat = vec![0.0; n * d];
            for (j, col) in x.iter().enumerate() {
                for (r, v) in col.iter().enumerate() {
                    flat[r * d + j] = *v;
                }
            }
            ModelKind::Knn(Knn {
                x: flat,
                y: y.to_vec(),
                k: (p.hyper("k") as usize).clamp(1, n),
            })
        }
        Algorithm::NaiveBayes => ModelKind::NaiveBayes(fit_naive_bayes(p, input, y, n_classes)),
        Algorithm::LogisticRegression => {
            let model = fit_logistic(p, &x, y, n_classes);
            if model.weights.iter().flatten().any(|w| !w.is_finite()) {
                return Err(PrimitiveError::EstimatorFailed {
                    primitive: p.name.clone(),
                    reason: "non-finite coefficients".into(),
                });
            }
            ModelKind::Logistic(model)
        }
        _ => unreachable!("{} is not an estimator", p.name),
    };
    Ok(Model {
        n_features: input.n_cols(),
        n_classes,
        kind,
    })
}

/// Row-major `n x n_classes` class scores.
fn scores(model: &Model, input: &Table) -> Vec<f64> {
    let n = input.n_rows();
    let c = model.n_classes;
    let mut out = vec![0.0; n * c];
    match &model.kind {
        ModelKind::Tree(tree) => {
            let x = features(input);
            for r in 0..n {
                out[r * c..(r + 1) * c].copy_from_slice(tree.predict(&x, r));
            }
        }
        ModelKind::Forest(trees) => {
            let x = features(input);
            let w = 1.0 / trees.len() as f64;
            for r in 0..n {
                let row = &mut out[r * c..(r + 1) * c];
                for tree in trees {
                    for (o, v) in row.iter_mut().zip(tree.predict(&x, r)) {
                        *o += w * v;
                    }
                }
            }
        }
        ModelKind::Knn(knn) => {
            let x = features(input);
            let d = x.len();
            let m = knn.y.len();
            let mut dist: Vec<(f64, usize)> = Vec::with_capacity(m);
            let mut query = vec![0.0; d];
            for r in 0..n {
                for (j, q) in query.iter_mut().enumerate() {
                    *q = x[j][r];
                }
                dist.clear();
                dist.extend((0..m).map(|i| {
                    let row = &knn.x[i * d..(i + 1) * d];
                    let s: f64 = row.iter().zip(&query).map(|(a, b)| (a - b) * (a - b)).sum();
                    (s, i)
                }));
                let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
                if knn.k < m {
                    dist.select_nth_unstable_by(knn.k - 1, cmp);
                }
                let w = 1.0 / knn.k as f64;
                for &(_, i) in &dist[..knn.k] {
                    out[r * c + knn.y[i] as usize] += w;
                }
            }
        }
        ModelKind::NaiveBayes(nb) => {
            for r in 0..n {
                let row = &mut out[r * c..(r + 1) * c];
                row.copy_from_slice(&nb.log_prior);
                for (col, model) in input.columns().iter().zip(&nb.columns) {
                    if col.is_missing(r) {
                        continue;
                    }
                    match (model, col.data()) {
                        (NbColumn::Gaussian { mean, var }, ColumnData::Numeric(v)) => {
                            let x = v[r];
                            for k in 0..c {
                                row[k] += -0.5 * (2.0 * std::f64::consts::PI * var[k]).ln()
                                    - (x - mean[k]).powi(2) / (2.0 * var[k]);
                            }
                        }
                        (NbColumn::Categorical { log_prob }, ColumnData::Categorical { codes, .. }) => {
                            for k in 0..c {
                                let lp = &log_prob[k];
                                row[k] += lp[(codes[r] as usize).min(lp.len() - 1)];
                            }
                        }
                        _ => {}
                    }
                }
                softmax_in_place(row);
            }
        }
        ModelKind::Logistic(lg) => {
            let x = features(input);
            let d = x.len();
            for r in 0..n {
                let row = &mut out[r * c..(r + 1) * c];
                for (k, wk) in lg.weights.iter().enumerate() {
                    row[k] = wk[d]
                        + (0..d)
                            .map(|j| wk[j] * (x[j][r] - lg.mean[j]) / lg.scale[j])
                            .sum::<f64>();
                }
                softmax_in_place(row);
            }
        }
    }
    out
}

/// Prediction column (levels are the class names) followed by one score
/// column per class.
pub(crate) fn predict_table(
    model: &Model,
    name: &str,
    input: &Table,
    cell: usize,
) -> Result<Table, PrimitiveError> {
    if input.n_cols() != model.n_features {
        return Err(PrimitiveError::SchemaMismatch(name.to_string()));
    }
    let classes: Arc<Vec<String>> = match input.target() {
        Some(t) => Arc::clone(t.classes()),
        None => Arc::new((0..model.n_classes).map(|i| i.to_string()).collect()),
    };
    let c = model.n_classes;
    let n = input.n_rows();
    let s = scores(model, input);
    if s.iter().any(|v| !v.is_finite()) {
        return Err(PrimitiveError::EstimatorFailed {
            primitive: name.to_string(),
            reason: "non-finite class scores".into(),
        });
    }
    let codes = (0..n)
        .map(|r| Some(argmax_lowest(&s[r * c..(r + 1) * c]) as u32))
        .collect();
    let mut columns = vec![Arc::new(Column::categorical(
        format!("{name}@{cell}"),
        Lineage::prediction(cell),
        codes,
        Arc::clone(&classes),
    ))];
    for k in 0..c {
        columns.push(Arc::new(Column::numeric(
            format!("p({})@{cell}", classes[k]),
            Lineage::class_score(cell, k),
            (0..n).map(|r| s[r * c + k]).collect(),
        )));
    }
    Ok(input.with_columns(columns)?)
}

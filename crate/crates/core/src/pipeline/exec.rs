use std::collections::{BTreeSet, HashMap};

use super::{FinalRule, PipelineDag, PipelineError};
use crate::primitives::{self, argmax_lowest, Catalog, FitContext};
use crate::seed;
use crate::tabular::{kfold_split, Table};

/// Hard labels plus row-major `n × n_classes` class scores.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub labels: Vec<u32>,
    pub scores: Vec<f64>,
    pub n_classes: usize,
}

impl Prediction {
    pub fn row_scores(&self, row: usize) -> &[f64] {
        &self.scores[row * self.n_classes..(row + 1) * self.n_classes]
    }
}

pub fn accuracy(predicted: &[u32], truth: &[u32]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    hits as f64 / truth.len() as f64
}

fn ancestors(dag: &PipelineDag, outputs: &[usize]) -> BTreeSet<usize> {
    let mut needed = BTreeSet::new();
    let mut stack: Vec<usize> = outputs.to_vec();
    while let Some(v) = stack.pop() {
        if v == 0 || !needed.insert(v) {
            continue;
        }
        if let Some(vx) = dag.vertex(v) {
            stack.extend(vx.inputs.iter().copied());
        }
    }
    needed
}

/// Fits every vertex the final rule depends on against `train`, applies it
/// to `test`, and reads the prediction off the final vertex.
pub fn execute(
    dag: &PipelineDag,
    rule: &FinalRule,
    catalog: &Catalog,
    train: &Table,
    test: &Table,
    seed: u64,
) -> Result<Prediction, PipelineError> {
    let n_classes = train
        .target()
        .ok_or_else(|| primitives::PrimitiveError::NoTarget("pipeline".into()))?
        .n_classes();
    let needed = ancestors(dag, &rule.outputs());
    let mut outputs: HashMap<usize, (Table, Table)> = HashMap::new();
    for v in dag.vertices().iter().filter(|v| needed.contains(&v.cell)) {
        let pick = |side: usize| -> Result<Table, PipelineError> {
            let tables: Vec<&Table> = v
                .inputs
                .iter()
                .map(|&src| match src {
                    0 => {
                        if side == 0 {
                            train
                        } else {
                            test
                        }
                    }
                    k => {
                        let (tr, te) = &outputs[&k];
                        if side == 0 {
                            tr
                        } else {
                            te
                        }
                    }
                })
                .collect();
            Ok(primitives::merge_inputs(&tables)?)
        };
        let train_in = pick(0)?;
        let test_in = pick(1)?;
        let spec = catalog.spec(v.primitive)?;
        let ctx = FitContext {
            cell: v.cell,
            seed: seed::mix(seed, v.cell as u64),
        };
        let (fitted, train_out) = primitives::fit_apply(spec, &train_in, ctx)?;
        let test_out = primitives::apply(&fitted, &test_in)?;
        outputs.insert(v.cell, (train_out, test_out));
    }

    let n = test.n_rows();
    let read = |cell: usize| -> (Vec<u32>, Vec<f64>) {
        let out = &outputs[&cell].1;
        let (codes, _) = out.column(0).as_categorical().expect("prediction column");
        let mut scores = vec![0.0; n * n_classes];
        for k in 0..n_classes {
            let col = out.column(k + 1).as_numeric().expect("score column");
            for r in 0..n {
                scores[r * n_classes + k] = col[r];
            }
        }
        (codes.to_vec(), scores)
    };
    match rule {
        FinalRule::Single(v) | FinalRule::Combiner(v) => {
            let (labels, scores) = read(*v);
            Ok(Prediction {
                labels,
                scores,
                n_classes,
            })
        }
        FinalRule::MajorityVote(voters) => {
            let mut scores = vec![0.0; n * n_classes];
            let w = 1.0 / voters.len() as f64;
            for &v in voters {
                let (labels, _) = read(v);
                for (r, l) in labels.iter().enumerate() {
                    scores[r * n_classes + *l as usize] += w;
                }
            }
            let labels = (0..n)
                .map(|r| argmax_lowest(&scores[r * n_classes..(r + 1) * n_classes]) as u32)
                .collect();
            Ok(Prediction {
                labels,
                scores,
                n_classes,
            })
        }
    }
}

/// Mean accuracy over `k` stratified folds of `train`.
pub fn evaluate_kfold(
    dag: &PipelineDag,
    rule: &FinalRule,
    catalog: &Catalog,
    train: &Table,
    k: usize,
    seed: u64,
) -> Result<f64, PipelineError> {
    let folds = kfold_split(train, k, seed)?;
    let mut total = 0.0;
    for fold in &folds {
        let pred = execute(dag, rule, catalog, &fold.train, &fold.valid, seed)?;
        let truth = fold.valid.target().expect("folds keep the target").labels();
        total += accuracy(&pred.labels, truth);
    }
    Ok(total / folds.len() as f64)
}

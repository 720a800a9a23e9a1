//! Inference-time search: roll out a trained policy, keep the distinct
//! valid pipelines, rank them by a mix of normalized final Q and k-fold
//! score, and refit the winners.

use std::collections::HashSet;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{rollout, AgentError, Policy};
use crate::environment::LearningJob;
use crate::pipeline::{self, FinalRule, PipelineDag, PipelineDocument, PipelineError, Prediction};
use crate::primitives::{argmax_lowest, Catalog};
use crate::scalar::Scalar;
use crate::seed;
use crate::tabular::Table;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid search config: {0}")]
    Config(String),
    #[error("no valid pipeline in {0} episodes; try more search episodes")]
    NothingFound(usize),
    #[error("every ranked pipeline failed to refit")]
    AllRefitsFailed,
    #[error("evaluation data has no target column")]
    NoTarget,
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Pipelines returned.
    pub k: usize,
    pub episodes: usize,
    /// Weight of normalized Q against k-fold score.
    pub beta: f64,
    pub epsilon: f64,
    /// Folds for scoring; `None` keeps the policy's setting.
    pub k_folds: Option<usize>,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            k: 10,
            episodes: 5000,
            beta: 0.5,
            epsilon: 0.05,
            k_folds: None,
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        if self.k == 0 || self.episodes < self.k {
            return Err(SearchError::Config(format!(
                "need episodes >= k >= 1, got k = {} and episodes = {}",
                self.k, self.episodes
            )));
        }
        if !(0.0..=1.0).contains(&self.beta) || !(0.0..=1.0).contains(&self.epsilon) {
            return Err(SearchError::Config("beta and epsilon must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// A distinct pipeline found during search.
#[derive(Clone, Debug)]
pub struct ScoredPipeline {
    /// Discovery order.
    pub id: usize,
    pub dag: PipelineDag,
    pub rule: FinalRule,
    pub kscore: f64,
    pub q_final: f64,
    pub q_norm: f64,
    pub score: f64,
    /// 1-based.
    pub rank: usize,
}

impl ScoredPipeline {
    pub fn new(id: usize, dag: PipelineDag, rule: FinalRule, kscore: f64, q_final: f64) -> Self {
        ScoredPipeline {
            id,
            dag,
            rule,
            kscore,
            q_final,
            q_norm: 0.0,
            score: 0.0,
            rank: 0,
        }
    }

    pub fn document(&self, catalog: &Catalog) -> PipelineDocument {
        PipelineDocument::from_dag(&self.dag, catalog)
    }
}

pub fn mixed_score(beta: f64, q_norm: f64, kscore: f64) -> f64 {
    beta * q_norm + (1.0 - beta) * kscore
}

/// Min-max normalizes Q, scores every candidate and sorts by score, then
/// k-fold score, then discovery order. Ranks start at 1.
pub fn rank(candidates: &mut Vec<ScoredPipeline>, beta: f64) {
    let lo = candidates.iter().map(|c| c.q_final).fold(f64::INFINITY, f64::min);
    let hi = candidates.iter().map(|c| c.q_final).fold(f64::NEG_INFINITY, f64::max);
    for c in candidates.iter_mut() {
        c.q_norm = if hi > lo { (c.q_final - lo) / (hi - lo) } else { 0.5 };
        c.score = mixed_score(beta, c.q_norm, c.kscore);
    }
    candidates.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(b.kscore.total_cmp(&a.kscore))
            .then(a.id.cmp(&b.id))
    });
    for (i, c) in candidates.iter_mut().enumerate() {
        c.rank = i + 1;
    }
}

/// Runs `episodes` rollouts of `policy` on `job` and returns the top `k`
/// distinct valid pipelines.
pub fn search<T: Scalar>(
    job: Arc<LearningJob>,
    policy: &Policy<T>,
    catalog: Arc<Catalog>,
    config: &SearchConfig,
) -> Result<Vec<ScoredPipeline>, SearchError> {
    config.validate()?;
    let space = policy.space(&catalog);
    let mut env_config = policy.environment.clone();
    if let Some(k) = config.k_folds {
        env_config.k_folds = k;
    }
    let mut env = space.environment(env_config, catalog).map_err(SearchError::Agent)?;
    let mut rng = seed::rng_for(config.seed, 3);
    let mut seen = HashSet::new();
    let mut found = Vec::new();
    for e in 0..config.episodes {
        let r = rollout(
            &policy.net,
            &space,
            &mut env,
            Arc::clone(&job),
            config.epsilon,
            policy.agent.explore_all_levels,
            &mut rng,
            seed::mix(config.seed, e as u64),
        )?;
        let (Some(kscore), Some(q)) = (r.result.kscore, r.final_q) else {
            continue;
        };
        if !seen.insert(r.result.dag.key()) {
            continue;
        }
        let rule = pipeline::finalize(&r.result.dag)?;
        found.push(ScoredPipeline::new(found.len(), r.result.dag, rule, kscore, q));
    }
    if found.is_empty() {
        return Err(SearchError::NothingFound(config.episodes));
    }
    rank(&mut found, config.beta);
    found.truncate(config.k);
    Ok(found)
}

/// Test-set outcome of a refit.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub prediction: Prediction,
    pub accuracy: f64,
    /// Ids of the pipelines that contributed.
    pub used: Vec<usize>,
}

fn truth(test: &Table) -> Result<&[u32], SearchError> {
    Ok(test.target().ok_or(SearchError::NoTarget)?.labels())
}

/// Refits the best-ranked pipeline that executes on `train` and predicts
/// `test`. Failures fall through to the next rank.
pub fn predict_vanilla(
    ranked: &[ScoredPipeline],
    catalog: &Catalog,
    train: &Table,
    test: &Table,
    seed: u64,
) -> Result<Evaluation, SearchError> {
    let truth = truth(test)?;
    for p in ranked {
        match pipeline::execute(&p.dag, &p.rule, catalog, train, test, seed) {
            Ok(prediction) => {
                let accuracy = pipeline::accuracy(&prediction.labels, truth);
                return Ok(Evaluation {
                    prediction,
                    accuracy,
                    used: vec![p.id],
                });
            }
            Err(e) => log::warn!("pipeline {} failed at refit: {e}", p.id),
        }
    }
    Err(SearchError::AllRefitsFailed)
}

/// `score_i / Σ score`; uniform when every score is zero.
pub fn ensemble_weights(scores: &[f64]) -> Vec<f64> {
    let total: f64 = scores.iter().sum();
    if total > 0.0 {
        scores.iter().map(|s| s / total).collect()
    } else {
        vec![1.0 / scores.len() as f64; scores.len()]
    }
}

/// Score-weighted soft vote over the refit pipelines. Pipelines that fail
/// to refit are dropped and the remaining weights renormalized.
pub fn predict_ensemble(
    ranked: &[ScoredPipeline],
    catalog: &Catalog,
    train: &Table,
    test: &Table,
    seed: u64,
) -> Result<Evaluation, SearchError> {
    let truth = truth(test)?;
    let mut fitted = Vec::new();
    for p in ranked {
        match pipeline::execute(&p.dag, &p.rule, catalog, train, test, seed) {
            Ok(pred) => fitted.push((p, pred)),
            Err(e) => log::warn!("pipeline {} failed at refit: {e}", p.id),
        }
    }
    if fitted.is_empty() {
        return Err(SearchError::AllRefitsFailed);
    }
    let weights = ensemble_weights(&fitted.iter().map(|(p, _)| p.score).collect::<Vec<_>>());
    let preds: Vec<&Prediction> = fitted.iter().map(|(_, pred)| pred).collect();
    let prediction = soft_vote(&preds, &weights);
    let accuracy = pipeline::accuracy(&prediction.labels, truth);
    Ok(Evaluation {
        prediction,
        accuracy,
        used: fitted.iter().map(|(p, _)| p.id).collect(),
    })
}

/// Weighted sum of class-score rows; ties go to the lowest class.
pub fn soft_vote(predictions: &[&Prediction], weights: &[f64]) -> Prediction {
    let first = predictions[0];
    let (n, classes) = (first.labels.len(), first.n_classes);
    let mut scores = vec![0.0; n * classes];
    for (pred, w) in predictions.iter().zip(weights) {
        for (acc, s) in scores.iter_mut().zip(&pred.scores) {
            *acc += w * s;
        }
    }
    let labels = scores.chunks(classes).map(|row| argmax_lowest(row) as u32).collect();
    Prediction {
        labels,
        scores,
        n_classes: classes,
    }
}

#[derive(Serialize)]
struct ScoreRow {
    pipeline_id: usize,
    #[serde(rename = "KScore")]
    kscore: f64,
    #[serde(rename = "Q_final")]
    q_final: f64,
    #[serde(rename = "Qnorm")]
    q_norm: f64,
    #[serde(rename = "Score")]
    score: f64,
    rank: usize,
}

pub fn scores_csv(ranked: &[ScoredPipeline]) -> Result<String, SearchError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for p in ranked {
        w.serialize(ScoreRow {
            pipeline_id: p.id,
            kscore: p.kscore,
            q_final: p.q_final,
            q_norm: p.q_norm,
            score: p.score,
            rank: p.rank,
        })?;
    }
    let bytes = w.into_inner().map_err(|e| SearchError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Writes `scores.csv` and `pipeline_<id>.json` for each ranked pipeline.
pub fn write_results(dir: &Path, ranked: &[ScoredPipeline], catalog: &Catalog) -> Result<(), SearchError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("scores.csv"), scores_csv(ranked)?)?;
    for p in ranked {
        fs::write(dir.join(format!("pipeline_{}.json", p.id)), p.document(catalog).to_json())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{Agent, AgentConfig, Mode};
    use crate::environment::EnvironmentConfig;
    use crate::pipeline::{Grid, PipelineStep};
    use crate::primitives::PrimitiveId;
    use crate::tabular::split_train_test;
    use crate::toy;

    fn tree_pipeline(catalog: &Catalog, primitive: u16) -> (PipelineDag, FinalRule) {
        let mut g = Grid::new(1, 1);
        for _ in 0..4 {
            g.place_blank().unwrap();
        }
        g.place(
            PipelineStep {
                primitive: PrimitiveId(primitive),
                inputs: vec![0],
            },
            catalog,
        )
        .unwrap();
        g.place_blank().unwrap();
        let dag = pipeline::compile(&g);
        let rule = pipeline::finalize(&dag).unwrap();
        (dag, rule)
    }

    fn candidates(values: &[(f64, f64)]) -> Vec<ScoredPipeline> {
        let cat = Catalog::standard();
        let (dag, rule) = tree_pipeline(&cat, 13);
        values
            .iter()
            .enumerate()
            .map(|(i, &(k, q))| ScoredPipeline::new(i, dag.clone(), rule.clone(), k, q))
            .collect()
    }

    #[test]
    fn score_arithmetic() {
        assert!((mixed_score(0.5, 0.8, 0.6) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn beta_extremes_rank_by_one_criterion() {
        let vals = [(0.9, -3.0), (0.7, 5.0), (0.8, 1.0), (0.7, 2.0)];
        let mut c = candidates(&vals);
        rank(&mut c, 0.0);
        assert_eq!(c.iter().map(|p| p.id).collect::<Vec<_>>(), vec![0, 2, 1, 3]);
        let mut c = candidates(&vals);
        rank(&mut c, 1.0);
        assert_eq!(c.iter().map(|p| p.id).collect::<Vec<_>>(), vec![1, 3, 2, 0]);
        assert_eq!(c.iter().map(|p| p.rank).collect::<Vec<_>>(), vec![1, 2, 3, 4]);
    }

    #[test]
    fn equal_q_normalizes_to_half() {
        let mut c = candidates(&[(0.5, 2.0), (0.6, 2.0)]);
        rank(&mut c, 0.5);
        assert!(c.iter().all(|p| p.q_norm == 0.5));
        assert_eq!(c[0].id, 1);
    }

    #[test]
    fn weights_sum_to_one() {
        let mut rng = seed::rng(1);
        for _ in 0..100 {
            let s: Vec<f64> = (0..rand::Rng::gen_range(&mut rng, 1..12)).map(|_| rand::Rng::gen::<f64>(&mut rng)).collect();
            assert!((ensemble_weights(&s).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert_eq!(ensemble_weights(&[0.0, 0.0]), vec![0.5, 0.5]);
    }

    #[test]
    fn memorized_feature_refits_perfectly() {
        let cat = Catalog::standard();
        let data = toy::memorize(120);
        let (train, test) = split_train_test(&data, 0.8, 1).unwrap();
        let mut c = candidates(&[(1.0, 0.0)]);
        rank(&mut c, 0.5);
        let v = predict_vanilla(&c, &cat, &train, &test, 0).unwrap();
        assert_eq!(v.accuracy, 1.0);
        let e = predict_ensemble(&c, &cat, &train, &test, 0).unwrap();
        assert_eq!(e.prediction.labels, v.prediction.labels);
    }

    #[test]
    fn identical_ensemble_matches_single() {
        let cat = Catalog::standard();
        let data = toy::blobs(150, 3);
        let (train, test) = split_train_test(&data, 0.8, 2).unwrap();
        let mut c = candidates(&[(0.8, 0.1), (0.8, 0.7), (0.8, 0.3)]);
        rank(&mut c, 0.5);
        let v = predict_vanilla(&c, &cat, &train, &test, 0).unwrap();
        let e = predict_ensemble(&c, &cat, &train, &test, 0).unwrap();
        assert_eq!(v.prediction.labels, e.prediction.labels);
    }

    #[test]
    fn ensemble_ties_go_to_the_lowest_class() {
        let a = Prediction {
            labels: vec![1, 0],
            scores: vec![0.2, 0.8, 0.9, 0.1],
            n_classes: 2,
        };
        let b = Prediction {
            labels: vec![0, 0],
            scores: vec![0.8, 0.2, 0.7, 0.3],
            n_classes: 2,
        };
        let v = soft_vote(&[&a, &b], &ensemble_weights(&[0.6, 0.6]));
        assert_eq!(v.labels, vec![0, 0]);
        let k1 = soft_vote(&[&a], &ensemble_weights(&[0.3]));
        assert_eq!(k1.labels, a.labels);
    }

    #[test]
    fn search_dedups_and_reproduces() {
        let cat = Arc::new(Catalog::standard());
        let agent = Agent::<f32>::new(
            AgentConfig::default(),
            EnvironmentConfig::default(),
            Arc::clone(&cat),
            Mode::Hierarchical,
            4,
        )
        .unwrap();
        let policy = agent.policy();
        let job = Arc::new(LearningJob::classification("blobs", toy::blobs(90, 5)).unwrap());
        let config = SearchConfig {
            k: 4,
            episodes: 12,
            epsilon: 0.5,
            seed: 9,
            ..SearchConfig::default()
        };
        let a = search(Arc::clone(&job), &policy, Arc::clone(&cat), &config).unwrap();
        let b = search(job, &policy, cat, &config).unwrap();
        assert!(!a.is_empty() && a.len() <= 4);
        let keys: HashSet<String> = a.iter().map(|p| p.dag.key()).collect();
        assert_eq!(keys.len(), a.len());
        assert_eq!(scores_csv(&a).unwrap(), scores_csv(&b).unwrap());
        assert!(scores_csv(&a).unwrap().starts_with("pipeline_id,KScore,Q_final,Qnorm,Score,rank"));
    }

    #[test]
    fn config_bounds() {
        let bad = SearchConfig {
            k: 5,
            episodes: 4,
            ..SearchConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(SearchConfig::default().validate().is_ok());
    }
}

//! The grid-filling MDP: open-list generation, state encoding, rewards and
//! episode lifecycle.

mod flat;
mod state;

use std::collections::HashMap;
use std::sync::Arc;

use itertools::Itertools;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::{self, Grid, PipelineDag, PipelineError, PipelineStep};
use crate::primitives::{self, Catalog, Family, FitContext, PrimitiveId};
use crate::seed;
use crate::tabular::{metafeatures, MetaFeatures, Table, TableError, TableFlags};

pub use flat::FlatActions;
pub use state::{BaseState, StateLayout, StateVector, JOB_LEN};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
    #[error("dataset {name} cannot be used: {reason}")]
    UnusableDataset { name: String, reason: String },
    #[error("episode is over; call reset")]
    EpisodeOver,
    #[error("no episode in progress; call reset")]
    NotReset,
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Table(#[from] TableError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvironmentConfig {
    /// Grid rows N.
    pub rows: usize,
    /// Maximum inputs per cell.
    pub n_in: usize,
    /// Cluster size n of the hierarchical step.
    pub cluster_size: usize,
    pub k_folds: usize,
    pub penalty: f64,
    pub gamma: f64,
    /// Above this many (input set × primitive) pairs, extra input sets reuse
    /// the mandatory input's meta-features.
    pub meta_cap: usize,
    /// Seed for population-time fits and k-fold scoring.
    pub fold_seed: u64,
}

impl Default for EnvironmentConfig {
    fn default() -> Self {
        EnvironmentConfig {
            rows: 3,
            n_in: 3,
            cluster_size: 6,
            k_folds: 3,
            penalty: -1.0,
            gamma: 0.99,
            meta_cap: 3000,
            fold_seed: 0,
        }
    }
}

impl EnvironmentConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |s: &str| Err(EnvError::InvalidConfig(s.into()));
        if self.rows < 1 {
            return bad("rows must be at least 1");
        }
        if self.n_in < 1 {
            return bad("n_in must be at least 1");
        }
        if self.cluster_size < 2 {
            return bad("cluster_size must be at least 2");
        }
        if self.k_folds < 2 {
            return bad("k_folds must be at least 2");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.rows * pipeline::COLUMNS
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    Classification,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    Accuracy,
}

/// A dataset with its task and metric.
#[derive(Clone, Debug)]
pub struct LearningJob {
    pub name: String,
    pub dataset: Table,
    pub task: Task,
    pub metric: Metric,
    pub raw_meta: MetaFeatures,
}

impl LearningJob {
    pub fn classification(name: impl Into<String>, dataset: Table) -> Result<Self, EnvError> {
        let name = name.into();
        if dataset.target().is_none() {
            return Err(EnvError::UnusableDataset {
                name,
                reason: "no target column".into(),
            });
        }
        let raw_meta = metafeatures(&dataset)?;
        Ok(LearningJob {
            name,
            dataset,
            task: Task::Classification,
            metric: Metric::Accuracy,
            raw_meta,
        })
    }

    /// Task one-hot, metric one-hot, raw meta-features.
    pub fn descriptor(&self) -> Vec<f64> {
        let mut v = vec![
            f64::from(self.task == Task::Classification),
            f64::from(self.metric == Metric::Accuracy),
        ];
        v.extend_from_slice(self.raw_meta.as_slice());
        v
    }

    fn check(&self, k_folds: usize) -> Result<(), EnvError> {
        let target = self.dataset.target().expect("checked at construction");
        let counts = target.class_counts();
        let bad = |reason: String| EnvError::UnusableDataset {
            name: self.name.clone(),
            reason,
        };
        if counts.iter().filter(|&&c| c > 0).count() < 2 {
            return Err(bad("needs at least two classes".into()));
        }
        if let Some((i, c)) = counts.iter().enumerate().find(|(_, &c)| c > 0 && c < k_folds) {
            return Err(bad(format!(
                "class {} has {c} rows, fewer than {k_folds} folds",
                target.classes()[i]
            )));
        }
        Ok(())
    }
}

/// A (primitive, input set) action for the cursor cell. Padding fills
/// incomplete clusters and is never legal.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionCandidate {
    pub primitive: PrimitiveId,
    pub inputs: Vec<usize>,
    pub valid: bool,
    pub meta: MetaFeatures,
}

impl ActionCandidate {
    pub fn padding() -> Self {
        ActionCandidate {
            primitive: PrimitiveId::BLANK,
            inputs: Vec::new(),
            valid: false,
            meta: MetaFeatures::zeros(),
        }
    }

    pub fn is_blank(&self) -> bool {
        self.valid && self.primitive.is_blank()
    }

    pub fn same_action(&self, other: &ActionCandidate) -> bool {
        self.valid == other.valid && self.primitive == other.primitive && self.inputs == other.inputs
    }

    /// Input refs scaled by the cell count, padded with -1 to `n_in`.
    pub fn ref_slots(&self, n_in: usize, n_cells: usize) -> Vec<f64> {
        (0..n_in)
            .map(|i| {
                self.inputs
                    .get(i)
                    .map_or(-1.0, |&src| src as f64 / n_cells as f64)
            })
            .collect()
    }

    /// Primitive id (padding -1), ref slots, meta-features.
    pub fn encode_into(&self, n_in: usize, n_cells: usize, out: &mut Vec<f64>) {
        out.push(if self.valid { self.primitive.0 as f64 } else { -1.0 });
        out.extend(self.ref_slots(n_in, n_cells));
        out.extend_from_slice(self.meta.as_slice());
    }

    /// Clustering vector: the primitive's embedding row (zeros for padding),
    /// then ref slots and meta-features.
    pub fn dense(&self, embedding: &[f64], n_in: usize, n_cells: usize) -> Vec<f64> {
        let mut v = if self.valid {
            embedding.to_vec()
        } else {
            vec![0.0; embedding.len()]
        };
        v.extend(self.ref_slots(n_in, n_cells));
        v.extend_from_slice(self.meta.as_slice());
        v
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub done: bool,
    /// The chosen action was not legal at the cursor.
    pub penalized: bool,
}

/// Summary of a finished episode.
#[derive(Clone, Debug)]
pub struct EpisodeResult {
    pub dag: PipelineDag,
    /// k-fold score, `None` when the pipeline was invalid or not scored.
    pub kscore: Option<f64>,
}

pub struct Environment {
    config: EnvironmentConfig,
    catalog: Arc<Catalog>,
    job: Option<Arc<LearningJob>>,
    grid: Grid,
    outputs: HashMap<usize, Arc<Table>>,
    output_meta: HashMap<usize, MetaFeatures>,
    open: Vec<ActionCandidate>,
    candidate_meta: bool,
    done: bool,
    result: Option<EpisodeResult>,
    score_cache: HashMap<(String, String), Option<f64>>,
}

impl Environment {
    pub fn new(config: EnvironmentConfig, catalog: Arc<Catalog>) -> Result<Self, EnvError> {
        config.validate()?;
        let grid = Grid::new(config.rows, config.n_in);
        Ok(Environment {
            config,
            catalog,
            job: None,
            grid,
            outputs: HashMap::new(),
            output_meta: HashMap::new(),
            open: Vec::new(),
            candidate_meta: true,
            done: true,
            result: None,
            score_cache: HashMap::new(),
        })
    }

    /// Skip per-candidate meta-features (they are zeroed) when nothing reads
    /// them, as in flat mode.
    pub fn set_candidate_meta(&mut self, on: bool) {
        self.candidate_meta = on;
    }

    pub fn config(&self) -> &EnvironmentConfig {
        &self.config
    }

    pub fn catalog(&self) -> &Arc<Catalog> {
        &self.catalog
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn job(&self) -> Option<&Arc<LearningJob>> {
        self.job.as_ref()
    }

    /// Train-side output of a populated cell (source 0 is the dataset).
    pub fn output(&self, source: usize) -> Option<&Table> {
        self.outputs.get(&source).map(|t| t.as_ref())
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn result(&self) -> Option<&EpisodeResult> {
        self.result.as_ref()
    }

    pub fn reset(&mut self, job: Arc<LearningJob>) -> Result<(), EnvError> {
        job.check(self.config.k_folds)?;
        self.grid = Grid::new(self.config.rows, self.config.n_in);
        self.outputs.clear();
        self.output_meta.clear();
        self.output_meta.insert(0, job.raw_meta);
        self.outputs.insert(0, Arc::new(job.dataset.clone()));
        self.job = Some(job);
        self.done = false;
        self.result = None;
        self.refresh_open_list();
        Ok(())
    }

    /// Legal actions at the cursor; empty once the episode is over.
    pub fn open_list(&self) -> &[ActionCandidate] {
        &self.open
    }

    fn source_meta(&mut self, src: usize) -> MetaFeatures {
        if let Some(m) = self.output_meta.get(&src) {
            return *m;
        }
        let m = metafeatures(&self.outputs[&src]).unwrap_or_else(|_| MetaFeatures::zeros());
        self.output_meta.insert(src, m);
        m
    }

    fn merged(&self, inputs: &[usize]) -> Result<Table, EnvError> {
        let tables: Vec<&Table> = inputs.iter().map(|s| self.outputs[s].as_ref()).collect();
        Ok(primitives::merge_inputs(&tables).map_err(PipelineError::from)?)
    }

    fn refresh_open_list(&mut self) {
        self.open.clear();
        let Some(cell) = self.grid.cursor() else { return };
        let (_, column) = Grid::coords(cell);
        let family = Family::from_column(column).expect("column in range");
        let mandatory = self.grid.mandatory_input();
        let extras = self.grid.extra_sources();
        let max_extra = (self.config.n_in - 1).min(extras.len());
        let sets: Vec<Vec<usize>> = (0..=max_extra)
            .flat_map(|k| extras.iter().copied().combinations(k))
            .map(|combo| {
                let mut s = vec![mandatory];
                s.extend(combo);
                s
            })
            .collect();
        let members: Vec<_> = self.catalog.family(family).cloned().collect();
        let mandatory_meta = self.source_meta(mandatory);
        let reuse = sets.len() * members.len() > self.config.meta_cap;

        let mut flags: Vec<TableFlags> = Vec::with_capacity(sets.len());
        let mut metas: Vec<Option<MetaFeatures>> = vec![None; sets.len()];
        let mut merged_tables: Vec<Option<Table>> = Vec::with_capacity(sets.len());
        for s in &sets {
            if s.len() == 1 {
                flags.push(self.outputs[&s[0]].flags());
                merged_tables.push(None);
            } else {
                let t = self.merged(s).expect("cached outputs share row order");
                flags.push(t.flags());
                merged_tables.push(Some(t));
            }
        }
        for p in &members {
            for (i, s) in sets.iter().enumerate() {
                if !p.accepts_flags(&flags[i]) {
                    continue;
                }
                let meta = if !self.candidate_meta {
                    MetaFeatures::zeros()
                } else if s.len() == 1 {
                    self.source_meta(s[0])
                } else if reuse {
                    mandatory_meta
                } else {
                    *metas[i].get_or_insert_with(|| {
                        metafeatures(merged_tables[i].as_ref().expect("merged"))
                            .unwrap_or_else(|_| MetaFeatures::zeros())
                    })
                };
                self.open.push(ActionCandidate {
                    primitive: p.id,
                    inputs: s.clone(),
                    valid: true,
                    meta,
                });
            }
        }
        self.open.push(ActionCandidate {
            primitive: PrimitiveId::BLANK,
            inputs: vec![mandatory],
            valid: true,
            meta: if self.candidate_meta {
                mandatory_meta
            } else {
                MetaFeatures::zeros()
            },
        });
    }

    /// Everything but the candidate slots.
    pub fn base_state(&mut self) -> BaseState {
        let n_cells = self.config.n_cells();
        let n_in = self.config.n_in;
        let mut gp = Vec::with_capacity(n_cells);
        let mut gin = Vec::with_capacity(n_cells * n_in);
        for id in 1..=n_cells {
            match self.grid.cell(id) {
                pipeline::CellState::Unvisited => {
                    gp.push(-1.0);
                    gin.extend(std::iter::repeat(-1.0).take(n_in));
                }
                pipeline::CellState::Blank => {
                    gp.push(0.0);
                    gin.extend(std::iter::repeat(-1.0).take(n_in));
                }
                pipeline::CellState::Populated(s) => {
                    gp.push(s.primitive.0 as f64);
                    gin.extend((0..n_in).map(|i| s.inputs.get(i).map_or(-1.0, |&x| x as f64 / n_cells as f64)));
                }
            }
        }
        let dag = pipeline::compile(&self.grid);
        let output_meta = if self.done {
            MetaFeatures::zeros()
        } else {
            let m = self.grid.mandatory_input();
            self.source_meta(m)
        };
        BaseState {
            grid_primitives: gp,
            grid_inputs: gin,
            pipeline_meta: pipeline::pipeline_meta(&dag, &self.grid).0,
            output_meta: output_meta.0,
            job: self.job.as_ref().map(|j| j.descriptor()).unwrap_or_else(|| vec![0.0; 14]),
        }
    }

    /// Candidate-slot block for a cluster; `None` slots are padding.
    pub fn encode_candidates(&self, slots: &[Option<&ActionCandidate>]) -> Vec<f64> {
        let n_in = self.config.n_in;
        let n_cells = self.config.n_cells();
        let pad = ActionCandidate::padding();
        let mut out = Vec::with_capacity(slots.len() * StateLayout::slot_width(n_in));
        for s in slots {
            s.unwrap_or(&pad).encode_into(n_in, n_cells, &mut out);
        }
        out
    }

    /// Applies an action. Illegal actions leave the cell blank and earn the
    /// penalty; when the cursor leaves the grid the pipeline is scored.
    pub fn step(&mut self, action: &ActionCandidate) -> Result<StepOutcome, EnvError> {
        if self.job.is_none() {
            return Err(EnvError::NotReset);
        }
        if self.done {
            return Err(EnvError::EpisodeOver);
        }
        let cell = self.grid.cursor().expect("episode running");
        let legal = action.valid && self.open.iter().any(|c| c.same_action(action));
        let mut penalized = !legal;
        if !legal || action.primitive.is_blank() {
            self.grid.place_blank()?;
        } else {
            let input = self.merged(&action.inputs)?;
            let spec = self.catalog.spec(action.primitive).map_err(PipelineError::from)?;
            let ctx = FitContext {
                cell,
                seed: seed::mix(self.config.fold_seed, cell as u64),
            };
            match primitives::fit_apply(spec, &input, ctx) {
                Ok((_, out)) => {
                    self.grid.place(
                        PipelineStep {
                            primitive: action.primitive,
                            inputs: action.inputs.clone(),
                        },
                        &self.catalog,
                    )?;
                    self.outputs.insert(cell, Arc::new(out));
                }
                Err(e) => {
                    log::debug!("{} failed at cell {cell}: {e}", spec.name);
                    self.grid.place_blank()?;
                    penalized = true;
                }
            }
        }
        let mut reward = if penalized { self.config.penalty } else { 0.0 };
        if self.grid.is_complete() {
            self.done = true;
            let dag = pipeline::compile(&self.grid);
            let kscore = if penalized { None } else { self.score(&dag) };
            if !penalized {
                reward = kscore.unwrap_or(self.config.penalty);
            }
            self.result = Some(EpisodeResult { dag, kscore });
            self.open.clear();
        } else {
            self.refresh_open_list();
        }
        Ok(StepOutcome {
            reward,
            done: self.done,
            penalized,
        })
    }

    fn score(&mut self, dag: &PipelineDag) -> Option<f64> {
        let job = Arc::clone(self.job.as_ref().expect("episode running"));
        let key = (job.name.clone(), dag.key());
        if let Some(s) = self.score_cache.get(&key) {
            return *s;
        }
        let s = pipeline::finalize(dag).ok().and_then(|rule| {
            pipeline::evaluate_kfold(
                dag,
                &rule,
                &self.catalog,
                &job.dataset,
                self.config.k_folds,
                self.config.fold_seed,
            )
            .map_err(|e| log::debug!("pipeline invalid during scoring: {e}"))
            .ok()
        });
        self.score_cache.insert(key, s);
        s
    }
}

#[cfg(test)]
mod tests;

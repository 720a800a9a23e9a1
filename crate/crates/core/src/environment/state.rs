use std::sync::Arc;

use crate::pipeline::{PipelineMeta, COLUMNS};
use crate::tabular::MetaFeatures;

/// Length of the task/metric/dataset descriptor.
pub const JOB_LEN: usize = 2 + MetaFeatures::LEN;

/// State parts shared by every cluster query of one decision.
#[derive(Clone, Debug, PartialEq)]
pub struct BaseState {
    /// Primitive id per cell; blank 0, unvisited -1.
    pub grid_primitives: Vec<f64>,
    /// `n_in` scaled input refs per cell, absent -1.
    pub grid_inputs: Vec<f64>,
    pub pipeline_meta: [f64; PipelineMeta::LEN],
    /// Meta-features of the cursor cell's mandatory input.
    pub output_meta: [f64; MetaFeatures::LEN],
    pub job: Vec<f64>,
}

impl BaseState {
    /// Pipeline meta, output meta and job descriptor, in that order.
    pub fn context(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(StateLayout::CONTEXT);
        v.extend_from_slice(&self.pipeline_meta);
        v.extend_from_slice(&self.output_meta);
        v.extend_from_slice(&self.job);
        v
    }
}

/// Base state plus the candidate slots of one cluster. In flat mode the
/// slot block is empty.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    pub base: Arc<BaseState>,
    pub candidates: Vec<f64>,
}

impl StateVector {
    pub fn new(base: Arc<BaseState>, candidates: Vec<f64>) -> Self {
        StateVector { base, candidates }
    }

    /// All parts concatenated: grid primitives, grid inputs, pipeline meta,
    /// output meta, job descriptor, candidate slots.
    pub fn to_flat(&self) -> Vec<f64> {
        let b = &self.base;
        let mut v = Vec::with_capacity(b.grid_primitives.len() + b.grid_inputs.len() + StateLayout::CONTEXT + self.candidates.len());
        v.extend_from_slice(&b.grid_primitives);
        v.extend_from_slice(&b.grid_inputs);
        v.extend(b.context());
        v.extend_from_slice(&self.candidates);
        v
    }
}

/// Sizes of the state partitions for a configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StateLayout {
    pub rows: usize,
    pub n_in: usize,
    pub slots: usize,
}

impl StateLayout {
    pub const CONTEXT: usize = PipelineMeta::LEN + MetaFeatures::LEN + JOB_LEN;

    /// Primitive id, refs, meta-features.
    pub fn slot_width(n_in: usize) -> usize {
        1 + n_in + MetaFeatures::LEN
    }

    pub fn n_cells(&self) -> usize {
        self.rows * COLUMNS
    }

    /// Length of [`StateVector::to_flat`].
    pub fn total(&self) -> usize {
        self.n_cells() * (1 + self.n_in) + Self::CONTEXT + self.slots * Self::slot_width(self.n_in)
    }
}

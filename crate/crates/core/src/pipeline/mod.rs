//! The 6×N grid, its compilation to a pipeline DAG, execution and k-fold
//! scoring.

mod exec;
mod export;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::primitives::{Catalog, Family, PrimitiveError, PrimitiveId};
use crate::tabular::TableError;

pub use exec::{accuracy, evaluate_kfold, execute, Prediction};
pub use export::{to_dot, PipelineDocument, VertexRecord};

/// Grid columns, one per primitive family.
pub const COLUMNS: usize = 6;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("the grid has no cell left to fill")]
    GridComplete,
    #[error("invalid step at cell {cell}: {reason}")]
    InvalidStep { cell: usize, reason: String },
    #[error("pipeline has no estimator")]
    NoEstimator,
    #[error("pipeline failed during execution: {0}")]
    Execution(#[from] PrimitiveError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("pipeline document was written for a different catalog")]
    CatalogMismatch,
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PipelineStep {
    pub primitive: PrimitiveId,
    /// Source ids: 0 is the raw dataset, k > 0 the cell with linear index k.
    /// The first entry is the row's mandatory input.
    pub inputs: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CellState {
    Unvisited,
    Blank,
    Populated(PipelineStep),
}

/// The board. Cells use 1-based linear ids `(row - 1) * 6 + column`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    rows: usize,
    n_in: usize,
    cells: Vec<CellState>,
    /// 0-based index of the next cell to fill.
    cursor: usize,
}

impl Grid {
    pub fn new(rows: usize, n_in: usize) -> Self {
        assert!(rows >= 1 && n_in >= 1, "grid needs at least one row and one input slot");
        Grid {
            rows,
            n_in,
            cells: vec![CellState::Unvisited; rows * COLUMNS],
            cursor: 0,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cell_id(row: usize, column: usize) -> usize {
        (row - 1) * COLUMNS + column
    }

    pub fn coords(id: usize) -> (usize, usize) {
        ((id - 1) / COLUMNS + 1, (id - 1) % COLUMNS + 1)
    }

    pub fn cell(&self, id: usize) -> &CellState {
        &self.cells[id - 1]
    }

    /// Id of the cell under the cursor, `None` once the sweep is over.
    pub fn cursor(&self) -> Option<usize> {
        (self.cursor < self.cells.len()).then_some(self.cursor + 1)
    }

    pub fn is_complete(&self) -> bool {
        self.cursor >= self.cells.len()
    }

    fn is_populated(&self, id: usize) -> bool {
        matches!(self.cells[id - 1], CellState::Populated(_))
    }

    /// Last populated cell of the cursor row, or the raw source.
    pub fn mandatory_input(&self) -> usize {
        let Some(cur) = self.cursor() else { return 0 };
        let (row, column) = Grid::coords(cur);
        (1..column)
            .rev()
            .map(|c| Grid::cell_id(row, c))
            .find(|&id| self.is_populated(id))
            .unwrap_or(0)
    }

    /// Populated cells in earlier rows whose column does not exceed the
    /// cursor's, ascending.
    pub fn extra_sources(&self) -> Vec<usize> {
        let Some(cur) = self.cursor() else { return Vec::new() };
        let (row, column) = Grid::coords(cur);
        (1..row)
            .flat_map(|r| (1..=column).map(move |c| Grid::cell_id(r, c)))
            .filter(|&id| self.is_populated(id))
            .collect()
    }

    pub fn place_blank(&mut self) -> Result<(), PipelineError> {
        if self.is_complete() {
            return Err(PipelineError::GridComplete);
        }
        self.cells[self.cursor] = CellState::Blank;
        self.cursor += 1;
        Ok(())
    }

    /// Validates `step` against the cursor cell and places it.
    pub fn place(&mut self, step: PipelineStep, catalog: &Catalog) -> Result<(), PipelineError> {
        let cell = self.cursor().ok_or(PipelineError::GridComplete)?;
        let (_, column) = Grid::coords(cell);
        let bad = |reason: String| PipelineError::InvalidStep { cell, reason };
        let spec = catalog.get(step.primitive).ok_or_else(|| bad(format!("unknown primitive {}", step.primitive)))?;
        if spec.family != Family::from_column(column).expect("column in range") {
            return Err(bad(format!("{} does not belong in column {column}", spec.name)));
        }
        if step.inputs.is_empty() || step.inputs.len() > self.n_in {
            return Err(bad(format!("needs 1..={} inputs, got {}", self.n_in, step.inputs.len())));
        }
        if step.inputs[0] != self.mandatory_input() {
            return Err(bad(format!(
                "first input must be {}, got {}",
                self.mandatory_input(),
                step.inputs[0]
            )));
        }
        let extras = self.extra_sources();
        let mut seen = BTreeSet::new();
        for &src in &step.inputs {
            if !seen.insert(src) {
                return Err(bad(format!("input {src} repeated")));
            }
        }
        for &src in &step.inputs[1..] {
            if !extras.contains(&src) {
                return Err(bad(format!("input {src} is not reachable from this cell")));
            }
        }
        self.cells[self.cursor] = CellState::Populated(step);
        self.cursor += 1;
        Ok(())
    }

    /// Populated cells in id order.
    pub fn steps(&self) -> impl Iterator<Item = (usize, &PipelineStep)> {
        self.cells.iter().enumerate().filter_map(|(i, c)| match c {
            CellState::Populated(s) => Some((i + 1, s)),
            _ => None,
        })
    }

    pub fn n_blanks(&self) -> usize {
        self.cells.iter().filter(|c| **c == CellState::Blank).count()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Vertex {
    pub cell: usize,
    pub primitive: PrimitiveId,
    pub inputs: Vec<usize>,
}

impl Vertex {
    pub fn column(&self) -> usize {
        Grid::coords(self.cell).1
    }

    pub fn predicts(&self) -> bool {
        self.column() >= Family::Estimator.column()
    }
}

/// Populated steps plus the implicit raw-source vertex 0.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PipelineDag {
    rows: usize,
    n_in: usize,
    vertices: Vec<Vertex>,
}

impl PipelineDag {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    /// Step vertices in increasing cell id; the raw source is not listed.
    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn vertex(&self, cell: usize) -> Option<&Vertex> {
        self.vertices.iter().find(|v| v.cell == cell)
    }

    /// Counts the raw source.
    pub fn n_vertices(&self) -> usize {
        self.vertices.len() + 1
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.vertices
            .iter()
            .flat_map(|v| v.inputs.iter().map(move |&src| (src, v.cell)))
    }

    pub fn n_edges(&self) -> usize {
        self.vertices.iter().map(|v| v.inputs.len()).sum()
    }

    pub fn out_degree(&self, source: usize) -> usize {
        self.edges().filter(|&(s, _)| s == source).count()
    }

    /// Step vertices nothing consumes.
    pub fn terminals(&self) -> Vec<&Vertex> {
        self.vertices
            .iter()
            .filter(|v| self.out_degree(v.cell) == 0)
            .collect()
    }

    /// Structural identity used to deduplicate search results.
    pub fn key(&self) -> String {
        self.vertices
            .iter()
            .map(|v| {
                let inputs: Vec<String> = v.inputs.iter().map(|i| i.to_string()).collect();
                format!("{}:{}<{}", v.cell, v.primitive, inputs.join(","))
            })
            .collect::<Vec<_>>()
            .join(";")
    }

    /// Every edge runs forward in time and never leftward across columns.
    pub fn is_acyclic(&self) -> bool {
        self.edges().all(|(s, d)| s < d && (s == 0 || Grid::coords(s).1 <= Grid::coords(d).1))
    }

    /// Longest path from the raw source, in edges.
    pub fn max_path_length(&self) -> usize {
        let mut depth = std::collections::HashMap::from([(0usize, 0usize)]);
        for v in &self.vertices {
            let d = v.inputs.iter().map(|i| depth[i]).max().unwrap_or(0) + 1;
            depth.insert(v.cell, d);
        }
        depth.values().copied().max().unwrap_or(0)
    }
}

/// Reads the DAG off a grid. Blank and unvisited cells are dropped, so a
/// partially filled grid compiles to its current prefix.
pub fn compile(grid: &Grid) -> PipelineDag {
    PipelineDag {
        rows: grid.rows,
        n_in: grid.n_in,
        vertices: grid
            .steps()
            .map(|(cell, s)| Vertex {
                cell,
                primitive: s.primitive,
                inputs: s.inputs.clone(),
            })
            .collect(),
    }
}

/// Which vertex produces the pipeline's prediction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalRule {
    Single(usize),
    Combiner(usize),
    MajorityVote(Vec<usize>),
}

impl FinalRule {
    pub fn outputs(&self) -> Vec<usize> {
        match self {
            FinalRule::Single(v) | FinalRule::Combiner(v) => vec![*v],
            FinalRule::MajorityVote(vs) => vs.clone(),
        }
    }
}

/// Unique terminal predictor, else the last terminal combiner, else a
/// majority vote of the terminal estimators.
pub fn finalize(dag: &PipelineDag) -> Result<FinalRule, PipelineError> {
    let terminals: Vec<&Vertex> = dag.terminals().into_iter().filter(|v| v.predicts()).collect();
    match terminals.as_slice() {
        [] => Err(PipelineError::NoEstimator),
        [only] => Ok(FinalRule::Single(only.cell)),
        many => {
            let combiner = Family::Combiner.column();
            if let Some(last) = many.iter().rev().find(|v| v.column() == combiner) {
                Ok(FinalRule::Combiner(last.cell))
            } else {
                Ok(FinalRule::MajorityVote(many.iter().map(|v| v.cell).collect()))
            }
        }
    }
}

/// Shape descriptor of a (partial) pipeline.
///
/// Order: vertices, edges, predictors, blank cells, max in-degree, longest
/// path, mean out-degree.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineMeta(pub [f64; PipelineMeta::LEN]);

impl PipelineMeta {
    pub const LEN: usize = 7;
}

pub fn pipeline_meta(dag: &PipelineDag, grid: &Grid) -> PipelineMeta {
    let n_vertices = dag.n_vertices() as f64;
    let n_edges = dag.n_edges() as f64;
    PipelineMeta([
        n_vertices,
        n_edges,
        dag.vertices.iter().filter(|v| v.predicts()).count() as f64,
        grid.n_blanks() as f64,
        dag.vertices.iter().map(|v| v.inputs.len()).max().unwrap_or(0) as f64,
        dag.max_path_length() as f64,
        n_edges / n_vertices,
    ])
}

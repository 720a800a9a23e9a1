use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{finalize, FinalRule, Grid, PipelineDag, PipelineError, PipelineStep, Vertex};
use crate::primitives::{Catalog, PrimitiveId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VertexRecord {
    pub cell: usize,
    pub row: usize,
    pub column: usize,
    pub primitive: PrimitiveId,
    pub name: String,
    pub hyperparameters: BTreeMap<String, f64>,
    pub inputs: Vec<usize>,
}

/// Self-describing JSON form of a pipeline. Source 0 is the raw dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineDocument {
    pub rows: usize,
    pub n_in: usize,
    pub catalog_hash: String,
    pub n_vertices: usize,
    pub n_edges: usize,
    pub vertices: Vec<VertexRecord>,
    pub edges: Vec<[usize; 2]>,
    pub final_rule: Option<FinalRule>,
}

impl PipelineDocument {
    pub fn from_dag(dag: &PipelineDag, catalog: &Catalog) -> Self {
        let vertices = dag
            .vertices()
            .iter()
            .map(|v| {
                let (row, column) = Grid::coords(v.cell);
                let spec = catalog.get(v.primitive);
                VertexRecord {
                    cell: v.cell,
                    row,
                    column,
                    primitive: v.primitive,
                    name: spec.map_or_else(|| "?".into(), |s| s.name.clone()),
                    hyperparameters: spec.map(|s| s.hyperparameters.clone()).unwrap_or_default(),
                    inputs: v.inputs.clone(),
                }
            })
            .collect();
        PipelineDocument {
            rows: dag.rows(),
            n_in: dag.n_in(),
            catalog_hash: catalog.hash(),
            n_vertices: dag.n_vertices(),
            n_edges: dag.n_edges(),
            vertices,
            edges: dag.edges().map(|(s, d)| [s, d]).collect(),
            final_rule: finalize(dag).ok(),
        }
    }

    /// Replays the vertices onto a fresh grid, which re-validates every step.
    pub fn to_dag(&self, catalog: &Catalog) -> Result<PipelineDag, PipelineError> {
        if self.catalog_hash != catalog.hash() {
            return Err(PipelineError::CatalogMismatch);
        }
        let grid = self.to_grid(catalog)?;
        Ok(super::compile(&grid))
    }

    pub fn to_grid(&self, catalog: &Catalog) -> Result<Grid, PipelineError> {
        let mut grid = Grid::new(self.rows, self.n_in);
        let by_cell: BTreeMap<usize, &VertexRecord> = self.vertices.iter().map(|v| (v.cell, v)).collect();
        for cell in 1..=grid.n_cells() {
            match by_cell.get(&cell) {
                Some(v) => grid.place(
                    PipelineStep {
                        primitive: v.primitive,
                        inputs: v.inputs.clone(),
                    },
                    catalog,
                )?,
                None => grid.place_blank()?,
            }
        }
        debug_assert!(grid.steps().count() == self.vertices.len());
        Ok(grid)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("document serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, PipelineError> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Graphviz rendering; the final vertex is drawn with a double border.
pub fn to_dot(dag: &PipelineDag, catalog: &Catalog) -> String {
    let finals = finalize(dag).map(|r| r.outputs()).unwrap_or_default();
    let mut out = String::from("digraph pipeline {\n  rankdir=LR;\n  s0 [label=\"raw data\", shape=box];\n");
    for Vertex { cell, primitive, .. } in dag.vertices() {
        let (row, column) = Grid::coords(*cell);
        let name = catalog.get(*primitive).map_or("?", |s| s.name.as_str());
        let shape = if finals.contains(cell) { "doublecircle" } else { "ellipse" };
        let _ = writeln!(
            out,
            "  s{cell} [label=\"{name}\\n({row},{column})\", shape={shape}];"
        );
    }
    for (s, d) in dag.edges() {
        let _ = writeln!(out, "  s{s} -> s{d};");
    }
    out.push_str("}\n");
    out
}

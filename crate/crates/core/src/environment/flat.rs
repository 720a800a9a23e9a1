use itertools::Itertools;

use super::{ActionCandidate, Environment};
use crate::pipeline::COLUMNS;
use crate::primitives::{Catalog, Family, PrimitiveId};
use crate::tabular::MetaFeatures;

/// Fixed enumeration of every (primitive, extra-input pattern) pair for
/// the plugin-free baseline. Extras are cells of rows `1..N` whose column
/// does not exceed the primitive's; the mandatory input is implied. Blank
/// is the last entry.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlatActions {
    entries: Vec<(PrimitiveId, Vec<usize>)>,
}

impl FlatActions {
    pub fn new(catalog: &Catalog, rows: usize, n_in: usize) -> Self {
        let mut entries = Vec::new();
        for family in Family::ALL {
            let column = family.column();
            let pool: Vec<usize> = (1..rows)
                .flat_map(|r| (1..=column).map(move |c| (r - 1) * COLUMNS + c))
                .collect();
            let patterns: Vec<Vec<usize>> = (0..n_in.min(pool.len() + 1))
                .flat_map(|k| pool.iter().copied().combinations(k))
                .collect();
            for p in catalog.family(family) {
                for extras in &patterns {
                    entries.push((p.id, extras.clone()));
                }
            }
        }
        entries.push((PrimitiveId::BLANK, Vec::new()));
        FlatActions { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, index: usize) -> (PrimitiveId, &[usize]) {
        let (p, e) = &self.entries[index];
        (*p, e)
    }

    /// The concrete action for the environment's cursor cell. Whether it
    /// is legal is decided by [`Environment::step`].
    pub fn candidate(&self, index: usize, env: &Environment) -> ActionCandidate {
        let (primitive, extras) = self.entry(index);
        let mut inputs = vec![env.grid().mandatory_input()];
        inputs.extend_from_slice(extras);
        ActionCandidate {
            primitive,
            inputs,
            valid: true,
            meta: MetaFeatures::zeros(),
        }
    }

    /// Index of an open-list candidate, if the table contains it.
    pub fn index_of(&self, c: &ActionCandidate) -> Option<usize> {
        if !c.valid {
            return None;
        }
        let extras = c.inputs.get(1..).unwrap_or(&[]);
        self.entries
            .iter()
            .position(|(p, e)| *p == c.primitive && e.as_slice() == extras)
    }
}

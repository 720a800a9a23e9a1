//! The primitive catalog: six families of transformers, selectors and
//! classifiers, their capability flags, and fit/apply semantics.

mod catalog;
mod estimator;
mod transform;

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tabular::{Lineage, Table, TableError, TableFlags};

pub use catalog::{catalog, Catalog};
pub(crate) use estimator::argmax_lowest;

#[derive(Debug, Error)]
pub enum PrimitiveError {
    #[error("merge inputs disagree on row count: expected {expected}, found {found}")]
    RowMismatch { expected: usize, found: usize },
    #[error("merge needs at least one input table")]
    EmptyMerge,
    #[error("primitive {0} cannot accept its input")]
    Rejected(String),
    #[error("primitive {0} needs a target column")]
    NoTarget(String),
    #[error("primitive {0} applied to a table whose columns differ from fit time")]
    SchemaMismatch(String),
    #[error("estimator {primitive} failed: {reason}")]
    EstimatorFailed { primitive: String, reason: String },
    #[error("unknown primitive id {0}")]
    UnknownPrimitive(u16),
    #[error(transparent)]
    Table(#[from] TableError),
}

/// Stable catalog index; `0` is the blank pseudo-primitive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PrimitiveId(pub u16);

impl PrimitiveId {
    pub const BLANK: PrimitiveId = PrimitiveId(0);

    pub fn is_blank(self) -> bool {
        self.0 == 0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for PrimitiveId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Primitive family; the discriminant is the grid column it occupies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    DataPreprocessing = 1,
    FeaturePreprocessing = 2,
    FeatureSelection = 3,
    FeatureEngineering = 4,
    Estimator = 5,
    Combiner = 6,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::DataPreprocessing,
        Family::FeaturePreprocessing,
        Family::FeatureSelection,
        Family::FeatureEngineering,
        Family::Estimator,
        Family::Combiner,
    ];

    /// 1-based grid column.
    pub fn column(self) -> usize {
        self as usize
    }

    pub fn from_column(column: usize) -> Option<Family> {
        Family::ALL.get(column.checked_sub(1)?).copied()
    }

    pub fn predicts(self) -> bool {
        matches!(self, Family::Estimator | Family::Combiner)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    MeanModeImputer,
    OneHotEncoder,
    DropConstantColumns,
    MinMaxScaler,
    Standardizer,
    EqualWidthDiscretizer,
    VarianceThreshold,
    MutualInfoTopK,
    ChiSquareTopK,
    PcaProjection,
    InteractionFeatures,
    RandomProjection,
    DecisionTree,
    RandomForest,
    KNearestNeighbors,
    NaiveBayes,
    LogisticRegression,
}

impl Algorithm {
    pub fn is_estimator(self) -> bool {
        matches!(
            self,
            Algorithm::DecisionTree
                | Algorithm::RandomForest
                | Algorithm::KNearestNeighbors
                | Algorithm::NaiveBayes
                | Algorithm::LogisticRegression
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveSpec {
    pub id: PrimitiveId,
    pub name: String,
    pub family: Family,
    pub algorithm: Algorithm,
    pub handles_missing: bool,
    pub handles_categorical: bool,
    pub requires_nonnegative: bool,
    pub hyperparameters: std::collections::BTreeMap<String, f64>,
}

impl PrimitiveSpec {
    pub fn hyper(&self, name: &str) -> f64 {
        *self
            .hyperparameters
            .get(name)
            .unwrap_or_else(|| panic!("primitive {} has no hyperparameter {name}", self.name))
    }

    /// Capability check against precomputed table flags.
    pub fn accepts_flags(&self, flags: &TableFlags) -> bool {
        flags.n_columns >= 1
            && (!flags.has_missing || self.handles_missing)
            && (!flags.has_categorical || self.handles_categorical)
            && (!flags.has_negative || !self.requires_nonnegative)
    }
}

/// True iff `p` can process `merged_input` as-is.
pub fn can_accept(p: &PrimitiveSpec, merged_input: &Table) -> bool {
    p.accepts_flags(&merged_input.flags())
}

/// Concatenates inputs column-wise, keeping only the first column of each
/// lineage id. The target comes from the first input.
pub fn merge_inputs(inputs: &[&Table]) -> Result<Table, PrimitiveError> {
    let first = inputs.first().ok_or(PrimitiveError::EmptyMerge)?;
    if inputs.len() == 1 {
        return Ok((*first).clone());
    }
    let n_rows = first.n_rows();
    let mut seen: HashSet<&Lineage> = HashSet::new();
    let mut columns = Vec::new();
    for t in inputs {
        if t.n_rows() != n_rows {
            return Err(PrimitiveError::RowMismatch {
                expected: n_rows,
                found: t.n_rows(),
            });
        }
        for col in t.columns() {
            if seen.insert(col.lineage()) {
                columns.push(Arc::clone(col));
            }
        }
    }
    Ok(first.with_columns(columns)?)
}

/// Where and how a primitive is being fitted. `cell` feeds output lineage.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FitContext {
    pub cell: usize,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub(crate) enum Learned {
    Transform(transform::TransformParams),
    Model(estimator::Model),
}

#[derive(Clone, Debug)]
pub struct FittedPrimitive {
    spec_id: PrimitiveId,
    name: String,
    cell: usize,
    input_signature: Vec<Lineage>,
    learned: Learned,
    fell_back: bool,
}

impl FittedPrimitive {
    pub fn spec_id(&self) -> PrimitiveId {
        self.spec_id
    }

    pub fn input_signature(&self) -> &[Lineage] {
        &self.input_signature
    }

    /// True when a numerical failure replaced the transform by identity.
    pub fn fell_back(&self) -> bool {
        self.fell_back
    }
}

/// Fits `p` on `input` and returns the fitted primitive with its output on
/// the same table.
pub fn fit_apply(
    p: &PrimitiveSpec,
    input: &Table,
    ctx: FitContext,
) -> Result<(FittedPrimitive, Table), PrimitiveError> {
    if !can_accept(p, input) {
        return Err(PrimitiveError::Rejected(p.name.clone()));
    }
    let (learned, fell_back, out) = if p.algorithm.is_estimator() {
        let model = estimator::fit(p, input, ctx)?;
        let out = estimator::predict_table(&model, &p.name, input, ctx.cell)?;
        (Learned::Model(model), false, out)
    } else {
        let fitted = transform::fit(p, input, ctx).map(|params| {
            let out = transform::apply(&params, input, ctx.cell);
            (params, out)
        });
        match fitted {
            Some((params, Ok(out))) if transform::all_finite(&out) => {
                (Learned::Transform(params), false, out)
            }
            _ => {
                log::debug!(
                    "{} at cell {} hit a numerical failure; using identity",
                    p.name,
                    ctx.cell
                );
                let identity = transform::TransformParams::Identity;
                (Learned::Transform(identity), true, input.clone())
            }
        }
    };
    let fitted = FittedPrimitive {
        spec_id: p.id,
        name: p.name.clone(),
        cell: ctx.cell,
        input_signature: input.lineage_signature(),
        learned,
        fell_back,
    };
    Ok((fitted, out))
}

/// Applies learned parameters to a table with the fit-time schema.
pub fn apply(fp: &FittedPrimitive, input: &Table) -> Result<Table, PrimitiveError> {
    let same = input.n_cols() == fp.input_signature.len()
        && input
            .columns()
            .iter()
            .zip(&fp.input_signature)
            .all(|(c, l)| c.lineage() == l);
    if !same {
        return Err(PrimitiveError::SchemaMismatch(fp.name.clone()));
    }
    match &fp.learned {
        Learned::Transform(params) => transform::apply(params, input, fp.cell),
        Learned::Model(model) => estimator::predict_table(model, &fp.name, input, fp.cell),
    }
}

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Algorithm, Family, PrimitiveError, PrimitiveId, PrimitiveSpec};

/// Ordered primitive list; `specs[i]` has id `i + 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    specs: Vec<PrimitiveSpec>,
}

struct Entry {
    name: &'static str,
    family: Family,
    algorithm: Algorithm,
    missing: bool,
    categorical: bool,
    nonnegative: bool,
    hyper: &'static [(&'static str, f64)],
}

const SELECTOR: &[(&str, f64)] = &[("keep_fraction", 0.5)];
const TREE: &[(&str, f64)] = &[("max_depth", 8.0), ("min_samples_split", 2.0)];
const FOREST: &[(&str, f64)] = &[("n_trees", 20.0), ("max_depth", 8.0), ("min_samples_split", 2.0)];
const KNN: &[(&str, f64)] = &[("k", 5.0)];
const NAIVE_BAYES: &[(&str, f64)] = &[("var_smoothing", 1e-9), ("alpha", 1.0)];
const LOGISTIC: &[(&str, f64)] = &[("iterations", 200.0), ("learning_rate", 0.5), ("l2", 1e-3)];

fn estimators(family: Family) -> [Entry; 5] {
    let combiner = family == Family::Combiner;
    let name = |est: &'static str, comb: &'static str| if combiner { comb } else { est };
    [
        Entry {
            name: name("decision_tree", "decision_tree_combiner"),
            family,
            algorithm: Algorithm::DecisionTree,
            missing: false,
            categorical: true,
            nonnegative: false,
            hyper: TREE,
        },
        Entry {
            name: name("random_forest", "random_forest_combiner"),
            family,
            algorithm: Algorithm::RandomForest,
            missing: false,
            categorical: true,
            nonnegative: false,
            hyper: FOREST,
        },
        Entry {
            name: name("k_nearest_neighbors", "k_nearest_neighbors_combiner"),
            family,
            algorithm: Algorithm::KNearestNeighbors,
            missing: false,
            categorical: false,
            nonnegative: false,
            hyper: KNN,
        },
        Entry {
            name: name("naive_bayes", "naive_bayes_combiner"),
            family,
            algorithm: Algorithm::NaiveBayes,
            missing: true,
            categorical: true,
            nonnegative: false,
            hyper: NAIVE_BAYES,
        },
        Entry {
            name: name("logistic_regression", "logistic_regression_combiner"),
            family,
            algorithm: Algorithm::LogisticRegression,
            missing: false,
            categorical: false,
            nonnegative: false,
            hyper: LOGISTIC,
        },
    ]
}

fn entries() -> Vec<Entry> {
    use Algorithm::*;
    use Family::*;
    let t = |name, family, algorithm, missing, categorical, nonnegative, hyper| Entry {
        name,
        family,
        algorithm,
        missing,
        categorical,
        nonnegative,
        hyper,
    };
    let mut v = vec![
        t("mean_mode_imputer", DataPreprocessing, MeanModeImputer, true, true, false, &[][..]),
        t("one_hot_encoder", DataPreprocessing, OneHotEncoder, true, true, false, &[]),
        t("drop_constant_columns", DataPreprocessing, DropConstantColumns, true, true, false, &[]),
        t("min_max_scaler", FeaturePreprocessing, MinMaxScaler, true, false, false, &[]),
        t("standardizer", FeaturePreprocessing, Standardizer, true, false, false, &[]),
        t(
            "equal_width_discretizer",
            FeaturePreprocessing,
            EqualWidthDiscretizer,
            true,
            false,
            false,
            &[("bins", 5.0)],
        ),
        t("variance_threshold", FeatureSelection, VarianceThreshold, true, false, false, SELECTOR),
        t(
            "mutual_info_top_k",
            FeatureSelection,
            MutualInfoTopK,
            false,
            true,
            false,
            &[("keep_fraction", 0.5), ("bins", 10.0)],
        ),
        t("chi_square_top_k", FeatureSelection, ChiSquareTopK, false, false, true, SELECTOR),
        t(
            "pca_projection",
            FeatureEngineering,
            PcaProjection,
            false,
            false,
            false,
            &[("max_components", 8.0)],
        ),
        t(
            "interaction_features",
            FeatureEngineering,
            InteractionFeatures,
            false,
            false,
            false,
            &[("max_new_features", 32.0)],
        ),
        t(
            "random_projection",
            FeatureEngineering,
            RandomProjection,
            false,
            false,
            false,
            &[("max_components", 8.0)],
        ),
    ];
    v.extend(estimators(Estimator));
    v.extend(estimators(Combiner));
    v
}

impl Catalog {
    /// The fixed catalog: three members in each preprocessing, selection and
    /// engineering family, five estimators, and the same five as combiners.
    pub fn standard() -> Self {
        let specs = entries()
            .into_iter()
            .enumerate()
            .map(|(i, e)| PrimitiveSpec {
                id: PrimitiveId(i as u16 + 1),
                name: e.name.to_string(),
                family: e.family,
                algorithm: e.algorithm,
                handles_missing: e.missing,
                handles_categorical: e.categorical,
                requires_nonnegative: e.nonnegative,
                hyperparameters: e
                    .hyper
                    .iter()
                    .map(|(k, v)| (k.to_string(), *v))
                    .collect::<BTreeMap<_, _>>(),
            })
            .collect();
        Catalog { specs }
    }

    pub fn from_specs(specs: Vec<PrimitiveSpec>) -> Self {
        Catalog { specs }
    }

    /// Number of real primitives (excluding blank).
    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn specs(&self) -> &[PrimitiveSpec] {
        &self.specs
    }

    pub fn get(&self, id: PrimitiveId) -> Option<&PrimitiveSpec> {
        id.index().checked_sub(1).and_then(|i| self.specs.get(i))
    }

    pub fn spec(&self, id: PrimitiveId) -> Result<&PrimitiveSpec, PrimitiveError> {
        self.get(id).ok_or(PrimitiveError::UnknownPrimitive(id.0))
    }

    pub fn family(&self, family: Family) -> impl Iterator<Item = &PrimitiveSpec> {
        self.specs.iter().filter(move |s| s.family == family)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.specs).expect("catalog serializes")
    }

    /// Hex SHA-256 of the compact JSON form; pins one-hot indexing in
    /// checkpoints.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(&self.specs).expect("catalog serializes");
        let digest = Sha256::digest(&json);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl Default for Catalog {
    fn default() -> Self {
        Catalog::standard()
    }
}

pub fn catalog() -> Vec<PrimitiveSpec> {
    Catalog::standard().specs
}

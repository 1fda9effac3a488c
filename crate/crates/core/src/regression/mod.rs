//! Linear and random-forest regression, BIC stepwise selection,
//! cross-validation and permutation importance.

mod cv;
mod design;
mod forest;
mod importance;
mod ols;
mod persist;
mod stepwise;

pub use cv::{fold_assignment, kfold_cv, score, CvScore, DEFAULT_FOLDS};
pub use design::{DesignMatrix, Feature, FeatureKind, Regressor, MAX_LEVELS};
pub use forest::{fit_random_forest, fit_random_forest_oob, Forest, ForestFit, ForestParams, Node, Tree};
pub use importance::{permutation_importance, rf_importance, Importance, DEFAULT_REPETITIONS};
pub use ols::{bic, fit_ols, LinearModel, LinearTerm, RSS_REL_FLOOR};
pub use persist::Model;
pub use stepwise::{full_model, full_model_set, stepwise_bic};

impl Regressor for Model {
    fn predict(&self, d: &DesignMatrix) -> crate::Result<Vec<f64>> {
        match self {
            Model::Linear(m) => m.predict(d),
            Model::Forest(f) => f.predict(d),
        }
    }
}

//! Binary classifiers built from scratch: Gini trees and random forests,
//! logistic regression, and Newton-boosted trees. Fake is the positive class.

pub mod forest;
pub mod gbt;
pub mod logreg;
pub mod tree;

use serde::{Deserialize, Serialize};

pub use forest::{train_forest, ForestConfig, RandomForest};
pub use gbt::{train_gbt, GbtConfig, GbtModel};
pub use logreg::{sigmoid, train_logreg, LogRegConfig, LogRegModel};
pub use tree::{best_split, gini_impurity, train_tree, DecisionTree, Split, TreeNode, TreeParams};

use crate::error::{Error, Result};
use crate::ingest::Dataset;
use crate::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Forest,
    Logreg,
    Gbt,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Forest => "forest",
            ModelKind::Logreg => "logreg",
            ModelKind::Gbt => "gbt",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rf" | "forest" => Ok(ModelKind::Forest),
            "logreg" => Ok(ModelKind::Logreg),
            "gbt" => Ok(ModelKind::Gbt),
            other => Err(Error::InvalidArgument(format!(
                "unknown model kind `{other}` (expected rf, logreg or gbt)"
            ))),
        }
    }
}

/// Training recipe for any of the three model families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "config", rename_all = "lowercase")]
pub enum ModelSpec {
    Forest(ForestConfig),
    Logreg(LogRegConfig),
    Gbt(GbtConfig),
}

impl ModelSpec {
    pub fn default_for(kind: ModelKind, seed: u64) -> Self {
        match kind {
            ModelKind::Forest => ModelSpec::Forest(ForestConfig {
                seed,
                ..Default::default()
            }),
            ModelKind::Logreg => ModelSpec::Logreg(LogRegConfig::default()),
            ModelKind::Gbt => ModelSpec::Gbt(GbtConfig::default()),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ModelSpec::Forest(_) => ModelKind::Forest,
            ModelSpec::Logreg(_) => ModelKind::Logreg,
            ModelSpec::Gbt(_) => ModelKind::Gbt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Classifier {
    Forest(RandomForest),
    Logreg(LogRegModel),
    Gbt(GbtModel),
}

impl Classifier {
    pub fn train(dataset: &Dataset, spec: &ModelSpec) -> Result<Self> {
        Ok(match spec {
            ModelSpec::Forest(c) => Classifier::Forest(train_forest(dataset, c)?),
            ModelSpec::Logreg(c) => Classifier::Logreg(train_logreg(dataset, c)?),
            ModelSpec::Gbt(c) => Classifier::Gbt(train_gbt(dataset, c)?),
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Classifier::Forest(_) => ModelKind::Forest,
            Classifier::Logreg(_) => ModelKind::Logreg,
            Classifier::Gbt(_) => ModelKind::Gbt,
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            Classifier::Forest(m) => m.n_features,
            Classifier::Logreg(m) => m.weights.len(),
            Classifier::Gbt(m) => m.n_features,
        }
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                got: x.len(),
            });
        }
        Ok(match self {
            Classifier::Forest(m) => m.predict_proba(x),
            Classifier::Logreg(m) => m.predict_proba(x),
            Classifier::Gbt(m) => m.predict_proba(x),
        })
    }

    /// Unnormalized per-feature importance: Gini importance for forests,
    /// total split gain for boosted trees, |coefficient| for logistic
    /// regression.
    pub fn raw_importances(&self) -> Vec<f64> {
        match self {
            Classifier::Forest(m) => m.raw_importances(),
            Classifier::Logreg(m) => m.raw_importances(),
            Classifier::Gbt(m) => m.raw_importances(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub prob_fake: f64,
    pub label: Label,
}

/// Thresholded prediction: fake iff `prob_fake >= decision_threshold`.
pub fn predict(model: &Classifier, x: &[f64], decision_threshold: f64) -> Result<Prediction> {
    let prob_fake = model.predict_proba(x)?;
    Ok(Prediction {
        prob_fake,
        label: Label::from_bool(prob_fake >= decision_threshold),
    })
}

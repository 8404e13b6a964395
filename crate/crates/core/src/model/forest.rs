use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{train_tree_on, DecisionTree, TreeNode, TreeParams};
use crate::error::{Error, Result};
use crate::ingest::Dataset;
use crate::rng::{fnv1a64, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    /// `None` means `floor(sqrt(d))`, at least 1.
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
    /// Sample weight of the fake class; 1.0 disables class weighting.
    pub fake_weight: f64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_depth: 5,
            min_samples_split: 2,
            features_per_split: None,
            bootstrap: true,
            seed: 0,
            fake_weight: 1.0,
        }
    }
}

impl ForestConfig {
    pub fn features_for(&self, d: usize) -> usize {
        self.features_per_split
            .unwrap_or_else(|| (d as f64).sqrt().floor() as usize)
            .max(1)
    }

    fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.max_depth == 0 {
            return Err(Error::InvalidArgument(
                "forest needs n_trees >= 1 and max_depth >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub config: ForestConfig,
    pub n_features: usize,
    pub trees: Vec<DecisionTree>,
}

/// Stream tag separating the feature-subset RNG from the bootstrap RNG.
fn feature_stream_tag() -> u64 {
    fnv1a64(b"feat")
}

/// Bagged Gini trees. Tree `t` draws its bootstrap sample from the stream
/// `(seed, t)` and its per-node feature subsets from `(seed, t, "feat")`, so
/// the result does not depend on how trees are scheduled across threads.
pub fn train_forest(dataset: &Dataset, config: &ForestConfig) -> Result<RandomForest> {
    config.validate()?;
    let n = dataset.n();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let labels = dataset.labels()?;
    let d = dataset.d();
    let params = TreeParams {
        max_depth: config.max_depth,
        min_samples_split: config.min_samples_split,
        features_per_split: config.features_for(d),
        class_weights: [1.0, config.fake_weight],
    };
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let indices: Vec<usize> = if config.bootstrap {
                let mut sample_rng = Rng::derived(config.seed, &[t as u64]);
                (0..n).map(|_| sample_rng.index(n)).collect()
            } else {
                (0..n).collect()
            };
            let mut feat_rng = Rng::derived(config.seed, &[t as u64, feature_stream_tag()]);
            train_tree_on(&dataset.rows, labels, indices, params, &mut feat_rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RandomForest {
        config: *config,
        n_features: d,
        trees,
    })
}

impl RandomForest {
    /// Mean of the trees' leaf probabilities.
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict_proba(x)).sum();
        sum / self.trees.len() as f64
    }

    /// Unnormalized Gini importance: each split adds
    /// `(node_samples / root_samples) * gain` to its feature.
    pub fn raw_importances(&self) -> Vec<f64> {
        let mut imp = vec![0.0; self.n_features];
        for tree in &self.trees {
            let root = tree.root_samples().max(1) as f64;
            for node in &tree.nodes {
                if let TreeNode::Internal {
                    feature,
                    gain,
                    n_samples,
                    ..
                } = node
                {
                    imp[*feature] += *n_samples as f64 / root * gain;
                }
            }
        }
        imp
    }
}

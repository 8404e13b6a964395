//! Binary classification tree grown by exhaustive Gini split search.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::Label;

/// Gains closer than this are treated as ties; the earlier candidate wins.
pub(crate) const GAIN_EPS: f64 = 1e-12;

/// `1 - p_genuine^2 - p_fake^2` for (possibly weighted) class counts.
pub fn gini_impurity(genuine: f64, fake: f64) -> Result<f64> {
    let total = genuine + fake;
    if !(total > 0.0) {
        return Err(Error::UndefinedInput("gini impurity of an empty node"));
    }
    let p0 = genuine / total;
    let p1 = fake / total;
    Ok(1.0 - p0 * p0 - p1 * p1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

/// Arena node. Internal nodes send `x[feature] <= threshold` to `left`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum TreeNode {
    Internal {
        feature: usize,
        threshold: f64,
        gain: f64,
        n_samples: usize,
        left: usize,
        right: usize,
    },
    Leaf {
        prob_fake: f64,
        n_samples: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    /// Root is `nodes[0]`.
    pub nodes: Vec<TreeNode>,
}

impl DecisionTree {
    pub fn leaf(prob_fake: f64, n_samples: usize) -> Self {
        DecisionTree {
            nodes: vec![TreeNode::Leaf {
                prob_fake,
                n_samples,
            }],
        }
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { prob_fake, .. } => return *prob_fake,
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    /// Length of the longest root-to-leaf path, counted in edges.
    pub fn depth(&self) -> usize {
        fn go(nodes: &[TreeNode], i: usize) -> usize {
            match &nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Internal { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }

    pub fn internal_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Internal { .. }))
            .count()
    }

    pub fn root_samples(&self) -> usize {
        match self.root() {
            TreeNode::Internal { n_samples, .. } | TreeNode::Leaf { n_samples, .. } => *n_samples,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub features_per_split: usize,
    /// Per-class sample weight, `[genuine, fake]`.
    pub class_weights: [f64; 2],
}

impl TreeParams {
    pub fn new(max_depth: usize, min_samples_split: usize, features_per_split: usize) -> Self {
        TreeParams {
            max_depth,
            min_samples_split,
            features_per_split,
            class_weights: [1.0, 1.0],
        }
    }
}

fn class_counts(labels: &[Label], indices: &[usize], weights: [f64; 2]) -> [f64; 2] {
    let mut c = [0.0; 2];
    for &i in indices {
        let k = labels[i] as usize;
        c[k] += weights[k];
    }
    c
}

/// Best Gini split of the rows at `indices` over `candidates`. Thresholds are
/// midpoints between consecutive distinct values; ties go to the lower
/// feature index, then the lower threshold. `None` when no split has
/// positive gain.
pub(crate) fn best_split_at(
    rows: &[Vec<f64>],
    labels: &[Label],
    indices: &[usize],
    candidates: &[usize],
    weights: [f64; 2],
) -> Option<Split> {
    let total = class_counts(labels, indices, weights);
    let parent = gini_impurity(total[0], total[1]).ok()?;
    let weight_sum = total[0] + total[1];
    let mut sorted_candidates = candidates.to_vec();
    sorted_candidates.sort_unstable();
    sorted_candidates.dedup();

    let mut best: Option<Split> = None;
    let mut order = indices.to_vec();
    for &feature in &sorted_candidates {
        order.sort_by(|&a, &b| rows[a][feature].total_cmp(&rows[b][feature]));
        let mut left = [0.0; 2];
        for w in 0..order.len().saturating_sub(1) {
            let i = order[w];
            let k = labels[i] as usize;
            left[k] += weights[k];
            let here = rows[i][feature];
            let next = rows[order[w + 1]][feature];
            if here >= next {
                continue;
            }
            let right = [total[0] - left[0], total[1] - left[1]];
            let wl = left[0] + left[1];
            let wr = right[0] + right[1];
            let (Ok(gl), Ok(gr)) = (gini_impurity(left[0], left[1]), gini_impurity(right[0], right[1]))
            else {
                continue;
            };
            let gain = parent - (wl / weight_sum) * gl - (wr / weight_sum) * gr;
            let better = match best {
                None => gain > GAIN_EPS,
                Some(b) => gain > b.gain + GAIN_EPS,
            };
            if better {
                best = Some(Split {
                    feature,
                    threshold: (here + next) / 2.0,
                    gain,
                });
            }
        }
    }
    best
}

/// Best split over all rows, unweighted.
pub fn best_split(rows: &[Vec<f64>], labels: &[Label], candidates: &[usize]) -> Option<Split> {
    let indices: Vec<usize> = (0..rows.len()).collect();
    best_split_at(rows, labels, &indices, candidates, [1.0, 1.0])
}

struct Grower<'a> {
    rows: &'a [Vec<f64>],
    labels: &'a [Label],
    params: TreeParams,
    n_features: usize,
    rng: &'a mut Rng,
    nodes: Vec<TreeNode>,
}

impl Grower<'_> {
    fn grow(&mut self, indices: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        let counts = class_counts(self.labels, &indices, self.params.class_weights);
        let prob_fake = if counts[0] + counts[1] > 0.0 {
            counts[1] / (counts[0] + counts[1])
        } else {
            0.0
        };
        let n_samples = indices.len();
        self.nodes.push(TreeNode::Leaf {
            prob_fake,
            n_samples,
        });

        let pure = counts[0] == 0.0 || counts[1] == 0.0;
        if pure || depth >= self.params.max_depth || n_samples < self.params.min_samples_split.max(2)
        {
            return id;
        }
        let k = self.params.features_per_split.max(1);
        let candidates: Vec<usize> = if k >= self.n_features {
            (0..self.n_features).collect()
        } else {
            self.rng.sample_indices(self.n_features, k)
        };
        let Some(split) = best_split_at(
            self.rows,
            self.labels,
            &indices,
            &candidates,
            self.params.class_weights,
        ) else {
            return id;
        };
        let (li, ri): (Vec<usize>, Vec<usize>) = indices
            .into_iter()
            .partition(|&i| self.rows[i][split.feature] <= split.threshold);
        let left = self.grow(li, depth + 1);
        let right = self.grow(ri, depth + 1);
        self.nodes[id] = TreeNode::Internal {
            feature: split.feature,
            threshold: split.threshold,
            gain: split.gain,
            n_samples,
            left,
            right,
        };
        id
    }
}

/// Grows a tree on the rows at `indices` (repeats allowed, as in a
/// bootstrap sample). Each node draws its candidate features from `rng`.
pub fn train_tree_on(
    rows: &[Vec<f64>],
    labels: &[Label],
    indices: Vec<usize>,
    params: TreeParams,
    rng: &mut Rng,
) -> Result<DecisionTree> {
    if indices.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if labels.len() != rows.len() {
        return Err(Error::DimensionMismatch {
            expected: rows.len(),
            got: labels.len(),
        });
    }
    let n_features = rows[indices[0]].len();
    let mut grower = Grower {
        rows,
        labels,
        params,
        n_features,
        rng,
        nodes: Vec::new(),
    };
    grower.grow(indices, 0);
    Ok(DecisionTree {
        nodes: grower.nodes,
    })
}

pub fn train_tree(
    rows: &[Vec<f64>],
    labels: &[Label],
    params: TreeParams,
    rng: &mut Rng,
) -> Result<DecisionTree> {
    train_tree_on(rows, labels, (0..rows.len()).collect(), params, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Fake as F, Genuine as G};

    #[test]
    fn gini_values() {
        assert_eq!(gini_impurity(10.0, 0.0).unwrap(), 0.0);
        assert_eq!(gini_impurity(5.0, 5.0).unwrap(), 0.5);
        assert_eq!(gini_impurity(3.0, 1.0).unwrap(), 0.375);
        assert!(gini_impurity(0.0, 0.0).is_err());
    }

    #[test]
    fn split_on_one_feature() {
        let rows: Vec<Vec<f64>> = [1.0, 2.0, 3.0, 4.0].iter().map(|&x| vec![x]).collect();
        let s = best_split(&rows, &[G, G, F, F], &[0]).unwrap();
        assert_eq!(s.feature, 0);
        assert_eq!(s.threshold, 2.5);
        assert!((s.gain - 0.5).abs() < 1e-12);
    }

    #[test]
    fn pure_node_has_no_split() {
        let rows = vec![vec![1.0], vec![2.0]];
        assert!(best_split(&rows, &[G, G], &[0]).is_none());
    }

    #[test]
    fn tie_goes_to_lower_feature() {
        let rows = vec![vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0], vec![4.0, 4.0]];
        let s = best_split(&rows, &[G, G, F, F], &[1, 0]).unwrap();
        assert_eq!(s.feature, 0);
    }

    #[test]
    fn single_class_is_single_leaf() {
        let rows = vec![vec![1.0], vec![5.0], vec![3.0]];
        let mut rng = Rng::seed_from_u64(0);
        let t = train_tree(&rows, &[G, G, G], TreeParams::new(5, 2, 1), &mut rng).unwrap();
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.predict_proba(&[2.0]), 0.0);
    }

    #[test]
    fn depth_one_has_one_internal_node() {
        let rows: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64, (i % 3) as f64]).collect();
        let labels = [G, F, G, F, F, G, F, F];
        let mut rng = Rng::seed_from_u64(1);
        let t = train_tree(&rows, &labels, TreeParams::new(1, 2, 2), &mut rng).unwrap();
        assert!(t.internal_count() <= 1);
        assert!(t.depth() <= 1);
    }

    #[test]
    fn separable_data_fits_exactly() {
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![(i * 7 % 5) as f64, i as f64, ((i * 3) % 4) as f64])
            .collect();
        let labels: Vec<Label> = (0..20).map(|i| Label::from_bool(i % 4 == 1 || i > 15)).collect();
        let mut rng = Rng::seed_from_u64(2);
        let t = train_tree(&rows, &labels, TreeParams::new(20, 2, 3), &mut rng).unwrap();
        for (x, y) in rows.iter().zip(&labels) {
            assert_eq!(t.predict_proba(x), y.target());
        }
    }

    #[test]
    fn leaf_probabilities_are_empirical() {
        let rows = vec![vec![0.0], vec![0.0], vec![0.0], vec![1.0]];
        let mut rng = Rng::seed_from_u64(3);
        let t = train_tree(&rows, &[G, G, F, F], TreeParams::new(3, 2, 1), &mut rng).unwrap();
        assert!((t.predict_proba(&[0.0]) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(t.predict_proba(&[1.0]), 1.0);
    }
}

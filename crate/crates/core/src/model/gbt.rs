//! Newton-boosted regression trees on the logistic loss.
//!
//! Each round fits a tree to first and second derivatives of the loss
//! (`g = p - y`, `h = p (1 - p)`), choosing splits by
//! `0.5 * (G_L^2 / (H_L + lambda) + G_R^2 / (H_R + lambda) - G^2 / (H + lambda))`
//! and setting leaf weights to `-G / (H + lambda)`.

use serde::{Deserialize, Serialize};

use super::logreg::sigmoid;
use super::tree::GAIN_EPS;
use crate::error::{Error, Result};
use crate::ingest::Dataset;
use crate::Label;

pub const BASE_SCORE_LIMIT: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbtConfig {
    pub rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub fake_weight: f64,
}

impl Default for GbtConfig {
    fn default() -> Self {
        GbtConfig {
            rounds: 50,
            max_depth: 3,
            learning_rate: 0.1,
            lambda: 1.0,
            fake_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum RegNode {
    Internal {
        feature: usize,
        threshold: f64,
        gain: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        weight: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegTree {
    pub nodes: Vec<RegNode>,
}

impl RegTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                RegNode::Leaf { weight } => return *weight,
                RegNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[RegNode], i: usize) -> usize {
            match &nodes[i] {
                RegNode::Leaf { .. } => 0,
                RegNode::Internal { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub config: GbtConfig,
    pub n_features: usize,
    /// Log-odds of the (weighted) training prevalence, clamped to ±10.
    pub base_score: f64,
    pub trees: Vec<RegTree>,
}

pub fn base_log_odds(labels: &[Label], fake_weight: f64) -> f64 {
    let (mut pos, mut total) = (0.0, 0.0);
    for l in labels {
        let w = if l.is_fake() { fake_weight } else { 1.0 };
        total += w;
        if l.is_fake() {
            pos += w;
        }
    }
    if total == 0.0 {
        return 0.0;
    }
    let p = pos / total;
    let odds = (p / (1.0 - p)).ln();
    if odds.is_nan() {
        0.0
    } else {
        odds.clamp(-BASE_SCORE_LIMIT, BASE_SCORE_LIMIT)
    }
}

struct RegGrower<'a> {
    rows: &'a [Vec<f64>],
    grad: &'a [f64],
    hess: &'a [f64],
    config: &'a GbtConfig,
    nodes: Vec<RegNode>,
}

impl RegGrower<'_> {
    fn score(&self, g: f64, h: f64) -> f64 {
        g * g / (h + self.config.lambda)
    }

    fn grow(&mut self, indices: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        let g: f64 = indices.iter().map(|&i| self.grad[i]).sum();
        let h: f64 = indices.iter().map(|&i| self.hess[i]).sum();
        self.nodes.push(RegNode::Leaf {
            weight: -g / (h + self.config.lambda),
        });
        if depth >= self.config.max_depth || indices.len() < 2 {
            return id;
        }
        let parent = self.score(g, h);
        let d = self.rows[indices[0]].len();
        let mut best: Option<(usize, f64, f64)> = None;
        let mut order = indices.clone();
        for feature in 0..d {
            order.sort_by(|&a, &b| self.rows[a][feature].total_cmp(&self.rows[b][feature]));
            let (mut gl, mut hl) = (0.0, 0.0);
            for w in 0..order.len() - 1 {
                let i = order[w];
                gl += self.grad[i];
                hl += self.hess[i];
                let here = self.rows[i][feature];
                let next = self.rows[order[w + 1]][feature];
                if here >= next {
                    continue;
                }
                let gain = 0.5 * (self.score(gl, hl) + self.score(g - gl, h - hl) - parent);
                let better = match best {
                    None => gain > GAIN_EPS,
                    Some((_, _, b)) => gain > b + GAIN_EPS,
                };
                if better {
                    best = Some((feature, (here + next) / 2.0, gain));
                }
            }
        }
        let Some((feature, threshold, gain)) = best else {
            return id;
        };
        let (li, ri): (Vec<usize>, Vec<usize>) = indices
            .into_iter()
            .partition(|&i| self.rows[i][feature] <= threshold);
        let left = self.grow(li, depth + 1);
        let right = self.grow(ri, depth + 1);
        self.nodes[id] = RegNode::Internal {
            feature,
            threshold,
            gain,
            left,
            right,
        };
        id
    }
}

pub fn train_gbt(dataset: &Dataset, config: &GbtConfig) -> Result<GbtModel> {
    let n = dataset.n();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let labels = dataset.labels()?;
    let ys: Vec<f64> = labels.iter().map(|l| l.target()).collect();
    let sw: Vec<f64> = labels
        .iter()
        .map(|l| if l.is_fake() { config.fake_weight } else { 1.0 })
        .collect();
    let base_score = base_log_odds(labels, config.fake_weight);
    let mut margin = vec![base_score; n];
    let mut trees = Vec::with_capacity(config.rounds);
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    for _ in 0..config.rounds {
        for i in 0..n {
            let p = sigmoid(margin[i]);
            grad[i] = sw[i] * (p - ys[i]);
            hess[i] = sw[i] * p * (1.0 - p);
        }
        let mut grower = RegGrower {
            rows: &dataset.rows,
            grad: &grad,
            hess: &hess,
            config,
            nodes: Vec::new(),
        };
        grower.grow((0..n).collect(), 0);
        let tree = RegTree {
            nodes: grower.nodes,
        };
        for (m, x) in margin.iter_mut().zip(&dataset.rows) {
            *m += config.learning_rate * tree.predict(x);
        }
        trees.push(tree);
    }
    Ok(GbtModel {
        config: *config,
        n_features: dataset.d(),
        base_score,
        trees,
    })
}

impl GbtModel {
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.base_score
            + self.config.learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        sigmoid(self.margin(x))
    }

    /// Mean log-loss on `dataset` after 0, 1, ..., `trees.len()` rounds.
    pub fn staged_log_loss(&self, dataset: &Dataset) -> Result<Vec<f64>> {
        let labels = dataset.labels()?;
        let n = dataset.n().max(1) as f64;
        let mut margin = vec![self.base_score; dataset.n()];
        let loss = |margin: &[f64]| {
            margin
                .iter()
                .zip(labels)
                .map(|(&z, l)| z.max(0.0) + (-z.abs()).exp().ln_1p() - l.target() * z)
                .sum::<f64>()
                / n
        };
        let mut out = vec![loss(&margin)];
        for tree in &self.trees {
            for (m, x) in margin.iter_mut().zip(&dataset.rows) {
                *m += self.config.learning_rate * tree.predict(x);
            }
            out.push(loss(&margin));
        }
        Ok(out)
    }

    /// Total split gain per feature.
    pub fn raw_importances(&self) -> Vec<f64> {
        let mut imp = vec![0.0; self.n_features];
        for t in &self.trees {
            for node in &t.nodes {
                if let RegNode::Internal { feature, gain, .. } = node {
                    imp[*feature] += gain;
                }
            }
        }
        imp
    }
}

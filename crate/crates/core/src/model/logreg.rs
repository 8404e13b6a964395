use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Dataset;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogRegConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub fake_weight: f64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        LogRegConfig {
            learning_rate: 0.1,
            epochs: 500,
            l2: 0.01,
            fake_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    /// Zero-variance features get 1.
    pub std: Vec<f64>,
}

impl Standardization {
    pub fn fit(rows: &[Vec<f64>], d: usize) -> Self {
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in rows {
            for j in 0..d {
                var[j] += (r[j] - mean[j]).powi(2);
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 0.0 && s.is_finite() {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Standardization { mean, std }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

/// Weighted mean cross-entropy plus `(l2 / 2) * |w|^2`, and its gradient
/// `(1/n) * X^T (s * (sigmoid(Xw + b) - y)) + l2 * w`. The bias is not
/// regularized.
pub fn objective_and_gradient(
    xs: &[Vec<f64>],
    ys: &[f64],
    sample_weights: &[f64],
    w: &[f64],
    b: f64,
    l2: f64,
) -> (f64, Vec<f64>, f64) {
    let n = xs.len().max(1) as f64;
    let mut loss = 0.0;
    let mut gw = vec![0.0; w.len()];
    let mut gb = 0.0;
    for ((x, &y), &s) in xs.iter().zip(ys).zip(sample_weights) {
        let z: f64 = b + x.iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
        loss += s * (softplus(z) - y * z);
        let r = s * (sigmoid(z) - y);
        for (g, xi) in gw.iter_mut().zip(x) {
            *g += r * xi;
        }
        gb += r;
    }
    loss = loss / n + 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>();
    for (g, wi) in gw.iter_mut().zip(w) {
        *g = *g / n + l2 * wi;
    }
    (loss, gw, gb / n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    pub config: LogRegConfig,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub standardization: Standardization,
}

/// Full-batch gradient descent on z-scored features.
pub fn train_logreg(dataset: &Dataset, config: &LogRegConfig) -> Result<LogRegModel> {
    if dataset.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    let labels = dataset.labels()?;
    let d = dataset.d();
    let standardization = Standardization::fit(&dataset.rows, d);
    let xs: Vec<Vec<f64>> = dataset.rows.iter().map(|r| standardization.apply(r)).collect();
    let ys: Vec<f64> = labels.iter().map(|l| l.target()).collect();
    let sw: Vec<f64> = labels
        .iter()
        .map(|l| if l.is_fake() { config.fake_weight } else { 1.0 })
        .collect();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    for _ in 0..config.epochs {
        let (_, gw, gb) = objective_and_gradient(&xs, &ys, &sw, &w, b, config.l2);
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= config.learning_rate * g;
        }
        b -= config.learning_rate * gb;
    }
    Ok(LogRegModel {
        config: *config,
        weights: w,
        bias: b,
        standardization,
    })
}

impl LogRegModel {
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        let z = self.bias
            + self
                .standardization
                .apply(x)
                .iter()
                .zip(&self.weights)
                .map(|(a, c)| a * c)
                .sum::<f64>();
        sigmoid(z)
    }

    /// Magnitude of each standardized coefficient.
    pub fn raw_importances(&self) -> Vec<f64> {
        self.weights.iter().map(|w| w.abs()).collect()
    }
}

//! Stratified splitting, confusion matrices, per-class metrics and feature
//! importance rankings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Dataset;
use crate::model::RandomForest;
use crate::rng::Rng;
use crate::Label;

/// Number of test samples drawn from a class of `class_size`:
/// `round(test_fraction * class_size)`, at least 1 when the class has two or
/// more members.
pub fn test_count(class_size: usize, test_fraction: f64) -> usize {
    let k = (test_fraction * class_size as f64).round() as usize;
    if class_size >= 2 {
        k.max(1).min(class_size)
    } else {
        k.min(class_size)
    }
}

/// Per-class seeded shuffle; the first [`test_count`] indices of each class
/// go to test. Returns `(train, test)` index lists in ascending order.
pub fn stratified_split_indices(
    labels: &[Label],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let mut rng = Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [Label::Genuine, Label::Fake] {
        let mut members: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == class)
            .map(|(i, _)| i)
            .collect();
        rng.shuffle(&mut members);
        let k = test_count(members.len(), test_fraction);
        test.extend_from_slice(&members[..k]);
        train.extend_from_slice(&members[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn stratified_split(
    dataset: &Dataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    let (train, test) = stratified_split_indices(dataset.labels()?, test_fraction, seed)?;
    Ok((dataset.subset(&train), dataset.subset(&test)))
}

/// Counts with fake as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tp: usize,
}

impl ConfusionMatrix {
    pub fn new(tn: usize, fp: usize, fn_: usize, tp: usize) -> Self {
        ConfusionMatrix { tn, fp, fn_, tp }
    }

    pub fn total(&self) -> usize {
        self.tn + self.fp + self.fn_ + self.tp
    }
}

pub fn confusion(predicted: &[Label], actual: &[Label]) -> Result<ConfusionMatrix> {
    if predicted.len() != actual.len() {
        return Err(Error::DimensionMismatch {
            expected: actual.len(),
            got: predicted.len(),
        });
    }
    let mut cm = ConfusionMatrix::default();
    for (p, a) in predicted.iter().zip(actual) {
        match (a, p) {
            (Label::Genuine, Label::Genuine) => cm.tn += 1,
            (Label::Genuine, Label::Fake) => cm.fp += 1,
            (Label::Fake, Label::Genuine) => cm.fn_ += 1,
            (Label::Fake, Label::Fake) => cm.tp += 1,
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerClass {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub accuracy: f64,
    pub genuine: PerClass,
    pub fake: PerClass,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn per_class(tp: usize, fp: usize, fn_: usize) -> PerClass {
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    PerClass {
        precision,
        recall,
        f1,
    }
}

/// Accuracy plus precision/recall/F1 for each class, with 0/0 taken as 0.
pub fn class_metrics(cm: &ConfusionMatrix) -> Result<ClassMetrics> {
    if cm.total() == 0 {
        return Err(Error::UndefinedInput("metrics of an empty confusion matrix"));
    }
    Ok(ClassMetrics {
        accuracy: ratio(cm.tn + cm.tp, cm.total()),
        genuine: per_class(cm.tn, cm.fn_, cm.fp),
        fake: per_class(cm.tp, cm.fp, cm.fn_),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Importance {
    pub feature: String,
    pub value: f64,
}

/// Importances sorted by value (descending), ties by feature name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRanking(pub Vec<Importance>);

impl ImportanceRanking {
    /// Normalizes `raw` to sum 1 when any entry is positive, then ranks.
    pub fn from_raw(feature_names: &[String], raw: &[f64]) -> Self {
        let total: f64 = raw.iter().filter(|v| **v > 0.0).sum();
        let mut entries: Vec<Importance> = feature_names
            .iter()
            .zip(raw)
            .map(|(f, &v)| Importance {
                feature: f.clone(),
                value: if total > 0.0 { v.max(0.0) / total } else { v.max(0.0) },
            })
            .collect();
        entries.sort_by(|a, b| {
            b.value
                .total_cmp(&a.value)
                .then_with(|| a.feature.cmp(&b.feature))
        });
        ImportanceRanking(entries)
    }

    pub fn entries(&self) -> &[Importance] {
        &self.0
    }

    pub fn top(&self) -> Option<&Importance> {
        self.0.first()
    }
}

/// Mean-decrease-in-impurity importance of a forest.
pub fn gini_importance(forest: &RandomForest, feature_names: &[String]) -> ImportanceRanking {
    ImportanceRanking::from_raw(feature_names, &forest.raw_importances())
}

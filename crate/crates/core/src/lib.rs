//! Survey response integrity analytics.
//!
//! Responses flow through four stages: ingest (PII removal, label
//! normalization, imputation, label encoding), a declarative logic-rule
//! engine, deterministic text-effort scoring, and a trainable classifier
//! (random forest, logistic regression or Newton-boosted trees). The
//! [`pipeline`] module ties the stages together and [`report`] renders the
//! evaluation artifacts.

pub mod error;
pub mod eval;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod rules;
pub mod schema;
pub mod synth;
pub mod textscore;

pub use error::{Error, Result};

use serde::{Deserialize, Serialize};

/// Binary integrity label. `Fake` is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Genuine,
    Fake,
}

impl Label {
    pub fn from_bool(fake: bool) -> Self {
        if fake {
            Label::Fake
        } else {
            Label::Genuine
        }
    }

    pub fn is_fake(self) -> bool {
        self == Label::Fake
    }

    /// 0.0 for genuine, 1.0 for fake.
    pub fn target(self) -> f64 {
        if self.is_fake() {
            1.0
        } else {
            0.0
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Genuine => "genuine",
            Label::Fake => "fake",
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Formats a real number the way every JSON and CSV emitter in this crate
/// does (shortest representation that round-trips).
pub fn fmt_num(value: f64) -> String {
    serde_json::to_string(&value).unwrap_or_else(|_| "null".to_string())
}

//! Survey instrument and raw response model.
//!
//! The schema is user data loaded from JSON; question order is the feature
//! order for everything downstream.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::normalize_label;

#[derive(Debug, Clone, PartialEq)]
pub enum QuestionKind {
    SingleChoice { values: Vec<String> },
    MultiChoice { values: Vec<String> },
    Likert { lo: i64, hi: i64 },
    FreeText,
}

impl QuestionKind {
    pub fn allowed_values(&self) -> Option<&[String]> {
        match self {
            QuestionKind::SingleChoice { values } | QuestionKind::MultiChoice { values } => {
                Some(values)
            }
            _ => None,
        }
    }

    pub fn is_choice(&self) -> bool {
        self.allowed_values().is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "QuestionJson", into = "QuestionJson")]
pub struct QuestionSpec {
    pub id: String,
    pub text: String,
    pub kind: QuestionKind,
    pub pii: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveySchema {
    pub version: String,
    pub questions: Vec<QuestionSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum KindTag {
    SingleChoice,
    MultiChoice,
    Likert,
    FreeText,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct LikertRange {
    lo: i64,
    hi: i64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct QuestionJson {
    id: String,
    #[serde(default)]
    text: String,
    kind: KindTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    values: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    likert: Option<LikertRange>,
    #[serde(default)]
    pii: bool,
}

impl TryFrom<QuestionJson> for QuestionSpec {
    type Error = String;

    fn try_from(q: QuestionJson) -> std::result::Result<Self, String> {
        let kind = match q.kind {
            KindTag::SingleChoice => QuestionKind::SingleChoice {
                values: q.values.unwrap_or_default(),
            },
            KindTag::MultiChoice => QuestionKind::MultiChoice {
                values: q.values.unwrap_or_default(),
            },
            KindTag::Likert => {
                let r = q
                    .likert
                    .ok_or_else(|| format!("likert question `{}` has no `likert` range", q.id))?;
                QuestionKind::Likert { lo: r.lo, hi: r.hi }
            }
            KindTag::FreeText => QuestionKind::FreeText,
        };
        Ok(QuestionSpec {
            id: q.id,
            text: q.text,
            kind,
            pii: q.pii,
        })
    }
}

impl From<QuestionSpec> for QuestionJson {
    fn from(q: QuestionSpec) -> Self {
        let (kind, values, likert) = match q.kind {
            QuestionKind::SingleChoice { values } => (KindTag::SingleChoice, Some(values), None),
            QuestionKind::MultiChoice { values } => (KindTag::MultiChoice, Some(values), None),
            QuestionKind::Likert { lo, hi } => (KindTag::Likert, None, Some(LikertRange { lo, hi })),
            QuestionKind::FreeText => (KindTag::FreeText, None, None),
        };
        QuestionJson {
            id: q.id,
            text: q.text,
            kind,
            values,
            likert,
            pii: q.pii,
        }
    }
}

impl QuestionSpec {
    pub fn new(id: &str, text: &str, kind: QuestionKind) -> Self {
        QuestionSpec {
            id: id.to_string(),
            text: text.to_string(),
            kind,
            pii: false,
        }
    }

    pub fn pii(mut self) -> Self {
        self.pii = true;
        self
    }
}

impl SurveySchema {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))
    }

    /// Parses and rejects schemas with any violation.
    pub fn from_json_validated(text: &str) -> Result<Self> {
        let schema = Self::from_json(text)?;
        let violations = validate_schema(&schema);
        if violations.is_empty() {
            Ok(schema)
        } else {
            let joined: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
            Err(Error::Schema(joined.join("; ")))
        }
    }

    pub fn question(&self, id: &str) -> Option<&QuestionSpec> {
        self.questions.iter().find(|q| q.id == id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.question(id).is_some()
    }

    pub fn non_pii(&self) -> impl Iterator<Item = &QuestionSpec> {
        self.questions.iter().filter(|q| !q.pii)
    }

    pub fn free_text(&self) -> impl Iterator<Item = &QuestionSpec> {
        self.non_pii()
            .filter(|q| matches!(q.kind, QuestionKind::FreeText))
    }
}

/// A single answer before or after normalization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AnswerValue {
    Integer(i64),
    Choices(Vec<String>),
    Text(String),
}

impl AnswerValue {
    pub fn choice(s: &str) -> Self {
        AnswerValue::Text(s.to_string())
    }

    pub fn choices<S: AsRef<str>>(items: &[S]) -> Self {
        AnswerValue::Choices(items.iter().map(|s| s.as_ref().to_string()).collect())
    }
}

/// A respondent's answers as submitted. Absent answers are simply missing keys.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawResponse {
    pub respondent_id: String,
    pub answers: BTreeMap<String, AnswerValue>,
}

impl RawResponse {
    pub fn new(respondent_id: impl Into<String>) -> Self {
        RawResponse {
            respondent_id: respondent_id.into(),
            answers: BTreeMap::new(),
        }
    }

    pub fn with(mut self, qid: &str, value: AnswerValue) -> Self {
        self.answers.insert(qid.to_string(), value);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SchemaRule {
    EmptyId,
    DuplicateId,
    LikertRange { lo: i64, hi: i64 },
    EmptyVocabulary,
    DuplicateValue(String),
    NoNonPiiQuestion,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaViolation {
    pub question_id: String,
    pub rule: SchemaRule,
}

impl fmt::Display for SchemaViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let q = &self.question_id;
        match &self.rule {
            SchemaRule::EmptyId => write!(f, "question #{q}: empty id"),
            SchemaRule::DuplicateId => write!(f, "question `{q}`: duplicate id"),
            SchemaRule::LikertRange { lo, hi } => {
                write!(f, "question `{q}`: likert range lo {lo} > hi {hi}")
            }
            SchemaRule::EmptyVocabulary => write!(f, "question `{q}`: empty list of allowed values"),
            SchemaRule::DuplicateValue(v) => {
                write!(f, "question `{q}`: allowed value `{v}` duplicated after normalization")
            }
            SchemaRule::NoNonPiiQuestion => write!(f, "schema has no non-PII question"),
        }
    }
}

/// Checks every question invariant. An empty result means the schema is usable.
/// Questions with an empty id are reported by their position.
pub fn validate_schema(schema: &SurveySchema) -> Vec<SchemaViolation> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    let mut duplicated = HashSet::new();
    for (pos, q) in schema.questions.iter().enumerate() {
        let name = if q.id.is_empty() { pos.to_string() } else { q.id.clone() };
        let mut push = |rule| {
            out.push(SchemaViolation {
                question_id: name.clone(),
                rule,
            })
        };
        if q.id.is_empty() {
            push(SchemaRule::EmptyId);
        } else if !seen.insert(q.id.as_str()) && duplicated.insert(q.id.as_str()) {
            push(SchemaRule::DuplicateId);
        }
        match &q.kind {
            QuestionKind::Likert { lo, hi } if lo > hi => {
                push(SchemaRule::LikertRange { lo: *lo, hi: *hi })
            }
            QuestionKind::SingleChoice { values } | QuestionKind::MultiChoice { values } => {
                if values.is_empty() {
                    push(SchemaRule::EmptyVocabulary);
                }
                let mut canon = HashSet::new();
                for v in values {
                    let c = normalize_label(v);
                    if !canon.insert(c.clone()) {
                        push(SchemaRule::DuplicateValue(c));
                    }
                }
            }
            _ => {}
        }
    }
    if schema.non_pii().next().is_none() {
        out.push(SchemaViolation {
            question_id: String::new(),
            rule: SchemaRule::NoNonPiiQuestion,
        });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResponseIssue {
    UnknownQuestion(String),
    LikertOutOfRange { question_id: String, value: i64 },
    NotInVocabulary { question_id: String, value: String },
    WrongType { question_id: String, expected: &'static str },
}

impl fmt::Display for ResponseIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ResponseIssue::UnknownQuestion(q) => write!(f, "unknown question `{q}`"),
            ResponseIssue::LikertOutOfRange { question_id, value } => {
                write!(f, "`{question_id}`: likert value {value} out of range")
            }
            ResponseIssue::NotInVocabulary { question_id, value } => {
                write!(f, "`{question_id}`: `{value}` is not an allowed value")
            }
            ResponseIssue::WrongType {
                question_id,
                expected,
            } => write!(f, "`{question_id}`: expected {expected}"),
        }
    }
}

/// Structural checks of a response against the schema. Values are compared
/// after label normalization, so case and spacing variants are not issues.
pub fn validate_response(schema: &SurveySchema, raw: &RawResponse) -> Vec<ResponseIssue> {
    let mut out = Vec::new();
    for (qid, value) in &raw.answers {
        let Some(q) = schema.question(qid) else {
            out.push(ResponseIssue::UnknownQuestion(qid.clone()));
            continue;
        };
        let vocab_check = |v: &str, out: &mut Vec<ResponseIssue>| {
            let allowed = q.kind.allowed_values().unwrap_or(&[]);
            let c = normalize_label(v);
            if !c.is_empty() && !allowed.iter().any(|a| normalize_label(a) == c) {
                out.push(ResponseIssue::NotInVocabulary {
                    question_id: qid.clone(),
                    value: v.to_string(),
                });
            }
        };
        match (&q.kind, value) {
            (QuestionKind::Likert { lo, hi }, AnswerValue::Integer(v)) => {
                if v < lo || v > hi {
                    out.push(ResponseIssue::LikertOutOfRange {
                        question_id: qid.clone(),
                        value: *v,
                    });
                }
            }
            (QuestionKind::Likert { .. }, _) => out.push(ResponseIssue::WrongType {
                question_id: qid.clone(),
                expected: "an integer rating",
            }),
            (QuestionKind::SingleChoice { .. }, AnswerValue::Text(v)) => vocab_check(v, &mut out),
            (QuestionKind::SingleChoice { .. }, AnswerValue::Choices(vs)) if vs.len() <= 1 => {
                for v in vs {
                    vocab_check(v, &mut out);
                }
            }
            (QuestionKind::MultiChoice { .. }, AnswerValue::Text(v)) => vocab_check(v, &mut out),
            (QuestionKind::MultiChoice { .. }, AnswerValue::Choices(vs)) => {
                for v in vs {
                    vocab_check(v, &mut out);
                }
            }
            (QuestionKind::SingleChoice { .. }, _) => out.push(ResponseIssue::WrongType {
                question_id: qid.clone(),
                expected: "a single choice",
            }),
            (QuestionKind::MultiChoice { .. }, _) => out.push(ResponseIssue::WrongType {
                question_id: qid.clone(),
                expected: "a list of choices",
            }),
            (QuestionKind::FreeText, AnswerValue::Text(_)) => {}
            (QuestionKind::FreeText, _) => out.push(ResponseIssue::WrongType {
                question_id: qid.clone(),
                expected: "text",
            }),
        }
    }
    out
}

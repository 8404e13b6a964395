//! Declarative logic rules: contradiction detection, incomplete-submission
//! flagging, and generic-answer counting, folded into one logic score.
//!
//! A response's logic score is
//!
//! ```text
//! clamp01(1 - (w_contradiction * fired + w_blank * [blank_fraction > blank_threshold]
//!              + w_generic * generic_count))
//! ```
//!
//! and it is suspicious when that score is below `logic_threshold`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{normalize_label, CleanResponse, Dataset, UNKNOWN};
use crate::schema::{AnswerValue, SurveySchema};

pub const DEFAULT_STOPLIST: [&str; 10] = [
    "n/a", "na", "none", "nothing", "ok", "yes", "no", "don't know", "idk", "",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Predicate {
    Equals { value: String },
    InSet { values: Vec<String> },
    IsBlank,
    NotBlank,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    #[serde(rename = "q")]
    pub question_id: String,
    #[serde(flatten)]
    pub predicate: Predicate,
}

impl Condition {
    pub fn equals(qid: &str, value: &str) -> Self {
        Condition {
            question_id: qid.into(),
            predicate: Predicate::Equals {
                value: value.into(),
            },
        }
    }

    pub fn in_set(qid: &str, values: &[&str]) -> Self {
        Condition {
            question_id: qid.into(),
            predicate: Predicate::InSet {
                values: values.iter().map(|s| s.to_string()).collect(),
            },
        }
    }

    pub fn is_blank(qid: &str) -> Self {
        Condition {
            question_id: qid.into(),
            predicate: Predicate::IsBlank,
        }
    }

    pub fn not_blank(qid: &str) -> Self {
        Condition {
            question_id: qid.into(),
            predicate: Predicate::NotBlank,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContradictionRule {
    pub id: String,
    #[serde(rename = "if")]
    pub antecedent: Condition,
    #[serde(rename = "conflicts_with")]
    pub conflicting: Condition,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub contradiction: f64,
    pub blank: f64,
    pub generic: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Weights {
            contradiction: 0.4,
            blank: 0.3,
            generic: 0.1,
        }
    }
}

fn default_blank_threshold() -> f64 {
    0.5
}

fn default_logic_threshold() -> f64 {
    0.5
}

fn default_stoplist() -> BTreeSet<String> {
    DEFAULT_STOPLIST.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSet {
    #[serde(default = "default_blank_threshold")]
    pub blank_threshold: f64,
    #[serde(default = "default_logic_threshold")]
    pub logic_threshold: f64,
    #[serde(default)]
    pub weights: Weights,
    #[serde(default = "default_stoplist")]
    pub generic_stoplist: BTreeSet<String>,
    #[serde(default)]
    pub contradictions: Vec<ContradictionRule>,
}

impl Default for RuleSet {
    fn default() -> Self {
        RuleSet {
            blank_threshold: default_blank_threshold(),
            logic_threshold: default_logic_threshold(),
            weights: Weights::default(),
            generic_stoplist: default_stoplist(),
            contradictions: Vec::new(),
        }
    }
}

impl RuleSet {
    pub fn from_json(text: &str) -> Result<Self> {
        let mut rs: RuleSet =
            serde_json::from_str(text).map_err(|e| Error::Rules(e.to_string()))?;
        rs.generic_stoplist = rs
            .generic_stoplist
            .iter()
            .map(|s| normalize_label(s))
            .collect();
        Ok(rs)
    }

    /// Checks weights, thresholds, and that every condition names a schema question.
    pub fn validate(&self, schema: &SurveySchema) -> Result<()> {
        let w = &self.weights;
        if [w.contradiction, w.blank, w.generic]
            .iter()
            .any(|x| !(*x >= 0.0) || !x.is_finite())
        {
            return Err(Error::Rules("weights must be finite and non-negative".into()));
        }
        for (name, t) in [
            ("blank_threshold", self.blank_threshold),
            ("logic_threshold", self.logic_threshold),
        ] {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Rules(format!("{name} must lie in [0, 1], got {t}")));
            }
        }
        let mut ids = BTreeSet::new();
        for rule in &self.contradictions {
            if !ids.insert(rule.id.as_str()) {
                return Err(Error::Rules(format!("duplicate rule id `{}`", rule.id)));
            }
            for cond in [&rule.antecedent, &rule.conflicting] {
                if !schema.contains(&cond.question_id) {
                    return Err(Error::Rules(format!(
                        "rule `{}` references unknown question `{}`",
                        rule.id, cond.question_id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Per-response verdict of the rule engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogicReport {
    pub respondent_id: String,
    pub fired_rules: Vec<String>,
    pub blank_fraction: f64,
    pub blank_flag: bool,
    pub generic_count: usize,
    pub logic_score: f64,
    pub suspicious: bool,
}

fn is_sentinel(value: &AnswerValue) -> bool {
    match value {
        AnswerValue::Text(t) => t == UNKNOWN,
        AnswerValue::Integer(i) => *i == 0,
        AnswerValue::Choices(vs) => vs.is_empty() || vs.iter().all(|v| v == UNKNOWN),
    }
}

fn answer_strings(value: &AnswerValue) -> Vec<String> {
    match value {
        AnswerValue::Text(t) => vec![t.clone()],
        AnswerValue::Integer(i) => vec![i.to_string()],
        AnswerValue::Choices(vs) => vs.clone(),
    }
}

/// Evaluates one condition. Values are compared in canonical form; on a
/// multi-choice question `equals` means "selected" and `in_set` means
/// "any of these selected".
pub fn eval_condition(clean: &CleanResponse, cond: &Condition) -> Result<bool> {
    let qid = &cond.question_id;
    let answer = clean.answers.get(qid);
    let blank = clean.is_missing(qid) || answer.is_none_or(is_sentinel);
    if answer.is_none() && !clean.is_missing(qid) {
        return Err(Error::UnknownQuestion(qid.clone()));
    }
    Ok(match &cond.predicate {
        Predicate::IsBlank => blank,
        Predicate::NotBlank => !blank,
        Predicate::Equals { value } => {
            let want = normalize_label(value);
            !blank && answer.is_some_and(|a| answer_strings(a).contains(&want))
        }
        Predicate::InSet { values } => {
            let set: BTreeSet<String> = values.iter().map(|v| normalize_label(v)).collect();
            !blank && answer.is_some_and(|a| answer_strings(a).iter().any(|s| set.contains(s)))
        }
    })
}

/// Ids of rules whose antecedent and conflicting conditions both hold.
pub fn check_contradictions(clean: &CleanResponse, ruleset: &RuleSet) -> Result<Vec<String>> {
    let mut fired = Vec::new();
    for rule in &ruleset.contradictions {
        if eval_condition(clean, &rule.antecedent)? && eval_condition(clean, &rule.conflicting)? {
            fired.push(rule.id.clone());
        }
    }
    Ok(fired)
}

/// Share of non-PII questions left blank.
pub fn blank_fraction(clean: &CleanResponse, schema: &SurveySchema) -> f64 {
    let fields: Vec<&str> = schema.non_pii().map(|q| q.id.as_str()).collect();
    if fields.is_empty() {
        return 0.0;
    }
    let blank = fields.iter().filter(|q| clean.is_missing(q)).count();
    blank as f64 / fields.len() as f64
}

/// Free-text answers of `clean` in schema order; blanks come back as "".
pub fn free_texts<'a>(clean: &'a CleanResponse, schema: &SurveySchema) -> Vec<&'a str> {
    schema
        .free_text()
        .map(|q| {
            if clean.is_missing(&q.id) {
                ""
            } else {
                clean.text(&q.id).unwrap_or("")
            }
        })
        .collect()
}

/// Number of free-text answers that are empty or generic.
pub fn generic_text_count(
    clean: &CleanResponse,
    schema: &SurveySchema,
    stoplist: &BTreeSet<String>,
) -> usize {
    free_texts(clean, schema)
        .into_iter()
        .filter(|t| {
            let c = normalize_label(t);
            c.is_empty() || stoplist.contains(&c)
        })
        .count()
}

/// Folds flag counts into a score in `[0, 1]`.
pub fn score_from_flags(weights: &Weights, fired: usize, blank_flag: bool, generic: usize) -> f64 {
    let penalty = weights.contradiction * fired as f64
        + if blank_flag { weights.blank } else { 0.0 }
        + weights.generic * generic as f64;
    (1.0 - penalty).clamp(0.0, 1.0)
}

pub fn logic_score(
    clean: &CleanResponse,
    schema: &SurveySchema,
    ruleset: &RuleSet,
) -> Result<LogicReport> {
    let fired_rules = check_contradictions(clean, ruleset)?;
    let blank_fraction = blank_fraction(clean, schema);
    let blank_flag = blank_fraction > ruleset.blank_threshold;
    let generic_count = generic_text_count(clean, schema, &ruleset.generic_stoplist);
    let logic_score =
        score_from_flags(&ruleset.weights, fired_rules.len(), blank_flag, generic_count);
    Ok(LogicReport {
        respondent_id: clean.respondent_id.clone(),
        fired_rules,
        blank_fraction,
        blank_flag,
        generic_count,
        logic_score,
        suspicious: logic_score < ruleset.logic_threshold,
    })
}

/// Splits dataset rows into (passed, suspicious) by their logic reports.
pub fn partition_by_logic(reports: &[LogicReport], dataset: &Dataset) -> Result<(Dataset, Dataset)> {
    if reports.len() != dataset.n() {
        return Err(Error::DimensionMismatch {
            expected: dataset.n(),
            got: reports.len(),
        });
    }
    let mut passed = Vec::new();
    let mut suspicious = Vec::new();
    for (i, (report, id)) in reports.iter().zip(&dataset.row_ids).enumerate() {
        if &report.respondent_id != id {
            return Err(Error::Misaligned(format!(
                "row {i}: report for `{}` but dataset row `{id}`",
                report.respondent_id
            )));
        }
        if report.suspicious {
            suspicious.push(i);
        } else {
            passed.push(i);
        }
    }
    Ok((dataset.subset(&passed), dataset.subset(&suspicious)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::preprocess;
    use crate::schema::{QuestionKind, QuestionSpec, RawResponse};
    use proptest::prelude::*;

    fn schema() -> SurveySchema {
        let choice = |id: &str, v: &[&str]| {
            QuestionSpec::new(
                id,
                "",
                QuestionKind::SingleChoice {
                    values: v.iter().map(|s| s.to_string()).collect(),
                },
            )
        };
        SurveySchema {
            version: "t".into(),
            questions: vec![
                QuestionSpec::new("email", "", QuestionKind::FreeText).pii(),
                choice("erp_usage", &["yes", "no erp system used"]),
                choice("primary_erp", &["sap", "oracle erp"]),
                QuestionSpec::new(
                    "concerns",
                    "",
                    QuestionKind::MultiChoice {
                        values: vec!["cost".into(), "security".into()],
                    },
                ),
                QuestionSpec::new("fam", "", QuestionKind::Likert { lo: 1, hi: 5 }),
                QuestionSpec::new("t1", "", QuestionKind::FreeText),
                QuestionSpec::new("t2", "", QuestionKind::FreeText),
            ],
        }
    }

    fn erp_rules() -> RuleSet {
        RuleSet {
            contradictions: vec![ContradictionRule {
                id: "erp_none_but_named".into(),
                antecedent: Condition::equals("erp_usage", "No ERP system used"),
                conflicting: Condition::not_blank("primary_erp"),
                description: String::new(),
            }],
            ..RuleSet::default()
        }
    }

    fn complete() -> RawResponse {
        RawResponse::new("r")
            .with("email", AnswerValue::choice("x@y.z"))
            .with("erp_usage", AnswerValue::choice("yes"))
            .with("primary_erp", AnswerValue::choice("SAP"))
            .with("concerns", AnswerValue::choices(&["cost"]))
            .with("fam", AnswerValue::Integer(4))
            .with("t1", AnswerValue::choice("we rely on spreadsheets for weekly planning"))
            .with("t2", AnswerValue::choice("integration with our warehouse system matters"))
    }

    #[test]
    fn conditions() {
        let s = schema();
        let c = preprocess(&complete().with("primary_erp", AnswerValue::choice("Oracle ERP")), &s, 0);
        assert!(eval_condition(&c, &Condition::equals("primary_erp", "oracle erp")).unwrap());
        assert!(!eval_condition(&c, &Condition::in_set("primary_erp", &[])).unwrap());
        assert!(eval_condition(&c, &Condition::equals("concerns", "cost")).unwrap());
        assert!(eval_condition(&c, &Condition::equals("fam", "4")).unwrap());

        let mut raw = complete();
        raw.answers.remove("primary_erp");
        let c = preprocess(&raw, &s, 0);
        assert!(eval_condition(&c, &Condition::is_blank("primary_erp")).unwrap());
        assert!(!eval_condition(&c, &Condition::not_blank("primary_erp")).unwrap());

        let err = eval_condition(&c, &Condition::is_blank("nope")).unwrap_err();
        assert!(matches!(err, Error::UnknownQuestion(_)));
    }

    #[test]
    fn erp_contradiction() {
        let s = schema();
        let rules = erp_rules();
        let bad = complete()
            .with("erp_usage", AnswerValue::choice("no erp system used"))
            .with("primary_erp", AnswerValue::choice("oracle erp"));
        let fired = check_contradictions(&preprocess(&bad, &s, 0), &rules).unwrap();
        assert_eq!(fired, ["erp_none_but_named"]);

        let mut ok = bad.clone();
        ok.answers.remove("primary_erp");
        assert!(check_contradictions(&preprocess(&ok, &s, 0), &rules)
            .unwrap()
            .is_empty());
        assert!(check_contradictions(&preprocess(&bad, &s, 0), &RuleSet::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn blank_fraction_over_ten_fields() {
        let questions: Vec<QuestionSpec> = (0..10)
            .map(|i| QuestionSpec::new(&format!("q{i}"), "", QuestionKind::Likert { lo: 1, hi: 5 }))
            .collect();
        let s = SurveySchema {
            version: "t".into(),
            questions,
        };
        let with_answers = |k: usize| {
            let mut r = RawResponse::new("r");
            for i in 0..k {
                r = r.with(&format!("q{i}"), AnswerValue::Integer(3));
            }
            preprocess(&r, &s, 0)
        };
        assert_eq!(blank_fraction(&with_answers(10), &s), 0.0);
        assert_eq!(blank_fraction(&with_answers(4), &s), 0.6);
        assert_eq!(blank_fraction(&with_answers(0), &s), 1.0);
        let rs = RuleSet::default();
        assert!(logic_score(&with_answers(4), &s, &rs).unwrap().blank_flag);
        assert!(!logic_score(&with_answers(5), &s, &rs).unwrap().blank_flag);
    }

    #[test]
    fn pii_excluded_from_blank_fraction() {
        let s = schema();
        let mut raw = complete();
        raw.answers.remove("email");
        assert_eq!(blank_fraction(&preprocess(&raw, &s, 0), &s), 0.0);
    }

    #[test]
    fn generic_counts() {
        let s = schema();
        let stop = default_stoplist();
        let both_na = complete()
            .with("t1", AnswerValue::choice("N/A"))
            .with("t2", AnswerValue::choice("n/a"));
        assert_eq!(generic_text_count(&preprocess(&both_na, &s, 0), &s, &stop), 2);
        assert_eq!(generic_text_count(&preprocess(&complete(), &s, 0), &s, &stop), 0);
        let one_empty = complete().with("t1", AnswerValue::choice(""));
        assert_eq!(generic_text_count(&preprocess(&one_empty, &s, 0), &s, &stop), 1);
    }

    #[test]
    fn score_examples() {
        let s = schema();
        let rs = erp_rules();
        let r = logic_score(&preprocess(&complete(), &s, 0), &s, &rs).unwrap();
        assert_eq!(r.logic_score, 1.0);
        assert!(!r.suspicious);

        // 1 contradiction + blank flag, no generic: 1 - 0.4 - 0.3 = 0.3.
        let w = Weights::default();
        let expected = 1.0 - 0.4 - 0.3;
        assert!((score_from_flags(&w, 1, true, 0) - expected).abs() < 1e-12);
        assert!(score_from_flags(&w, 1, true, 0) < rs.logic_threshold);
        assert_eq!(score_from_flags(&w, 3, false, 0), 0.0);
    }

    #[test]
    fn contradiction_with_heavy_blanks_is_suspicious() {
        let s = schema();
        let raw = RawResponse::new("r")
            .with("erp_usage", AnswerValue::choice("no erp system used"))
            .with("primary_erp", AnswerValue::choice("oracle erp"))
            .with("t1", AnswerValue::choice("we plan weekly using a statistical model"));
        let r = logic_score(&preprocess(&raw, &s, 0), &s, &erp_rules()).unwrap();
        // Blank: concerns, fam, t2 = 3 of 6 -> 0.5, not over; t2 generic (empty) -> 0.1.
        assert_eq!(r.fired_rules.len(), 1);
        assert!(!r.blank_flag);
        assert_eq!(r.generic_count, 1);
        assert!((r.logic_score - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ruleset_json() {
        let text = r#"{
            "blank_threshold": 0.5, "logic_threshold": 0.5,
            "weights": {"contradiction": 0.4, "blank": 0.3, "generic": 0.1},
            "generic_stoplist": ["N/A", "ok"],
            "contradictions": [{
                "id": "erp", "description": "no ERP but names one",
                "if": {"q": "erp_usage", "op": "equals", "value": "no erp system used"},
                "conflicts_with": {"q": "primary_erp", "op": "not_blank"}
            }]
        }"#;
        let rs = RuleSet::from_json(text).unwrap();
        assert!(rs.generic_stoplist.contains("n/a"));
        assert_eq!(rs.contradictions[0].conflicting, Condition::not_blank("primary_erp"));
        rs.validate(&schema()).unwrap();

        let back = RuleSet::from_json(&serde_json::to_string(&rs).unwrap()).unwrap();
        assert_eq!(back, rs);

        let mut broken = rs.clone();
        broken.contradictions[0].antecedent.question_id = "zz".into();
        assert!(broken.validate(&schema()).is_err());
        let mut broken = rs;
        broken.logic_threshold = 1.5;
        assert!(broken.validate(&schema()).is_err());
    }

    #[test]
    fn partitions() {
        let s = schema();
        let rs = erp_rules();
        let bad = complete()
            .with("erp_usage", AnswerValue::choice("no erp system used"))
            .with("t1", AnswerValue::choice("ok"))
            .with("t2", AnswerValue::choice("no"));
        let cleans: Vec<_> = [complete(), bad.clone(), complete(), bad]
            .iter()
            .enumerate()
            .map(|(i, r)| preprocess(r, &s, i))
            .collect();
        let reports: Vec<_> = cleans.iter().map(|c| logic_score(c, &s, &rs).unwrap()).collect();
        let enc = crate::ingest::fit_encoding(&s, &cleans);
        let ds = crate::ingest::encode_dataset(&s, &enc, &cleans, None).unwrap();
        let (passed, susp) = partition_by_logic(&reports, &ds).unwrap();
        assert_eq!(passed.row_ids, ["0", "2"]);
        assert_eq!(susp.row_ids, ["1", "3"]);

        let mut shuffled = reports.clone();
        shuffled.swap(0, 1);
        assert!(partition_by_logic(&shuffled, &ds).is_err());
    }

    proptest! {
        #[test]
        fn score_is_bounded_and_monotone(
            fired in 0usize..6, generic in 0usize..6, blank in any::<bool>(),
            wc in 0.0f64..1.0, wb in 0.0f64..1.0, wg in 0.0f64..1.0,
        ) {
            let w = Weights { contradiction: wc, blank: wb, generic: wg };
            let s = score_from_flags(&w, fired, blank, generic);
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert!(score_from_flags(&w, fired + 1, blank, generic) <= s);
            prop_assert!(score_from_flags(&w, fired, blank, generic + 1) <= s);
            prop_assert!(score_from_flags(&w, fired, true, generic) <= score_from_flags(&w, fired, false, generic));
            if fired == 0 && generic == 0 && !blank {
                prop_assert_eq!(s, 1.0);
            }
        }
    }
}

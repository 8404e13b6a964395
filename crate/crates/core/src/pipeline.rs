//! End-to-end orchestration: preprocessing, rule and text scoring, feature
//! assembly, training and evaluation, filtering, and segmentation.
//!
//! [`Validator`] is the single scoring path behind both batch filtering and
//! the HTTP endpoint.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{class_metrics, confusion, stratified_split_indices, ClassMetrics, ConfusionMatrix, Importance, ImportanceRanking, PerClass};
use crate::ingest::{encode_dataset, encoded_feature_names, fit_encoding, preprocess, CleanResponse, Dataset, EncodingMap, ParsedCsv, UNKNOWN};
use crate::model::{Classifier, ModelKind, ModelSpec};
use crate::rules::{logic_score, LogicReport, RuleSet};
use crate::schema::{AnswerValue, RawResponse, SurveySchema};
use crate::textscore::{score_response, TextScoreConfig, TextScoreReport};
use crate::{fmt_num, Label};

/// Score columns appended to the encoded answers, in order.
pub const SCORE_FEATURES: [&str; 5] = [
    "blank_fraction",
    "logic_score",
    "coherence",
    "length_score",
    "vocab_score",
];

/// Reason recorded when the classifier flags a response.
pub const MODEL_REASON: &str = "model";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub model: ModelSpec,
    pub schema_path: Option<String>,
    pub rules_path: Option<String>,
    pub decision_threshold: f64,
    pub drop_suspicious_pre_model: bool,
    pub segment_by: Vec<String>,
    /// Append [`SCORE_FEATURES`] to the classifier input.
    pub include_scores: bool,
    pub test_fraction: f64,
    pub seed: u64,
    pub text: TextScoreConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            model: ModelSpec::default_for(ModelKind::Forest, 0),
            schema_path: None,
            rules_path: None,
            decision_threshold: 0.5,
            drop_suspicious_pre_model: false,
            segment_by: Vec::new(),
            include_scores: true,
            test_fraction: 0.2,
            seed: 0,
            text: TextScoreConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn validate(&self, schema: &SurveySchema) -> Result<()> {
        if !(0.0..=1.0).contains(&self.decision_threshold) {
            return Err(Error::InvalidArgument(format!(
                "decision threshold must lie in [0, 1], got {}",
                self.decision_threshold
            )));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "test fraction must lie in (0, 1), got {}",
                self.test_fraction
            )));
        }
        for q in &self.segment_by {
            if !schema.contains(q) {
                return Err(Error::UnknownQuestion(q.clone()));
            }
        }
        Ok(())
    }
}

/// One response after preprocessing and scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredResponse {
    pub clean: CleanResponse,
    pub logic: LogicReport,
    pub text: TextScoreReport,
}

pub fn score_one(
    raw: &RawResponse,
    seq: usize,
    schema: &SurveySchema,
    rules: &RuleSet,
    text: &TextScoreConfig,
) -> Result<ScoredResponse> {
    let clean = preprocess(raw, schema, seq);
    let logic = logic_score(&clean, schema, rules)?;
    let text = score_response(&clean, schema, &rules.generic_stoplist, text);
    Ok(ScoredResponse { clean, logic, text })
}

/// Scores every response in parallel; results keep input order.
pub fn score_responses(
    schema: &SurveySchema,
    raws: &[RawResponse],
    rules: &RuleSet,
    text: &TextScoreConfig,
) -> Result<Vec<ScoredResponse>> {
    raws.par_iter()
        .enumerate()
        .map(|(i, r)| score_one(r, i, schema, rules, text))
        .collect()
}

pub fn score_values(logic: &LogicReport, text: &TextScoreReport) -> [f64; 5] {
    [
        logic.blank_fraction,
        logic.logic_score,
        text.coherence,
        text.length_score,
        text.vocab_score,
    ]
}

/// Encoded answers extended with [`SCORE_FEATURES`]. All three inputs must
/// list the same respondents in the same order.
pub fn assemble_features(
    schema: &SurveySchema,
    encoding: &EncodingMap,
    clean: &[CleanResponse],
    logic: &[LogicReport],
    text: &[TextScoreReport],
) -> Result<Dataset> {
    if logic.len() != clean.len() || text.len() != clean.len() {
        return Err(Error::Misaligned(format!(
            "{} responses, {} logic reports, {} text reports",
            clean.len(),
            logic.len(),
            text.len()
        )));
    }
    let mut ds = encode_dataset(schema, encoding, clean, None)?;
    for (i, ((row, l), t)) in ds.rows.iter_mut().zip(logic).zip(text).enumerate() {
        let id = &clean[i].respondent_id;
        if &l.respondent_id != id || &t.respondent_id != id {
            return Err(Error::Misaligned(format!(
                "row {i}: response `{id}`, logic `{}`, text `{}`",
                l.respondent_id, t.respondent_id
            )));
        }
        row.extend(score_values(l, t));
    }
    ds.feature_names
        .extend(SCORE_FEATURES.iter().map(|s| s.to_string()));
    Ok(ds)
}

pub fn feature_names(schema: &SurveySchema, encoding: &EncodingMap, include_scores: bool) -> Vec<String> {
    let mut names = encoded_feature_names(schema, encoding);
    if include_scores {
        names.extend(SCORE_FEATURES.iter().map(|s| s.to_string()));
    }
    names
}

fn build_dataset(
    schema: &SurveySchema,
    encoding: &EncodingMap,
    scored: &[ScoredResponse],
    include_scores: bool,
) -> Result<Dataset> {
    let clean: Vec<CleanResponse> = scored.iter().map(|s| s.clean.clone()).collect();
    if include_scores {
        let logic: Vec<LogicReport> = scored.iter().map(|s| s.logic.clone()).collect();
        let text: Vec<TextScoreReport> = scored.iter().map(|s| s.text.clone()).collect();
        assemble_features(schema, encoding, &clean, &logic, &text)
    } else {
        encode_dataset(schema, encoding, &clean, None)
    }
}

/// Everything needed to score new responses: the classifier plus the
/// encoding, rules and scoring settings it was trained with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    /// Serialized inline: `kind`, `config` and the model's arrays sit at the
    /// top level of the document.
    #[serde(flatten)]
    pub model: Classifier,
    pub schema_version: String,
    pub feature_names: Vec<String>,
    pub encoding: EncodingMap,
    pub rules: RuleSet,
    pub text: TextScoreConfig,
    pub include_scores: bool,
    pub decision_threshold: f64,
}

impl ModelArtifact {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut out = serde_json::to_vec(self)?;
        out.push(b'\n');
        Ok(out)
    }

    /// Checks that `schema` reproduces the feature layout the model expects.
    pub fn check_schema(&self, schema: &SurveySchema) -> Result<()> {
        let names = feature_names(schema, &self.encoding, self.include_scores);
        if names != self.feature_names || names.len() != self.model.n_features() {
            return Err(Error::Schema(format!(
                "schema `{}` yields {} features; the model expects {}",
                schema.version,
                names.len(),
                self.feature_names.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: ModelKind,
    pub n_train: usize,
    pub n_test: usize,
    pub decision_threshold: f64,
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    pub per_class: PerClassReport,
    pub importances: Vec<Importance>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerClassReport {
    pub genuine: PerClass,
    pub fake: PerClass,
}

impl EvalReport {
    pub fn metrics(&self) -> ClassMetrics {
        ClassMetrics {
            accuracy: self.accuracy,
            genuine: self.per_class.genuine,
            fake: self.per_class.fake,
        }
    }
}

/// Per-response inputs of the logic/text scatter plot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterInput {
    pub respondent_id: String,
    pub length_score: f64,
    pub logic_score: f64,
    pub predicted_label: Label,
}

fn class_warnings(labels: &[Label], partition: &str) -> Vec<String> {
    let mut out = Vec::new();
    for class in [Label::Genuine, Label::Fake] {
        let k = labels.iter().filter(|l| **l == class).count();
        if k < 2 {
            out.push(format!("{partition} partition has {k} {class} sample(s)"));
        }
    }
    out
}

fn evaluate(
    model: &Classifier,
    dataset: &Dataset,
    threshold: f64,
) -> Result<(Vec<Label>, ConfusionMatrix, ClassMetrics)> {
    let predicted = dataset
        .rows
        .iter()
        .map(|x| Ok(Label::from_bool(model.predict_proba(x)? >= threshold)))
        .collect::<Result<Vec<_>>>()?;
    let cm = confusion(&predicted, dataset.labels()?)?;
    let metrics = class_metrics(&cm)?;
    Ok((predicted, cm, metrics))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingOutcome {
    pub artifact: ModelArtifact,
    pub report: EvalReport,
    /// Scatter inputs for the held-out responses.
    pub scatter: Vec<ScatterInput>,
}

/// Scored responses, the train/test split and the assembled datasets, with
/// the encoding fitted on the training partition only.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub scored: Vec<ScoredResponse>,
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub encoding: EncodingMap,
    pub train: Dataset,
    pub test: Dataset,
}

pub fn prepare_data(
    schema: &SurveySchema,
    raws: &[RawResponse],
    labels: &[Label],
    rules: &RuleSet,
    config: &PipelineConfig,
) -> Result<PreparedData> {
    config.validate(schema)?;
    if labels.len() != raws.len() {
        return Err(Error::DimensionMismatch {
            expected: raws.len(),
            got: labels.len(),
        });
    }
    if raws.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let scored = score_responses(schema, raws, rules, &config.text)?;
    let (train_idx, test_idx) = stratified_split_indices(labels, config.test_fraction, config.seed)?;
    let train_clean: Vec<CleanResponse> = train_idx.iter().map(|&i| scored[i].clean.clone()).collect();
    let encoding = fit_encoding(schema, &train_clean);
    let all = build_dataset(schema, &encoding, &scored, config.include_scores)?
        .with_labels(labels.to_vec())?;
    let train = all.subset(&train_idx);
    let test = all.subset(&test_idx);
    Ok(PreparedData {
        scored,
        train_idx,
        test_idx,
        encoding,
        train,
        test,
    })
}

/// Stratified split, encoding fitted on the training partition only, model
/// fitted on the training partition, metrics on the test partition.
pub fn run_training(
    schema: &SurveySchema,
    raws: &[RawResponse],
    labels: &[Label],
    rules: &RuleSet,
    config: &PipelineConfig,
) -> Result<TrainingOutcome> {
    let PreparedData {
        scored,
        test_idx,
        encoding,
        train,
        test,
        ..
    } = prepare_data(schema, raws, labels, rules, config)?;

    let mut warnings = class_warnings(train.labels()?, "training");
    warnings.extend(class_warnings(test.labels()?, "test"));

    let model = Classifier::train(&train, &config.model)?;
    let (predicted, cm, metrics) = evaluate(&model, &test, config.decision_threshold)?;
    let ranking = ImportanceRanking::from_raw(&train.feature_names, &model.raw_importances());
    let scatter = test_idx
        .iter()
        .zip(&predicted)
        .map(|(&i, &p)| ScatterInput {
            respondent_id: raws[i].respondent_id.clone(),
            length_score: scored[i].text.length_score,
            logic_score: scored[i].logic.logic_score,
            predicted_label: p,
        })
        .collect();
    let report = EvalReport {
        model: model.kind(),
        n_train: train.n(),
        n_test: test.n(),
        decision_threshold: config.decision_threshold,
        confusion: cm,
        accuracy: metrics.accuracy,
        per_class: PerClassReport {
            genuine: metrics.genuine,
            fake: metrics.fake,
        },
        importances: ranking.0,
        warnings,
    };
    let artifact = ModelArtifact {
        schema_version: schema.version.clone(),
        feature_names: train.feature_names.clone(),
        encoding,
        rules: rules.clone(),
        text: config.text,
        include_scores: config.include_scores,
        decision_threshold: config.decision_threshold,
        model,
    };
    Ok(TrainingOutcome {
        artifact,
        report,
        scatter,
    })
}

/// Scores a labeled dataset with a trained artifact, using the rules stored
/// in it.
pub fn run_evaluation(
    schema: &SurveySchema,
    raws: &[RawResponse],
    labels: &[Label],
    artifact: &ModelArtifact,
) -> Result<(EvalReport, Vec<ScatterInput>)> {
    artifact.check_schema(schema)?;
    if labels.len() != raws.len() {
        return Err(Error::DimensionMismatch {
            expected: raws.len(),
            got: labels.len(),
        });
    }
    let scored = score_responses(schema, raws, &artifact.rules, &artifact.text)?;
    let ds = build_dataset(schema, &artifact.encoding, &scored, artifact.include_scores)?
        .with_labels(labels.to_vec())?;
    let (predicted, cm, metrics) = evaluate(&artifact.model, &ds, artifact.decision_threshold)?;
    let ranking = ImportanceRanking::from_raw(&artifact.feature_names, &artifact.model.raw_importances());
    let scatter = scored
        .iter()
        .zip(raws)
        .zip(&predicted)
        .map(|((s, r), &p)| ScatterInput {
            respondent_id: r.respondent_id.clone(),
            length_score: s.text.length_score,
            logic_score: s.logic.logic_score,
            predicted_label: p,
        })
        .collect();
    let report = EvalReport {
        model: artifact.model.kind(),
        n_train: 0,
        n_test: ds.n(),
        decision_threshold: artifact.decision_threshold,
        confusion: cm,
        accuracy: metrics.accuracy,
        per_class: PerClassReport {
            genuine: metrics.genuine,
            fake: metrics.fake,
        },
        importances: ranking.0,
        warnings: class_warnings(labels, "evaluation"),
    };
    Ok((report, scatter))
}

/// Outcome for one response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub verdict: Label,
    pub prob_fake: f64,
    pub logic_score: f64,
    pub reasons: Vec<String>,
}

impl Verdict {
    pub fn flagged(&self) -> bool {
        self.verdict.is_fake()
    }

    /// The verdict fields as written to CSV and JSON: verdict, prob_fake,
    /// logic_score and `;`-joined reasons.
    pub fn fields(&self) -> [String; 4] {
        [
            self.verdict.as_str().to_string(),
            fmt_num(self.prob_fake),
            fmt_num(self.logic_score),
            self.reasons.join(";"),
        ]
    }
}

/// Immutable scoring state shared by batch filtering and the server.
#[derive(Debug, Clone)]
pub struct Validator {
    pub schema: SurveySchema,
    pub artifact: ModelArtifact,
    pub rules: RuleSet,
    pub decision_threshold: f64,
    pub drop_suspicious_pre_model: bool,
}

impl Validator {
    pub fn new(
        schema: SurveySchema,
        artifact: ModelArtifact,
        rules: RuleSet,
        drop_suspicious_pre_model: bool,
    ) -> Result<Self> {
        artifact.check_schema(&schema)?;
        rules.validate(&schema)?;
        Ok(Validator {
            decision_threshold: artifact.decision_threshold,
            schema,
            artifact,
            rules,
            drop_suspicious_pre_model,
        })
    }

    pub fn score(&self, raw: &RawResponse, seq: usize) -> Result<(ScoredResponse, Verdict)> {
        let scored = score_one(raw, seq, &self.schema, &self.rules, &self.artifact.text)?;
        let mut x = crate::ingest::encode_dataset(
            &self.schema,
            &self.artifact.encoding,
            std::slice::from_ref(&scored.clean),
            None,
        )?
        .rows
        .remove(0);
        if self.artifact.include_scores {
            x.extend(score_values(&scored.logic, &scored.text));
        }
        let prob_fake = self.artifact.model.predict_proba(&x)?;
        let model_flags = prob_fake >= self.decision_threshold;
        let logic_flags = self.drop_suspicious_pre_model && scored.logic.suspicious;
        let mut reasons = scored.logic.fired_rules.clone();
        if model_flags {
            reasons.push(MODEL_REASON.to_string());
        }
        let verdict = Verdict {
            verdict: Label::from_bool(model_flags || logic_flags),
            prob_fake,
            logic_score: scored.logic.logic_score,
            reasons,
        };
        Ok((scored, verdict))
    }

    pub fn validate(&self, raw: &RawResponse) -> Result<Verdict> {
        Ok(self.score(raw, 0)?.1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlaggedResponse {
    pub respondent_id: String,
    pub reasons: Vec<String>,
    pub prob_fake: f64,
    pub logic_score: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterOutcome {
    pub retained: Vec<String>,
    pub flagged: Vec<FlaggedResponse>,
    /// One verdict per input response, in input order.
    pub verdicts: Vec<Verdict>,
    /// Cleaned answers of the retained responses, in input order.
    #[serde(skip)]
    pub retained_clean: Vec<CleanResponse>,
}

pub fn run_filter(validator: &Validator, raws: &[RawResponse]) -> Result<FilterOutcome> {
    let scored: Vec<(ScoredResponse, Verdict)> = raws
        .par_iter()
        .enumerate()
        .map(|(i, r)| validator.score(r, i))
        .collect::<Result<_>>()?;
    let mut out = FilterOutcome::default();
    for (raw, (s, v)) in raws.iter().zip(scored) {
        if v.flagged() {
            out.flagged.push(FlaggedResponse {
                respondent_id: raw.respondent_id.clone(),
                reasons: v.reasons.clone(),
                prob_fake: v.prob_fake,
                logic_score: v.logic_score,
            });
        } else {
            out.retained.push(raw.respondent_id.clone());
            out.retained_clean.push(s.clean);
        }
        out.verdicts.push(v);
    }
    Ok(out)
}

/// Verdict columns appended to filter output files.
pub const VERDICT_COLUMNS: [&str; 4] = ["verdict", "prob_fake", "logic_score", "reasons"];

/// Retained and flagged CSV files: the input columns verbatim plus
/// [`VERDICT_COLUMNS`].
pub fn filter_csvs(parsed: &ParsedCsv, outcome: &FilterOutcome) -> Result<(Vec<u8>, Vec<u8>)> {
    if parsed.records.len() != outcome.verdicts.len() {
        return Err(Error::DimensionMismatch {
            expected: parsed.records.len(),
            got: outcome.verdicts.len(),
        });
    }
    let to_err = |e: csv::Error| Error::Csv {
        line: 0,
        message: e.to_string(),
    };
    let mut header = parsed.headers.clone();
    header.extend(VERDICT_COLUMNS.iter().map(|s| s.to_string()));
    let mut retained = csv::Writer::from_writer(Vec::new());
    let mut flagged = csv::Writer::from_writer(Vec::new());
    retained.write_record(&header).map_err(to_err)?;
    flagged.write_record(&header).map_err(to_err)?;
    for (rec, v) in parsed.records.iter().zip(&outcome.verdicts) {
        let mut row = rec.clone();
        row.extend(v.fields());
        let w = if v.flagged() { &mut flagged } else { &mut retained };
        w.write_record(&row).map_err(to_err)?;
    }
    let finish = |w: csv::Writer<Vec<u8>>| {
        w.into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
    };
    Ok((finish(retained)?, finish(flagged)?))
}

/// Retained counts per canonical value, per segmenting question.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentReport(pub BTreeMap<String, BTreeMap<String, usize>>);

fn segment_key(value: Option<&AnswerValue>) -> String {
    match value {
        None => UNKNOWN.to_string(),
        Some(AnswerValue::Text(t)) => t.clone(),
        Some(AnswerValue::Integer(0)) => UNKNOWN.to_string(),
        Some(AnswerValue::Integer(i)) => i.to_string(),
        Some(AnswerValue::Choices(vs)) => vs.join(";"),
    }
}

/// Multi-choice answers segment by their full (sorted) selection.
pub fn segment(
    schema: &SurveySchema,
    retained: &[CleanResponse],
    segment_by: &[String],
) -> Result<SegmentReport> {
    let mut out = BTreeMap::new();
    for qid in segment_by {
        if !schema.contains(qid) {
            return Err(Error::UnknownQuestion(qid.clone()));
        }
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for r in retained {
            *counts.entry(segment_key(r.answers.get(qid))).or_default() += 1;
        }
        out.insert(qid.clone(), counts);
    }
    Ok(SegmentReport(out))
}

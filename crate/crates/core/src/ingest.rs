//! Response ingestion: CSV parsing, PII removal, label normalization,
//! imputation and label encoding.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{AnswerValue, QuestionKind, RawResponse, SurveySchema};
use crate::Label;

/// Sentinel written in place of absent choice and free-text answers.
pub const UNKNOWN: &str = "unknown";

/// Name of the optional label column.
pub const LABEL_COLUMN: &str = "Is_Fake";

pub const ID_COLUMN: &str = "respondent_id";

/// Canonical form of a label: lowercase, inner whitespace collapsed to single
/// spaces, and leading/trailing whitespace and punctuation removed. Interior
/// punctuation is kept, so "don't know" survives intact.
pub fn normalize_label(text: &str) -> String {
    let lowered = text.to_lowercase();
    let collapsed = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_string()
}

/// A response after PII removal and normalization. `missing` records which
/// questions were absent or blank before imputation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanResponse {
    pub respondent_id: String,
    pub answers: BTreeMap<String, AnswerValue>,
    pub missing: BTreeSet<String>,
}

impl CleanResponse {
    pub fn is_missing(&self, qid: &str) -> bool {
        self.missing.contains(qid)
    }

    pub fn text(&self, qid: &str) -> Option<&str> {
        match self.answers.get(qid) {
            Some(AnswerValue::Text(t)) => Some(t),
            _ => None,
        }
    }
}

/// Removes answers to PII questions and replaces the respondent id with the
/// opaque token `seq`.
pub fn strip_pii(raw: &RawResponse, schema: &SurveySchema, seq: usize) -> RawResponse {
    let answers = raw
        .answers
        .iter()
        .filter(|(qid, _)| !schema.question(qid).is_some_and(|q| q.pii))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    RawResponse {
        respondent_id: seq.to_string(),
        answers,
    }
}

fn canonical_answer(kind: &QuestionKind, value: &AnswerValue) -> Option<AnswerValue> {
    match kind {
        QuestionKind::SingleChoice { .. } | QuestionKind::FreeText => {
            let text = match value {
                AnswerValue::Text(t) => normalize_label(t),
                AnswerValue::Integer(i) => i.to_string(),
                AnswerValue::Choices(vs) => vs
                    .iter()
                    .map(|v| normalize_label(v))
                    .find(|v| !v.is_empty())
                    .unwrap_or_default(),
            };
            (!text.is_empty()).then_some(AnswerValue::Text(text))
        }
        QuestionKind::MultiChoice { .. } => {
            let items: BTreeSet<String> = match value {
                AnswerValue::Text(t) => std::iter::once(normalize_label(t)).collect(),
                AnswerValue::Integer(i) => std::iter::once(i.to_string()).collect(),
                AnswerValue::Choices(vs) => vs.iter().map(|v| normalize_label(v)).collect(),
            };
            let items: Vec<String> = items.into_iter().filter(|v| !v.is_empty()).collect();
            (!items.is_empty()).then_some(AnswerValue::Choices(items))
        }
        QuestionKind::Likert { .. } => match value {
            AnswerValue::Integer(i) => Some(AnswerValue::Integer(*i)),
            AnswerValue::Text(t) => t.trim().parse::<i64>().ok().map(AnswerValue::Integer),
            AnswerValue::Choices(vs) if vs.len() == 1 => {
                vs[0].trim().parse::<i64>().ok().map(AnswerValue::Integer)
            }
            AnswerValue::Choices(_) => None,
        },
    }
}

/// PII removal plus normalization of every answer. Answers to questions the
/// schema does not know are dropped; blank answers are recorded as missing.
pub fn clean_response(raw: &RawResponse, schema: &SurveySchema, seq: usize) -> CleanResponse {
    let stripped = strip_pii(raw, schema, seq);
    let mut answers = BTreeMap::new();
    let mut missing = BTreeSet::new();
    for q in schema.non_pii() {
        match stripped
            .answers
            .get(&q.id)
            .and_then(|v| canonical_answer(&q.kind, v))
        {
            Some(v) => {
                answers.insert(q.id.clone(), v);
            }
            None => {
                missing.insert(q.id.clone());
            }
        }
    }
    CleanResponse {
        respondent_id: stripped.respondent_id,
        answers,
        missing,
    }
}

/// Fills every absent non-PII answer with its sentinel: `"unknown"` for
/// choice and free-text questions, `0` for Likert. `missing` is left as is.
pub fn impute_missing(clean: &CleanResponse, schema: &SurveySchema) -> CleanResponse {
    let mut out = clean.clone();
    for q in schema.non_pii() {
        if out.answers.contains_key(&q.id) {
            continue;
        }
        let sentinel = match q.kind {
            QuestionKind::Likert { .. } => AnswerValue::Integer(0),
            QuestionKind::MultiChoice { .. } => AnswerValue::Choices(vec![UNKNOWN.to_string()]),
            _ => AnswerValue::Text(UNKNOWN.to_string()),
        };
        out.answers.insert(q.id.clone(), sentinel);
    }
    out
}

/// `clean_response` followed by `impute_missing`.
pub fn preprocess(raw: &RawResponse, schema: &SurveySchema, seq: usize) -> CleanResponse {
    impute_missing(&clean_response(raw, schema, seq), schema)
}

/// Per-question sorted vocabularies. The value at position `i` has code
/// `i + 1`; code 0 is reserved for missing or unseen values.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodingMap {
    pub vocab: BTreeMap<String, Vec<String>>,
}

impl EncodingMap {
    pub fn code(&self, qid: &str, value: &str) -> u32 {
        self.vocab
            .get(qid)
            .and_then(|v| v.binary_search_by(|x| x.as_str().cmp(value)).ok())
            .map_or(0, |i| i as u32 + 1)
    }

    pub fn decode(&self, qid: &str, code: u32) -> Option<&str> {
        if code == 0 {
            return None;
        }
        self.vocab
            .get(qid)
            .and_then(|v| v.get(code as usize - 1))
            .map(String::as_str)
    }

    pub fn vocabulary(&self, qid: &str) -> &[String] {
        self.vocab.get(qid).map_or(&[], Vec::as_slice)
    }
}

pub fn fit_encoding(schema: &SurveySchema, training: &[CleanResponse]) -> EncodingMap {
    let mut vocab = BTreeMap::new();
    for q in schema.non_pii() {
        let Some(declared) = q.kind.allowed_values() else {
            continue;
        };
        let mut values: BTreeSet<String> = declared.iter().map(|v| normalize_label(v)).collect();
        for r in training {
            match r.answers.get(&q.id) {
                Some(AnswerValue::Text(t)) => {
                    values.insert(t.clone());
                }
                Some(AnswerValue::Choices(vs)) => values.extend(vs.iter().cloned()),
                _ => {}
            }
        }
        values.remove(UNKNOWN);
        values.remove("");
        vocab.insert(q.id.clone(), values.into_iter().collect());
    }
    EncodingMap { vocab }
}

/// Numeric design matrix with feature names and optional labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Option<Vec<Label>>,
    pub row_ids: Vec<String>,
}

impl Dataset {
    pub fn new(feature_names: Vec<String>) -> Self {
        Dataset {
            feature_names,
            rows: Vec::new(),
            labels: None,
            row_ids: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn d(&self) -> usize {
        self.feature_names.len()
    }

    pub fn labels(&self) -> Result<&[Label]> {
        self.labels
            .as_deref()
            .ok_or(Error::InvalidArgument("dataset has no labels".into()))
    }

    /// Rows (and labels, ids) at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            feature_names: self.feature_names.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            row_ids: indices.iter().map(|&i| self.row_ids[i].clone()).collect(),
        }
    }

    pub fn with_labels(mut self, labels: Vec<Label>) -> Result<Self> {
        if labels.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }
}

/// Feature names produced by [`encode_dataset`] for `schema` under `encoding`.
pub fn encoded_feature_names(schema: &SurveySchema, encoding: &EncodingMap) -> Vec<String> {
    let mut names = Vec::new();
    for q in schema.non_pii() {
        match &q.kind {
            QuestionKind::SingleChoice { .. } | QuestionKind::Likert { .. } => {
                names.push(q.id.clone())
            }
            QuestionKind::MultiChoice { .. } => names.extend(
                encoding
                    .vocabulary(&q.id)
                    .iter()
                    .map(|v| format!("{}={}", q.id, v)),
            ),
            QuestionKind::FreeText => {}
        }
    }
    names
}

fn encode_row(schema: &SurveySchema, encoding: &EncodingMap, r: &CleanResponse) -> Vec<f64> {
    let mut row = Vec::new();
    for q in schema.non_pii() {
        let answer = r.answers.get(&q.id);
        match &q.kind {
            QuestionKind::SingleChoice { .. } => {
                let code = match answer {
                    Some(AnswerValue::Text(t)) => encoding.code(&q.id, t),
                    _ => 0,
                };
                row.push(f64::from(code));
            }
            QuestionKind::Likert { .. } => row.push(match answer {
                Some(AnswerValue::Integer(v)) => *v as f64,
                _ => 0.0,
            }),
            QuestionKind::MultiChoice { .. } => {
                let selected: &[String] = match answer {
                    Some(AnswerValue::Choices(vs)) => vs,
                    _ => &[],
                };
                for v in encoding.vocabulary(&q.id) {
                    row.push(if selected.contains(v) { 1.0 } else { 0.0 });
                }
            }
            QuestionKind::FreeText => {}
        }
    }
    row
}

/// Label-encodes responses: single choices become codes, Likert ratings stay
/// raw integers, multi-choice answers expand to one indicator per vocabulary
/// entry, and free text is left to the text scorer.
pub fn encode_dataset(
    schema: &SurveySchema,
    encoding: &EncodingMap,
    responses: &[CleanResponse],
    labels: Option<&[Label]>,
) -> Result<Dataset> {
    if let Some(l) = labels {
        if l.len() != responses.len() {
            return Err(Error::DimensionMismatch {
                expected: responses.len(),
                got: l.len(),
            });
        }
    }
    Ok(Dataset {
        feature_names: encoded_feature_names(schema, encoding),
        rows: responses
            .iter()
            .map(|r| encode_row(schema, encoding, r))
            .collect(),
        labels: labels.map(<[Label]>::to_vec),
        row_ids: responses.iter().map(|r| r.respondent_id.clone()).collect(),
    })
}

#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub multi_separator: char,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            multi_separator: ';',
        }
    }
}

/// Parsed response file. `records` keeps the verbatim cells so outputs can
/// mirror the input layout.
#[derive(Debug, Clone)]
pub struct ParsedCsv {
    pub headers: Vec<String>,
    pub records: Vec<Vec<String>>,
    pub responses: Vec<RawResponse>,
    pub labels: Option<Vec<Label>>,
    pub warnings: Vec<String>,
}

/// Line (1-based) of the quote left open at end of input, if any.
fn unbalanced_quote_line(bytes: &[u8]) -> Option<u64> {
    let mut line = 1u64;
    let mut open_line = None;
    for &b in bytes {
        match b {
            b'"' => {
                open_line = match open_line {
                    None => Some(line),
                    Some(_) => None,
                }
            }
            b'\n' => line += 1,
            _ => {}
        }
    }
    open_line
}

fn cell_value(kind: &QuestionKind, cell: &str, sep: char) -> Option<AnswerValue> {
    if cell.trim().is_empty() {
        return None;
    }
    Some(match kind {
        QuestionKind::MultiChoice { .. } => AnswerValue::Choices(
            cell.split(sep)
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect(),
        ),
        QuestionKind::Likert { .. } => match cell.trim().parse::<i64>() {
            Ok(v) => AnswerValue::Integer(v),
            Err(_) => AnswerValue::Text(cell.to_string()),
        },
        _ => AnswerValue::Text(cell.to_string()),
    })
}

/// Parses a UTF-8, RFC-4180 response file whose header names question ids.
/// Columns the schema does not name are dropped with a warning; an
/// `Is_Fake` column, when present, supplies 0/1 labels.
pub fn parse_responses_csv(
    bytes: &[u8],
    schema: &SurveySchema,
    options: &CsvOptions,
) -> Result<ParsedCsv> {
    if let Some(line) = unbalanced_quote_line(bytes) {
        return Err(Error::Csv {
            line,
            message: "unbalanced quote".into(),
        });
    }
    let csv_err = |e: csv::Error| {
        let line = e.position().map_or(0, csv::Position::line);
        Error::Csv {
            line,
            message: e.to_string(),
        }
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(bytes);
    let headers: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();

    let mut warnings = Vec::new();
    let id_col = headers.iter().position(|h| h == ID_COLUMN);
    let label_col = headers.iter().position(|h| h == LABEL_COLUMN);
    let mut columns = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        if Some(i) == id_col || Some(i) == label_col {
            continue;
        }
        match schema.question(h) {
            Some(q) => columns.push((i, q)),
            None => warnings.push(format!("column `{h}` is not in the schema; dropped")),
        }
    }

    let mut records = Vec::new();
    let mut responses = Vec::new();
    let mut labels = label_col.map(|_| Vec::new());
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, csv::Position::line);
        let cells: Vec<String> = rec.iter().map(str::to_string).collect();
        let id = id_col
            .map(|i| cells[i].trim().to_string())
            .filter(|s| !s.is_empty())
            .unwrap_or_else(|| format!("row-{}", row + 1));
        let mut raw = RawResponse::new(id);
        for &(i, q) in &columns {
            if let Some(v) = cell_value(&q.kind, &cells[i], options.multi_separator) {
                raw.answers.insert(q.id.clone(), v);
            }
        }
        if let (Some(i), Some(labels)) = (label_col, labels.as_mut()) {
            let label = match cells[i].trim() {
                "0" => Label::Genuine,
                "1" => Label::Fake,
                other => {
                    return Err(Error::Csv {
                        line,
                        message: format!("{LABEL_COLUMN} must be 0 or 1, found `{other}`"),
                    })
                }
            };
            labels.push(label);
        }
        responses.push(raw);
        records.push(cells);
    }
    Ok(ParsedCsv {
        headers,
        records,
        responses,
        labels,
        warnings,
    })
}

fn answer_cell(value: Option<&AnswerValue>, sep: char) -> String {
    match value {
        None => String::new(),
        Some(AnswerValue::Text(t)) => t.clone(),
        Some(AnswerValue::Integer(i)) => i.to_string(),
        Some(AnswerValue::Choices(vs)) => vs.join(&sep.to_string()),
    }
}

/// Writes responses in the layout [`parse_responses_csv`] reads:
/// `respondent_id`, one column per schema question, then `Is_Fake` when
/// labels are given.
pub fn write_responses_csv(
    schema: &SurveySchema,
    responses: &[RawResponse],
    labels: Option<&[Label]>,
    options: &CsvOptions,
) -> Result<Vec<u8>> {
    if let Some(l) = labels {
        if l.len() != responses.len() {
            return Err(Error::DimensionMismatch {
                expected: responses.len(),
                got: l.len(),
            });
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![ID_COLUMN.to_string()];
    header.extend(schema.questions.iter().map(|q| q.id.clone()));
    if labels.is_some() {
        header.push(LABEL_COLUMN.to_string());
    }
    let to_err = |e: csv::Error| Error::Csv {
        line: 0,
        message: e.to_string(),
    };
    w.write_record(&header).map_err(to_err)?;
    for (i, r) in responses.iter().enumerate() {
        let mut rec = vec![r.respondent_id.clone()];
        rec.extend(
            schema
                .questions
                .iter()
                .map(|q| answer_cell(r.answers.get(&q.id), options.multi_separator)),
        );
        if let Some(l) = labels {
            rec.push(if l[i].is_fake() { "1" } else { "0" }.to_string());
        }
        w.write_record(&rec).map_err(to_err)?;
    }
    w.into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

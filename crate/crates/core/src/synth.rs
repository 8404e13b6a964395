//! Seeded synthetic respondents with known labels.
//!
//! Genuine respondents are drawn from persona tables that keep them
//! consistent with the canonical contradiction rules; fakes follow one of four
//! corruption behaviors.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::rules::{ContradictionRule, Predicate, RuleSet};
use crate::schema::{AnswerValue, QuestionKind, QuestionSpec, RawResponse, SurveySchema};
use crate::Label;

const SCHEMA_JSON: &str = include_str!("../data/schema.json");
const RULES_JSON: &str = include_str!("../data/rules.json");
const PERSONAS_JSON: &str = include_str!("../data/personas.json");

/// The bundled 25-question readiness survey.
pub fn example_schema() -> SurveySchema {
    SurveySchema::from_json(SCHEMA_JSON).expect("bundled schema parses")
}

/// Rules matching [`example_schema`].
pub fn canonical_rules() -> RuleSet {
    RuleSet::from_json(RULES_JSON).expect("bundled rules parse")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct LikertPrior {
    mean: f64,
    min: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Persona {
    name: String,
    weight: f64,
    /// Allowed pool per question; an empty pool means "always left blank".
    #[serde(default)]
    choices: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    likert: BTreeMap<String, LikertPrior>,
}

#[derive(Debug, Deserialize)]
struct PersonaFile {
    personas: Vec<Persona>,
}

fn personas() -> Vec<Persona> {
    serde_json::from_str::<PersonaFile>(PERSONAS_JSON)
        .expect("bundled personas parse")
        .personas
}

const PHRASES: [&str; 24] = [
    "Demand swings make our safety stock targets hard to trust",
    "We keep too much inventory of slow moving items",
    "Supplier lead times vary a lot from month to month",
    "Forecasts are built by hand in spreadsheets every week",
    "Stockouts at regional warehouses hurt our service levels",
    "Our planners do not trust the numbers coming from the system",
    "Data from the plants arrives late and is often incomplete",
    "Seasonal peaks force us to expedite shipments at high cost",
    "It is hard to balance working capital against availability",
    "Integrating a new tool with our current ERP worries us",
    "Management wants proof of savings before any new investment",
    "We would like clearer reorder points for each warehouse",
    "Promotions cause sudden spikes that nobody plans for",
    "Multi echelon planning is still done one site at a time",
    "Our team needs training before adopting machine learning tools",
    "Excess stock expires before we can sell it",
    "Lead time buffers are set once a year and never revisited",
    "A pilot with a small product family would help us decide",
    "Inventory accuracy in the warehouse is lower than reported",
    "We struggle to share forecasts with our key suppliers",
    "Cloud hosting would be fine if security is addressed",
    "Transport delays make replenishment timing unpredictable",
    "Too many emergency orders disrupt the production schedule",
    "Service level targets differ between sales and operations",
];

const FIRST_NAMES: [&str; 8] = ["Alex", "Sam", "Jordan", "Taylor", "Morgan", "Casey", "Riley", "Jamie"];
const LAST_NAMES: [&str; 8] = ["Reyes", "Okafor", "Novak", "Lindqvist", "Tanaka", "Moreau", "Patel", "Walsh"];
const GENERIC_TEXTS: [&str; 5] = ["n/a", "ok", "none", "no", "idk"];

/// Most optional questions a genuine respondent skips.
pub const MAX_GENUINE_SKIPS: usize = 3;

/// Per-field blank probability of [`FakeBehavior::BlankHeavy`].
pub const BLANK_HEAVY_P: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FakeBehavior {
    /// Plausible answers except for one violated contradiction rule.
    Contradictor,
    /// Each non-PII field blank with probability [`BLANK_HEAVY_P`].
    BlankHeavy,
    /// Uniform random choices and random-letter free text.
    Gibberish,
    /// One Likert value everywhere, the first choice everywhere, generic text.
    Straightliner,
}

impl FakeBehavior {
    pub const ALL: [FakeBehavior; 4] = [
        FakeBehavior::Contradictor,
        FakeBehavior::BlankHeavy,
        FakeBehavior::Gibberish,
        FakeBehavior::Straightliner,
    ];
}

/// Relative weights of the fake behaviors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BehaviorMix {
    pub contradictor: f64,
    pub blank_heavy: f64,
    pub gibberish: f64,
    pub straightliner: f64,
}

impl Default for BehaviorMix {
    fn default() -> Self {
        BehaviorMix {
            contradictor: 1.0,
            blank_heavy: 1.0,
            gibberish: 1.0,
            straightliner: 1.0,
        }
    }
}

impl BehaviorMix {
    fn weights(&self) -> [f64; 4] {
        [self.contradictor, self.blank_heavy, self.gibberish, self.straightliner]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n: usize,
    pub fake_fraction: f64,
    pub behavior_mix: BehaviorMix,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n: 99,
            fake_fraction: 14.0 / 99.0,
            behavior_mix: BehaviorMix::default(),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.fake_fraction) {
            return Err(Error::InvalidArgument(format!(
                "fake fraction must lie in [0, 1], got {}",
                self.fake_fraction
            )));
        }
        let w = self.behavior_mix.weights();
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) || w.iter().sum::<f64>() <= 0.0 {
            return Err(Error::InvalidArgument(
                "behavior weights must be non-negative with a positive sum".into(),
            ));
        }
        Ok(())
    }

    pub fn fake_count(&self) -> usize {
        (self.n as f64 * self.fake_fraction).round() as usize
    }
}

fn person(rng: &mut Rng) -> (String, String) {
    let first = *rng.choose(&FIRST_NAMES).unwrap_or(&"Alex");
    let last = *rng.choose(&LAST_NAMES).unwrap_or(&"Reyes");
    let email = format!(
        "{}.{}{}@example.com",
        first.to_lowercase(),
        last.to_lowercase(),
        rng.below(100)
    );
    (format!("{first} {last}"), email)
}

fn fill_pii(schema: &SurveySchema, rng: &mut Rng, mut r: RawResponse) -> RawResponse {
    let (name, email) = person(rng);
    for q in schema.questions.iter().filter(|q| q.pii) {
        let v = if q.id.contains("mail") { &email } else { &name };
        r.answers.insert(q.id.clone(), AnswerValue::Text(v.clone()));
    }
    r
}

/// 5 to 24 words drawn from the phrase bank.
fn phrase(rng: &mut Rng) -> String {
    let first = *rng.choose(&PHRASES).unwrap_or(&PHRASES[0]);
    if rng.bernoulli(0.5) {
        let second = *rng.choose(&PHRASES).unwrap_or(&PHRASES[1]);
        format!("{first}. {second}.")
    } else {
        format!("{first}.")
    }
}

fn likert_near(rng: &mut Rng, lo: i64, hi: i64, prior: Option<LikertPrior>) -> i64 {
    let (mean, min) = match prior {
        Some(p) => (p.mean, p.min.max(lo)),
        None => ((lo + hi) as f64 / 2.0, lo),
    };
    let v = (mean + 0.8 * rng.normal()).round() as i64;
    v.clamp(min, hi.max(min))
}

/// Non-empty subset of `pool`, each member kept with probability 0.4.
fn subset(rng: &mut Rng, pool: &[String]) -> Vec<String> {
    let mut picked: Vec<String> = pool.iter().filter(|_| rng.bernoulli(0.4)).cloned().collect();
    if picked.is_empty() {
        if let Some(v) = rng.choose(pool) {
            picked.push(v.clone());
        }
    }
    picked
}

fn persona_answer(q: &QuestionSpec, persona: &Persona, rng: &mut Rng) -> Option<AnswerValue> {
    let pool = persona.choices.get(&q.id);
    match &q.kind {
        QuestionKind::SingleChoice { values } => {
            let pool = pool.map_or(values.as_slice(), Vec::as_slice);
            rng.choose(pool).map(|v| AnswerValue::Text(v.clone()))
        }
        QuestionKind::MultiChoice { values } => {
            let pool = pool.map_or(values.as_slice(), Vec::as_slice);
            let picked = subset(rng, pool);
            (!picked.is_empty()).then_some(AnswerValue::Choices(picked))
        }
        QuestionKind::Likert { lo, hi } => Some(AnswerValue::Integer(likert_near(
            rng,
            *lo,
            *hi,
            persona.likert.get(&q.id).copied(),
        ))),
        QuestionKind::FreeText => Some(AnswerValue::Text(phrase(rng))),
    }
}

fn genuine_inner(schema: &SurveySchema, rng: &mut Rng, skips: bool) -> RawResponse {
    let table = personas();
    let weights: Vec<f64> = table.iter().map(|p| p.weight).collect();
    let persona = &table[rng.weighted_index(&weights).unwrap_or(0)];
    let mut r = fill_pii(schema, rng, RawResponse::new(""));
    for q in schema.non_pii() {
        if let Some(v) = persona_answer(q, persona, rng) {
            r.answers.insert(q.id.clone(), v);
        }
    }
    if skips {
        // The first free-text question is always answered; anything else may
        // be skipped, keeping the blank share strictly under one half.
        let first_text = schema.free_text().next().map(|q| q.id.clone());
        let optional: Vec<&str> = schema
            .non_pii()
            .map(|q| q.id.as_str())
            .filter(|id| Some(*id) != first_text.as_deref())
            .collect();
        let m = schema.non_pii().count();
        let cap = MAX_GENUINE_SKIPS.min(m.saturating_sub(1) / 2);
        let k = rng.index(cap + 1);
        for i in rng.sample_indices(optional.len(), k.min(optional.len())) {
            r.answers.remove(optional[i]);
        }
    }
    r
}

/// A rule-consistent respondent drawn from a persona.
pub fn generate_genuine(schema: &SurveySchema, rng: &mut Rng) -> RawResponse {
    genuine_inner(schema, rng, true)
}

fn satisfy(
    schema: &SurveySchema,
    r: &mut RawResponse,
    qid: &str,
    predicate: &Predicate,
    rng: &mut Rng,
) {
    let Some(q) = schema.question(qid) else {
        return;
    };
    let value_for = |v: &str| match q.kind {
        QuestionKind::Likert { .. } => v
            .trim()
            .parse::<i64>()
            .map(AnswerValue::Integer)
            .unwrap_or_else(|_| AnswerValue::Text(v.to_string())),
        QuestionKind::MultiChoice { .. } => AnswerValue::Choices(vec![v.to_string()]),
        _ => AnswerValue::Text(v.to_string()),
    };
    let chosen = match predicate {
        Predicate::IsBlank => {
            r.answers.remove(qid);
            return;
        }
        Predicate::Equals { value } => value.clone(),
        Predicate::InSet { values } => match rng.choose(values) {
            Some(v) => v.clone(),
            None => return,
        },
        Predicate::NotBlank => {
            if r.answers.contains_key(qid) {
                return;
            }
            match &q.kind {
                QuestionKind::SingleChoice { values } | QuestionKind::MultiChoice { values } => {
                    rng.choose(values).cloned().unwrap_or_default()
                }
                QuestionKind::Likert { lo, .. } => lo.to_string(),
                QuestionKind::FreeText => phrase(rng),
            }
        }
    };
    // Selecting a value on a multi-choice question adds to the existing picks.
    if let (QuestionKind::MultiChoice { .. }, Some(AnswerValue::Choices(existing))) =
        (&q.kind, r.answers.get_mut(qid))
    {
        if !existing.contains(&chosen) {
            existing.push(chosen);
        }
        return;
    }
    r.answers.insert(qid.to_string(), value_for(&chosen));
}

fn applicable<'a>(schema: &SurveySchema, rules: &'a RuleSet) -> Vec<&'a ContradictionRule> {
    rules
        .contradictions
        .iter()
        .filter(|c| {
            schema.contains(&c.antecedent.question_id) && schema.contains(&c.conflicting.question_id)
        })
        .collect()
}

/// A fake respondent. Contradictors violate one of `rules`, sampled
/// uniformly among the rules whose questions the schema has.
pub fn generate_fake_with_rules(
    schema: &SurveySchema,
    behavior: FakeBehavior,
    rules: &RuleSet,
    rng: &mut Rng,
) -> RawResponse {
    match behavior {
        FakeBehavior::Contradictor => {
            let mut r = genuine_inner(schema, rng, false);
            let candidates = applicable(schema, rules);
            if let Some(rule) = rng.choose(&candidates) {
                satisfy(schema, &mut r, &rule.antecedent.question_id, &rule.antecedent.predicate, rng);
                satisfy(schema, &mut r, &rule.conflicting.question_id, &rule.conflicting.predicate, rng);
            }
            r
        }
        FakeBehavior::BlankHeavy => {
            let mut r = genuine_inner(schema, rng, false);
            for q in schema.non_pii() {
                if rng.bernoulli(BLANK_HEAVY_P) {
                    r.answers.remove(&q.id);
                }
            }
            r
        }
        FakeBehavior::Gibberish => {
            let mut r = fill_pii(schema, rng, RawResponse::new(""));
            for q in schema.non_pii() {
                let v = match &q.kind {
                    QuestionKind::SingleChoice { values } => {
                        rng.choose(values).map(|v| AnswerValue::Text(v.clone()))
                    }
                    QuestionKind::MultiChoice { values } => {
                        let picked = subset(rng, values);
                        (!picked.is_empty()).then_some(AnswerValue::Choices(picked))
                    }
                    QuestionKind::Likert { lo, hi } => {
                        Some(AnswerValue::Integer(rng.range_inclusive(*lo, *hi)))
                    }
                    QuestionKind::FreeText => Some(AnswerValue::Text(gibberish(rng))),
                };
                if let Some(v) = v {
                    r.answers.insert(q.id.clone(), v);
                }
            }
            r
        }
        FakeBehavior::Straightliner => {
            let mut r = fill_pii(schema, rng, RawResponse::new(""));
            let (lo, hi) = schema
                .non_pii()
                .find_map(|q| match q.kind {
                    QuestionKind::Likert { lo, hi } => Some((lo, hi)),
                    _ => None,
                })
                .unwrap_or((1, 5));
            let level = rng.range_inclusive(lo, hi);
            for q in schema.non_pii() {
                let v = match &q.kind {
                    QuestionKind::SingleChoice { values } => {
                        values.first().map(|v| AnswerValue::Text(v.clone()))
                    }
                    QuestionKind::MultiChoice { values } => {
                        values.first().map(|v| AnswerValue::Choices(vec![v.clone()]))
                    }
                    QuestionKind::Likert { lo, hi } => {
                        Some(AnswerValue::Integer(level.clamp(*lo, *hi)))
                    }
                    QuestionKind::FreeText => rng
                        .choose(&GENERIC_TEXTS)
                        .map(|t| AnswerValue::Text(t.to_string())),
                };
                if let Some(v) = v {
                    r.answers.insert(q.id.clone(), v);
                }
            }
            r
        }
    }
}

/// [`generate_fake_with_rules`] against [`canonical_rules`].
pub fn generate_fake(schema: &SurveySchema, behavior: FakeBehavior, rng: &mut Rng) -> RawResponse {
    generate_fake_with_rules(schema, behavior, &canonical_rules(), rng)
}

fn gibberish(rng: &mut Rng) -> String {
    let words = rng.range_inclusive(1, 4) as usize;
    (0..words)
        .map(|_| {
            let len = rng.range_inclusive(3, 8) as usize;
            (0..len)
                .map(|_| char::from(b'a' + rng.below(26) as u8))
                .collect::<String>()
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// A generated dataset with its labels and the behavior of each fake.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub responses: Vec<RawResponse>,
    pub labels: Vec<Label>,
    pub behaviors: Vec<Option<FakeBehavior>>,
}

/// Exactly `round(n * fake_fraction)` fakes with behaviors drawn from the
/// mix, shuffled, and numbered `resp-0001`, `resp-0002`, ... in output order.
pub fn generate_dataset(schema: &SurveySchema, config: &SynthConfig) -> Result<SynthDataset> {
    config.validate()?;
    let rules = canonical_rules();
    let mut rng = Rng::seed_from_u64(config.seed);
    let n_fake = config.fake_count().min(config.n);
    let weights = config.behavior_mix.weights();
    let mut rows: Vec<(RawResponse, Option<FakeBehavior>)> = Vec::with_capacity(config.n);
    for _ in 0..config.n - n_fake {
        rows.push((generate_genuine(schema, &mut rng), None));
    }
    for _ in 0..n_fake {
        let b = FakeBehavior::ALL[rng.weighted_index(&weights).unwrap_or(0)];
        rows.push((generate_fake_with_rules(schema, b, &rules, &mut rng), Some(b)));
    }
    rng.shuffle(&mut rows);
    let width = config.n.to_string().len().max(4);
    let mut out = SynthDataset {
        responses: Vec::with_capacity(config.n),
        labels: Vec::with_capacity(config.n),
        behaviors: Vec::with_capacity(config.n),
    };
    for (i, (mut r, b)) in rows.into_iter().enumerate() {
        r.respondent_id = format!("resp-{:0width$}", i + 1);
        out.responses.push(r);
        out.labels.push(Label::from_bool(b.is_some()));
        out.behaviors.push(b);
    }
    Ok(out)
}

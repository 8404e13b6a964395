//! Command-line front end for `integrity-core`.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data errors (missing or
//! malformed files, inconsistent inputs).

pub mod serve;

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use integrity_core::ingest::{parse_responses_csv, write_responses_csv, CsvOptions, ParsedCsv};
use integrity_core::model::{ModelKind, ModelSpec};
use integrity_core::pipeline::{
    filter_csvs, run_evaluation, run_filter, run_training, segment, ModelArtifact, PipelineConfig,
    ScatterInput, Validator,
};
use integrity_core::report::{emit_eval_json, jitter_rows, parse_eval_json, write_report_dir};
use integrity_core::rules::RuleSet;
use integrity_core::schema::SurveySchema;
use integrity_core::synth::{canonical_rules, example_schema, generate_dataset, SynthConfig};
use integrity_core::Error as CoreError;

/// Environment variable consulted when `--seed` is not given.
pub const SEED_ENV: &str = "INTEGRITY_KIT_SEED";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) => f.write_str(m),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn core_err(context: &Path) -> impl Fn(CoreError) -> CliError + '_ {
    move |e| match e {
        CoreError::InvalidArgument(m) => CliError::Usage(m),
        other => CliError::Data(format!("{}: {other}", context.display())),
    }
}

fn plain_err(e: CoreError) -> CliError {
    match e {
        CoreError::InvalidArgument(m) => CliError::Usage(m),
        other => CliError::Data(other.to_string()),
    }
}

#[derive(Debug, Parser)]
#[command(name = "integrity-kit", version, about = "Survey response integrity analytics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled synthetic response file.
    Synth(SynthArgs),
    /// Train a classifier on a labeled response file.
    Train(TrainArgs),
    /// Evaluate a trained model on a labeled response file.
    Eval(EvalArgs),
    /// Split a response file into retained and flagged responses.
    Filter(FilterArgs),
    /// Render charts and canonical JSON from an evaluation report.
    Report(ReportArgs),
    /// Serve the validation endpoint over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SeedArg {
    /// Random seed; falls back to $INTEGRITY_KIT_SEED.
    #[arg(long, env = SEED_ENV)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Survey schema JSON; the bundled example schema when omitted.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long, default_value_t = 99)]
    pub n: usize,
    #[arg(long = "fake-frac", default_value_t = 14.0 / 99.0)]
    pub fake_frac: f64,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the schema in use.
    #[arg(long)]
    pub emit_schema: Option<PathBuf>,
    /// Also write the bundled rule set.
    #[arg(long)]
    pub emit_rules: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Pipeline config JSON; explicit flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub rules: Option<PathBuf>,
    /// rf, logreg or gbt.
    #[arg(long)]
    pub model: Option<String>,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long = "test-frac")]
    pub test_frac: Option<f64>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Leave the logic and text scores out of the feature vector.
    #[arg(long)]
    pub no_scores: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Write per-response scatter inputs for the test partition.
    #[arg(long)]
    pub scatter_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub scatter_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub rules: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub retained: PathBuf,
    #[arg(long)]
    pub flagged: PathBuf,
    /// Flag logic-suspicious responses regardless of the model.
    #[arg(long)]
    pub drop_suspicious: bool,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Comma-separated question ids to count retained answers by.
    #[arg(long, value_delimiter = ',')]
    pub segment_by: Vec<String>,
    /// Where to write the segment counts (stdout when omitted).
    #[arg(long)]
    pub segments: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub eval: PathBuf,
    /// Scatter inputs written by `train --scatter-out` or `eval --scatter-out`.
    #[arg(long)]
    pub scatter: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub top_k: usize,
    #[command(flatten)]
    pub seed: SeedArg,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    #[arg(long)]
    pub rules: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long)]
    pub drop_suspicious: bool,
    #[arg(long, default_value_t = 4)]
    pub workers: usize,
}

pub fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))
}

pub fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    std::fs::write(path, bytes)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

pub fn load_schema(path: &Path) -> CliResult<SurveySchema> {
    SurveySchema::from_json_validated(&read_text(path)?).map_err(core_err(path))
}

pub fn load_rules(path: &Path, schema: &SurveySchema) -> CliResult<RuleSet> {
    let rules = RuleSet::from_json(&read_text(path)?).map_err(core_err(path))?;
    rules.validate(schema).map_err(core_err(path))?;
    Ok(rules)
}

pub fn load_model(path: &Path) -> CliResult<ModelArtifact> {
    ModelArtifact::from_json(&read_text(path)?).map_err(core_err(path))
}

fn load_config(path: Option<&PathBuf>) -> CliResult<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::from_json(&read_text(p)?).map_err(core_err(p)),
        None => Ok(PipelineConfig::default()),
    }
}

fn load_csv(path: &Path, schema: &SurveySchema) -> CliResult<ParsedCsv> {
    let parsed = parse_responses_csv(&read_bytes(path)?, schema, &CsvOptions::default())
        .map_err(core_err(path))?;
    for w in &parsed.warnings {
        eprintln!("warning: {}: {w}", path.display());
    }
    Ok(parsed)
}

fn require_path(flag: Option<PathBuf>, from_config: &Option<String>, name: &str) -> CliResult<PathBuf> {
    flag.or_else(|| from_config.as_ref().map(PathBuf::from))
        .ok_or_else(|| CliError::Usage(format!("--{name} is required (or set {name}_path in --config)")))
}

fn to_json_pretty<T: serde::Serialize>(value: &T) -> CliResult<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

fn cmd_synth(a: SynthArgs) -> CliResult<()> {
    let schema = match &a.schema {
        Some(p) => load_schema(p)?,
        None => example_schema(),
    };
    let config = SynthConfig {
        n: a.n,
        fake_fraction: a.fake_frac,
        seed: a.seed.seed.unwrap_or(0),
        ..Default::default()
    };
    let data = generate_dataset(&schema, &config).map_err(plain_err)?;
    let bytes = write_responses_csv(&schema, &data.responses, Some(&data.labels), &CsvOptions::default())
        .map_err(plain_err)?;
    write_file(&a.out, &bytes)?;
    if let Some(p) = &a.emit_schema {
        write_file(p, &to_json_pretty(&schema)?)?;
    }
    if let Some(p) = &a.emit_rules {
        write_file(p, &to_json_pretty(&canonical_rules())?)?;
    }
    let fakes = data.labels.iter().filter(|l| l.is_fake()).count();
    eprintln!("wrote {} responses ({fakes} fake) to {}", data.responses.len(), a.out.display());
    Ok(())
}

fn cmd_train(a: TrainArgs) -> CliResult<()> {
    let mut config = load_config(a.config.as_ref())?;
    let schema_path = require_path(a.schema, &config.schema_path, "schema")?;
    let rules_path = require_path(a.rules, &config.rules_path, "rules")?;
    if let Some(seed) = a.seed.seed {
        config.seed = seed;
    }
    if let Some(m) = &a.model {
        let kind: ModelKind = m.parse().map_err(plain_err)?;
        if kind != config.model.kind() {
            config.model = ModelSpec::default_for(kind, config.seed);
        }
    }
    if let ModelSpec::Forest(f) = &mut config.model {
        f.seed = config.seed;
    }
    if let Some(f) = a.test_frac {
        config.test_fraction = f;
    }
    if let Some(t) = a.threshold {
        config.decision_threshold = t;
    }
    if a.no_scores {
        config.include_scores = false;
    }
    let schema = load_schema(&schema_path)?;
    config.validate(&schema).map_err(plain_err)?;
    let rules = load_rules(&rules_path, &schema)?;
    let parsed = load_csv(&a.data, &schema)?;
    let labels = parsed
        .labels
        .as_ref()
        .ok_or_else(|| CliError::Data(format!("{}: no Is_Fake column", a.data.display())))?;
    let out = run_training(&schema, &parsed.responses, labels, &rules, &config).map_err(core_err(&a.data))?;
    for w in &out.report.warnings {
        eprintln!("warning: {w}");
    }
    write_file(&a.out, &out.artifact.to_json().map_err(plain_err)?)?;
    if let Some(p) = &a.report {
        write_file(p, &emit_eval_json(&out.report).map_err(plain_err)?)?;
    }
    if let Some(p) = &a.scatter_out {
        write_file(p, &to_json_pretty(&out.scatter)?)?;
    }
    let m = out.report.metrics();
    eprintln!(
        "{}: accuracy {:.2}, fake precision {:.2}, recall {:.2}, f1 {:.2} on {} test responses",
        out.report.model.as_str(),
        m.accuracy,
        m.fake.precision,
        m.fake.recall,
        m.fake.f1,
        out.report.n_test
    );
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> CliResult<()> {
    let artifact = load_model(&a.model)?;
    let schema = load_schema(&a.schema)?;
    let parsed = load_csv(&a.data, &schema)?;
    let labels = parsed
        .labels
        .as_ref()
        .ok_or_else(|| CliError::Data(format!("{}: no Is_Fake column", a.data.display())))?;
    let (report, scatter) =
        run_evaluation(&schema, &parsed.responses, labels, &artifact).map_err(core_err(&a.data))?;
    write_file(&a.report, &emit_eval_json(&report).map_err(plain_err)?)?;
    if let Some(p) = &a.scatter_out {
        write_file(p, &to_json_pretty(&scatter)?)?;
    }
    eprintln!(
        "accuracy {:.2}, fake recall {:.2} on {} responses",
        report.accuracy, report.per_class.fake.recall, report.n_test
    );
    Ok(())
}

/// Loads the shared validator used by `filter` and `serve`.
pub fn load_validator(
    model: &Path,
    schema: &Path,
    rules: &Path,
    drop_suspicious: bool,
    threshold: Option<f64>,
) -> CliResult<Validator> {
    let artifact = load_model(model)?;
    let schema = load_schema(schema)?;
    let ruleset = load_rules(rules, &schema)?;
    let mut v = Validator::new(schema, artifact, ruleset, drop_suspicious).map_err(core_err(model))?;
    if let Some(t) = threshold {
        if !(0.0..=1.0).contains(&t) {
            return Err(CliError::Usage(format!("--threshold must lie in [0, 1], got {t}")));
        }
        v.decision_threshold = t;
    }
    Ok(v)
}

fn cmd_filter(a: FilterArgs) -> CliResult<()> {
    let config = load_config(a.config.as_ref())?;
    let schema_path = require_path(a.schema, &config.schema_path, "schema")?;
    let rules_path = require_path(a.rules, &config.rules_path, "rules")?;
    let drop = a.drop_suspicious || config.drop_suspicious_pre_model;
    let threshold = a.threshold.or(a.config.as_ref().map(|_| config.decision_threshold));
    let validator = load_validator(&a.model, &schema_path, &rules_path, drop, threshold)?;
    let segment_by = if a.segment_by.is_empty() {
        config.segment_by.clone()
    } else {
        a.segment_by.clone()
    };
    let parsed = load_csv(&a.data, &validator.schema)?;
    let outcome = run_filter(&validator, &parsed.responses).map_err(core_err(&a.data))?;
    let (retained, flagged) = filter_csvs(&parsed, &outcome).map_err(plain_err)?;
    write_file(&a.retained, &retained)?;
    write_file(&a.flagged, &flagged)?;
    eprintln!(
        "retained {}, flagged {} of {} responses",
        outcome.retained.len(),
        outcome.flagged.len(),
        parsed.responses.len()
    );
    if !segment_by.is_empty() {
        let seg = segment(&validator.schema, &outcome.retained_clean, &segment_by).map_err(plain_err)?;
        let bytes = to_json_pretty(&seg)?;
        match &a.segments {
            Some(p) => write_file(p, &bytes)?,
            None => print!("{}", String::from_utf8_lossy(&bytes)),
        }
    }
    Ok(())
}

fn cmd_report(a: ReportArgs) -> CliResult<()> {
    let report = parse_eval_json(&read_text(&a.eval)?).map_err(core_err(&a.eval))?;
    let inputs: Vec<ScatterInput> = match &a.scatter {
        Some(p) => serde_json::from_str(&read_text(p)?)
            .map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?,
        None => Vec::new(),
    };
    if a.top_k == 0 {
        return Err(CliError::Usage("--top-k must be at least 1".into()));
    }
    let rows = jitter_rows(&inputs, a.seed.seed.unwrap_or(0));
    let written = write_report_dir(&a.out_dir, &report, &rows, a.top_k).map_err(core_err(&a.out_dir))?;
    for p in written {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn cmd_serve(a: ServeArgs) -> CliResult<()> {
    let validator = load_validator(&a.model, &a.schema, &a.rules, a.drop_suspicious, None)?;
    let addr = format!("{}:{}", a.host, a.port);
    serve::run_server(serve::Service::new(validator), &addr, a.workers.max(1))
}

pub fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Filter(a) => cmd_filter(a),
        Command::Report(a) => cmd_report(a),
        Command::Serve(a) => cmd_serve(a),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

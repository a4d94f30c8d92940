//! Command-line surface: binds configuration, backends, and the pipeline
//! stages into reproducible runs with a stable exit-code contract.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::backend::http::HttpConfig;
use crate::backend::toy::toy_examples;
use crate::backend::{
    BackendError, Generator, HttpBackend, RequestBudget, ResponseCache, ScriptedBackend,
    TextBackend, ToyBackend,
};
use crate::collab::{
    collab_infer, extract_final_answer, strong_only, CollabError, RunLogger, SamplerSettings,
    TemplateSet,
};
use crate::config::{BackendConfig, BackendKind, ConfigError, RunConfig, RunPaths};
use crate::dataset::{load_dataset, DataError, Dataset, Example};
use crate::metrics::{score_run, MetricError, MetricReport};
use crate::prefdata::{build_preferences, export_dpo, PrefJob, PreferenceTriplet};
use crate::records::{read_records, write_records, RecordError};
use crate::rng::SplitMix64;
use crate::toyalign::{
    dpo_grad, dpo_loss, export_policy, fd_check, load_policy, sft_grad, sft_loss, train_dpo,
    train_sft, verify_corollary, DpoTriplet, ToyError, ToyPolicy, ToyUniverse,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;
pub const EXIT_DIVERGENCE: i32 = 4;

/// Gate for the pre-training gradient self-check.
const FD_GATE: f64 = 1e-5;
const FD_STEP: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("invalid invocation: {detail}")]
    Validation { detail: String },
    #[error("missing or empty report file: {path}")]
    MissingFile { path: PathBuf },
    #[error("request budget exhausted: {detail}")]
    Budget { detail: String },
    #[error("training diverged at step {step}: {detail}")]
    Divergence { step: u32, detail: String },
    #[error("{detail}")]
    Other { detail: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Validation { .. } | Self::MissingFile { .. } => EXIT_CONFIG,
            Self::Budget { .. } => EXIT_BUDGET,
            Self::Divergence { .. } => EXIT_DIVERGENCE,
            Self::Other { .. } => EXIT_OTHER,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        Self::Other { detail: err.to_string() }
    }
}

impl From<RecordError> for CliError {
    fn from(err: RecordError) -> Self {
        Self::Other { detail: err.to_string() }
    }
}

impl From<DataError> for CliError {
    fn from(err: DataError) -> Self {
        Self::Validation { detail: err.to_string() }
    }
}

impl From<MetricError> for CliError {
    fn from(err: MetricError) -> Self {
        Self::Validation { detail: err.to_string() }
    }
}

impl From<BackendError> for CliError {
    fn from(err: BackendError) -> Self {
        match err {
            BackendError::BudgetExceeded => Self::Budget { detail: err.to_string() },
            BackendError::InvalidRequest { .. } => Self::Validation { detail: err.to_string() },
            other => Self::Other { detail: other.to_string() },
        }
    }
}

impl From<CollabError> for CliError {
    fn from(err: CollabError) -> Self {
        match err {
            CollabError::Backend(inner) => inner.into(),
            other => Self::Validation { detail: other.to_string() },
        }
    }
}

impl From<ToyError> for CliError {
    fn from(err: ToyError) -> Self {
        match err {
            ToyError::DivergenceDetected { step, window } => Self::Divergence {
                step,
                detail: format!("loss rose across a {window}-step window"),
            },
            ToyError::InvalidUniverse { .. } => Self::Validation { detail: err.to_string() },
            ToyError::Record(inner) => inner.into(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "cowest", version, about = "Weak-strong model collaboration toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run collaborative inference over a dataset and score the outputs.
    Infer(InferArgs),
    /// Build a preference dataset from drafts, refinements, and judge scores.
    BuildPrefs(BuildPrefsArgs),
    /// Run the toy alignment lab end to end and check negative-support collapse.
    TrainToy(TrainToyArgs),
    /// Render metric reports from one or more runs as an aligned table.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Run configuration file (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config's request budget.
    #[arg(long)]
    pub max_requests: Option<u64>,
    /// Overrides the config's response cache directory.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Dataset to run on; defaults to the config's dataset.
    pub dataset: Option<PathBuf>,
    /// Skip the weak model and run the strong baseline alone.
    #[arg(long)]
    pub strong_only: bool,
}

#[derive(Debug, Args)]
pub struct BuildPrefsArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct TrainToyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Metric report files (reports/metrics.jsonl), one table column each.
    pub paths: Vec<PathBuf>,
    /// Adds a column of reference values from the shipped fixture.
    #[arg(long)]
    pub paper: bool,
    /// Reference fixture to use with --paper.
    #[arg(long)]
    pub paper_fixture: Option<PathBuf>,
}

/// Dispatches a parsed invocation and returns the process exit code. Errors
/// are printed to stderr as a single JSON line.
pub fn run(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Infer(args) => cmd_infer(&args).map(|_| ()),
        Command::BuildPrefs(args) => cmd_build_prefs(&args).map(|_| ()),
        Command::TrainToy(args) => cmd_train_toy(&args).map(|_| ()),
        Command::Report(args) => cmd_report(&args).map(|table| print!("{table}")),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(err) => {
            let code = err.exit_code();
            eprintln!("{}", serde_json::json!({ "code": code, "error": err.to_string() }));
            code
        }
    }
}

fn load_config(common: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut config = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(limit) = common.max_requests {
        config.limits.max_requests = Some(limit);
    }
    if let Some(dir) = &common.cache_dir {
        config.cache_dir = Some(dir.clone());
    }
    Ok(config)
}

fn require<'a, T>(value: &'a Option<T>, field: &str) -> Result<&'a T, CliError> {
    value.as_ref().ok_or_else(|| CliError::Validation {
        detail: format!("{field}: required but not set"),
    })
}

fn build_backend(slot: &BackendConfig, retries: u32) -> Result<Arc<dyn TextBackend>, CliError> {
    match slot.kind {
        BackendKind::Scripted => {
            let path = require(&slot.fixture, "fixture")?;
            Ok(Arc::new(ScriptedBackend::load(path)?))
        }
        BackendKind::Http => {
            let base_url = require(&slot.base_url, "base_url")?;
            let model = require(&slot.model, "model")?;
            let mut http = HttpConfig::new(base_url.clone(), model.clone());
            http.retries = retries;
            Ok(Arc::new(HttpBackend::new(http)))
        }
        BackendKind::Toy => {
            let universe = ToyUniverse::load(require(&slot.universe, "universe")?)?;
            let policy = match &slot.policy {
                Some(path) => load_policy(path, &universe)?,
                None => ToyPolicy::uniform(&universe),
            };
            Ok(Arc::new(ToyBackend::new(universe, policy)?))
        }
    }
}

/// The three generator slots of a run, sharing one cache and one budget.
struct Rig {
    judge: Generator,
    strong: Generator,
    weak: Generator,
}

fn build_rig(config: &RunConfig) -> Result<Rig, CliError> {
    let cache = config.cache_dir.as_ref().map(|dir| Arc::new(ResponseCache::new(dir)));
    let budget = config.limits.max_requests.map(|n| Arc::new(RequestBudget::new(n)));
    let make = |slot: &BackendConfig| -> Result<Generator, CliError> {
        let mut generator = Generator::new(build_backend(slot, config.limits.retries)?);
        if let Some(cache) = &cache {
            generator = generator.with_cache(Arc::clone(cache));
        }
        if let Some(budget) = &budget {
            generator = generator.with_budget(Arc::clone(budget));
        }
        Ok(generator)
    };
    Ok(Rig {
        judge: make(&config.backends.judge)?,
        strong: make(&config.backends.strong)?,
        weak: make(&config.backends.weak)?,
    })
}

fn load_templates(config: &RunConfig) -> Result<TemplateSet, CliError> {
    match &config.templates_dir {
        Some(dir) => Ok(TemplateSet::load_dir(dir)?),
        None => Ok(TemplateSet::default()),
    }
}

fn sampler_from(config: &RunConfig) -> SamplerSettings {
    SamplerSettings {
        max_new_tokens: config.sampling.max_new_tokens,
        temperature: config.sampling.temperature,
        top_p: config.sampling.top_p,
    }
}

fn prepare_paths(config: &RunConfig) -> Result<RunPaths, CliError> {
    let paths = RunPaths::new(&config.output_dir, &config.run_id());
    paths.create()?;
    paths.write_effective_config(config)?;
    Ok(paths)
}

/// Backend call counts by role, written to logs/calls.json.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallReport {
    pub judge: u64,
    pub strong: u64,
    pub weak: u64,
}

fn write_calls(path: &Path, rig: &Rig) -> Result<(), CliError> {
    let report = CallReport {
        judge: rig.judge.backend_calls(),
        strong: rig.strong.backend_calls(),
        weak: rig.weak.backend_calls(),
    };
    std::fs::write(path, to_pretty_json(&report)?)?;
    Ok(())
}

fn to_pretty_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|err| CliError::Other { detail: err.to_string() })?;
    text.push('\n');
    Ok(text)
}

/// One served answer, as written to outputs/predictions.jsonl.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub answer: String,
    pub example_id: String,
    pub text: String,
}

/// Serves every example in the dataset (collaboratively, or strong-only on
/// request), writes predictions and stage logs, then scores the run.
pub fn cmd_infer(args: &InferArgs) -> Result<RunPaths, CliError> {
    let config = load_config(&args.common)?;
    let dataset_path = args.dataset.clone().or_else(|| config.dataset.clone()).ok_or_else(|| {
        CliError::Validation {
            detail: "dataset: set it in the config or pass it as an argument".into(),
        }
    })?;
    let dataset = load_dataset(&dataset_path)?;
    let Some(task_kind) = dataset.examples.first().map(|e| e.task_kind) else {
        return Err(CliError::Validation { detail: "dataset: contains no examples".into() });
    };
    let templates = load_templates(&config)?;
    let rig = build_rig(&config)?;
    let paths = prepare_paths(&config)?;

    let log = RunLogger::new();
    let mut outputs: Vec<(Example, String)> = Vec::with_capacity(dataset.examples.len());
    let mut budget_hit = None;
    for example in &dataset.examples {
        let result = if args.strong_only {
            strong_only(&rig.strong, &templates, example, config.seed, &log)
        } else {
            collab_infer(&rig.weak, &rig.strong, &templates, example, config.seed, &log)
        };
        match result {
            Ok(stage) => outputs.push((example.clone(), stage.text)),
            Err(CollabError::Backend(BackendError::BudgetExceeded)) => {
                budget_hit = Some(example.id.clone());
                break;
            }
            Err(other) => return Err(other.into()),
        }
    }

    let predictions: Vec<PredictionRecord> = outputs
        .iter()
        .map(|(example, text)| PredictionRecord {
            answer: extract_final_answer(text),
            example_id: example.id.clone(),
            text: text.clone(),
        })
        .collect();
    write_records(&paths.outputs.join("predictions.jsonl"), &predictions)?;
    log.write(&paths.logs.join("stages.jsonl"))?;
    write_calls(&paths.logs.join("calls.json"), &rig)?;

    if let Some(example_id) = budget_hit {
        return Err(CliError::Budget {
            detail: format!("stopped before example {example_id}; partial predictions were written"),
        });
    }

    let reports = score_run(&outputs, task_kind)?;
    write_records(&paths.reports.join("metrics.jsonl"), &reports)?;
    for report in &reports {
        println!("{} {:.4} (n={})", report.metric, report.value, report.n);
    }
    println!("wrote {} predictions under {}", predictions.len(), paths.root.display());
    Ok(paths)
}

/// Runs preference construction over the config's dataset and exports the
/// triplets, stats, judge audit, and logs. A budget interruption still
/// flushes everything gathered so far, then exits with the budget code.
pub fn cmd_build_prefs(args: &BuildPrefsArgs) -> Result<RunPaths, CliError> {
    let config = load_config(&args.common)?;
    let dataset_path = config.dataset.clone().ok_or_else(|| CliError::Validation {
        detail: "dataset: required for preference construction".into(),
    })?;
    let dataset = load_dataset(&dataset_path)?;
    let templates = load_templates(&config)?;
    let rig = build_rig(&config)?;
    let paths = prepare_paths(&config)?;

    let log = RunLogger::new();
    let job = PrefJob {
        dataset: &dataset,
        judge: &rig.judge,
        k: config.sampling.k,
        log: &log,
        max_in_flight: config.limits.max_in_flight,
        sampler: sampler_from(&config),
        seed: config.seed,
        strong: &rig.strong,
        templates: &templates,
        weak: &rig.weak,
    };
    let outcome = build_preferences(&job);

    export_dpo(&outcome.triplets, &paths.prefs.join("dpo.jsonl"))?;
    std::fs::write(paths.prefs.join("stats.json"), to_pretty_json(&outcome.stats)?)?;
    write_records(&paths.prefs.join("judge_audit.jsonl"), &outcome.audit)?;
    log.write(&paths.logs.join("stages.jsonl"))?;
    write_calls(&paths.logs.join("calls.json"), &rig)?;

    println!(
        "{} triplets from {} examples (positive rate {:.3}) under {}",
        outcome.stats.triplet_count,
        outcome.stats.examples_processed,
        outcome.stats.positive_rate,
        paths.root.display()
    );
    if outcome.stats.partial {
        return Err(CliError::Budget {
            detail: "request budget ran out; partial outputs were flushed and stats are marked partial"
                .into(),
        });
    }
    Ok(paths)
}

fn random_policy(universe: &ToyUniverse, rng: &mut SplitMix64) -> ToyPolicy {
    ToyPolicy {
        logits: universe
            .contexts
            .iter()
            .map(|ctx| (0..ctx.vocab.len()).map(|_| 3.0 * rng.next_f64() - 1.5).collect())
            .collect(),
    }
}

/// Max relative error of the analytic gradients against central finite
/// differences, on a seeded random instance over this universe.
///
/// The check triplets form a star per context (one hub preferred over every
/// other entry) so every coordinate carries a nonzero derivative. Finite
/// differences are only an oracle where there is a slope to measure: at a
/// coordinate outside every pair the true derivative is exactly zero and
/// the central difference returns pure rounding noise, which the relative
/// error then compares against itself.
fn gradient_self_check(universe: &ToyUniverse, alpha: f64, seed: u64) -> (f64, f64) {
    let mut rng = SplitMix64::new(seed);
    let policy = random_policy(universe, &mut rng);
    let reference = random_policy(universe, &mut rng);
    let sft = fd_check(
        |p| sft_loss(p, universe),
        |p| sft_grad(p, universe),
        &policy,
        FD_STEP,
    );
    let triplets: Vec<DpoTriplet> = universe
        .contexts
        .iter()
        .enumerate()
        .flat_map(|(context, ctx)| {
            let hub = ctx.positive_support()[0];
            (0..ctx.vocab_size())
                .filter(move |&j| j != hub)
                .map(move |j| DpoTriplet { chosen: hub, context, rejected: j })
        })
        .collect();
    let dpo = fd_check(
        |p| dpo_loss(p, &reference, &triplets, alpha),
        |p| dpo_grad(p, &reference, &triplets, alpha),
        &policy,
        FD_STEP,
    );
    (sft, dpo)
}

/// Maps exported preference triplets back onto toy vocabulary indices so
/// the toy trainer can consume drafts produced by the toy backend.
fn map_toy_triplets(
    universe: &ToyUniverse,
    triplets: &[PreferenceTriplet],
) -> Result<Vec<DpoTriplet>, CliError> {
    triplets
        .iter()
        .map(|triplet| {
            let context =
                universe.context_index(&triplet.meta.example_id).ok_or_else(|| CliError::Other {
                    detail: format!("triplet references unknown context {}", triplet.meta.example_id),
                })?;
            let vocab = &universe.contexts[context].vocab;
            let locate = |text: &str| -> Result<usize, CliError> {
                let answer = extract_final_answer(text);
                vocab.iter().position(|entry| *entry == answer).ok_or_else(|| CliError::Other {
                    detail: format!(
                        "draft answer {answer:?} is outside context {}'s vocabulary",
                        triplet.meta.example_id
                    ),
                })
            };
            Ok(DpoTriplet {
                chosen: locate(&triplet.chosen)?,
                context,
                rejected: locate(&triplet.rejected)?,
            })
        })
        .collect()
}

/// The full desk-scale loop: gradient self-check, supervised warm-up,
/// preference construction against the warmed-up drafting policy, preference
/// training, and the negative-support mass check.
pub fn cmd_train_toy(args: &TrainToyArgs) -> Result<RunPaths, CliError> {
    let config = load_config(&args.common)?;
    if config.backends.weak.kind != BackendKind::Toy {
        return Err(CliError::Validation {
            detail: "backends.weak.kind: train-toy needs a toy backend".into(),
        });
    }
    let universe_path = config.backends.weak.universe.as_ref().ok_or_else(|| {
        CliError::Validation { detail: "backends.weak.universe: required for train-toy".into() }
    })?;
    let universe = ToyUniverse::load(universe_path)?;
    let paths = prepare_paths(&config)?;
    let alignment = config.alignment;

    let (sft_err, dpo_err) = gradient_self_check(&universe, alignment.alpha, config.seed);
    println!("gradient self-check: sft {sft_err:.3e}, dpo {dpo_err:.3e}");
    let worst = sft_err.max(dpo_err);
    if !(worst < FD_GATE) {
        return Err(CliError::Other {
            detail: format!(
                "gradient self-check failed: max relative error {worst:.3e} is not below {FD_GATE:.0e}"
            ),
        });
    }

    let init = ToyPolicy::uniform(&universe);
    let (sft_policy, sft_log) = train_sft(&universe, &init, alignment.sft_lr, alignment.sft_steps)?;
    write_records(&paths.logs.join("sft_loss.jsonl"), &sft_log)?;
    export_policy(&paths.outputs.join("sft_policy.jsonl"), &universe, &sft_policy)?;

    // All three roles are served by one backend over the warmed-up policy;
    // role dispatch inside it keeps drafting, refining, and judging apart.
    let backend: Arc<dyn TextBackend> = Arc::new(ToyBackend::new(universe.clone(), sft_policy.clone())?);
    let budget = config.limits.max_requests.map(|n| Arc::new(RequestBudget::new(n)));
    let make = || {
        let mut generator = Generator::new(Arc::clone(&backend));
        if let Some(budget) = &budget {
            generator = generator.with_budget(Arc::clone(budget));
        }
        generator
    };
    let (weak, strong, judge) = (make(), make(), make());

    let dataset = Dataset { name: "toy-universe".into(), examples: toy_examples(&universe) };
    let templates = TemplateSet::default();
    let log = RunLogger::new();
    let job = PrefJob {
        dataset: &dataset,
        judge: &judge,
        k: config.sampling.k,
        log: &log,
        max_in_flight: config.limits.max_in_flight,
        sampler: sampler_from(&config),
        seed: config.seed,
        strong: &strong,
        templates: &templates,
        weak: &weak,
    };
    let outcome = build_preferences(&job);
    export_dpo(&outcome.triplets, &paths.prefs.join("dpo.jsonl"))?;
    std::fs::write(paths.prefs.join("stats.json"), to_pretty_json(&outcome.stats)?)?;
    log.write(&paths.logs.join("stages.jsonl"))?;
    if outcome.stats.partial {
        return Err(CliError::Budget {
            detail: "request budget ran out during preference construction".into(),
        });
    }

    let triplets = map_toy_triplets(&universe, &outcome.triplets)?;
    println!("{} preference triplets drawn from the drafting policy", triplets.len());

    let (trained, dpo_log) = if triplets.is_empty() {
        // Nothing to train on; the report below will show the mass unchanged.
        (sft_policy.clone(), Vec::new())
    } else {
        train_dpo(&universe, &sft_policy, &triplets, alignment.alpha, alignment.lr, alignment.steps)?
    };
    write_records(&paths.logs.join("dpo_loss.jsonl"), &dpo_log)?;
    export_policy(&paths.outputs.join("dpo_policy.jsonl"), &universe, &trained)?;

    let report = verify_corollary(&trained, &universe, alignment.epsilon);
    std::fs::write(paths.reports.join("corollary.json"), to_pretty_json(&report)?)?;
    for ctx in &report.contexts {
        println!(
            "context {}: negative-support mass {:.3e} (uniform policy: {:.2})",
            ctx.context, ctx.negative_mass, ctx.initial_mass
        );
    }
    println!(
        "corollary check: {} (epsilon {:.0e}) under {}",
        if report.pass { "PASS" } else { "FAIL" },
        report.epsilon,
        paths.root.display()
    );
    Ok(paths)
}

/// One line of the reference-values fixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperEntry {
    pub dataset: String,
    pub metric: String,
    pub value: f64,
}

fn column_label(path: &Path) -> String {
    let parent_is_reports =
        path.parent().and_then(Path::file_name).is_some_and(|name| name == "reports");
    if parent_is_reports {
        if let Some(run) = path.parent().and_then(Path::parent).and_then(Path::file_name) {
            return run.to_string_lossy().into_owned();
        }
    }
    path.file_stem()
        .map(|stem| stem.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn resolve_paper_fixture(explicit: Option<&Path>) -> Result<PathBuf, CliError> {
    if let Some(path) = explicit {
        if path.exists() {
            return Ok(path.to_path_buf());
        }
        return Err(CliError::MissingFile { path: path.to_path_buf() });
    }
    let cwd_default = PathBuf::from("fixtures/paper_reference.jsonl");
    if cwd_default.exists() {
        return Ok(cwd_default);
    }
    let built_in = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/paper_reference.jsonl");
    if built_in.exists() {
        return Ok(built_in);
    }
    Err(CliError::MissingFile { path: cwd_default })
}

/// Renders a side-by-side table of metric values, one column per run plus an
/// optional column of reference values. Values are percentages with two
/// decimals. Returns the table; `run` prints it.
pub fn cmd_report(args: &ReportArgs) -> Result<String, CliError> {
    if args.paths.is_empty() && !args.paper {
        return Err(CliError::Validation {
            detail: "report: pass at least one metrics file or --paper".into(),
        });
    }
    let mut columns: Vec<(String, Vec<(String, f64)>)> = Vec::new();
    for path in &args.paths {
        if !path.exists() {
            return Err(CliError::MissingFile { path: path.clone() });
        }
        let reports: Vec<MetricReport> = read_records(path)?;
        if reports.is_empty() {
            return Err(CliError::MissingFile { path: path.clone() });
        }
        let rows = reports.iter().map(|r| (r.metric.clone(), r.value)).collect();
        columns.push((column_label(path), rows));
    }
    if args.paper {
        let fixture = resolve_paper_fixture(args.paper_fixture.as_deref())?;
        let entries: Vec<PaperEntry> = read_records(&fixture)?;
        if entries.is_empty() {
            return Err(CliError::MissingFile { path: fixture });
        }
        let rows = entries
            .into_iter()
            .map(|entry| (format!("{} {}", entry.dataset, entry.metric), entry.value))
            .collect();
        columns.push(("paper".into(), rows));
    }
    Ok(render_table(&columns))
}

/// Plain-text table: row labels in first-appearance order, right-aligned
/// value cells, "-" where a column has no value for a row.
pub fn render_table(columns: &[(String, Vec<(String, f64)>)]) -> String {
    let mut labels: Vec<String> = Vec::new();
    for (_, rows) in columns {
        for (label, _) in rows {
            if !labels.iter().any(|known| known == label) {
                labels.push(label.clone());
            }
        }
    }
    let cell = |rows: &[(String, f64)], label: &str| -> String {
        rows.iter()
            .find(|(known, _)| known == label)
            .map(|(_, value)| format!("{:.2}", value * 100.0))
            .unwrap_or_else(|| "-".into())
    };
    let label_width =
        labels.iter().map(|l| l.chars().count()).chain(["metric".len()]).max().unwrap_or(6);
    let widths: Vec<usize> = columns
        .iter()
        .map(|(header, rows)| {
            labels
                .iter()
                .map(|label| cell(rows, label).chars().count())
                .chain([header.chars().count()])
                .max()
                .unwrap_or(6)
        })
        .collect();

    let mut out = String::new();
    out.push_str(&format!("{:<label_width$}", "metric"));
    for ((header, _), width) in columns.iter().zip(&widths) {
        out.push_str(&format!("  {header:>width$}"));
    }
    out.push('\n');
    for label in &labels {
        out.push_str(&format!("{label:<label_width$}"));
        for ((_, rows), width) in columns.iter().zip(&widths) {
            let value = cell(rows, label);
            out.push_str(&format!("  {value:>width$}"));
        }
        out.push('\n');
    }
    out
}

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use debias_core::bench::dataset::{fixture_text, Dataset};
use debias_core::bench::{
    aggregate, emit_report, load_dataset, run_matrix, AggregateReport, ItemRun, MatrixOptions, NamedBackend,
    ReportFormat, ResultStore, RunMatrix, RunResult,
};
use debias_core::model::http::{BackendConfig, HttpBackend};
use debias_core::model::mock::{MockBackend, MockScript};
use debias_core::model::{Backend, Constitution, RoleTemperatures};
use debias_core::{
    AccountingMode, Category, CompositeWeights, ConfigOverrides, Language, PromptRecord, SchemeId, TaskKind,
};

const AGGREGATE_FILE: &str = "aggregate.json";

#[derive(Parser)]
#[command(name = "debias", version, about = "Decoding-time debiasing with a bias/utility judge")]
struct Cli {
    /// Log progress to stderr.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a dataset file and print its per-category balance.
    Validate {
        /// JSONL file, or `builtin:fill_in_sample` / `builtin:open_gen_prompts`.
        dataset: String,
    },
    /// Fill one blank with a single scheme and print the result as JSON.
    Debias {
        /// Template containing the `___` blank.
        #[arg(long)]
        text: String,
        #[arg(long, default_value = "baseline")]
        scheme: SchemeId,
        #[command(flatten)]
        item: ItemArgs,
        #[command(flatten)]
        backends: BackendArgs,
        #[command(flatten)]
        knobs: Knobs,
    },
    /// Continue a prompt word by word and print the run as JSON.
    Opengen {
        #[arg(long)]
        prompt: String,
        #[arg(long, default_value = "baseline")]
        scheme: SchemeId,
        #[command(flatten)]
        item: ItemArgs,
        #[command(flatten)]
        backends: BackendArgs,
        #[command(flatten)]
        knobs: Knobs,
    },
    /// Run every (model, scheme, prompt) cell not yet in the results store.
    Bench {
        /// JSONL file, or `builtin:fill_in_sample` / `builtin:open_gen_prompts`.
        dataset: String,
        /// Results store directory.
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated scheme names.
        #[arg(long, value_delimiter = ',', default_values_t = SchemeId::ALL.to_vec())]
        schemes: Vec<SchemeId>,
        /// Worker threads; results are identical for any value.
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
        /// Shuffles the work order.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Stop after this many new cells.
        #[arg(long)]
        limit: Option<usize>,
        #[command(flatten)]
        backends: BackendArgs,
        #[command(flatten)]
        knobs: Knobs,
    },
    /// Aggregate a results store into `aggregate.json` and print the table.
    Aggregate {
        /// Results store directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        alpha_report: Option<f64>,
    },
    /// Render a results store as a text table, CSV or plot data.
    Report {
        /// Results store directory.
        #[arg(long)]
        out: PathBuf,
        /// table-text, csv or plot-data-json.
        #[arg(long, default_value = "table-text")]
        format: ReportFormat,
        /// Where to write the report; defaults to the store directory.
        #[arg(long)]
        report_dir: Option<PathBuf>,
        #[arg(long)]
        alpha_report: Option<f64>,
    },
}

#[derive(Args)]
struct ItemArgs {
    #[arg(long, default_value = "gender")]
    category: Category,
    #[arg(long, default_value = "english")]
    language: Language,
}

#[derive(Args)]
struct BackendArgs {
    /// Mock script file; one generator per file (repeatable).
    #[arg(long = "mock", conflicts_with = "http")]
    mocks: Vec<PathBuf>,
    /// Mock script for the judge; defaults to the first generator script.
    #[arg(long, requires = "mocks")]
    judge_mock: Option<PathBuf>,
    /// Use an OpenAI-compatible chat-completions endpoint.
    #[arg(long)]
    http: bool,
    #[arg(long, env = "DEBIAS_API_BASE")]
    api_base: Option<String>,
    #[arg(long, env = "DEBIAS_API_KEY", hide_env_values = true)]
    api_key: Option<String>,
    /// Generator model name (repeatable).
    #[arg(long = "model", env = "DEBIAS_MODEL", value_delimiter = ',')]
    models: Vec<String>,
    /// Judge model name; defaults to the first generator model.
    #[arg(long)]
    judge_model: Option<String>,
    /// Sampling temperature for Best-of-N candidates.
    #[arg(long)]
    temperature: Option<f64>,
}

#[derive(Args)]
struct Knobs {
    /// Candidate cost model: api (one pass per candidate) or native (one pass per batch).
    #[arg(long, default_value = "api")]
    accounting: AccountingMode,
    /// Best-of-N candidate count.
    #[arg(long)]
    n: Option<u32>,
    /// Maximum revision rounds.
    #[arg(long)]
    k_max: Option<u32>,
    /// Bias threshold that stops critique-and-revise.
    #[arg(long)]
    tau: Option<f64>,
    /// Bias weight of the in-loop composite.
    #[arg(long)]
    alpha_select: Option<f64>,
    /// Bias weight of the reported composite.
    #[arg(long)]
    alpha_report: Option<f64>,
    /// Words per open-generation run.
    #[arg(long)]
    t_words: Option<u32>,
    /// Regenerate instead of reusing the gate's candidate in gated Select.
    #[arg(long)]
    no_reuse_gate_candidate: bool,
    /// Constitutional revisions are adopted without judge scoring.
    #[arg(long)]
    judge_free_constitutional: bool,
}

impl Knobs {
    fn overrides(&self) -> ConfigOverrides {
        ConfigOverrides {
            n: self.n,
            k_max: self.k_max,
            tau: self.tau,
            alpha_select: self.alpha_select,
            alpha_report: self.alpha_report,
            t_words: self.t_words,
            parse_retries: None,
            reuse_gate_candidate: self.no_reuse_gate_candidate.then_some(false),
            judge_free_constitutional: self.judge_free_constitutional.then_some(true),
        }
    }
}

/// A failure with a stable kind for the stderr error line and an exit code.
struct Failure {
    kind: String,
    message: String,
    code: u8,
}

impl Failure {
    fn usage(kind: &str, message: impl ToString) -> Self {
        Self { kind: kind.into(), message: message.to_string(), code: 2 }
    }

    fn runtime(kind: &str, message: impl ToString) -> Self {
        Self { kind: kind.into(), message: message.to_string(), code: 1 }
    }
}

struct Backends {
    generators: Vec<NamedBackend>,
    judge: Arc<dyn Backend>,
    temperatures: RoleTemperatures,
}

fn load_mock(path: &Path) -> Result<MockScript, Failure> {
    MockScript::load(path).map_err(|e| Failure::usage("ScriptError", format!("{}: {e}", path.display())))
}

fn mock_name(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "mock".into())
}

fn build_backends(args: &BackendArgs) -> Result<Backends, Failure> {
    let mut temperatures = RoleTemperatures::default();
    if let Some(t) = args.temperature {
        temperatures.candidate = t;
    }
    if args.http {
        let mut base = BackendConfig::from_env();
        if let Some(url) = &args.api_base {
            base.base_url = url.clone();
        }
        if let Some(key) = &args.api_key {
            base.api_key = key.clone();
        }
        base.temperature = temperatures.candidate;
        if args.models.is_empty() {
            return Err(Failure::usage("ConfigError", "--http needs at least one --model"));
        }
        let http = |model: &str| -> Result<HttpBackend, Failure> {
            let config = BackendConfig { model_name: model.into(), ..base.clone() };
            HttpBackend::new(config).map_err(|e| Failure::runtime(backend_kind(&e), e))
        };
        let mut generators = Vec::new();
        for m in &args.models {
            generators.push(NamedBackend::new(m.clone(), Arc::new(http(m)?)));
        }
        let judge_model = args.judge_model.as_deref().unwrap_or(&args.models[0]);
        let judge: Arc<dyn Backend> = Arc::new(http(judge_model)?);
        return Ok(Backends { generators, judge, temperatures });
    }
    if args.mocks.is_empty() {
        return Err(Failure::usage("ConfigError", "choose a backend with --mock PATH or --http"));
    }
    let mut generators = Vec::new();
    for path in &args.mocks {
        let name = mock_name(path);
        generators.push(NamedBackend::new(name.clone(), Arc::new(MockBackend::new(name, load_mock(path)?))));
    }
    let judge: Arc<dyn Backend> = match &args.judge_mock {
        Some(path) => Arc::new(MockBackend::new(mock_name(path), load_mock(path)?)),
        None => Arc::clone(&generators[0].backend),
    };
    Ok(Backends { generators, judge, temperatures })
}

fn backend_kind(e: &debias_core::model::BackendError) -> &'static str {
    debias_core::model::ModelError::Backend(e.clone()).kind()
}

fn read_dataset(source: &str) -> Result<Dataset, Failure> {
    let parsed = match source.strip_prefix("builtin:") {
        Some(name) => match fixture_text(name) {
            Some(text) => Dataset::parse(name, text),
            None => return Err(Failure::usage("DatasetError", format!("no bundled dataset named '{name}'"))),
        },
        None => load_dataset(Path::new(source)),
    };
    parsed.map_err(|e| Failure::usage("DatasetError", e))
}

fn weights(alpha: Option<f64>) -> Result<CompositeWeights, Failure> {
    CompositeWeights::new(alpha.unwrap_or(0.5)).map_err(|e| Failure::usage("ConfigError", e))
}

fn print_json<T: serde::Serialize>(value: &T) {
    let text = serde_json::to_string_pretty(value).expect("output serialises");
    // a closed pipe (e.g. `| head`) is not an error for the run
    let _ = writeln!(std::io::stdout(), "{text}");
}

fn run_single(
    text: &str,
    kind: TaskKind,
    scheme: SchemeId,
    item: &ItemArgs,
    backends: &BackendArgs,
    knobs: &Knobs,
) -> Result<(), Failure> {
    let prompt =
        PromptRecord { id: "cli".into(), text: text.into(), language: item.language, category: item.category, kind };
    prompt.validate().map_err(|e| Failure::usage("InvalidPrompt", e))?;
    let config = knobs.overrides().resolve(kind, scheme).map_err(|e| Failure::usage("ConfigError", e))?;
    let b = build_backends(backends)?;
    let constitution = Constitution::default();
    let generator = &b.generators[0];
    let run = ItemRun {
        model: &generator.name,
        prompt: &prompt,
        scheme,
        config: &config,
        constitution: &constitution,
        mode: knobs.accounting,
        temperatures: b.temperatures,
    };
    let mut gen_session = generator.backend.open_session();
    let mut judge_session = b.judge.open_session();
    let result = run.execute(gen_session.as_mut(), judge_session.as_mut());
    print_json(&result);
    match &result.status {
        debias_core::opengen::RunStatus::Completed => Ok(()),
        debias_core::opengen::RunStatus::Failed { kind, message } => Err(Failure::runtime(kind, message)),
    }
}

fn load_results(dir: &Path) -> Result<Vec<RunResult>, Failure> {
    ResultStore::load(dir).map_err(|e| Failure::usage("StoreError", e))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Validate { dataset } => {
            let d = read_dataset(&dataset)?;
            println!("{}: {} records, sha256 {}", d.name, d.records.len(), d.checksum);
            let balance = d.balance();
            for ((category, language), count) in &balance.counts {
                println!("  {category:<20} {language:<8} {count}");
            }
            println!("balanced: {}", if balance.is_balanced() { "yes" } else { "no" });
            Ok(())
        }
        Command::Debias { text, scheme, item, backends, knobs } => {
            run_single(&text, TaskKind::FillIn, scheme, &item, &backends, &knobs)
        }
        Command::Opengen { prompt, scheme, item, backends, knobs } => {
            run_single(&prompt, TaskKind::OpenGen, scheme, &item, &backends, &knobs)
        }
        Command::Bench { dataset, out, schemes, parallelism, seed, limit, backends, knobs } => {
            let dataset = read_dataset(&dataset)?;
            let b = build_backends(&backends)?;
            let matrix = RunMatrix {
                generators: b.generators,
                judge: b.judge,
                schemes,
                dataset,
                overrides: knobs.overrides(),
                accounting_mode: knobs.accounting,
                seed,
                parallelism,
                constitution: Constitution::default(),
                temperatures: b.temperatures,
            };
            matrix.validate().map_err(|e| Failure::usage("ConfigError", e))?;
            let mut store =
                ResultStore::open(&out, &matrix.fingerprint()).map_err(|e| Failure::usage("StoreError", e))?;
            let summary = run_matrix(&matrix, &mut store, MatrixOptions { limit })
                .map_err(|e| Failure::runtime("StoreError", e))?;
            println!(
                "{} new cells ({} failed), {} already done, {} remaining of {}",
                summary.executed, summary.failed, summary.already_done, summary.remaining, summary.total_cells
            );
            if summary.executed > 0 && summary.failed == summary.executed {
                return Err(Failure::runtime("AllCellsFailed", "every executed cell failed"));
            }
            Ok(())
        }
        Command::Aggregate { out, alpha_report } => {
            let report = aggregate(&load_results(&out)?, weights(alpha_report)?);
            let mut text = serde_json::to_string_pretty(&report).expect("report serialises");
            text.push('\n');
            std::fs::write(out.join(AGGREGATE_FILE), text).map_err(|e| Failure::runtime("IoError", e))?;
            print!("{}", debias_core::bench::report::render_table(&report));
            Ok(())
        }
        Command::Report { out, format, report_dir, alpha_report } => {
            let report: AggregateReport = aggregate(&load_results(&out)?, weights(alpha_report)?);
            let dir = report_dir.unwrap_or(out);
            let written = emit_report(&report, format, &dir).map_err(|e| Failure::runtime("IoError", e))?;
            for path in written {
                println!("{}", path.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let message = f.message.replace('\n', " ");
            eprintln!("error: kind={} message={}", f.kind, message);
            ExitCode::from(f.code)
        }
    }
}

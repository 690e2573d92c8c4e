//! Command-line front end: `serve`, `eval`, `retrieve`, `import-table` and
//! `demo`.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error (missing or invalid
//! input files), 4 backend error.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::demo;
use crate::eval::{load_dataset, read_table_csv, run_eval, write_table_csv, AnswerPolicy, EvalError};
use crate::llm::{Backend, BackendConfig, GatewayError, RemoteConfig};
use crate::path_store::{load_table, PathStore, TableFormat, NONE_ANSWER};
use crate::prompt::PromptEngine;
use crate::retrieval::{find_examples, PathfindingMode, RetrievalConfig};
use crate::service::{AppState, ServiceConfig};
use crate::session::{Engine, SessionConfig, SessionTranscript};
use crate::variant::Variant;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_BACKEND: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "kgclarify", version, about = "Knowledge-guided query clarification for API recommendation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP session API.
    Serve(ServeArgs),
    /// Evaluate a dataset and write a JSON report.
    Eval(EvalArgs),
    /// Show the path examples retrieved for a query.
    Retrieve(RetrieveArgs),
    /// Convert a CSV path table to canonical JSONL.
    ImportTable(ImportArgs),
    /// Replay the bundled two-round example session.
    Demo(DemoArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Remote,
    Scripted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Full,
    #[value(name = "no-k", alias = "no_k")]
    NoK,
    #[value(name = "no-kps", alias = "no_kps")]
    NoKps,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Full => Variant::Full,
            VariantArg::NoK => Variant::NoK,
            VariantArg::NoKps => Variant::NoKps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Scripted,
    Oracle,
}

#[derive(Debug, Args)]
pub struct BackendArgs {
    #[arg(long, value_enum, default_value = "scripted")]
    pub backend: BackendKind,
    /// JSONL response script for the scripted backend.
    #[arg(long)]
    pub script: Option<PathBuf>,
    /// Chat-completion URL for the remote backend.
    #[arg(long, default_value = "https://api.openai.com/v1/chat/completions")]
    pub endpoint: String,
    #[arg(long, default_value = "gpt-3.5-turbo")]
    pub model: String,
    #[arg(long, default_value_t = 0.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = 60)]
    pub timeout_secs: u64,
    #[arg(long, default_value_t = 2)]
    pub max_retries: u32,
}

impl BackendArgs {
    fn config(&self) -> Result<BackendConfig, CliError> {
        Ok(match self.backend {
            BackendKind::Scripted => BackendConfig::Scripted {
                script_path: self
                    .script
                    .clone()
                    .ok_or_else(|| CliError::Usage("--backend scripted needs --script".into()))?,
            },
            BackendKind::Remote => BackendConfig::Remote(RemoteConfig {
                temperature: self.temperature,
                timeout: Duration::from_secs(self.timeout_secs),
                max_retries: self.max_retries,
                ..RemoteConfig::new(&self.endpoint, &self.model)
            }),
        })
    }
}

#[derive(Debug, Args)]
pub struct EngineArgs {
    /// Path table (`.jsonl` or `.csv`). Defaults to the bundled one-record table.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Template registry (`registry.toml`). Defaults to the bundled templates.
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// Aspect meaning registry (TOML).
    #[arg(long)]
    pub aspects: Option<PathBuf>,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[arg(long, default_value_t = 5)]
    pub n_options: usize,
    #[arg(long, default_value_t = 7)]
    pub n_apis: usize,
    #[arg(long, default_value_t = 0.10)]
    pub top_fraction: f64,
    #[arg(long, default_value_t = 5)]
    pub max_examples: usize,
}

impl EngineArgs {
    fn session_config(&self, max_rounds: usize) -> SessionConfig {
        SessionConfig {
            retrieval: RetrievalConfig {
                top_fraction: self.top_fraction,
                max_examples: self.max_examples,
                mode: PathfindingMode::Full,
            },
            n_options: self.n_options,
            n_apis: self.n_apis,
            max_rounds,
        }
    }

    fn engine(&self) -> Result<Engine, CliError> {
        let store = match &self.table {
            Some(p) => read_table(p)?,
            None => demo::sample_table(),
        };
        let prompts = match (&self.templates, &self.aspects) {
            (None, None) => PromptEngine::bundled(),
            (None, Some(a)) => PromptEngine::bundled().with_meanings(
                crate::aspect::AspectMeanings::load(a).map_err(|e| CliError::Data(e.to_string()))?,
            ),
            (Some(reg), aspects) => PromptEngine::from_registry(reg, aspects.as_deref())
                .map_err(|e| CliError::Data(e.to_string()))?,
        };
        let backend = build_backend(&self.backend.config()?)?;
        Ok(Engine::new(&store, prompts, backend))
    }
}

fn build_backend(cfg: &BackendConfig) -> Result<Arc<dyn Backend>, CliError> {
    cfg.build().map_err(|e| match e {
        GatewayError::Io(_) | GatewayError::Script { .. } => CliError::Data(e.to_string()),
        GatewayError::Config(_) => CliError::Usage(e.to_string()),
        other => CliError::Backend(other.to_string()),
    })
}

fn read_table(path: &Path) -> Result<PathStore, CliError> {
    load_table(path, TableFormat::from_path(path))
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub engine: EngineArgs,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: std::net::SocketAddr,
    #[arg(long, default_value_t = 3)]
    pub max_rounds: usize,
    #[arg(long, default_value_t = 1800)]
    pub idle_ttl_secs: u64,
    /// Directory with a static chat client to serve at `/`.
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_enum, default_value = "full")]
    pub variant: VariantArg,
    #[arg(long, default_value_t = 3)]
    pub rounds: usize,
    #[arg(long, value_enum, default_value = "scripted")]
    pub policy: PolicyArg,
    #[command(flatten)]
    pub engine: EngineArgs,
    /// Report JSON destination; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write a results table as CSV.
    #[arg(long)]
    pub table_csv: Option<PathBuf>,
    /// Baseline rows (same CSV layout) merged into `--table-csv`.
    #[arg(long)]
    pub baselines: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    #[arg(long)]
    pub table: PathBuf,
    #[arg(long)]
    pub query: String,
    #[arg(long, default_value = NONE_ANSWER)]
    pub prev_answer: String,
    #[arg(long, value_enum, default_value = "full")]
    pub variant: VariantArg,
    #[arg(long, default_value_t = 0.10)]
    pub top_fraction: f64,
    #[arg(long, default_value_t = 5)]
    pub max_examples: usize,
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    #[arg(long)]
    pub csv: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    /// Print the transcript as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Backend(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Backend(_) => EXIT_BACKEND,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Backend(m) => write!(f, "backend error: {m}"),
        }
    }
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::Data(e.to_string())
}

/// Parses `args` (including the program name) and runs the command,
/// writing normal output to `out`. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Serve(args) => serve(args, out),
        Command::Eval(args) => eval(args, out),
        Command::Retrieve(args) => retrieve(args, out),
        Command::ImportTable(args) => import_table(args, out),
        Command::Demo(args) => run_demo(args, out),
    }
}

fn serve(args: ServeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if let Some(dir) = &args.ui_dir {
        if !dir.is_dir() {
            return Err(CliError::Data(format!("{} is not a directory", dir.display())));
        }
    }
    let session = args.engine.session_config(args.max_rounds);
    session.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    // the remote backend's blocking client must be built outside the runtime
    let engine = args.engine.engine()?;
    let cfg = ServiceConfig {
        bind: args.bind,
        session,
        idle_ttl: Duration::from_secs(args.idle_ttl_secs),
        ui_dir: args.ui_dir,
    };
    let runtime = tokio::runtime::Runtime::new().map_err(io_err)?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(cfg.bind).await.map_err(io_err)?;
        let addr = listener.local_addr().map_err(io_err)?;
        writeln!(out, "listening on http://{addr}").map_err(io_err)?;
        out.flush().map_err(io_err)?;
        crate::service::serve(listener, AppState::new(engine, cfg))
            .await
            .map_err(io_err)
    })
}

fn eval(args: EvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if args.rounds == 0 {
        return Err(CliError::Usage("--rounds must be at least 1".into()));
    }
    let dataset = load_dataset(&args.dataset)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.dataset.display())))?;
    let engine = args.engine.engine()?;
    let policy = match args.policy {
        PolicyArg::Scripted => AnswerPolicy::Scripted,
        PolicyArg::Oracle => AnswerPolicy::Oracle,
    };
    let dataset_id = args
        .dataset
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let report = run_eval(
        &engine,
        &dataset_id,
        &dataset,
        args.variant.into(),
        policy,
        args.rounds,
        args.engine.session_config(args.rounds),
    )
    .map_err(|e| match e {
        EvalError::Session(s) if s.is_backend() => CliError::Backend(s.to_string()),
        EvalError::Session(s) => CliError::Usage(s.to_string()),
        other => CliError::Data(other.to_string()),
    })?;

    // every case failing on a backend error is a backend failure overall
    if report.failed_cases == report.cases.len() {
        let first = report.cases.iter().find_map(|c| c.error.clone()).unwrap_or_default();
        return Err(CliError::Backend(format!("all cases failed; first error: {first}")));
    }

    match &args.out {
        Some(path) => {
            let file = BufWriter::new(File::create(path).map_err(io_err)?);
            report.write_json(file).map_err(|e| CliError::Data(e.to_string()))?;
        }
        None => {
            report.write_json(&mut *out).map_err(|e| CliError::Data(e.to_string()))?;
            writeln!(out).map_err(io_err)?;
        }
    }
    if let Some(path) = &args.table_csv {
        let baselines = match &args.baselines {
            Some(b) => read_table_csv(File::open(b).map_err(io_err)?)
                .map_err(|e| CliError::Data(format!("{}: {e}", b.display())))?,
            None => Vec::new(),
        };
        write_table_csv(&[report], &baselines, File::create(path).map_err(io_err)?)
            .map_err(|e| CliError::Data(e.to_string()))?;
    }
    Ok(())
}

fn retrieve(args: RetrieveArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let store = read_table(&args.table)?;
    let cfg = RetrievalConfig {
        top_fraction: args.top_fraction,
        max_examples: args.max_examples,
        mode: Variant::from(args.variant).pathfinding_mode(),
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let units = store.flatten();
    let examples = find_examples(&units, &args.query, &args.prev_answer, &cfg)
        .map_err(|e| CliError::Data(e.to_string()))?;
    for (rank, e) in examples.iter().enumerate() {
        let stage2 = e.stage2_score.map_or("-".to_string(), |s| s.to_string());
        writeln!(
            out,
            "{rank}\taspect={aspect}\tstage1={s1}\tstage2={stage2}\tsource={src}\tquery={query:?}\tprev_answer={prev:?}",
            rank = rank + 1,
            aspect = e.aspect,
            s1 = e.stage1_score,
            src = e.source_index,
            query = e.query,
            prev = e.prev_answer,
        )
        .map_err(io_err)?;
    }
    Ok(())
}

fn import_table(args: ImportArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let store = load_table(&args.csv, TableFormat::Csv)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.csv.display())))?;
    let file = BufWriter::new(File::create(&args.out).map_err(io_err)?);
    store.write_jsonl(file).map_err(io_err)?;
    writeln!(out, "wrote {} records to {}", store.len(), args.out.display()).map_err(io_err)?;
    Ok(())
}

fn run_demo(args: DemoArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let transcript = demo::run_demo(&demo::demo_engine()).map_err(|e| CliError::Backend(e.to_string()))?;
    if args.json {
        serde_json::to_writer_pretty(&mut *out, &transcript).map_err(|e| CliError::Data(e.to_string()))?;
        writeln!(out).map_err(io_err)?;
    } else {
        print_transcript(&transcript, out).map_err(io_err)?;
    }
    Ok(())
}

pub fn print_transcript(t: &SessionTranscript, out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(out, "Query: {}", t.query)?;
    for r in &t.rounds {
        writeln!(out, "\nRound {}", r.round)?;
        writeln!(out, "  aspect:   {}", r.aspect)?;
        writeln!(out, "  question: {}", r.question)?;
        for (i, o) in r.options.as_slice().iter().enumerate() {
            writeln!(out, "    {}. {o}", i + 1)?;
        }
        if let Some(a) = &r.answer {
            writeln!(out, "  answer:   {a}")?;
        }
        if let Some(q) = &r.extended_query {
            writeln!(out, "  extended: {q}")?;
        }
        if let Some(apis) = &r.recommendations {
            writeln!(out, "  APIs:")?;
            for (i, a) in apis.as_slice().iter().enumerate() {
                writeln!(out, "    {}. {a}", i + 1)?;
            }
        }
    }
    Ok(())
}

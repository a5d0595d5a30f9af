use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use proofloop::demo;
use proofloop::errors::{category_histogram, render_histogram, RuleTable};
use proofloop::genai::{MockModel, ModelClient, PromptTemplate, RemoteConfig, RemoteModel};
use proofloop::orchestrator::{
    load_dataset, prove, run_benchmark, CorpusCache, ProveConfig, TheoremRecord,
};
use proofloop::prover::{Backend, CoqtopBackend, CoqtopConfig, MockBackend};
use proofloop::repair::Mechanism;
use proofloop::retrieval::{retrieve, Corpus, RetrievalConfig};
use proofloop::script::{as_tactic, Sentence};

/// Prove Coq theorems with a language model, a prover in the loop, and
/// automated repair and backtracking.
#[derive(Parser)]
#[command(name = "proofloop", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Prove a single theorem and print the event log.
    Prove(ProveArgs),
    /// Prove every theorem of a dataset and report the success rate.
    Bench(BenchArgs),
    /// Histogram of error categories for a JSONL log of `{tactic, error}` rows.
    Classify {
        #[arg(long)]
        log: PathBuf,
        /// Alternative rule table (JSON).
        #[arg(long)]
        rules: Option<PathBuf>,
    },
    /// Show the premises retrieved for a statement.
    Retrieve {
        #[arg(long)]
        statement: String,
        #[arg(long, default_value_t = 50)]
        k: usize,
        #[arg(long, default_value_t = 10)]
        budget: usize,
        /// Premise corpus (JSONL); defaults to the bundled demo corpus.
        #[arg(long)]
        premises: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    Mock,
    Coqtop,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKind {
    Mock,
    Remote,
}

#[derive(Clone, Copy, ValueEnum)]
enum MechanismArg {
    ReferenceReplacement,
    Renaming,
    BulletTransformation,
    PremiseAugmentation,
}

impl From<MechanismArg> for Mechanism {
    fn from(m: MechanismArg) -> Mechanism {
        match m {
            MechanismArg::ReferenceReplacement => Mechanism::ReferenceReplacement,
            MechanismArg::Renaming => Mechanism::Renaming,
            MechanismArg::BulletTransformation => Mechanism::BulletTransformation,
            MechanismArg::PremiseAugmentation => Mechanism::PremiseAugmentation,
        }
    }
}

#[derive(Args)]
struct Common {
    #[arg(long, value_enum, default_value = "mock")]
    backend: BackendKind,
    /// Transcript directory for the mock backend; bundled demos by default.
    #[arg(long)]
    transcripts: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "mock")]
    model: ModelKind,
    /// Canned replies for the mock model; bundled demos by default.
    #[arg(long)]
    replies: Option<PathBuf>,
    /// Prompt template directory holding instructions.txt and examples.json.
    #[arg(long)]
    template: Option<PathBuf>,
    /// Error rule table (JSON).
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    k: usize,
    #[arg(long, default_value_t = 10)]
    budget: usize,
    /// Maximum replacement attempts per reference repair.
    #[arg(long, default_value_t = 10)]
    max_replacements: usize,
    /// Wall-clock budget per theorem, in seconds.
    #[arg(long, default_value_t = 600)]
    theorem_budget: u64,
    /// Hammer timeout, in seconds.
    #[arg(long, default_value_t = 10)]
    hammer_timeout: u64,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    no_retrieval: bool,
    #[arg(long)]
    no_backtracking: bool,
    #[arg(long, value_enum)]
    disable: Vec<MechanismArg>,
}

#[derive(Args)]
struct ProveArgs {
    #[arg(long)]
    theorem: String,
    /// Dataset to look the theorem up in; bundled demos by default.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Premise corpus (JSONL) used when the record names none.
    #[arg(long)]
    premises: Option<PathBuf>,
    /// Write the event log here as JSONL instead of printing it.
    #[arg(long)]
    events: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Append-only results file; an interrupted run resumes from it.
    #[arg(long)]
    results: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    parallelism: usize,
    /// Write the report as JSON here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Premise corpus (JSONL) for records that name none.
    #[arg(long)]
    premises: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

/// A usage or configuration problem; exit code 2.
struct ConfigError(String);

impl<E: std::fmt::Display> From<E> for ConfigError {
    fn from(e: E) -> ConfigError {
        ConfigError(e.to_string())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Prove(args) => cmd_prove(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Classify { log, rules } => cmd_classify(&log, rules.as_deref()),
        Command::Retrieve {
            statement,
            k,
            budget,
            premises,
        } => cmd_retrieve(&statement, k, budget, premises.as_deref()),
    };
    match outcome {
        Ok(code) => code,
        Err(ConfigError(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn config(c: &Common) -> Result<ProveConfig, ConfigError> {
    let mut cfg = ProveConfig {
        retrieval: RetrievalConfig {
            k: c.k,
            budget: c.budget,
            ..RetrievalConfig::default()
        },
        use_retrieval: !c.no_retrieval,
        max_replacements: c.max_replacements,
        theorem_budget: Duration::from_secs(c.theorem_budget),
        backtracking: !c.no_backtracking,
        disabled_mechanisms: c.disable.iter().map(|&m| m.into()).collect(),
        ..ProveConfig::default()
    };
    cfg.hammer.timeout = Duration::from_secs(c.hammer_timeout);
    cfg.sampling.temperature = c.temperature;
    if let Some(dir) = &c.template {
        cfg.template = PromptTemplate::load(dir)?;
    }
    if let Some(path) = &c.rules {
        cfg.rules = RuleTable::load(path)?.into();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn backend(c: &Common) -> Result<Box<dyn Backend>, ConfigError> {
    Ok(match c.backend {
        BackendKind::Mock => match &c.transcripts {
            Some(dir) => Box::new(MockBackend::from_dir(dir)?),
            None => Box::new(demo::backend()),
        },
        BackendKind::Coqtop => {
            let mut cfg = CoqtopConfig::from_env().ok_or_else(|| {
                ConfigError(format!(
                    "{} is not set",
                    proofloop::prover::coqtop::COQTOP_ENV
                ))
            })?;
            cfg.hammer.timeout = Duration::from_secs(c.hammer_timeout);
            Box::new(CoqtopBackend::new(cfg))
        }
    })
}

fn model(c: &Common) -> Result<Box<dyn ModelClient>, ConfigError> {
    Ok(match c.model {
        ModelKind::Mock => match &c.replies {
            Some(path) => Box::new(MockModel::load(path)?),
            None => Box::new(demo::model()),
        },
        ModelKind::Remote => Box::new(RemoteModel::new(RemoteConfig::from_env()?)),
    })
}

fn corpus(path: Option<&Path>) -> Result<Corpus, ConfigError> {
    Ok(match path {
        Some(p) => Corpus::load_jsonl(p)?,
        None => demo::corpus(),
    })
}

fn find_theorem(args: &ProveArgs) -> Result<(TheoremRecord, PathBuf), ConfigError> {
    let found = match &args.dataset {
        Some(path) => {
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            load_dataset(path)?
                .into_iter()
                .find(|r| r.name == args.theorem)
                .map(|r| (r, base))
        }
        None => demo::theorem(&args.theorem).map(|r| (r, PathBuf::new())),
    };
    found.ok_or_else(|| ConfigError(format!("unknown theorem {}", args.theorem)))
}

fn cmd_prove(args: ProveArgs) -> Result<ExitCode, ConfigError> {
    let cfg = config(&args.common)?;
    let (record, base) = find_theorem(&args)?;
    let cache = CorpusCache::new(base, corpus(args.premises.as_deref())?);
    let corpus = cache.get(&record).map_err(ConfigError)?;
    let backend = backend(&args.common)?;
    let model = model(&args.common)?;

    let result = prove(&record, &corpus, backend.as_ref(), model.as_ref(), &cfg);
    let log = result.events_jsonl();
    match &args.events {
        Some(path) => std::fs::write(path, &log)?,
        None => print!("{log}"),
    }
    match &result.final_script {
        Some(script) => {
            println!("{}: proved", record.name);
            println!("{}", script.render());
            Ok(ExitCode::SUCCESS)
        }
        None => {
            println!(
                "{}: failed ({})",
                record.name,
                result.failure.as_deref().unwrap_or("unknown reason")
            );
            Ok(ExitCode::from(1))
        }
    }
}

fn cmd_bench(args: BenchArgs) -> Result<ExitCode, ConfigError> {
    let cfg = config(&args.common)?;
    let dataset = load_dataset(&args.dataset)?;
    let base = args
        .dataset
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let cache = CorpusCache::new(base, corpus(args.premises.as_deref())?);
    let backend = backend(&args.common)?;
    let model = model(&args.common)?;

    let report = run_benchmark(
        &dataset,
        &cache,
        backend.as_ref(),
        model.as_ref(),
        &cfg,
        args.parallelism,
        args.results.as_deref(),
    )?;
    print!("{}", report.render_text());
    if let Some(path) = &args.report {
        std::fs::write(path, serde_json::to_string_pretty(&report)?)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_classify(log: &Path, rules: Option<&Path>) -> Result<ExitCode, ConfigError> {
    let table = match rules {
        Some(p) => RuleTable::load(p)?,
        None => RuleTable::default(),
    };
    let text =
        std::fs::read_to_string(log).map_err(|e| ConfigError(format!("{}: {e}", log.display())))?;
    let mut facts = Vec::new();
    for (i, line) in text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let row: serde_json::Value = serde_json::from_str(line)
            .map_err(|e| ConfigError(format!("{}:{}: {e}", log.display(), i + 1)))?;
        let (Some(tactic), Some(error)) = (row["tactic"].as_str(), row["error"].as_str()) else {
            return Err(ConfigError(format!(
                "{}:{}: expected tactic and error fields",
                log.display(),
                i + 1
            )));
        };
        let sentence = Sentence::parse_one(tactic)
            .map_err(|e| ConfigError(format!("{}:{}: {e}", log.display(), i + 1)))?;
        facts.push(table.classify(error, &as_tactic(&sentence)));
    }
    print!("{}", render_histogram(&category_histogram(&facts)));
    Ok(ExitCode::SUCCESS)
}

fn cmd_retrieve(
    statement: &str,
    k: usize,
    budget: usize,
    premises: Option<&Path>,
) -> Result<ExitCode, ConfigError> {
    if k == 0 || budget == 0 {
        return Err(ConfigError("k and budget must be positive".into()));
    }
    let corpus = corpus(premises)?;
    let cfg = RetrievalConfig {
        k,
        budget,
        ..RetrievalConfig::default()
    };
    for p in retrieve(&corpus, statement, &cfg) {
        println!(
            "{:<32} {:>8.4} {:>8.4}  {}",
            p.doc.name, p.bm25_score, p.knn_score, p.doc.statement
        );
    }
    Ok(ExitCode::SUCCESS)
}

//! End-to-end proving: retrieve, prompt, query once, then execute the reply
//! sentence by sentence with repair and backtracking. Also the benchmark
//! harness and its report.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt::Write as _;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backtrack::{backtrack, BacktrackConfig, BacktrackEvent, ExecutionTrace, TracedSession};
use crate::errors::{category_histogram, percent, ErrorCategory, RuleTable};
use crate::genai::{build_prompt_with, ModelClient, PromptTemplate, SamplingParams};
use crate::prover::{Backend, HammerConfig, Session, StepResult};
use crate::repair::{repair, Mechanism, RepairContext, RepairStatus, DEFAULT_MAX_REPLACEMENTS};
use crate::retrieval::{retrieve, Corpus, RetrievalConfig};
use crate::script::{as_tactic, ProofScript, Sentence, SentenceKind};

pub const DEFAULT_THEOREM_BUDGET: Duration = Duration::from_secs(600);

/// How often a structural sentence (bullet, brace, `Qed.`) is retried after
/// backtracking produced a proof for the goal it tripped on.
const MAX_STRUCTURAL_RETRIES: usize = 3;

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Parse {
        path: String,
        line: usize,
        source: serde_json::Error,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone)]
pub struct ProveConfig {
    pub retrieval: RetrievalConfig,
    /// Feed retrieved premises to the prompt and to repairs.
    pub use_retrieval: bool,
    pub hammer: HammerConfig,
    pub max_replacements: usize,
    pub theorem_budget: Duration,
    pub sampling: SamplingParams,
    pub disabled_mechanisms: Vec<Mechanism>,
    pub backtracking: bool,
    pub template: PromptTemplate,
    pub rules: Arc<RuleTable>,
}

impl Default for ProveConfig {
    fn default() -> Self {
        ProveConfig {
            retrieval: RetrievalConfig::default(),
            use_retrieval: true,
            hammer: HammerConfig::default(),
            max_replacements: DEFAULT_MAX_REPLACEMENTS,
            theorem_budget: DEFAULT_THEOREM_BUDGET,
            sampling: SamplingParams::default(),
            disabled_mechanisms: Vec::new(),
            backtracking: true,
            template: PromptTemplate::default(),
            rules: Arc::new(RuleTable::default()),
        }
    }
}

impl ProveConfig {
    pub fn validate(&self) -> Result<(), OrchestratorError> {
        let positive = [
            ("k", self.retrieval.k > 0),
            ("prompt budget", self.retrieval.budget > 0),
            ("hammer timeout", !self.hammer.timeout.is_zero()),
            ("replacement bound", self.max_replacements > 0),
            ("theorem budget", !self.theorem_budget.is_zero()),
        ];
        match positive.iter().find(|(_, ok)| !ok) {
            Some((name, _)) => Err(OrchestratorError::Config(format!(
                "{name} must be positive"
            ))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TheoremRecord {
    pub name: String,
    pub statement: String,
    #[serde(default)]
    pub project: String,
    #[serde(default)]
    pub premises_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<String>,
}

/// Read a JSON-lines dataset.
pub fn load_dataset(path: &Path) -> Result<Vec<TheoremRecord>, OrchestratorError> {
    let text = std::fs::read_to_string(path).map_err(|source| OrchestratorError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_dataset(&text).map_err(|(line, source)| OrchestratorError::Parse {
        path: path.display().to_string(),
        line,
        source,
    })
}

pub fn parse_dataset(text: &str) -> Result<Vec<TheoremRecord>, (usize, serde_json::Error)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| (i + 1, e)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProofStatus {
    Proved,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SentenceOutcome {
    Accepted,
    Repaired,
    Dropped,
    Backtracked,
    Skipped,
    Failed,
}

/// One executed or attempted sentence of the model's script.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceEvent {
    /// Position in the model's script; `None` for an appended `Qed.`.
    pub index: Option<usize>,
    pub sentence: String,
    pub outcome: SentenceOutcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<ErrorCategory>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mechanism: Option<Mechanism>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub replacement: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub backtrack: Vec<BacktrackEvent>,
}

impl SentenceEvent {
    fn new(index: Option<usize>, sentence: &Sentence, outcome: SentenceOutcome) -> SentenceEvent {
        SentenceEvent {
            index,
            sentence: sentence.raw.clone(),
            outcome,
            error: None,
            category: None,
            mechanism: None,
            replacement: Vec::new(),
            backtrack: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timings {
    pub total_ms: u64,
    pub model_ms: u64,
    pub prover_ms: u64,
    pub hammer_ms: u64,
    pub hammer_invocations: usize,
}

fn ms(d: Duration) -> u64 {
    d.as_millis().try_into().unwrap_or(u64::MAX)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofResult {
    pub theorem: String,
    pub status: ProofStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_script: Option<ProofScript>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    pub premises: Vec<String>,
    pub model_calls: usize,
    pub events: Vec<SentenceEvent>,
    pub timings: Timings,
}

impl ProofResult {
    fn failed(theorem: &str, reason: impl Into<String>) -> ProofResult {
        ProofResult {
            theorem: theorem.to_string(),
            status: ProofStatus::Failed,
            final_script: None,
            failure: Some(reason.into()),
            premises: Vec::new(),
            model_calls: 0,
            events: Vec::new(),
            timings: Timings::default(),
        }
    }

    pub fn is_proved(&self) -> bool {
        self.status == ProofStatus::Proved
    }

    /// The event log as JSON lines.
    pub fn events_jsonl(&self) -> String {
        self.events
            .iter()
            .map(|e| serde_json::to_string(e).expect("events serialise") + "\n")
            .collect()
    }
}

fn refusal_message(sentence: &Sentence) -> String {
    match as_tactic(sentence).head.as_str() {
        "Admitted" => "Proof admitted.".to_string(),
        _ => "Proof aborted.".to_string(),
    }
}

struct Run<'a> {
    cfg: &'a ProveConfig,
    deadline: Instant,
    events: Vec<SentenceEvent>,
    timings: Timings,
}

/// Prove one theorem with a single model query.
pub fn prove(
    theorem: &TheoremRecord,
    corpus: &Corpus,
    backend: &dyn Backend,
    model: &dyn ModelClient,
    cfg: &ProveConfig,
) -> ProofResult {
    let started = Instant::now();
    let mut result = prove_inner(theorem, corpus, backend, model, cfg, started);
    result.timings.total_ms = ms(started.elapsed());
    result
}

fn prove_inner(
    theorem: &TheoremRecord,
    corpus: &Corpus,
    backend: &dyn Backend,
    model: &dyn ModelClient,
    cfg: &ProveConfig,
    started: Instant,
) -> ProofResult {
    if let Err(e) = cfg.validate() {
        return ProofResult::failed(&theorem.name, e.to_string());
    }
    let premises = if cfg.use_retrieval {
        retrieve(corpus, &theorem.statement, &cfg.retrieval)
    } else {
        Vec::new()
    };
    let premise_names: Vec<String> = premises.iter().map(|p| p.doc.name.clone()).collect();
    let prompt = build_prompt_with(&cfg.template, &theorem.statement, &premises);

    let mut session = match backend.start_session(&theorem.statement) {
        Ok(s) => s,
        Err(e) => {
            return ProofResult {
                premises: premise_names,
                ..ProofResult::failed(&theorem.name, e.to_string())
            }
        }
    };

    let mut run = Run {
        cfg,
        deadline: started + cfg.theorem_budget,
        events: Vec::new(),
        timings: Timings::default(),
    };
    let model_start = Instant::now();
    let reply = model.complete(&prompt, &cfg.sampling);
    run.timings.model_ms = ms(model_start.elapsed());
    let base = ProofResult {
        premises: premise_names.clone(),
        model_calls: 1,
        ..ProofResult::failed(&theorem.name, "")
    };
    let script = match reply {
        Err(e) => {
            return ProofResult {
                failure: Some(format!("model unavailable: {e}")),
                timings: run.timings,
                ..base
            }
        }
        Ok(reply) => match reply.extracted {
            Some(script) => script,
            None => {
                return ProofResult {
                    failure: Some("model reply holds no proof script".into()),
                    timings: run.timings,
                    ..base
                }
            }
        },
    };

    let mut trace = ExecutionTrace::new();
    let outcome = run.execute_script(session.as_mut(), &mut trace, &script, &premise_names);
    let Run {
        events, timings, ..
    } = run;
    let base = ProofResult {
        events,
        timings,
        ..base
    };
    if let Err(reason) = outcome {
        return ProofResult {
            failure: Some(reason),
            ..base
        };
    }
    let final_script = ProofScript::from_sentences(trace.accepted());
    drop(session);
    match replay(backend, &theorem.statement, &final_script) {
        Ok(()) => ProofResult {
            status: ProofStatus::Proved,
            final_script: Some(final_script),
            failure: None,
            ..base
        },
        Err(e) => ProofResult {
            failure: Some(format!("replay failed: {e}")),
            ..base
        },
    }
}

impl Run<'_> {
    fn over_budget(&self) -> bool {
        Instant::now() >= self.deadline
    }

    /// Execute the model's sentences. `Ok` means `Qed.` was accepted.
    fn execute_script(
        &mut self,
        session: &mut dyn Session,
        trace: &mut ExecutionTrace,
        script: &ProofScript,
        premises: &[String],
    ) -> Result<(), String> {
        let mut queue: VecDeque<(Option<usize>, Sentence)> = script
            .sentences
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, s)| (Some(i), s))
            .collect();
        if !script
            .sentences
            .iter()
            .any(|s| s.kind == SentenceKind::QedCmd)
        {
            queue.push_back((None, Sentence::parse_one("Qed.").expect("Qed parses")));
        }
        let repair_ctx = RepairContext {
            premises: premises.to_vec(),
            max_replacements: self.cfg.max_replacements,
            qsimpl_timeout: self.cfg.hammer.timeout,
            disabled: self.cfg.disabled_mechanisms.clone(),
        };
        let mut retries: HashMap<Option<usize>, usize> = HashMap::new();
        // Bullet depth a sentence must resolve to before execution resumes.
        let mut skip_until: Option<usize> = None;

        while let Some((index, sentence)) = queue.pop_front() {
            if self.over_budget() {
                return Err("time budget exceeded".into());
            }
            if let Some(limit) = skip_until {
                let resume = match sentence.kind {
                    SentenceKind::Bullet => trace.resolve_bullet_depth(&sentence) <= limit,
                    SentenceKind::QedCmd | SentenceKind::BraceClose => true,
                    _ => false,
                };
                if !resume {
                    self.events.push(SentenceEvent::new(
                        index,
                        &sentence,
                        SentenceOutcome::Skipped,
                    ));
                    continue;
                }
                skip_until = None;
            }

            let step_start = Instant::now();
            let result = if sentence.kind == SentenceKind::AbortCmd {
                StepResult::Failed(refusal_message(&sentence))
            } else {
                TracedSession::new(session, trace).execute(&sentence)
            };
            let error = match result {
                StepResult::Advanced(_) => {
                    self.timings.prover_ms += ms(step_start.elapsed());
                    self.events.push(SentenceEvent::new(
                        index,
                        &sentence,
                        SentenceOutcome::Accepted,
                    ));
                    if sentence.kind == SentenceKind::QedCmd {
                        return Ok(());
                    }
                    continue;
                }
                StepResult::Failed(error) => error,
            };

            let facts = self.cfg.rules.classify(&error, &as_tactic(&sentence));
            let mut event = SentenceEvent::new(index, &sentence, SentenceOutcome::Failed);
            event.error = Some(error);
            event.category = Some(facts.category);
            let fixed = repair(
                &facts,
                &sentence,
                &mut TracedSession::new(session, trace),
                &repair_ctx,
            );
            self.timings.prover_ms += ms(step_start.elapsed());
            event.mechanism = fixed.mechanism;
            match fixed.status {
                RepairStatus::Repaired(replacement) => {
                    event.outcome = SentenceOutcome::Repaired;
                    event.replacement = replacement.iter().map(|s| s.raw.clone()).collect();
                    self.events.push(event);
                    continue;
                }
                RepairStatus::Dropped => {
                    event.outcome = SentenceOutcome::Dropped;
                    self.events.push(event);
                    continue;
                }
                RepairStatus::NotRepaired => {}
            }
            if !self.cfg.backtracking {
                self.events.push(event);
                return Err(format!("unrepaired error at `{}`", sentence.raw));
            }

            let bt_cfg = BacktrackConfig {
                hints: premises.to_vec(),
                timeout: self.cfg.hammer.timeout,
                deadline: Some(self.deadline),
            };
            let hammer_start = Instant::now();
            let outcome = backtrack(session, trace, &bt_cfg);
            self.timings.hammer_ms += ms(hammer_start.elapsed());
            self.timings.hammer_invocations += outcome.hammer_calls;
            event.backtrack = outcome.events;
            if outcome.proof.is_none() {
                self.events.push(event);
                return Err(format!(
                    "backtracking found no proof after `{}`",
                    sentence.raw
                ));
            }
            event.outcome = SentenceOutcome::Backtracked;
            self.events.push(event);

            let closed_branch = session
                .state()
                .goals
                .is_empty()
                .then(|| trace.bullet_depth());
            skip_until = match (outcome.discarded_depth, closed_branch) {
                (Some(a), Some(b)) => Some(a.min(b)),
                (a, b) => a.or(b),
            };
            if sentence.kind.is_structural() {
                let n = retries.entry(index).or_insert(0);
                if *n < MAX_STRUCTURAL_RETRIES {
                    *n += 1;
                    queue.push_front((index, sentence));
                }
            }
        }
        Err("proof script ended before Qed was accepted".into())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayError {
    #[error("{0}")]
    Backend(String),
    #[error("`{sentence}` failed: {error}")]
    Step { sentence: String, error: String },
    #[error("script does not end in an accepted Qed")]
    Incomplete,
}

/// Execute `script` from a fresh session; succeeds only if every sentence
/// runs and the closing `Qed.` is accepted.
pub fn replay(
    backend: &dyn Backend,
    statement: &str,
    script: &ProofScript,
) -> Result<(), ReplayError> {
    let mut session = backend
        .start_session(statement)
        .map_err(|e| ReplayError::Backend(e.to_string()))?;
    for s in &script.sentences {
        if let StepResult::Failed(error) = session.execute(s) {
            return Err(ReplayError::Step {
                sentence: s.raw.clone(),
                error,
            });
        }
    }
    match script.sentences.last() {
        Some(s) if s.kind == SentenceKind::QedCmd => Ok(()),
        _ => Err(ReplayError::Incomplete),
    }
}

/// Per-theorem line of a benchmark report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultSummary {
    pub theorem: String,
    pub status: ProofStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    pub model_calls: usize,
    pub total_ms: u64,
    pub hammer_invocations: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub total_ms: u64,
    pub mean_ms: f64,
    pub model_ms: u64,
    pub prover_ms: u64,
    pub hammer_ms: u64,
    pub hammer_invocations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub results: Vec<ResultSummary>,
    pub attempted: usize,
    pub proved: usize,
    pub rate: f64,
    pub histogram: BTreeMap<ErrorCategory, usize>,
    pub timing: TimingSummary,
}

/// A report cell: proved count and rate, e.g. `4377 (40.4%)`.
pub fn format_cell(proved: usize, attempted: usize) -> String {
    format!("{proved} ({}%)", percent(proved, attempted))
}

impl BenchmarkReport {
    pub fn from_results(results: &[ProofResult]) -> BenchmarkReport {
        let attempted = results.len();
        let proved = results.iter().filter(|r| r.is_proved()).count();
        let mut histogram = category_histogram([]);
        for category in results
            .iter()
            .flat_map(|r| &r.events)
            .filter_map(|e| e.category)
        {
            *histogram.entry(category).or_insert(0) += 1;
        }
        let mut timing = TimingSummary::default();
        for r in results {
            timing.total_ms += r.timings.total_ms;
            timing.model_ms += r.timings.model_ms;
            timing.prover_ms += r.timings.prover_ms;
            timing.hammer_ms += r.timings.hammer_ms;
            timing.hammer_invocations += r.timings.hammer_invocations;
        }
        if attempted > 0 {
            timing.mean_ms = timing.total_ms as f64 / attempted as f64;
        }
        BenchmarkReport {
            results: results
                .iter()
                .map(|r| ResultSummary {
                    theorem: r.theorem.clone(),
                    status: r.status,
                    failure: r.failure.clone(),
                    model_calls: r.model_calls,
                    total_ms: r.timings.total_ms,
                    hammer_invocations: r.timings.hammer_invocations,
                })
                .collect(),
            attempted,
            proved,
            rate: if attempted == 0 {
                0.0
            } else {
                proved as f64 / attempted as f64
            },
            histogram,
            timing,
        }
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "Theorems proved: {} of {}",
            format_cell(self.proved, self.attempted),
            self.attempted
        );
        let _ = writeln!(
            out,
            "Mean time per theorem: {:.1} s",
            self.timing.mean_ms / 1000.0
        );
        let _ = writeln!(
            out,
            "Hammer invocations: {}",
            self.timing.hammer_invocations
        );
        out.push('\n');
        out.push_str(&crate::errors::render_histogram(&self.histogram));
        out.push('\n');
        for r in &self.results {
            let status = match r.status {
                ProofStatus::Proved => "proved",
                ProofStatus::Failed => "failed",
            };
            let _ = write!(out, "{:<32} {status}", r.theorem);
            if let Some(f) = &r.failure {
                let _ = write!(out, "  ({f})");
            }
            out.push('\n');
        }
        out
    }
}

/// Loads each premise file once, relative to the dataset directory.
#[derive(Debug)]
pub struct CorpusCache {
    base: PathBuf,
    fallback: Arc<Corpus>,
    loaded: Mutex<HashMap<PathBuf, Arc<Corpus>>>,
}

impl CorpusCache {
    /// `fallback` serves records that name no premise file.
    pub fn new(base: impl Into<PathBuf>, fallback: Corpus) -> CorpusCache {
        CorpusCache {
            base: base.into(),
            fallback: Arc::new(fallback),
            loaded: Mutex::new(HashMap::new()),
        }
    }

    pub fn get(&self, record: &TheoremRecord) -> Result<Arc<Corpus>, String> {
        let Some(file) = &record.premises_file else {
            return Ok(self.fallback.clone());
        };
        let path = self.base.join(file);
        if let Some(c) = self.loaded.lock().unwrap().get(&path) {
            return Ok(c.clone());
        }
        let corpus = Arc::new(Corpus::load_jsonl(&path).map_err(|e| e.to_string())?);
        self.loaded.lock().unwrap().insert(path, corpus.clone());
        Ok(corpus)
    }
}

/// Read results persisted by an earlier, possibly interrupted, run.
pub fn load_results(path: &Path) -> Result<Vec<ProofResult>, OrchestratorError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(source) => {
            return Err(OrchestratorError::Io {
                path: path.display().to_string(),
                source,
            })
        }
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| OrchestratorError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(r) => out.push(r),
            // A torn final line from an interrupted run is recomputed.
            Err(e) => log::warn!(
                "{}:{}: skipping unreadable result: {e}",
                path.display(),
                i + 1
            ),
        }
    }
    Ok(out)
}

/// Prove every theorem with `parallelism` workers. With `results_path`,
/// each result is appended as it completes and results already present
/// are reused, so an interrupted run can be resumed.
pub fn run_benchmark(
    dataset: &[TheoremRecord],
    corpora: &CorpusCache,
    backend: &dyn Backend,
    model: &dyn ModelClient,
    cfg: &ProveConfig,
    parallelism: usize,
    results_path: Option<&Path>,
) -> Result<BenchmarkReport, OrchestratorError> {
    if dataset.is_empty() {
        return Err(OrchestratorError::Config("dataset is empty".into()));
    }
    cfg.validate()?;
    let mut names = HashSet::new();
    if let Some(dup) = dataset.iter().find(|r| !names.insert(r.name.as_str())) {
        return Err(OrchestratorError::Config(format!(
            "duplicate theorem name {}",
            dup.name
        )));
    }

    let mut done: HashMap<String, ProofResult> = HashMap::new();
    let mut sink = None;
    if let Some(path) = results_path {
        for r in load_results(path)? {
            done.insert(r.theorem.clone(), r);
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| OrchestratorError::Io {
                path: path.display().to_string(),
                source,
            })?;
        let torn = std::fs::read(path)
            .map(|b| b.last().is_some_and(|&c| c != b'\n'))
            .unwrap_or(false);
        if torn {
            writeln!(&file).map_err(|source| OrchestratorError::Io {
                path: path.display().to_string(),
                source,
            })?;
        }
        sink = Some(Mutex::new(file));
    }

    let slots: Vec<Mutex<Option<ProofResult>>> = dataset
        .iter()
        .map(|r| Mutex::new(done.remove(&r.name)))
        .collect();
    let todo: Vec<usize> = (0..dataset.len())
        .filter(|&i| slots[i].lock().unwrap().is_none())
        .collect();
    let next = AtomicUsize::new(0);
    let workers = parallelism.clamp(1, todo.len().max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| {
                while let Some(&i) = todo.get(next.fetch_add(1, Ordering::SeqCst)) {
                    let record = &dataset[i];
                    let result = match corpora.get(record) {
                        Ok(corpus) => prove(record, &corpus, backend, model, cfg),
                        Err(e) => {
                            ProofResult::failed(&record.name, format!("premises unavailable: {e}"))
                        }
                    };
                    log::info!("{}: {:?}", record.name, result.status);
                    if let Some(sink) = &sink {
                        let line = serde_json::to_string(&result).expect("results serialise");
                        let mut f = sink.lock().unwrap();
                        if let Err(e) = writeln!(f, "{line}").and_then(|_| f.flush()) {
                            log::error!("cannot persist result for {}: {e}", record.name);
                        }
                    }
                    *slots[i].lock().unwrap() = Some(result);
                }
            });
        }
    });

    let results: Vec<ProofResult> = slots
        .into_iter()
        .map(|s| s.into_inner().unwrap().expect("every theorem has a result"))
        .collect();
    Ok(BenchmarkReport::from_results(&results))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cells_round_to_one_decimal() {
        assert_eq!(format_cell(4377, 10842), "4377 (40.4%)");
        assert_eq!(format_cell(2, 3), "2 (66.7%)");
        assert_eq!(format_cell(0, 0), "0 (0.0%)");
    }

    #[test]
    fn empty_results_give_zero_histogram() {
        let report = BenchmarkReport::from_results(&[]);
        assert_eq!(report.attempted, 0);
        assert_eq!(report.rate, 0.0);
        assert_eq!(report.histogram.len(), ErrorCategory::ALL.len());
        assert!(report.histogram.values().all(|&n| n == 0));
    }

    #[test]
    fn config_bounds_must_be_positive() {
        assert!(ProveConfig::default().validate().is_ok());
        let cfg = ProveConfig {
            max_replacements: 0,
            ..ProveConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(OrchestratorError::Config(_))));
    }

    #[test]
    fn dataset_lines_parse() {
        let text = r#"{"name":"a","statement":"Lemma a : True.","project":"p","premises_file":"x.jsonl"}

{"name":"b","statement":"Lemma b : True."}"#;
        let records = parse_dataset(text).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[1].premises_file, None);
        assert_eq!(parse_dataset("{").unwrap_err().0, 1);
    }
}

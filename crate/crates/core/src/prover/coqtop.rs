//! Subprocess adapter for a Coq toplevel running in `-emacs` mode.
//!
//! Every command is answered by a `<prompt>name < N |name| ... </prompt>`
//! marker carrying the toplevel's state number; undo is `BackTo N.` with the
//! number recorded before the undone sentence.

use std::io::{Read, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use regex::Regex;

use super::{
    Backend, Goal, HammerConfig, Hypothesis, ProofState, ProverError, Session, StepResult,
    TheoremStatement,
};
use crate::script::Sentence;

/// Environment variable naming the toplevel executable.
pub const COQTOP_ENV: &str = "PROOFLOOP_COQTOP";
/// Extra whitespace-separated toplevel flags, e.g. `-R theories Foo`.
pub const COQTOP_FLAGS_ENV: &str = "PROOFLOOP_COQTOP_FLAGS";

#[derive(Debug, Clone)]
pub struct CoqtopConfig {
    pub executable: PathBuf,
    pub flags: Vec<String>,
    /// Vernacular sent before the theorem, e.g. `From Hammer Require Import Hammer.`
    pub prelude: Vec<String>,
    pub call_timeout: Duration,
    pub hammer: HammerConfig,
}

impl CoqtopConfig {
    pub fn new(executable: impl Into<PathBuf>) -> CoqtopConfig {
        CoqtopConfig {
            executable: executable.into(),
            flags: Vec::new(),
            prelude: Vec::new(),
            call_timeout: Duration::from_secs(60),
            hammer: HammerConfig::default(),
        }
    }

    /// Configuration from the environment; `None` when no executable is set.
    pub fn from_env() -> Option<CoqtopConfig> {
        let exe = std::env::var_os(COQTOP_ENV)?;
        let mut cfg = CoqtopConfig::new(exe);
        if let Ok(flags) = std::env::var(COQTOP_FLAGS_ENV) {
            cfg.flags = flags.split_whitespace().map(str::to_string).collect();
        }
        Some(cfg)
    }
}

#[derive(Debug, Clone)]
pub struct CoqtopBackend {
    pub config: CoqtopConfig,
}

impl CoqtopBackend {
    pub fn new(config: CoqtopConfig) -> CoqtopBackend {
        CoqtopBackend { config }
    }

    pub fn start(&self, theorem_statement: &str) -> Result<CoqtopSession, ProverError> {
        let theorem = TheoremStatement::parse(theorem_statement)?;
        let mut process = Toplevel::spawn(&self.config)?;
        process.read_reply(self.config.call_timeout)?;
        for line in &self.config.prelude {
            let (out, _) = process.send(line, self.config.call_timeout)?;
            if let Some(err) = error_text(&out) {
                return Err(ProverError::BackendUnavailable(format!(
                    "prelude `{line}` failed: {err}"
                )));
            }
        }
        let (out, state_id) = process.send(&theorem.header(), self.config.call_timeout)?;
        if let Some(err) = error_text(&out) {
            return Err(ProverError::TheoremRejected(err));
        }
        let (goals, pending) = parse_goals(&out).ok_or_else(|| {
            ProverError::TheoremRejected(format!("no goal displayed for {}", theorem.name))
        })?;
        Ok(CoqtopSession {
            process,
            config: self.config.clone(),
            theorem,
            state: ProofState {
                goals,
                pending,
                depth: 0,
            },
            state_id,
            history: Vec::new(),
        })
    }
}

impl Backend for CoqtopBackend {
    fn start_session(&self, theorem_statement: &str) -> Result<Box<dyn Session>, ProverError> {
        Ok(Box::new(self.start(theorem_statement)?))
    }
}

struct Toplevel {
    child: Child,
    stdin: ChildStdin,
    output: Receiver<String>,
}

fn prompt_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"<prompt>\S+ < (\d+) .*?</prompt>").unwrap())
}

impl Toplevel {
    fn spawn(cfg: &CoqtopConfig) -> Result<Toplevel, ProverError> {
        let mut child = Command::new(&cfg.executable)
            .arg("-emacs")
            .arg("-quiet")
            .args(&cfg.flags)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| {
                ProverError::BackendUnavailable(format!("{}: {e}", cfg.executable.display()))
            })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let (tx, rx) = mpsc::channel();
        let stdout = child.stdout.take().expect("piped stdout");
        let stderr = child.stderr.take().expect("piped stderr");
        for mut stream in [Box::new(stdout) as Box<dyn Read + Send>, Box::new(stderr)] {
            let tx = tx.clone();
            std::thread::spawn(move || {
                let mut buf = [0u8; 4096];
                while let Ok(n) = stream.read(&mut buf) {
                    if n == 0
                        || tx
                            .send(String::from_utf8_lossy(&buf[..n]).into_owned())
                            .is_err()
                    {
                        break;
                    }
                }
            });
        }
        Ok(Toplevel {
            child,
            stdin,
            output: rx,
        })
    }

    /// Collect output up to the next prompt; returns the text and state number.
    fn read_reply(&mut self, timeout: Duration) -> Result<(String, u32), ProverError> {
        let deadline = Instant::now() + timeout;
        let mut acc = String::new();
        loop {
            if let Some(m) = prompt_regex().captures(&acc) {
                let whole = m.get(0).unwrap();
                let id = m[1].parse().unwrap_or(0);
                let text = format!("{}{}", &acc[..whole.start()], &acc[whole.end()..]);
                return Ok((text, id));
            }
            let left = deadline.saturating_duration_since(Instant::now());
            match self.output.recv_timeout(left) {
                Ok(chunk) => acc.push_str(&chunk),
                Err(RecvTimeoutError::Timeout) => {
                    let _ = self.child.kill();
                    return Err(ProverError::BackendUnavailable("toplevel timed out".into()));
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(ProverError::BackendUnavailable("toplevel exited".into()));
                }
            }
        }
    }

    fn send(&mut self, command: &str, timeout: Duration) -> Result<(String, u32), ProverError> {
        writeln!(self.stdin, "{command}")
            .and_then(|_| self.stdin.flush())
            .map_err(|e| ProverError::BackendUnavailable(format!("write to toplevel: {e}")))?;
        self.read_reply(timeout)
    }
}

impl Drop for Toplevel {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub struct CoqtopSession {
    process: Toplevel,
    config: CoqtopConfig,
    theorem: TheoremStatement,
    state: ProofState,
    state_id: u32,
    /// Sentence, toplevel state number before it, proof state before it.
    history: Vec<(Sentence, u32, ProofState)>,
}

impl CoqtopSession {
    fn run(&mut self, sentence: &Sentence, command: &str, timeout: Duration) -> StepResult {
        let (out, new_id) = match self.process.send(command, timeout) {
            Ok(r) => r,
            Err(e) => return StepResult::Failed(e.to_string()),
        };
        if let Some(err) = error_text(&out) {
            return StepResult::Failed(err);
        }
        // Commands such as `Proof.` print no goal display; the goals are unchanged.
        let (goals, pending) =
            parse_goals(&out).unwrap_or_else(|| (self.state.goals.clone(), self.state.pending));
        let prev = std::mem::replace(
            &mut self.state,
            ProofState {
                goals,
                pending,
                depth: self.history.len() + 1,
            },
        );
        self.history.push((sentence.clone(), self.state_id, prev));
        self.state_id = new_id;
        StepResult::Advanced(self.state.clone())
    }
}

impl Session for CoqtopSession {
    fn theorem(&self) -> &TheoremStatement {
        &self.theorem
    }

    fn state(&self) -> &ProofState {
        &self.state
    }

    fn state_key(&self) -> String {
        self.history.len().to_string()
    }

    fn execute(&mut self, sentence: &Sentence) -> StepResult {
        let timeout = self.config.call_timeout;
        self.run(sentence, &sentence.raw, timeout)
    }

    fn execute_with_timeout(&mut self, sentence: &Sentence, timeout: Duration) -> StepResult {
        let secs = timeout.as_secs().max(1);
        let body = sentence.raw.trim_end_matches('.');
        let slack = timeout + self.config.call_timeout;
        self.run(sentence, &format!("Timeout {secs} {body}."), slack)
    }

    fn undo(&mut self) -> Result<ProofState, ProverError> {
        let (_, prev_id, prev_state) = self.history.pop().ok_or(ProverError::NothingToUndo)?;
        let (out, _) = self
            .process
            .send(&format!("BackTo {prev_id}."), self.config.call_timeout)?;
        if let Some(err) = error_text(&out) {
            return Err(ProverError::BackendUnavailable(format!(
                "BackTo failed: {err}"
            )));
        }
        self.state_id = prev_id;
        self.state = prev_state;
        Ok(self.state.clone())
    }

    fn is_complete(&self) -> bool {
        self.state.is_discharged()
    }

    fn try_hammer(&mut self, hints: &[String], timeout: Duration) -> Option<Vec<Sentence>> {
        // Focused goals only: a one-goal display does not report unfocused ones.
        let before = self.state.goals.len();
        if before == 0 {
            return None;
        }
        for template in self.config.hammer.candidates.clone() {
            let Ok(sentence) = Sentence::parse_one(&HammerConfig::expand(&template, hints)) else {
                continue;
            };
            if self.execute_with_timeout(&sentence, timeout).is_ok() {
                if self.state.goals.len() < before {
                    return Some(vec![sentence]);
                }
                // Automation that succeeds without closing the goal does not count.
                if self.undo().is_err() {
                    return None;
                }
            }
        }
        None
    }
}

/// Error message following `Error:` in a toplevel reply.
pub fn error_text(output: &str) -> Option<String> {
    let idx = output.find("Error:")?;
    let text = strip_tags(&output[idx + "Error:".len()..]);
    Some(text.split_whitespace().collect::<Vec<_>>().join(" "))
}

fn strip_tags(text: &str) -> String {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"</?(infomsg|warning|error)>").unwrap());
    re.replace_all(text, "").into_owned()
}

/// Parse the goal display printed after a command.
///
/// Returns focused goals and the number of unfocused ones. `None` when the
/// reply shows no goal display at all.
pub fn parse_goals(output: &str) -> Option<(Vec<Goal>, usize)> {
    static HEADER: OnceLock<Regex> = OnceLock::new();
    static UNFOCUSED: OnceLock<Regex> = OnceLock::new();
    let header = HEADER.get_or_init(|| Regex::new(r"(?m)^\s*(\d+) (?:sub)?goals?\b").unwrap());
    let unfocused = UNFOCUSED.get_or_init(|| Regex::new(r"(?m)^\s*(?:sub)?goal \d+ is:").unwrap());
    let text = strip_tags(output);

    if text.contains("No more goals") || text.contains("No more subgoals") {
        return Some((Vec::new(), 0));
    }
    if text.contains("This subproof is complete") || text.contains("There are unfocused goals") {
        let pending = unfocused.find_iter(&text).count().max(1);
        return Some((Vec::new(), pending));
    }
    let caps = header.captures(&text)?;
    let count: usize = caps[1].parse().ok()?;
    let body = &text[caps.get(0)?.end()..];

    let mut goals = Vec::new();
    let (first, rest) = match unfocused.find(body) {
        Some(m) => (&body[..m.start()], &body[m.start()..]),
        None => (body, ""),
    };
    let (context, conclusion) = first.split_once("====").unwrap_or(("", first));
    let conclusion = conclusion.trim_start_matches('=');
    goals.push(Goal {
        id: 0,
        hypotheses: parse_context(context),
        conclusion: collapse(conclusion),
    });
    let starts: Vec<_> = unfocused.find_iter(rest).collect();
    for (i, m) in starts.iter().enumerate() {
        let end = starts.get(i + 1).map_or(rest.len(), |n| n.start());
        goals.push(Goal {
            id: i + 1,
            hypotheses: Vec::new(),
            conclusion: collapse(&rest[m.end()..end]),
        });
    }
    // Goals the toplevel counted but did not print in full.
    while goals.len() < count {
        let id = goals.len();
        goals.push(Goal {
            id,
            hypotheses: Vec::new(),
            conclusion: String::from("?"),
        });
    }
    Some((goals, 0))
}

fn collapse(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn parse_context(context: &str) -> Vec<Hypothesis> {
    let mut lines: Vec<String> = Vec::new();
    for line in context.lines().filter(|l| !l.trim().is_empty()) {
        let starts_entry = line.split_once(':').is_some_and(|(names, _)| {
            names
                .split(',')
                .all(|n| !n.trim().is_empty() && !n.trim().contains(' '))
        });
        match lines.last_mut() {
            Some(prev) if !starts_entry => {
                prev.push(' ');
                prev.push_str(line.trim());
            }
            _ => lines.push(line.trim().to_string()),
        }
    }
    lines
        .iter()
        .filter_map(|l| Hypothesis::parse(l))
        .map(|h| Hypothesis {
            type_text: collapse(&h.type_text),
            ..h
        })
        .collect()
}

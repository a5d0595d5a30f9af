//! Prover backends.
//!
//! A [`Session`] drives one theorem: sentences are executed one at a time,
//! failures leave the state untouched, and every successful step can be
//! undone. Two backends exist: [`mock::MockBackend`], a state machine
//! replayed from a transcript fixture, and [`coqtop::CoqtopBackend`], which
//! talks to a real Coq toplevel.

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::script::Sentence;

pub mod coqtop;
pub mod mock;

pub use coqtop::{CoqtopBackend, CoqtopConfig};
pub use mock::{MockBackend, Transcript};

/// Default per-invocation hammer timeout.
pub const DEFAULT_HAMMER_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProverError {
    #[error("prover backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("theorem rejected: {0}")]
    TheoremRejected(String),
    #[error("nothing to undo")]
    NothingToUndo,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub names: Vec<String>,
    pub type_text: String,
}

impl Hypothesis {
    /// Parse a context line such as `n, m : nat` or `IHn: n + m = m + n`.
    pub fn parse(line: &str) -> Option<Hypothesis> {
        let (names, ty) = line.split_once(':')?;
        let names: Vec<String> = names
            .split(',')
            .map(|n| n.trim().to_string())
            .filter(|n| !n.is_empty())
            .collect();
        if names.is_empty() || names.iter().any(|n| n.contains(char::is_whitespace)) {
            return None;
        }
        Some(Hypothesis {
            names,
            type_text: ty.trim().to_string(),
        })
    }
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} : {}", self.names.join(", "), self.type_text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Goal {
    pub id: usize,
    pub hypotheses: Vec<Hypothesis>,
    pub conclusion: String,
}

impl Goal {
    pub fn local_names(&self) -> impl Iterator<Item = &str> {
        self.hypotheses
            .iter()
            .flat_map(|h| h.names.iter().map(String::as_str))
    }
}

/// Focused goals plus the count of goals that are open but out of focus
/// (e.g. sibling bullets not yet entered).
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ProofState {
    pub goals: Vec<Goal>,
    pub pending: usize,
    pub depth: usize,
}

impl ProofState {
    pub fn focused(&self) -> Option<&Goal> {
        self.goals.first()
    }

    pub fn open_goals(&self) -> usize {
        self.goals.len() + self.pending
    }

    pub fn is_discharged(&self) -> bool {
        self.open_goals() == 0
    }

    /// Names bound in the focused goal's local context.
    pub fn local_names(&self) -> Vec<String> {
        self.focused()
            .map(|g| g.local_names().map(str::to_string).collect())
            .unwrap_or_default()
    }

    /// Goal lists equal, ignoring depth.
    pub fn same_goals(&self, other: &ProofState) -> bool {
        self.goals == other.goals && self.pending == other.pending
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepResult {
    Advanced(ProofState),
    Failed(String),
}

impl StepResult {
    pub fn is_ok(&self) -> bool {
        matches!(self, StepResult::Advanced(_))
    }
}

/// Theorem header split into name and statement body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TheoremStatement {
    pub keyword: String,
    pub name: String,
    pub body: String,
}

const THEOREM_KEYWORDS: &[&str] = &[
    "Theorem",
    "Lemma",
    "Fact",
    "Remark",
    "Corollary",
    "Proposition",
    "Example",
];

impl TheoremStatement {
    pub fn parse(text: &str) -> Result<TheoremStatement, ProverError> {
        let text = text.trim();
        let reject = || ProverError::TheoremRejected(format!("not a theorem header: {text}"));
        let (keyword, rest) = text.split_once(char::is_whitespace).ok_or_else(reject)?;
        if !THEOREM_KEYWORDS.contains(&keyword) {
            return Err(reject());
        }
        let (name, body) = rest.split_once(':').ok_or_else(reject)?;
        let name = name.trim();
        let body = body.trim().strip_suffix('.').unwrap_or(body.trim()).trim();
        if name.is_empty() || body.is_empty() || name.contains(char::is_whitespace) {
            return Err(reject());
        }
        Ok(TheoremStatement {
            keyword: keyword.to_string(),
            name: name.to_string(),
            body: body.to_string(),
        })
    }

    pub fn header(&self) -> String {
        format!("{} {} : {}.", self.keyword, self.name, self.body)
    }
}

/// Ordered automation candidates tried by a live hammer call.
/// `{hints}` expands to the comma-separated premise list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HammerConfig {
    pub candidates: Vec<String>,
    pub timeout: Duration,
}

impl Default for HammerConfig {
    fn default() -> Self {
        HammerConfig {
            candidates: vec![
                "hfcrush use: {hints}.".to_string(),
                "hammer.".to_string(),
                "sauto.".to_string(),
                "auto.".to_string(),
            ],
            timeout: DEFAULT_HAMMER_TIMEOUT,
        }
    }
}

impl HammerConfig {
    /// Expand one candidate template; `use:` clauses vanish without hints.
    pub fn expand(template: &str, hints: &[String]) -> String {
        if hints.is_empty() {
            template.replace(" use: {hints}", "").replace("{hints}", "")
        } else {
            template.replace("{hints}", &hints.join(", "))
        }
    }
}

/// One live proof attempt. Single-owner; may move between threads.
pub trait Session: Send {
    fn theorem(&self) -> &TheoremStatement;

    fn state(&self) -> &ProofState;

    /// Identity of the current prover state, used to memoise hammer calls.
    fn state_key(&self) -> String;

    fn execute(&mut self, sentence: &Sentence) -> StepResult;

    fn execute_with_timeout(&mut self, sentence: &Sentence, _timeout: Duration) -> StepResult {
        self.execute(sentence)
    }

    fn undo(&mut self) -> Result<ProofState, ProverError>;

    fn is_complete(&self) -> bool;

    /// Try to close the focused goal with automation. On success the goal is
    /// discharged and the executed sentences are returned; on failure the
    /// state is unchanged.
    fn try_hammer(&mut self, hints: &[String], timeout: Duration) -> Option<Vec<Sentence>>;

    fn history_depth(&self) -> usize {
        self.state().depth
    }
}

/// Factory for sessions.
pub trait Backend: Send + Sync {
    fn start_session(&self, theorem_statement: &str) -> Result<Box<dyn Session>, ProverError>;
}

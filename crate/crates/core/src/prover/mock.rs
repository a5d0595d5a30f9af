//! Transcript-driven prover.
//!
//! A transcript names every proof state a theorem can reach and the
//! transitions between them, keyed by whitespace-normalised sentence text.
//! `Proof.` advances in place and `Qed.` is accepted exactly in the states
//! listed as complete, unless the transcript overrides either.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{
    Backend, Goal, Hypothesis, ProofState, ProverError, Session, StepResult, TheoremStatement,
};
use crate::script::{normalize, Sentence, SentenceKind};

pub const INCOMPLETE_PROOF_ERROR: &str =
    "Attempt to save an incomplete proof (there are remaining open goals).";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalSpec {
    #[serde(default)]
    pub hyps: Vec<String>,
    pub conclusion: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSpec {
    pub goals: Vec<GoalSpec>,
    #[serde(default)]
    pub pending: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Transition {
    To(String),
    Error { error: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HammerVerdict {
    Proof {
        proof: Vec<String>,
    },
    /// `"fail"` or `"timeout"`.
    Fail(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub theorem: String,
    pub statement: String,
    pub initial: String,
    pub states: BTreeMap<String, StateSpec>,
    #[serde(default)]
    pub transitions: BTreeMap<String, BTreeMap<String, Transition>>,
    #[serde(default)]
    pub hammer: BTreeMap<String, HammerVerdict>,
    #[serde(default)]
    pub complete: BTreeSet<String>,
    /// Error text for sentences with no declared transition.
    #[serde(default)]
    pub default_error: Option<String>,
}

impl Transcript {
    pub fn from_json(text: &str) -> Result<Transcript, ProverError> {
        let mut t: Transcript = serde_json::from_str(text)
            .map_err(|e| ProverError::BackendUnavailable(format!("bad transcript: {e}")))?;
        t.transitions = t
            .transitions
            .into_iter()
            .map(|(from, table)| {
                (
                    from,
                    table.into_iter().map(|(k, v)| (normalize(&k), v)).collect(),
                )
            })
            .collect();
        t.validate()?;
        Ok(t)
    }

    fn validate(&self) -> Result<(), ProverError> {
        let bad = |msg: String| {
            Err(ProverError::BackendUnavailable(format!(
                "transcript {}: {msg}",
                self.theorem
            )))
        };
        if !self.states.contains_key(&self.initial) {
            return bad(format!("unknown initial state {}", self.initial));
        }
        for (from, table) in &self.transitions {
            if !self.states.contains_key(from) {
                return bad(format!("transition from unknown state {from}"));
            }
            for target in table.values() {
                if let Transition::To(to) = target {
                    if !self.states.contains_key(to) {
                        return bad(format!("transition to unknown state {to}"));
                    }
                }
            }
        }
        for id in self.hammer.keys().chain(self.complete.iter()) {
            if !self.states.contains_key(id) {
                return bad(format!("unknown state {id}"));
            }
        }
        Ok(())
    }

    fn proof_state(&self, id: &str, depth: usize) -> ProofState {
        let spec = &self.states[id];
        let goals = spec
            .goals
            .iter()
            .enumerate()
            .map(|(i, g)| Goal {
                id: i,
                hypotheses: g.hyps.iter().filter_map(|h| Hypothesis::parse(h)).collect(),
                conclusion: g.conclusion.clone(),
            })
            .collect();
        ProofState {
            goals,
            pending: spec.pending,
            depth,
        }
    }

    fn step(&self, from: &str, sentence: &Sentence) -> Result<String, String> {
        let key = sentence.normalized();
        if let Some(t) = self.transitions.get(from).and_then(|table| table.get(&key)) {
            return match t {
                Transition::To(to) => Ok(to.clone()),
                Transition::Error { error } => Err(error.clone()),
            };
        }
        match sentence.kind {
            SentenceKind::ProofCmd => Ok(from.to_string()),
            SentenceKind::QedCmd if self.complete.contains(from) => Ok(from.to_string()),
            SentenceKind::QedCmd => Err(INCOMPLETE_PROOF_ERROR.to_string()),
            _ => Err(self.default_error.clone().unwrap_or_else(|| {
                format!("Mock transcript has no transition for `{key}` in state {from}.")
            })),
        }
    }
}

/// Backend over a set of transcripts keyed by theorem name.
#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    transcripts: HashMap<String, Arc<Transcript>>,
}

impl MockBackend {
    pub fn new(transcripts: impl IntoIterator<Item = Transcript>) -> MockBackend {
        MockBackend {
            transcripts: transcripts
                .into_iter()
                .map(|t| (t.theorem.clone(), Arc::new(t)))
                .collect(),
        }
    }

    /// Load every `*.json` file of a directory as a transcript.
    pub fn from_dir(dir: &Path) -> Result<MockBackend, ProverError> {
        let unavailable =
            |e: std::io::Error| ProverError::BackendUnavailable(format!("{}: {e}", dir.display()));
        let mut transcripts = Vec::new();
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(unavailable)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        for path in paths {
            let text = std::fs::read_to_string(&path).map_err(unavailable)?;
            transcripts.push(Transcript::from_json(&text)?);
        }
        Ok(MockBackend::new(transcripts))
    }

    pub fn transcript(&self, name: &str) -> Option<&Transcript> {
        self.transcripts.get(name).map(|t| t.as_ref())
    }

    pub fn start(&self, theorem_statement: &str) -> Result<MockSession, ProverError> {
        let theorem = TheoremStatement::parse(theorem_statement)?;
        let transcript = self
            .transcripts
            .get(&theorem.name)
            .ok_or_else(|| {
                ProverError::TheoremRejected(format!("no transcript for {}", theorem.name))
            })?
            .clone();
        let declared = TheoremStatement::parse(&transcript.statement)?;
        if normalize(&declared.body) != normalize(&theorem.body) {
            return Err(ProverError::TheoremRejected(format!(
                "statement of {} does not match its transcript",
                theorem.name
            )));
        }
        let current = transcript.initial.clone();
        let state = transcript.proof_state(&current, 0);
        Ok(MockSession {
            transcript,
            theorem,
            current,
            state,
            history: Vec::new(),
            hammer_calls: 0,
        })
    }
}

impl Backend for MockBackend {
    fn start_session(&self, theorem_statement: &str) -> Result<Box<dyn Session>, ProverError> {
        Ok(Box::new(self.start(theorem_statement)?))
    }
}

#[derive(Debug, Clone)]
pub struct MockSession {
    transcript: Arc<Transcript>,
    theorem: TheoremStatement,
    current: String,
    state: ProofState,
    history: Vec<(Sentence, String)>,
    hammer_calls: usize,
}

impl MockSession {
    pub fn state_id(&self) -> &str {
        &self.current
    }

    /// State ids visited so far, oldest first, including the current one.
    pub fn visited(&self) -> Vec<&str> {
        self.history
            .iter()
            .map(|(_, id)| id.as_str())
            .chain(std::iter::once(self.current.as_str()))
            .collect()
    }

    pub fn hammer_calls(&self) -> usize {
        self.hammer_calls
    }

    pub fn history(&self) -> impl Iterator<Item = &Sentence> {
        self.history.iter().map(|(s, _)| s)
    }
}

impl Session for MockSession {
    fn theorem(&self) -> &TheoremStatement {
        &self.theorem
    }

    fn state(&self) -> &ProofState {
        &self.state
    }

    fn state_key(&self) -> String {
        self.current.clone()
    }

    fn execute(&mut self, sentence: &Sentence) -> StepResult {
        match self.transcript.step(&self.current, sentence) {
            Ok(next) => {
                let prev = std::mem::replace(&mut self.current, next);
                self.history.push((sentence.clone(), prev));
                self.state = self
                    .transcript
                    .proof_state(&self.current, self.history.len());
                StepResult::Advanced(self.state.clone())
            }
            Err(error) => StepResult::Failed(error),
        }
    }

    fn undo(&mut self) -> Result<ProofState, ProverError> {
        let (_, prev) = self.history.pop().ok_or(ProverError::NothingToUndo)?;
        self.current = prev;
        self.state = self
            .transcript
            .proof_state(&self.current, self.history.len());
        Ok(self.state.clone())
    }

    fn is_complete(&self) -> bool {
        self.state.is_discharged() && self.transcript.complete.contains(&self.current)
    }

    fn try_hammer(&mut self, _hints: &[String], _timeout: Duration) -> Option<Vec<Sentence>> {
        self.hammer_calls += 1;
        if self.state.goals.is_empty() {
            return None;
        }
        let Some(HammerVerdict::Proof { proof }) =
            self.transcript.hammer.get(&self.current).cloned()
        else {
            return None;
        };
        let mut executed = Vec::new();
        for text in &proof {
            let ok = Sentence::parse_one(text)
                .ok()
                .filter(|s| self.execute(s).is_ok());
            match ok {
                Some(s) => executed.push(s),
                None => {
                    log::warn!(
                        "hammer proof `{text}` from state {} does not replay",
                        self.current
                    );
                    for _ in 0..executed.len() {
                        let _ = self.undo();
                    }
                    return None;
                }
            }
        }
        Some(executed)
    }
}

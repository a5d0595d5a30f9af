//! Hammer-driven backtracking over the executed-sentence trace.
//!
//! When a goal cannot be repaired, the hammer is tried on the current goal;
//! on failure the last sentence is undone and the hammer tried again. Undoing
//! back onto a bullet means that whole branch is hopeless, so the tactic that
//! opened the branch and everything after it is discarded at once.

use std::collections::HashSet;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prover::{ProofState, ProverError, Session, StepResult, TheoremStatement};
use crate::script::{Sentence, SentenceKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BacktrackError {
    #[error("no multi-goal tactic opens the current bullet")]
    NoRoot,
    #[error("trace and session out of sync: {0}")]
    Desync(ProverError),
}

/// One successfully executed sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub sentence: Sentence,
    /// Session history depth before the sentence ran.
    pub pre_state_depth: usize,
    /// Open goals after, minus open goals before, plus one.
    pub produced_goals: usize,
    /// Number of open bullet (or brace) levels once the sentence has run.
    pub bullet_depth: usize,
    bullets: Vec<String>,
}

/// Stack of executed sentences mirroring the session history.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    entries: Vec<TraceEntry>,
}

fn next_bullets(current: &[String], sentence: &Sentence) -> Vec<String> {
    let mut stack = current.to_vec();
    match sentence.kind {
        SentenceKind::Bullet => {
            let floor = stack.iter().rposition(|b| b == "{").map_or(0, |i| i + 1);
            if let Some(i) = stack[floor..].iter().position(|b| *b == sentence.raw) {
                stack.truncate(floor + i);
            }
            stack.push(sentence.raw.clone());
        }
        SentenceKind::BraceOpen => stack.push("{".to_string()),
        SentenceKind::BraceClose => {
            if let Some(i) = stack.iter().rposition(|b| b == "{") {
                stack.truncate(i);
            }
        }
        _ => {}
    }
    stack
}

impl ExecutionTrace {
    pub fn new() -> ExecutionTrace {
        ExecutionTrace::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[TraceEntry] {
        &self.entries
    }

    pub fn last(&self) -> Option<&TraceEntry> {
        self.entries.last()
    }

    /// The proof built so far, in execution order.
    pub fn accepted(&self) -> Vec<Sentence> {
        self.entries.iter().map(|e| e.sentence.clone()).collect()
    }

    /// Open bullet levels at the top of the trace, outermost first.
    pub fn bullets(&self) -> &[String] {
        self.entries.last().map_or(&[], |e| &e.bullets)
    }

    pub fn bullet_depth(&self) -> usize {
        self.bullets().len()
    }

    /// Depth a bullet sentence would occupy if executed now.
    pub fn resolve_bullet_depth(&self, sentence: &Sentence) -> usize {
        next_bullets(self.bullets(), sentence).len()
    }

    pub fn record(&mut self, sentence: &Sentence, before: &ProofState, after: &ProofState) {
        let bullets = next_bullets(self.bullets(), sentence);
        self.entries.push(TraceEntry {
            sentence: sentence.clone(),
            pre_state_depth: before.depth,
            produced_goals: (after.open_goals() + 1).saturating_sub(before.open_goals()),
            bullet_depth: bullets.len(),
            bullets,
        });
    }

    pub fn pop(&mut self) -> Option<TraceEntry> {
        self.entries.pop()
    }
}

/// Index of the tactic that opened the bullet at the top of the trace.
pub fn find_root(trace: &ExecutionTrace) -> Result<usize, BacktrackError> {
    let last = trace
        .last()
        .filter(|e| e.sentence.is_bullet())
        .ok_or(BacktrackError::NoRoot)?;
    let parent = last
        .bullet_depth
        .checked_sub(1)
        .ok_or(BacktrackError::NoRoot)?;
    trace.entries[..trace.len() - 1]
        .iter()
        .rposition(|e| e.produced_goals > 1 && e.bullet_depth == parent)
        .ok_or(BacktrackError::NoRoot)
}

/// Undo every entry from the top down to and including `root`.
pub fn discard_subtree(
    session: &mut dyn Session,
    trace: &mut ExecutionTrace,
    root: usize,
) -> Result<Vec<Sentence>, BacktrackError> {
    let mut removed = Vec::new();
    while trace.len() > root {
        session.undo().map_err(BacktrackError::Desync)?;
        removed.push(trace.pop().expect("length checked").sentence);
    }
    removed.reverse();
    Ok(removed)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum BacktrackEvent {
    HammerFailed { state: String },
    HammerSucceeded { state: String, proof: Vec<String> },
    Undo { sentence: String },
    BulletHit { bullet: String },
    Discard { root: String, removed: Vec<String> },
    NoRoot { bullet: String },
    Exhausted,
    BudgetExceeded,
    Desync { error: String },
}

#[derive(Debug, Clone)]
pub struct BacktrackConfig {
    /// Premise names offered to the hammer.
    pub hints: Vec<String>,
    pub timeout: Duration,
    /// No new hammer call starts after this instant.
    pub deadline: Option<Instant>,
}

impl Default for BacktrackConfig {
    fn default() -> Self {
        BacktrackConfig {
            hints: Vec::new(),
            timeout: crate::prover::DEFAULT_HAMMER_TIMEOUT,
            deadline: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BacktrackOutcome {
    /// Hammer proof that closed the goal, already executed and traced.
    pub proof: Option<Vec<Sentence>>,
    pub events: Vec<BacktrackEvent>,
    /// Shallowest bullet depth of any discarded root.
    pub discarded_depth: Option<usize>,
    pub hammer_calls: usize,
}

/// Try the hammer, undo, repeat; discard whole branches on bullets.
pub fn backtrack(
    session: &mut dyn Session,
    trace: &mut ExecutionTrace,
    cfg: &BacktrackConfig,
) -> BacktrackOutcome {
    let mut out = BacktrackOutcome::default();
    let mut tried = HashSet::new();
    while let Some(last) = trace.last().cloned() {
        if cfg.deadline.is_some_and(|d| Instant::now() >= d) {
            out.events.push(BacktrackEvent::BudgetExceeded);
            return out;
        }
        let key = session.state_key();
        if !session.state().goals.is_empty() && tried.insert(key.clone()) {
            out.hammer_calls += 1;
            let before = session.state().clone();
            if let Some(proof) = session.try_hammer(&cfg.hints, cfg.timeout) {
                let after = session.state().clone();
                for (i, s) in proof.iter().enumerate() {
                    let post = if i + 1 == proof.len() {
                        &after
                    } else {
                        &before
                    };
                    trace.record(s, &before, post);
                }
                log::debug!("hammer closed state {key}");
                out.events.push(BacktrackEvent::HammerSucceeded {
                    state: key,
                    proof: proof.iter().map(|s| s.raw.clone()).collect(),
                });
                out.proof = Some(proof);
                return out;
            }
            out.events.push(BacktrackEvent::HammerFailed { state: key });
        }

        let step = if last.sentence.is_bullet() {
            out.events.push(BacktrackEvent::BulletHit {
                bullet: last.sentence.raw.clone(),
            });
            match find_root(trace) {
                Ok(root) => {
                    let depth = trace.entries[root].bullet_depth;
                    discard_subtree(session, trace, root).map(|removed| {
                        out.discarded_depth =
                            Some(out.discarded_depth.map_or(depth, |d| d.min(depth)));
                        out.events.push(BacktrackEvent::Discard {
                            root: removed[0].raw.clone(),
                            removed: removed.iter().map(|s| s.raw.clone()).collect(),
                        });
                    })
                }
                Err(_) => {
                    out.events.push(BacktrackEvent::NoRoot {
                        bullet: last.sentence.raw.clone(),
                    });
                    undo_one(session, trace).map(|_| ())
                }
            }
        } else {
            undo_one(session, trace)
                .map(|s| out.events.push(BacktrackEvent::Undo { sentence: s.raw }))
        };
        if let Err(e) = step {
            out.events.push(BacktrackEvent::Desync {
                error: e.to_string(),
            });
            return out;
        }
    }
    out.events.push(BacktrackEvent::Exhausted);
    out
}

fn undo_one(
    session: &mut dyn Session,
    trace: &mut ExecutionTrace,
) -> Result<Sentence, BacktrackError> {
    session.undo().map_err(BacktrackError::Desync)?;
    Ok(trace.pop().expect("trace non-empty").sentence)
}

/// A session view that keeps an [`ExecutionTrace`] in step with every
/// successful execute, undo and hammer call.
pub struct TracedSession<'a> {
    inner: &'a mut dyn Session,
    trace: &'a mut ExecutionTrace,
}

impl<'a> TracedSession<'a> {
    pub fn new(inner: &'a mut dyn Session, trace: &'a mut ExecutionTrace) -> TracedSession<'a> {
        TracedSession { inner, trace }
    }
}

impl Session for TracedSession<'_> {
    fn theorem(&self) -> &TheoremStatement {
        self.inner.theorem()
    }

    fn state(&self) -> &ProofState {
        self.inner.state()
    }

    fn state_key(&self) -> String {
        self.inner.state_key()
    }

    fn execute(&mut self, sentence: &Sentence) -> StepResult {
        let before = self.inner.state().clone();
        let result = self.inner.execute(sentence);
        if let StepResult::Advanced(after) = &result {
            self.trace.record(sentence, &before, after);
        }
        result
    }

    fn execute_with_timeout(&mut self, sentence: &Sentence, timeout: Duration) -> StepResult {
        let before = self.inner.state().clone();
        let result = self.inner.execute_with_timeout(sentence, timeout);
        if let StepResult::Advanced(after) = &result {
            self.trace.record(sentence, &before, after);
        }
        result
    }

    fn undo(&mut self) -> Result<ProofState, ProverError> {
        let state = self.inner.undo()?;
        self.trace.pop();
        Ok(state)
    }

    fn is_complete(&self) -> bool {
        self.inner.is_complete()
    }

    fn try_hammer(&mut self, hints: &[String], timeout: Duration) -> Option<Vec<Sentence>> {
        let before = self.inner.state().clone();
        let proof = self.inner.try_hammer(hints, timeout)?;
        let after = self.inner.state().clone();
        for (i, s) in proof.iter().enumerate() {
            self.trace.record(
                s,
                &before,
                if i + 1 == proof.len() {
                    &after
                } else {
                    &before
                },
            );
        }
        Some(proof)
    }

    fn history_depth(&self) -> usize {
        self.inner.history_depth()
    }
}

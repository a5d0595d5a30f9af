//! Targeted repairs for a failing sentence.
//!
//! Each mechanism either executes a replacement successfully or leaves the
//! session exactly as it found it.

use std::collections::HashSet;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::errors::{ErrorCategory, ErrorFacts};
use crate::prover::{ProofState, Session, StepResult};
use crate::retrieval::rank_names;
use crate::script::{as_tactic, is_ident_char, Sentence};

/// Upper bound on substitutions tried by reference replacement.
pub const DEFAULT_MAX_REPLACEMENTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mechanism {
    ReferenceReplacement,
    Renaming,
    BulletTransformation,
    PremiseAugmentation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RepairStatus {
    /// The replacement sentences ran successfully, in this order.
    Repaired(Vec<Sentence>),
    /// The failing sentence is removed from the script.
    Dropped,
    NotRepaired,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairOutcome {
    pub status: RepairStatus,
    /// Sentences executed while searching for a fix.
    pub attempts: usize,
    pub mechanism: Option<Mechanism>,
}

impl RepairOutcome {
    fn not_repaired(mechanism: Option<Mechanism>, attempts: usize) -> RepairOutcome {
        RepairOutcome {
            status: RepairStatus::NotRepaired,
            attempts,
            mechanism,
        }
    }

    pub fn is_repaired(&self) -> bool {
        !matches!(self.status, RepairStatus::NotRepaired)
    }
}

#[derive(Debug, Clone)]
pub struct RepairContext {
    /// Names of retrieved premises, best first.
    pub premises: Vec<String>,
    pub max_replacements: usize,
    pub qsimpl_timeout: Duration,
    /// Mechanisms switched off, for ablation runs.
    pub disabled: Vec<Mechanism>,
}

impl Default for RepairContext {
    fn default() -> Self {
        RepairContext {
            premises: Vec::new(),
            max_replacements: DEFAULT_MAX_REPLACEMENTS,
            qsimpl_timeout: crate::prover::DEFAULT_HAMMER_TIMEOUT,
            disabled: Vec::new(),
        }
    }
}

/// The mechanism responsible for an error category, if any.
pub fn mechanism_for(category: ErrorCategory) -> Option<Mechanism> {
    match category {
        ErrorCategory::InvalidReference => Some(Mechanism::ReferenceReplacement),
        ErrorCategory::RedundantIntroduction => Some(Mechanism::Renaming),
        ErrorCategory::BulletMisuse => Some(Mechanism::BulletTransformation),
        ErrorCategory::WrongTheoremApplication
        | ErrorCategory::IncorrectRewrite
        | ErrorCategory::TacticMisuse => Some(Mechanism::PremiseAugmentation),
        ErrorCategory::Miscellaneous | ErrorCategory::Unknown => None,
    }
}

pub fn repair(
    facts: &ErrorFacts,
    failing: &Sentence,
    session: &mut dyn Session,
    ctx: &RepairContext,
) -> RepairOutcome {
    let Some(mechanism) = mechanism_for(facts.category) else {
        return RepairOutcome::not_repaired(None, 0);
    };
    if ctx.disabled.contains(&mechanism) {
        return RepairOutcome::not_repaired(Some(mechanism), 0);
    }
    match mechanism {
        Mechanism::ReferenceReplacement => {
            let Some(bad) = facts.bad_reference.as_deref() else {
                return RepairOutcome::not_repaired(Some(mechanism), 0);
            };
            let mut candidates = ctx.premises.clone();
            candidates.extend(session.state().local_names());
            replace_reference(failing, bad, &candidates, session, ctx.max_replacements)
        }
        Mechanism::Renaming => {
            let state = session.state().clone();
            rename_intro(failing, &state, session)
        }
        Mechanism::BulletTransformation => transform_bullet(facts, failing, session),
        Mechanism::PremiseAugmentation => match facts.misused_theorem.as_deref() {
            Some(name) => augment_premise(name, session, ctx.qsimpl_timeout),
            None => RepairOutcome::not_repaired(Some(mechanism), 0),
        },
    }
}

/// Replace whole-identifier occurrences of `bad` in `text`.
/// Returns `None` when `bad` does not occur.
pub fn substitute_identifier(text: &str, bad: &str, replacement: &str) -> Option<String> {
    if bad.is_empty() {
        return None;
    }
    let bytes = text.as_bytes();
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    let mut found = false;
    for (start, _) in text.match_indices(bad) {
        if start < last {
            continue;
        }
        let end = start + bad.len();
        let before_ok = text[..start]
            .chars()
            .next_back()
            .is_none_or(|c| !is_ident_char(c) && c != '.');
        let after_ok = match text[end..].chars().next() {
            None => true,
            Some('.') => bytes
                .get(end + 1)
                .is_none_or(|b| !is_ident_char(*b as char)),
            Some(c) => !is_ident_char(c),
        };
        if before_ok && after_ok {
            out.push_str(&text[last..start]);
            out.push_str(replacement);
            last = end;
            found = true;
        }
    }
    if !found {
        return None;
    }
    out.push_str(&text[last..]);
    Some(out)
}

/// Try similarly named candidates in place of an unknown reference.
pub fn replace_reference(
    failing: &Sentence,
    bad: &str,
    candidates: &[String],
    session: &mut dyn Session,
    max_attempts: usize,
) -> RepairOutcome {
    let mechanism = Some(Mechanism::ReferenceReplacement);
    let mut attempts = 0;
    for candidate in rank_names(candidates, bad)
        .iter()
        .filter(|c| c.as_str() != bad)
    {
        if attempts >= max_attempts {
            break;
        }
        let Some(text) = substitute_identifier(&failing.raw, bad, candidate) else {
            return RepairOutcome::not_repaired(mechanism, attempts);
        };
        let Ok(sentence) = Sentence::parse_one(&text) else {
            continue;
        };
        attempts += 1;
        if session.execute(&sentence).is_ok() {
            return RepairOutcome {
                status: RepairStatus::Repaired(vec![sentence]),
                attempts,
                mechanism,
            };
        }
    }
    RepairOutcome::not_repaired(mechanism, attempts)
}

/// Append apostrophes to `name` until it is not in `taken`.
pub fn fresh_name(name: &str, taken: &HashSet<String>) -> String {
    let mut candidate = name.to_string();
    while taken.contains(&candidate) {
        candidate.push('\'');
    }
    candidate
}

/// Rename clashing `intros` names; drop the sentence when none clash.
pub fn rename_intro(
    failing: &Sentence,
    state: &ProofState,
    session: &mut dyn Session,
) -> RepairOutcome {
    let mechanism = Some(Mechanism::Renaming);
    let tactic = as_tactic(failing);
    if tactic.head != "intros" && tactic.head != "intro" {
        return RepairOutcome::not_repaired(mechanism, 0);
    }
    let local: HashSet<String> = state.local_names().into_iter().collect();
    let names: Vec<&str> = tactic.identifier_args().collect();
    if !names.iter().any(|n| local.contains(*n)) {
        return RepairOutcome {
            status: RepairStatus::Dropped,
            attempts: 0,
            mechanism,
        };
    }
    let mut taken: HashSet<String> = local
        .iter()
        .cloned()
        .chain(names.iter().map(|n| n.to_string()))
        .collect();
    let mut text = failing.raw.clone();
    for name in names.iter().filter(|n| local.contains(**n)) {
        let fresh = fresh_name(name, &taken);
        taken.insert(fresh.clone());
        text = substitute_identifier(&text, name, &fresh).unwrap_or(text);
    }
    let Ok(sentence) = Sentence::parse_one(&text) else {
        return RepairOutcome::not_repaired(mechanism, 0);
    };
    match session.execute(&sentence) {
        StepResult::Advanced(_) => RepairOutcome {
            status: RepairStatus::Repaired(vec![sentence]),
            attempts: 1,
            mechanism,
        },
        StepResult::Failed(_) => RepairOutcome::not_repaired(mechanism, 1),
    }
}

/// Use the bullet the prover asked for. A misplaced bullet is swapped; a
/// tactic issued where a bullet is required gets the bullet in front.
pub fn transform_bullet(
    facts: &ErrorFacts,
    failing: &Sentence,
    session: &mut dyn Session,
) -> RepairOutcome {
    let mechanism = Some(Mechanism::BulletTransformation);
    if facts.unfinished_bullet {
        return RepairOutcome::not_repaired(mechanism, 0);
    }
    let Some(bullet) = facts
        .expected_bullet
        .as_deref()
        .and_then(|b| Sentence::parse_one(b).ok())
    else {
        return RepairOutcome::not_repaired(mechanism, 0);
    };
    if !bullet.is_bullet() {
        return RepairOutcome::not_repaired(mechanism, 0);
    }
    let replacement = if failing.is_bullet() {
        vec![bullet]
    } else {
        vec![bullet, failing.clone()]
    };
    let mut executed = 0;
    for s in &replacement {
        if !session.execute(s).is_ok() {
            for _ in 0..executed {
                let _ = session.undo();
            }
            return RepairOutcome::not_repaired(mechanism, executed + 1);
        }
        executed += 1;
    }
    RepairOutcome {
        status: RepairStatus::Repaired(replacement),
        attempts: executed,
        mechanism,
    }
}

/// Run `qsimpl use: <misused>.` in place of the failing sentence.
pub fn augment_premise(
    misused: &str,
    session: &mut dyn Session,
    timeout: Duration,
) -> RepairOutcome {
    let mechanism = Some(Mechanism::PremiseAugmentation);
    let Ok(sentence) = Sentence::parse_one(&format!("qsimpl use: {misused}.")) else {
        return RepairOutcome::not_repaired(mechanism, 0);
    };
    let before = session.state().clone();
    match session.execute_with_timeout(&sentence, timeout) {
        StepResult::Advanced(after) if !after.same_goals(&before) => RepairOutcome {
            status: RepairStatus::Repaired(vec![sentence]),
            attempts: 1,
            mechanism,
        },
        StepResult::Advanced(_) => {
            let _ = session.undo();
            RepairOutcome::not_repaired(mechanism, 1)
        }
        StepResult::Failed(_) => RepairOutcome::not_repaired(mechanism, 1),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn substitution_respects_identifier_boundaries() {
        assert_eq!(
            substitute_identifier(
                "apply in_remove_all.",
                "in_remove_all",
                "in_remove_all_preserve"
            )
            .unwrap(),
            "apply in_remove_all_preserve."
        );
        assert_eq!(substitute_identifier("apply H0.", "H", "H1"), None);
        assert_eq!(
            substitute_identifier("apply Z.le_refl.", "le_refl", "x"),
            None
        );
        assert_eq!(
            substitute_identifier("rewrite H in H.", "H", "K").unwrap(),
            "rewrite K in K."
        );
        assert_eq!(substitute_identifier("apply H'.", "H", "K"), None);
    }

    #[test]
    fn fresh_names_gain_apostrophes() {
        let taken: HashSet<String> = ["H", "H'"].iter().map(|s| s.to_string()).collect();
        assert_eq!(fresh_name("H", &taken), "H''");
        assert_eq!(fresh_name("n", &taken), "n");
    }

    #[test]
    fn dispatch_table() {
        use ErrorCategory::*;
        assert_eq!(
            mechanism_for(InvalidReference),
            Some(Mechanism::ReferenceReplacement)
        );
        assert_eq!(
            mechanism_for(RedundantIntroduction),
            Some(Mechanism::Renaming)
        );
        assert_eq!(
            mechanism_for(BulletMisuse),
            Some(Mechanism::BulletTransformation)
        );
        for c in [WrongTheoremApplication, IncorrectRewrite, TacticMisuse] {
            assert_eq!(mechanism_for(c), Some(Mechanism::PremiseAugmentation));
        }
        assert_eq!(mechanism_for(Miscellaneous), None);
        assert_eq!(mechanism_for(Unknown), None);
    }

    proptest! {
        #[test]
        fn fresh_name_never_collides(base in "[A-Za-z][A-Za-z0-9_]{0,4}", primes in 0usize..4, extra in proptest::collection::vec("[A-Za-z][A-Za-z0-9_']{0,5}", 0..6)) {
            let mut taken: HashSet<String> = extra.into_iter().collect();
            for i in 0..=primes {
                taken.insert(format!("{base}{}", "'".repeat(i)));
            }
            let fresh = fresh_name(&base, &taken);
            prop_assert!(!taken.contains(&fresh));
            prop_assert!(fresh.starts_with(&base));
        }
    }
}

//! Prover error classification.
//!
//! Messages are matched against an ordered rule table; the first rule whose
//! pattern matches (and whose tactic-head filter, if any, admits the failing
//! tactic) decides the category. Unmatched messages are `Unknown`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::script::Tactic;

const DEFAULT_RULES: &str = include_str!("../data/error_rules.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ErrorCategory {
    WrongTheoremApplication,
    InvalidReference,
    IncorrectRewrite,
    RedundantIntroduction,
    TacticMisuse,
    BulletMisuse,
    Miscellaneous,
    Unknown,
}

impl ErrorCategory {
    pub const ALL: [ErrorCategory; 8] = [
        ErrorCategory::WrongTheoremApplication,
        ErrorCategory::InvalidReference,
        ErrorCategory::IncorrectRewrite,
        ErrorCategory::RedundantIntroduction,
        ErrorCategory::TacticMisuse,
        ErrorCategory::BulletMisuse,
        ErrorCategory::Miscellaneous,
        ErrorCategory::Unknown,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ErrorCategory::WrongTheoremApplication => "Wrong theorem application",
            ErrorCategory::InvalidReference => "Invalid reference",
            ErrorCategory::IncorrectRewrite => "Incorrect rewrite",
            ErrorCategory::RedundantIntroduction => "Redundant introductions",
            ErrorCategory::TacticMisuse => "Tactic misuse",
            ErrorCategory::BulletMisuse => "Bullet misuse",
            ErrorCategory::Miscellaneous => "Miscellaneous errors",
            ErrorCategory::Unknown => "Unknown",
        }
    }
}

impl fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ErrorCategory {
    type Err = RuleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ErrorCategory::ALL
            .into_iter()
            .find(|c| format!("{c:?}") == s)
            .ok_or_else(|| RuleError::Invalid(format!("unknown category {s}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorFacts {
    pub category: ErrorCategory,
    pub bad_reference: Option<String>,
    pub expected_bullet: Option<String>,
    pub unfinished_bullet: bool,
    pub misused_theorem: Option<String>,
}

impl ErrorFacts {
    pub fn unknown() -> ErrorFacts {
        ErrorFacts {
            category: ErrorCategory::Unknown,
            bad_reference: None,
            expected_bullet: None,
            unfinished_bullet: false,
            misused_theorem: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("cannot read rule table: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed rule table: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid rule: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RuleSpec {
    /// Wildcard pattern: `*` matches any text, `{reference}` an identifier,
    /// `{bullet}` a bullet. Matched anywhere in the normalised message.
    pub pattern: String,
    pub category: ErrorCategory,
    #[serde(default)]
    pub heads: Vec<String>,
    #[serde(default)]
    pub unfinished_bullet: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RuleFile {
    version: String,
    rules: Vec<RuleSpec>,
}

#[derive(Debug, Clone)]
struct Rule {
    spec: RuleSpec,
    regex: Regex,
}

#[derive(Debug, Clone)]
pub struct RuleTable {
    pub version: String,
    rules: Vec<Rule>,
}

impl Default for RuleTable {
    fn default() -> Self {
        RuleTable::from_json(DEFAULT_RULES).expect("bundled rule table is valid")
    }
}

/// Unify quote styles and collapse whitespace so patterns need not care
/// which Coq version produced the message. Plain apostrophes are kept since
/// they occur in identifiers such as `H'`.
pub fn normalize_message(text: &str) -> String {
    let unified: String = text
        .chars()
        .map(|c| match c {
            '\u{2018}' | '\u{2019}' | '\u{201c}' | '\u{201d}' | '`' => '"',
            c => c,
        })
        .collect();
    unified.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn compile_pattern(pattern: &str) -> Result<Regex, RuleError> {
    let pattern = normalize_message(pattern);
    let mut re = String::new();
    let mut rest = pattern.as_str();
    while !rest.is_empty() {
        if let Some(r) = rest.strip_prefix('*') {
            re.push_str(".*?");
            rest = r;
        } else if let Some(r) = rest.strip_prefix("{reference}") {
            re.push_str(r"(?P<reference>[A-Za-z_][\w'.]*)");
            rest = r;
        } else if let Some(r) = rest.strip_prefix("{bullet}") {
            re.push_str(r"(?P<bullet>[-+*]+)");
            rest = r;
        } else {
            let end = rest[1..].find(['*', '{']).map_or(rest.len(), |i| i + 1);
            re.push_str(&regex::escape(&rest[..end]));
            rest = &rest[end..];
        }
    }
    Regex::new(&re).map_err(|e| RuleError::Invalid(e.to_string()))
}

impl RuleTable {
    pub fn from_json(text: &str) -> Result<RuleTable, RuleError> {
        let file: RuleFile = serde_json::from_str(text)?;
        RuleTable::new(file.version, file.rules)
    }

    pub fn load(path: &Path) -> Result<RuleTable, RuleError> {
        RuleTable::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn new(version: String, specs: Vec<RuleSpec>) -> Result<RuleTable, RuleError> {
        let rules = specs
            .into_iter()
            .map(|spec| {
                Ok(Rule {
                    regex: compile_pattern(&spec.pattern)?,
                    spec,
                })
            })
            .collect::<Result<_, RuleError>>()?;
        Ok(RuleTable { version, rules })
    }

    pub fn classify(&self, error_text: &str, failing: &Tactic) -> ErrorFacts {
        let message = normalize_message(error_text);
        for rule in &self.rules {
            if !rule.spec.heads.is_empty() && !rule.spec.heads.iter().any(|h| h == &failing.head) {
                continue;
            }
            let Some(caps) = rule.regex.captures(&message) else {
                continue;
            };
            let category = rule.spec.category;
            let capture = |name: &str| {
                caps.name(name)
                    .map(|m| m.as_str().trim_end_matches('.').to_string())
                    .filter(|s| !s.is_empty())
            };
            let misused_theorem = match category {
                ErrorCategory::WrongTheoremApplication
                | ErrorCategory::IncorrectRewrite
                | ErrorCategory::TacticMisuse => {
                    failing.identifier_args().next().map(str::to_string)
                }
                _ => None,
            };
            return ErrorFacts {
                category,
                bad_reference: (category == ErrorCategory::InvalidReference)
                    .then(|| capture("reference"))
                    .flatten(),
                expected_bullet: (category == ErrorCategory::BulletMisuse)
                    .then(|| capture("bullet"))
                    .flatten(),
                unfinished_bullet: category == ErrorCategory::BulletMisuse
                    && rule.spec.unfinished_bullet,
                misused_theorem,
            };
        }
        ErrorFacts::unknown()
    }
}

/// Classify with the bundled rule table.
pub fn classify(error_text: &str, failing: &Tactic) -> ErrorFacts {
    thread_local! {
        static TABLE: RuleTable = RuleTable::default();
    }
    TABLE.with(|t| t.classify(error_text, failing))
}

/// Occurrence count per category; every category is present.
pub fn category_histogram<'a>(
    events: impl IntoIterator<Item = &'a ErrorFacts>,
) -> BTreeMap<ErrorCategory, usize> {
    let mut hist: BTreeMap<ErrorCategory, usize> =
        ErrorCategory::ALL.iter().map(|c| (*c, 0)).collect();
    for e in events {
        *hist.entry(e.category).or_default() += 1;
    }
    hist
}

/// Plain-text table of counts and percentages (one decimal), categories with
/// zero occurrences of `Unknown` omitted.
pub fn render_histogram(hist: &BTreeMap<ErrorCategory, usize>) -> String {
    let total: usize = hist.values().sum();
    let mut out = format!("{:<28}{:>8}{:>12}\n", "Type", "Count", "Percent");
    for (cat, n) in hist {
        if *cat == ErrorCategory::Unknown && *n == 0 {
            continue;
        }
        out.push_str(&format!(
            "{:<28}{:>8}{:>12}\n",
            cat.label(),
            n,
            percent(*n, total)
        ));
    }
    out.push_str(&format!(
        "{:<28}{:>8}{:>12}\n",
        "Total",
        total,
        percent(total, total)
    ));
    out
}

pub fn percent(n: usize, total: usize) -> String {
    if total == 0 {
        return "0.0".to_string();
    }
    format!("{:.1}", n as f64 * 100.0 / total as f64)
}

//! Coq proof-script segmentation.
//!
//! A script is cut into sentences: tactics and vernacular commands ending in
//! a terminating `.`, bullets (`-`, `+`, `*`, possibly repeated) and goal
//! braces. Comments are dropped; string literals are kept verbatim.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScriptError {
    #[error("unterminated comment starting at byte {offset}")]
    UnterminatedComment { offset: usize },
    #[error("unterminated string literal starting at byte {offset}")]
    UnterminatedString { offset: usize },
    #[error("sentence starting at byte {offset} has no terminating '.'")]
    MissingTerminator { offset: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SentenceKind {
    Bullet,
    Tactic,
    ProofCmd,
    QedCmd,
    AbortCmd,
    BraceOpen,
    BraceClose,
}

impl SentenceKind {
    pub fn is_structural(self) -> bool {
        matches!(
            self,
            SentenceKind::Bullet
                | SentenceKind::BraceOpen
                | SentenceKind::BraceClose
                | SentenceKind::QedCmd
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub raw: String,
    pub kind: SentenceKind,
    /// Byte offsets `(start, end)` into the source the sentence was split from.
    pub span: (usize, usize),
}

impl Sentence {
    /// Build a sentence from standalone text, e.g. a repaired tactic.
    /// The text must hold exactly one sentence.
    pub fn parse_one(text: &str) -> Result<Sentence, ScriptError> {
        let mut sentences = split_sentences(text)?;
        match sentences.len() {
            1 => Ok(sentences.remove(0)),
            _ => Err(ScriptError::MissingTerminator { offset: 0 }),
        }
    }

    /// Whitespace-collapsed text, the key used by transcript lookups.
    pub fn normalized(&self) -> String {
        normalize(&self.raw)
    }

    pub fn is_bullet(&self) -> bool {
        self.kind == SentenceKind::Bullet
    }

    pub fn parse(&self) -> Parsed {
        parse_sentence(self)
    }

    /// Structural equality ignoring spans.
    pub fn same_text(&self, other: &Sentence) -> bool {
        self.kind == other.kind && self.raw == other.raw
    }
}

impl fmt::Display for Sentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw)
    }
}

/// Trim and collapse every internal whitespace run to one space.
pub fn normalize(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Bullet {
    pub symbol: char,
    pub repeat: usize,
}

impl Bullet {
    pub fn from_text(text: &str) -> Option<Bullet> {
        let mut chars = text.chars();
        let symbol = chars.next()?;
        if !matches!(symbol, '-' | '+' | '*') {
            return None;
        }
        if !text.chars().all(|c| c == symbol) {
            return None;
        }
        Some(Bullet {
            symbol,
            repeat: text.len(),
        })
    }
}

impl fmt::Display for Bullet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for _ in 0..self.repeat {
            write!(f, "{}", self.symbol)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tactic {
    pub head: String,
    pub args: Vec<String>,
    pub raw: String,
}

impl Tactic {
    /// Identifier-like arguments, skipping rewrite arrows and clause keywords.
    pub fn identifier_args(&self) -> impl Iterator<Item = &str> {
        self.args
            .iter()
            .map(|a| a.trim_matches(|c| c == '(' || c == ')'))
            .filter(|a| {
                is_identifier(a)
                    && !matches!(*a, "in" | "at" | "as" | "with" | "by" | "using" | "use:")
            })
    }
}

/// Result of classifying a sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Parsed {
    Tactic(Tactic),
    Bullet(Bullet),
    Proof,
    Qed,
    Abort,
    BraceOpen,
    BraceClose,
}

pub fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '\''
}

/// Qualified identifiers such as `Z.le_refl` count as a single identifier.
pub fn is_identifier(text: &str) -> bool {
    let mut chars = text.chars();
    match chars.next() {
        Some(c) if c.is_alphabetic() || c == '_' => {}
        _ => return false,
    }
    !text.ends_with('.') && text.chars().all(|c| is_ident_char(c) || c == '.')
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ProofScript {
    pub sentences: Vec<Sentence>,
    pub source: String,
}

impl ProofScript {
    pub fn parse(source: &str) -> Result<ProofScript, ScriptError> {
        Ok(ProofScript {
            sentences: split_sentences(source)?,
            source: source.to_string(),
        })
    }

    pub fn from_sentences(sentences: Vec<Sentence>) -> ProofScript {
        let source = render_sentences(&sentences);
        ProofScript { sentences, source }
    }

    pub fn render(&self) -> String {
        render_sentences(&self.sentences)
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Sentence texts, for span-insensitive comparisons.
    pub fn texts(&self) -> Vec<&str> {
        self.sentences.iter().map(|s| s.raw.as_str()).collect()
    }
}

pub fn render(script: &ProofScript) -> String {
    script.render()
}

pub fn render_sentences(sentences: &[Sentence]) -> String {
    sentences
        .iter()
        .map(|s| s.raw.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

struct Splitter<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Splitter<'a> {
    fn peek(&self, offset: usize) -> Option<u8> {
        self.bytes.get(self.pos + offset).copied()
    }

    fn at_comment(&self) -> bool {
        self.peek(0) == Some(b'(') && self.peek(1) == Some(b'*')
    }

    /// Skip a (possibly nested) comment starting at `pos`.
    fn skip_comment(&mut self) -> Result<(), ScriptError> {
        let start = self.pos;
        let mut depth = 0usize;
        while self.pos < self.bytes.len() {
            if self.at_comment() {
                depth += 1;
                self.pos += 2;
            } else if self.peek(0) == Some(b'*') && self.peek(1) == Some(b')') {
                depth -= 1;
                self.pos += 2;
                if depth == 0 {
                    return Ok(());
                }
            } else if self.peek(0) == Some(b'"') {
                // Coq lexes string literals inside comments too.
                self.skip_string()?;
            } else {
                self.pos += 1;
            }
        }
        Err(ScriptError::UnterminatedComment { offset: start })
    }

    /// Skip a string literal; `""` inside a literal is an escaped quote.
    fn skip_string(&mut self) -> Result<(), ScriptError> {
        let start = self.pos;
        self.pos += 1;
        while self.pos < self.bytes.len() {
            if self.bytes[self.pos] == b'"' {
                if self.peek(1) == Some(b'"') {
                    self.pos += 2;
                    continue;
                }
                self.pos += 1;
                return Ok(());
            }
            self.pos += 1;
        }
        Err(ScriptError::UnterminatedString { offset: start })
    }

    fn skip_blank(&mut self) -> Result<(), ScriptError> {
        loop {
            match self.peek(0) {
                Some(b) if b.is_ascii_whitespace() => self.pos += 1,
                Some(b'(') if self.at_comment() => self.skip_comment()?,
                _ => return Ok(()),
            }
        }
    }

    fn next_char_is_terminator_follower(&self) -> bool {
        match self.src[self.pos + 1..].chars().next() {
            None => true,
            Some(c) => c.is_whitespace(),
        }
    }

    fn read_sentence(&mut self) -> Result<Sentence, ScriptError> {
        let start = self.pos;
        let mut raw = String::new();
        let mut seg_start = self.pos;
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'(' if self.at_comment() => {
                    raw.push_str(&self.src[seg_start..self.pos]);
                    self.skip_comment()?;
                    raw.push(' ');
                    seg_start = self.pos;
                }
                b'"' => self.skip_string()?,
                b'.' if self.next_char_is_terminator_follower() => {
                    self.pos += 1;
                    raw.push_str(&self.src[seg_start..self.pos]);
                    let raw = raw.trim().to_string();
                    let kind = command_kind(&raw);
                    return Ok(Sentence {
                        raw,
                        kind,
                        span: (start, self.pos),
                    });
                }
                _ => self.pos += 1,
            }
        }
        Err(ScriptError::MissingTerminator { offset: start })
    }
}

fn command_kind(raw: &str) -> SentenceKind {
    let head = raw
        .trim_end_matches('.')
        .split(|c: char| c.is_whitespace())
        .next()
        .unwrap_or("");
    match head {
        "Proof" => SentenceKind::ProofCmd,
        "Qed" | "Defined" => SentenceKind::QedCmd,
        "Abort" | "Admitted" => SentenceKind::AbortCmd,
        _ => SentenceKind::Tactic,
    }
}

/// Split raw script text into sentences.
///
/// A `.` terminates a sentence only when followed by whitespace or the end
/// of input and when it is outside comments and string literals, so
/// qualified names like `Z.le_refl` stay intact. Bullets and braces found at
/// a sentence start are emitted as sentences of their own.
pub fn split_sentences(source: &str) -> Result<Vec<Sentence>, ScriptError> {
    let mut sp = Splitter {
        src: source,
        bytes: source.as_bytes(),
        pos: 0,
    };
    let mut out = Vec::new();
    loop {
        sp.skip_blank()?;
        let Some(b) = sp.peek(0) else { break };
        let start = sp.pos;
        match b {
            b'-' | b'+' | b'*' => {
                while sp.peek(0) == Some(b) {
                    sp.pos += 1;
                }
                out.push(Sentence {
                    raw: source[start..sp.pos].to_string(),
                    kind: SentenceKind::Bullet,
                    span: (start, sp.pos),
                });
            }
            b'{' | b'}' => {
                sp.pos += 1;
                let kind = if b == b'{' {
                    SentenceKind::BraceOpen
                } else {
                    SentenceKind::BraceClose
                };
                out.push(Sentence {
                    raw: (b as char).to_string(),
                    kind,
                    span: (start, sp.pos),
                });
            }
            _ => out.push(sp.read_sentence()?),
        }
    }
    Ok(out)
}

/// Split a tactic body into top-level arguments on whitespace and commas,
/// keeping parenthesised and bracketed terms whole.
fn split_args(body: &str) -> Vec<String> {
    let mut args = Vec::new();
    let mut depth = 0i32;
    let mut current = String::new();
    let mut in_string = false;
    for c in body.chars() {
        if in_string {
            current.push(c);
            if c == '"' {
                in_string = false;
            }
            continue;
        }
        match c {
            '"' => {
                in_string = true;
                current.push(c);
            }
            '(' | '[' | '{' => {
                depth += 1;
                current.push(c);
            }
            ')' | ']' | '}' => {
                depth -= 1;
                current.push(c);
            }
            c if depth <= 0 && (c.is_whitespace() || c == ',') => {
                if !current.is_empty() {
                    args.push(std::mem::take(&mut current));
                }
            }
            _ => current.push(c),
        }
    }
    if !current.is_empty() {
        args.push(current);
    }
    args
}

pub fn parse_sentence(s: &Sentence) -> Parsed {
    match s.kind {
        SentenceKind::Bullet => Parsed::Bullet(
            Bullet::from_text(&s.raw).expect("bullet sentences hold one repeated symbol"),
        ),
        SentenceKind::BraceOpen => Parsed::BraceOpen,
        SentenceKind::BraceClose => Parsed::BraceClose,
        SentenceKind::ProofCmd => Parsed::Proof,
        SentenceKind::QedCmd => Parsed::Qed,
        SentenceKind::AbortCmd => Parsed::Abort,
        SentenceKind::Tactic => {
            let body = s.raw.strip_suffix('.').unwrap_or(&s.raw).trim();
            let head_end = body
                .find(|c: char| c.is_whitespace() || c == ';' || c == '(')
                .unwrap_or(body.len());
            let head = body[..head_end].to_string();
            let args = split_args(&body[head_end..]);
            Parsed::Tactic(Tactic {
                head,
                args,
                raw: s.raw.clone(),
            })
        }
    }
}

/// View any sentence as a tactic; markers become a tactic whose head is the
/// marker text itself, which is what the error classifier keys on.
pub fn as_tactic(s: &Sentence) -> Tactic {
    match parse_sentence(s) {
        Parsed::Tactic(t) => t,
        _ => Tactic {
            head: s
                .raw
                .trim_end_matches('.')
                .split_whitespace()
                .next()
                .unwrap_or("")
                .to_string(),
            args: Vec::new(),
            raw: s.raw.clone(),
        },
    }
}

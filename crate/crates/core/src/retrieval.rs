//! Premise retrieval: TF-IDF vectors, k-nearest-neighbour selection by
//! cosine similarity, and Okapi BM25 reranking.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const BM25_K1: f64 = 1.5;
pub const BM25_B: f64 = 0.75;
pub const DEFAULT_KNN_K: usize = 50;
pub const DEFAULT_PROMPT_BUDGET: usize = 10;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("duplicate premise name {0}")]
    DuplicateName(String),
    #[error("cannot read premise corpus {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("premise corpus line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PremiseKind {
    Theorem,
    Definition,
    Inductive,
    #[default]
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PremiseDoc {
    pub name: String,
    #[serde(default)]
    pub kind: PremiseKind,
    pub statement: String,
    /// Premises used by this entry's ground-truth proof, when known.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub uses: Vec<String>,
    #[serde(skip)]
    pub tokens: Vec<String>,
}

impl PremiseDoc {
    pub fn new(
        name: impl Into<String>,
        kind: PremiseKind,
        statement: impl Into<String>,
    ) -> PremiseDoc {
        let statement = statement.into();
        PremiseDoc {
            name: name.into(),
            kind,
            tokens: tokenize(&statement),
            statement,
            uses: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPremise {
    pub doc: PremiseDoc,
    pub knn_score: f64,
    pub bm25_score: f64,
}

/// Split an identifier chunk at lower→upper and acronym→word boundaries.
fn split_camel(chunk: &str) -> Vec<&str> {
    let chars: Vec<(usize, char)> = chunk.char_indices().collect();
    let mut parts = Vec::new();
    let mut start = 0;
    for i in 1..chars.len() {
        let (idx, c) = chars[i];
        let prev = chars[i - 1].1;
        let next_lower = chars.get(i + 1).is_some_and(|(_, n)| n.is_lowercase());
        if c.is_uppercase() && (prev.is_lowercase() || (prev.is_uppercase() && next_lower)) {
            parts.push(&chunk[start..idx]);
            start = idx;
        }
    }
    parts.push(&chunk[start..]);
    parts
}

/// Lowercased word pieces of `text`: split on non-alphanumerics (so also on
/// underscores), then on camel-case boundaries; pieces shorter than two
/// characters are dropped and duplicates kept.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|chunk| !chunk.is_empty())
        .flat_map(split_camel)
        .map(str::to_lowercase)
        .filter(|t| t.chars().count() >= 2)
        .collect()
}

fn term_counts(tokens: &[String]) -> BTreeMap<&str, usize> {
    let mut counts = BTreeMap::new();
    for t in tokens {
        *counts.entry(t.as_str()).or_insert(0) += 1;
    }
    counts
}

type SparseVec = BTreeMap<String, f64>;

fn l2_normalize(v: &mut SparseVec) {
    let norm = v.values().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.values_mut().for_each(|x| *x /= norm);
    }
}

fn dot(a: &SparseVec, b: &SparseVec) -> f64 {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    small
        .iter()
        .filter_map(|(k, x)| large.get(k).map(|y| x * y))
        .sum()
}

/// Immutable TF-IDF index over a premise collection.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub docs: Vec<PremiseDoc>,
    pub df: HashMap<String, usize>,
    pub n: usize,
    vectors: Vec<SparseVec>,
}

impl Corpus {
    /// Smoothed inverse document frequency, `ln((N+1)/(df+1)) + 1`.
    pub fn idf(&self, token: &str) -> f64 {
        let df = self.df.get(token).copied().unwrap_or(0);
        ((self.n as f64 + 1.0) / (df as f64 + 1.0)).ln() + 1.0
    }

    /// L2-normalised TF-IDF vector of arbitrary text against this corpus.
    pub fn vectorize(&self, text: &str) -> BTreeMap<String, f64> {
        self.vectorize_tokens(&tokenize(text))
    }

    fn vectorize_tokens(&self, tokens: &[String]) -> SparseVec {
        let mut v: SparseVec = term_counts(tokens)
            .into_iter()
            .map(|(t, tf)| (t.to_string(), tf as f64 * self.idf(t)))
            .collect();
        l2_normalize(&mut v);
        v
    }

    pub fn doc_vector(&self, index: usize) -> &BTreeMap<String, f64> {
        &self.vectors[index]
    }

    pub fn get(&self, name: &str) -> Option<&PremiseDoc> {
        self.docs.iter().find(|d| d.name == name)
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// Load a JSON-lines corpus of `{name, kind, statement}` records.
    pub fn load_jsonl(path: &Path) -> Result<Corpus, RetrievalError> {
        let text = std::fs::read_to_string(path).map_err(|source| RetrievalError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Corpus::from_jsonl(&text)
    }

    pub fn from_jsonl(text: &str) -> Result<Corpus, RetrievalError> {
        let mut docs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let doc: PremiseDoc =
                serde_json::from_str(line).map_err(|source| RetrievalError::Parse {
                    line: i + 1,
                    source,
                })?;
            docs.push(doc);
        }
        build_index(docs)
    }
}

pub fn build_index(mut docs: Vec<PremiseDoc>) -> Result<Corpus, RetrievalError> {
    let mut seen = HashSet::new();
    for d in &mut docs {
        if !seen.insert(d.name.clone()) {
            return Err(RetrievalError::DuplicateName(d.name.clone()));
        }
        d.tokens = tokenize(&d.statement);
    }
    let mut df: HashMap<String, usize> = HashMap::new();
    for d in &docs {
        for t in term_counts(&d.tokens).into_keys() {
            *df.entry(t.to_string()).or_insert(0) += 1;
        }
    }
    let mut corpus = Corpus {
        n: docs.len(),
        df,
        docs,
        vectors: Vec::new(),
    };
    corpus.vectors = corpus
        .docs
        .iter()
        .map(|d| corpus.vectorize_tokens(&d.tokens))
        .collect();
    Ok(corpus)
}

/// Cosine similarity between two texts under the corpus weighting.
pub fn cosine(corpus: &Corpus, a: &str, b: &str) -> f64 {
    dot(&corpus.vectorize(a), &corpus.vectorize(b))
}

fn by_score_then_name(a: (f64, &str), b: (f64, &str)) -> Ordering {
    b.0.partial_cmp(&a.0)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.1.cmp(b.1))
}

/// Top-`k` premises by cosine similarity to `statement`; ties by name.
pub fn knn_premises(corpus: &Corpus, statement: &str, k: usize) -> Vec<RankedPremise> {
    let query = corpus.vectorize(statement);
    let mut scored: Vec<(f64, usize)> = corpus
        .vectors
        .iter()
        .enumerate()
        .map(|(i, v)| (dot(&query, v), i))
        .collect();
    scored.sort_by(|a, b| {
        by_score_then_name((a.0, &corpus.docs[a.1].name), (b.0, &corpus.docs[b.1].name))
    });
    scored
        .into_iter()
        .take(k)
        .map(|(score, i)| RankedPremise {
            doc: corpus.docs[i].clone(),
            knn_score: score,
            bm25_score: 0.0,
        })
        .collect()
}

/// Neighbour-usage variant: find the `k` entries most similar to
/// `statement` that carry ground-truth `uses`, and score each used premise
/// by the best similarity among the neighbours using it.
pub fn knn_premises_by_usage(corpus: &Corpus, statement: &str, k: usize) -> Vec<RankedPremise> {
    let query = corpus.vectorize(statement);
    let mut neighbours: Vec<(f64, usize)> = corpus
        .vectors
        .iter()
        .enumerate()
        .filter(|(i, _)| !corpus.docs[*i].uses.is_empty())
        .map(|(i, v)| (dot(&query, v), i))
        .collect();
    neighbours.sort_by(|a, b| {
        by_score_then_name((a.0, &corpus.docs[a.1].name), (b.0, &corpus.docs[b.1].name))
    });
    let mut best: HashMap<&str, f64> = HashMap::new();
    for (score, i) in neighbours.into_iter().take(k) {
        for used in &corpus.docs[i].uses {
            let entry = best.entry(used.as_str()).or_insert(score);
            *entry = entry.max(score);
        }
    }
    let mut out: Vec<RankedPremise> = best
        .into_iter()
        .filter_map(|(name, score)| {
            corpus.get(name).map(|doc| RankedPremise {
                doc: doc.clone(),
                knn_score: score,
                bm25_score: 0.0,
            })
        })
        .collect();
    out.sort_by(|a, b| by_score_then_name((a.knn_score, &a.doc.name), (b.knn_score, &b.doc.name)));
    out
}

/// Okapi BM25 over a small document set (k1 = 1.5, b = 0.75). The idf term
/// is `ln(1 + (N - df + 0.5) / (df + 0.5))`, which keeps scores non-negative.
pub struct Bm25<'a> {
    docs: Vec<BTreeMap<&'a str, usize>>,
    lens: Vec<usize>,
    df: HashMap<&'a str, usize>,
    avgdl: f64,
}

impl<'a> Bm25<'a> {
    pub fn new(docs: &'a [Vec<String>]) -> Bm25<'a> {
        let counts: Vec<_> = docs.iter().map(|d| term_counts(d)).collect();
        let mut df = HashMap::new();
        for c in &counts {
            for t in c.keys() {
                *df.entry(*t).or_insert(0) += 1;
            }
        }
        let lens: Vec<usize> = docs.iter().map(Vec::len).collect();
        let avgdl = if docs.is_empty() {
            0.0
        } else {
            lens.iter().sum::<usize>() as f64 / docs.len() as f64
        };
        Bm25 {
            docs: counts,
            lens,
            df,
            avgdl,
        }
    }

    pub fn idf(&self, token: &str) -> f64 {
        let n = self.docs.len() as f64;
        let df = self.df.get(token).copied().unwrap_or(0) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Score of document `i` against the distinct query tokens.
    pub fn score(&self, i: usize, query: &[String]) -> f64 {
        let unique: BTreeSet<&str> = query.iter().map(String::as_str).collect();
        let len_norm = if self.avgdl > 0.0 {
            self.lens[i] as f64 / self.avgdl
        } else {
            0.0
        };
        unique
            .into_iter()
            .map(|t| {
                let tf = self.docs[i].get(t).copied().unwrap_or(0) as f64;
                if tf == 0.0 {
                    return 0.0;
                }
                self.idf(t) * tf * (BM25_K1 + 1.0)
                    / (tf + BM25_K1 * (1.0 - BM25_B + BM25_B * len_norm))
            })
            .sum()
    }
}

/// Rerank KNN candidates by BM25 against `query`; ties by KNN score then name.
pub fn bm25_rerank(candidates: Vec<RankedPremise>, query: &str) -> Vec<RankedPremise> {
    let query = tokenize(query);
    let docs: Vec<Vec<String>> = candidates
        .iter()
        .map(|c| tokenize(&c.doc.statement))
        .collect();
    let bm25 = Bm25::new(&docs);
    let mut out: Vec<RankedPremise> = candidates
        .into_iter()
        .enumerate()
        .map(|(i, c)| RankedPremise {
            bm25_score: bm25.score(i, &query),
            ..c
        })
        .collect();
    out.sort_by(|a, b| {
        b.bm25_score
            .partial_cmp(&a.bm25_score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| {
                b.knn_score
                    .partial_cmp(&a.knn_score)
                    .unwrap_or(Ordering::Equal)
            })
            .then_with(|| a.doc.name.cmp(&b.doc.name))
    });
    out
}

/// Order candidate names by BM25 similarity of their name tokens to `bad`.
/// An exact match always comes first; ties fall back to name order.
pub fn rank_names(candidates: &[String], bad: &str) -> Vec<String> {
    let mut seen = HashSet::new();
    let unique: Vec<&String> = candidates
        .iter()
        .filter(|c| seen.insert(c.as_str()))
        .collect();
    let docs: Vec<Vec<String>> = unique.iter().map(|c| tokenize(c)).collect();
    let bm25 = Bm25::new(&docs);
    let query = tokenize(bad);
    let mut scored: Vec<(bool, f64, &String)> = unique
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str() == bad, bm25.score(i, &query), *c))
        .collect();
    scored.sort_by(|a, b| {
        b.0.cmp(&a.0)
            .then_with(|| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal))
            .then_with(|| a.2.cmp(b.2))
    });
    scored.into_iter().map(|(_, _, c)| c.clone()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RetrievalMode {
    /// Neighbours are premises, compared by statement text.
    #[default]
    Statement,
    /// Neighbours are proven entries; their ground-truth premises are returned.
    ProofUsage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    pub k: usize,
    pub budget: usize,
    pub mode: RetrievalMode,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            k: DEFAULT_KNN_K,
            budget: DEFAULT_PROMPT_BUDGET,
            mode: RetrievalMode::Statement,
        }
    }
}

/// KNN selection, BM25 rerank, truncation to the prompt budget.
pub fn retrieve(corpus: &Corpus, statement: &str, cfg: &RetrievalConfig) -> Vec<RankedPremise> {
    if corpus.is_empty() {
        return Vec::new();
    }
    let candidates = match cfg.mode {
        RetrievalMode::Statement => knn_premises(corpus, statement, cfg.k),
        RetrievalMode::ProofUsage => knn_premises_by_usage(corpus, statement, cfg.k),
    };
    let mut ranked = bm25_rerank(candidates, statement);
    ranked.truncate(cfg.budget);
    ranked
}

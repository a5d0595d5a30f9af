//! Few-shot prompt construction, reply parsing and model clients.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::retrieval::RankedPremise;
use crate::script::{as_tactic, split_sentences, ProofScript, Sentence, SentenceKind};

const DEFAULT_INSTRUCTIONS: &str = include_str!("../data/prompt_instructions.txt");
const DEFAULT_EXAMPLES: &str = include_str!("../data/prompt_examples.json");

pub const MODEL_BASE_URL_ENV: &str = "PROOFLOOP_MODEL_BASE_URL";
pub const MODEL_NAME_ENV: &str = "PROOFLOOP_MODEL_NAME";
pub const MODEL_API_KEY_ENV: &str = "PROOFLOOP_MODEL_API_KEY";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GenAiError {
    #[error("no proof script found in model reply")]
    NoProofFound,
    #[error("invalid prompt template: {0}")]
    Template(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("model request timed out")]
    Timeout,
    #[error("model endpoint returned status {status}: {body}")]
    RemoteError { status: u16, body: String },
    #[error("no fixture reply for theorem {0}")]
    FixtureMissing(String),
    #[error("model transport error: {0}")]
    Transport(String),
    #[error("model client misconfigured: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShot {
    pub theorem: String,
    pub proof: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ExampleFile {
    version: String,
    examples: Vec<FewShot>,
}

/// Instruction block and worked examples shared by every prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub version: String,
    pub instructions: String,
    pub examples: Vec<FewShot>,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate::from_parts(DEFAULT_INSTRUCTIONS, DEFAULT_EXAMPLES)
            .expect("bundled template is valid")
    }
}

impl PromptTemplate {
    pub fn from_parts(
        instructions: &str,
        examples_json: &str,
    ) -> Result<PromptTemplate, GenAiError> {
        let file: ExampleFile =
            serde_json::from_str(examples_json).map_err(|e| GenAiError::Template(e.to_string()))?;
        Ok(PromptTemplate {
            version: file.version,
            instructions: instructions.trim().to_string(),
            examples: file.examples,
        })
    }

    /// Load `instructions.txt` and `examples.json` from a directory.
    pub fn load(dir: &Path) -> Result<PromptTemplate, GenAiError> {
        let read = |name: &str| {
            std::fs::read_to_string(dir.join(name))
                .map_err(|e| GenAiError::Template(format!("{name}: {e}")))
        };
        PromptTemplate::from_parts(&read("instructions.txt")?, &read("examples.json")?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub template_version: String,
    pub instructions: String,
    pub examples: Vec<FewShot>,
    pub premises: Vec<(String, String)>,
    pub target: String,
    pub target_name: String,
}

impl Prompt {
    /// System message: the instruction block.
    pub fn system(&self) -> String {
        self.instructions.clone()
    }

    /// User message: examples, premises, target.
    pub fn user(&self) -> String {
        let mut out = String::new();
        for (i, ex) in self.examples.iter().enumerate() {
            out.push_str(&format!(
                "Example {}:\n{}\n{}\n\n",
                i + 1,
                ex.theorem.trim(),
                ex.proof.trim()
            ));
        }
        out.push_str("Premises:\n");
        for (name, statement) in &self.premises {
            out.push_str(&format!("{name}: {statement}\n"));
        }
        out.push_str(&format!("\nTheorem:\n{}\n", self.target.trim()));
        out
    }

    pub fn render(&self) -> String {
        format!("{}\n\n{}", self.system(), self.user())
    }
}

pub fn build_prompt(target: &str, premises: &[RankedPremise]) -> Prompt {
    build_prompt_with(&PromptTemplate::default(), target, premises)
}

pub fn build_prompt_with(
    template: &PromptTemplate,
    target: &str,
    premises: &[RankedPremise],
) -> Prompt {
    let mut seen = HashSet::new();
    let premises = premises
        .iter()
        .filter(|p| seen.insert(p.doc.name.clone()))
        .map(|p| {
            (
                p.doc.name.clone(),
                p.doc
                    .statement
                    .split_whitespace()
                    .collect::<Vec<_>>()
                    .join(" "),
            )
        })
        .collect();
    let target_name = crate::prover::TheoremStatement::parse(target)
        .map(|t| t.name)
        .unwrap_or_default();
    Prompt {
        template_version: template.version.clone(),
        instructions: template.instructions.clone(),
        examples: template.examples.clone(),
        premises,
        target: target.trim().to_string(),
        target_name,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelReply {
    pub raw: String,
    pub extracted: Option<ProofScript>,
}

impl ModelReply {
    pub fn new(raw: String) -> ModelReply {
        let extracted = extract_proof(&raw).ok();
        ModelReply { raw, extracted }
    }
}

fn first_fenced_block(raw: &str) -> Option<&str> {
    let open = raw.find("```")?;
    let after = &raw[open + 3..];
    let body_start = after.find('\n').map_or(after.len(), |i| i + 1);
    let body = &after[body_start..];
    let close = body.find("```").unwrap_or(body.len());
    Some(&body[..close])
}

fn proof_span(raw: &str) -> Option<&str> {
    let start = raw.find("Proof.")?;
    let rest = &raw[start..];
    let end = ["Qed.", "Defined."]
        .iter()
        .filter_map(|k| rest.find(k).map(|i| i + k.len()))
        .min()?;
    Some(&rest[..end])
}

/// A sentence that plausibly belongs to a proof script rather than prose.
fn looks_like_proof_sentence(s: &Sentence) -> bool {
    match s.kind {
        SentenceKind::Tactic => as_tactic(s)
            .head
            .starts_with(|c: char| c.is_ascii_lowercase()),
        _ => true,
    }
}

const HEADER_KEYWORDS: &[&str] = &[
    "Theorem",
    "Lemma",
    "Fact",
    "Remark",
    "Corollary",
    "Proposition",
    "Example",
];

/// Pull a proof script out of a model reply: the first fenced block, else a
/// `Proof.` … `Qed.` span, else the whole reply (prose sentences dropped).
/// The result starts at `Proof.` (or the first tactic) and ends at `Qed.`.
pub fn extract_proof(raw: &str) -> Result<ProofScript, GenAiError> {
    let (text, lenient) = match first_fenced_block(raw).or_else(|| proof_span(raw)) {
        Some(t) => (t, false),
        None => (raw, true),
    };
    let mut sentences = split_sentences(text).map_err(|_| GenAiError::NoProofFound)?;
    if let Some(i) = sentences
        .iter()
        .position(|s| s.kind == SentenceKind::ProofCmd)
    {
        sentences.drain(..i);
    } else {
        sentences.retain(|s| !HEADER_KEYWORDS.contains(&as_tactic(s).head.as_str()));
    }
    if let Some(i) = sentences
        .iter()
        .position(|s| s.kind == SentenceKind::QedCmd)
    {
        sentences.truncate(i + 1);
    }
    if lenient {
        sentences.retain(looks_like_proof_sentence);
    }
    if !sentences.iter().any(looks_like_proof_sentence) {
        return Err(GenAiError::NoProofFound);
    }
    Ok(ProofScript::from_sentences(sentences))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    /// `None` keeps the provider's default temperature.
    pub temperature: Option<f64>,
    pub max_tokens: u32,
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams {
            temperature: None,
            max_tokens: 2048,
        }
    }
}

/// One completion per call.
pub trait ModelClient: Send + Sync {
    fn complete(&self, prompt: &Prompt, params: &SamplingParams) -> Result<ModelReply, ModelError>;
}

/// Replies keyed by target theorem name.
#[derive(Debug, Default)]
pub struct MockModel {
    replies: BTreeMap<String, String>,
    calls: AtomicUsize,
}

impl MockModel {
    pub fn new(replies: impl IntoIterator<Item = (String, String)>) -> MockModel {
        MockModel {
            replies: replies.into_iter().collect(),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn from_json(text: &str) -> Result<MockModel, ModelError> {
        let replies: BTreeMap<String, String> = serde_json::from_str(text)
            .map_err(|e| ModelError::Config(format!("bad reply fixture: {e}")))?;
        Ok(MockModel::new(replies))
    }

    pub fn load(path: &Path) -> Result<MockModel, ModelError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ModelError::Config(format!("{}: {e}", path.display())))?;
        MockModel::from_json(&text)
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ModelClient for MockModel {
    fn complete(
        &self,
        prompt: &Prompt,
        _params: &SamplingParams,
    ) -> Result<ModelReply, ModelError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.replies
            .get(&prompt.target_name)
            .map(|r| ModelReply::new(r.clone()))
            .ok_or_else(|| ModelError::FixtureMissing(prompt.target_name.clone()))
    }
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
struct Limiter {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Limiter {
    fn acquire(&self) -> LimiterGuard<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        LimiterGuard(self)
    }
}

struct LimiterGuard<'a>(&'a Limiter);

impl Drop for LimiterGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RemoteConfig {
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub retries: u32,
    pub backoff: Duration,
    pub max_in_flight: usize,
}

impl RemoteConfig {
    pub fn from_env() -> Result<RemoteConfig, ModelError> {
        let base_url = std::env::var(MODEL_BASE_URL_ENV)
            .map_err(|_| ModelError::Config(format!("{MODEL_BASE_URL_ENV} is not set")))?;
        let model = std::env::var(MODEL_NAME_ENV)
            .map_err(|_| ModelError::Config(format!("{MODEL_NAME_ENV} is not set")))?;
        Ok(RemoteConfig {
            api_key: std::env::var(MODEL_API_KEY_ENV).ok(),
            ..RemoteConfig::new(base_url, model)
        })
    }

    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> RemoteConfig {
        RemoteConfig {
            base_url: base_url.into(),
            model: model.into(),
            api_key: None,
            timeout: Duration::from_secs(120),
            retries: 2,
            backoff: Duration::from_millis(500),
            max_in_flight: 4,
        }
    }
}

/// Chat-completion client for OpenAI-compatible endpoints.
pub struct RemoteModel {
    config: RemoteConfig,
    agent: ureq::Agent,
    limiter: Limiter,
}

impl RemoteModel {
    pub fn new(config: RemoteConfig) -> RemoteModel {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let limiter = Limiter {
            free: Mutex::new(config.max_in_flight.max(1)),
            cv: Condvar::new(),
        };
        RemoteModel {
            config,
            agent,
            limiter,
        }
    }

    pub fn request_body(&self, prompt: &Prompt, params: &SamplingParams) -> serde_json::Value {
        let mut body = json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": prompt.system()},
                {"role": "user", "content": prompt.user()},
            ],
            "max_tokens": params.max_tokens,
            "n": 1,
        });
        if let Some(t) = params.temperature {
            body["temperature"] = json!(t);
        }
        body
    }

    fn round_trip(&self, body: &serde_json::Value) -> Result<String, ModelError> {
        let url = format!(
            "{}/chat/completions",
            self.config.base_url.trim_end_matches('/')
        );
        let mut request = self.agent.post(&url);
        if let Some(key) = &self.config.api_key {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = request.send_json(body).map_err(|e| match e {
            ureq::Error::Timeout(_) => ModelError::Timeout,
            other => ModelError::Transport(other.to_string()),
        })?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| ModelError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(ModelError::RemoteError { status, body: text });
        }
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| ModelError::Transport(format!("bad response JSON: {e}")))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| {
                ModelError::Transport("response has no choices[0].message.content".into())
            })
    }
}

impl ModelClient for RemoteModel {
    fn complete(&self, prompt: &Prompt, params: &SamplingParams) -> Result<ModelReply, ModelError> {
        let _slot = self.limiter.acquire();
        let body = self.request_body(prompt, params);
        let mut attempt = 0;
        loop {
            match self.round_trip(&body) {
                Ok(content) => return Ok(ModelReply::new(content)),
                Err(e) => {
                    let retryable = match &e {
                        ModelError::RemoteError { status, .. } => *status == 429 || *status >= 500,
                        ModelError::Timeout | ModelError::Transport(_) => true,
                        _ => false,
                    };
                    if !retryable || attempt >= self.config.retries {
                        return Err(e);
                    }
                    std::thread::sleep(self.config.backoff * 2u32.pow(attempt));
                    attempt += 1;
                }
            }
        }
    }
}

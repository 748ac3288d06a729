//! Generator access: one answer per (query, context) pair, with the
//! probability of every emitted token.
//!
//! Two implementations are provided. [`HttpReader`] talks to an inference
//! sidecar over the JSON protocol below; [`StubReader`] answers from a lookup
//! table and produces hash-derived embeddings, for hermetic runs.
//!
//! ```text
//! POST /generate {"prompt": str, "max_tokens": int} -> {"answer": str, "token_probs": [f64]}
//! POST /embed    {"texts": [str]}                   -> {"vectors": [[f64]], "dim": int}
//! GET  /healthz                                     -> {"status": "ok"}
//! ```

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{tokenize, Passage};
use crate::scoring::validate_probability;

pub const DEFAULT_PROMPT_TEMPLATE: &str = "question: {query} context: {context}";
pub const DEFAULT_STUB_EMBED_DIM: usize = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReaderError {
    #[error("reader endpoint unreachable: {0}")]
    Transport(String),
    #[error("reader endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed reader response: {0}")]
    Malformed(String),
    #[error("invalid reader input: {0}")]
    InvalidInput(String),
    #[error("invalid stub table: {0}")]
    InvalidStub(String),
}

impl ReaderError {
    /// Transport, status and protocol failures are worth retrying; bad input
    /// is not.
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            ReaderError::Transport(_) | ReaderError::Status { .. } | ReaderError::Malformed(_)
        )
    }
}

/// Answer text plus the probability of each emitted token at its decoding
/// step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedAnswer {
    pub text: String,
    pub step_probs: Vec<f64>,
}

impl GeneratedAnswer {
    pub fn validate(&self) -> Result<(), String> {
        if !self.text.is_empty() && self.step_probs.is_empty() {
            return Err("non-empty answer without token probabilities".into());
        }
        for &p in &self.step_probs {
            validate_probability(p).map_err(|e| e.to_string())?;
        }
        Ok(())
    }
}

pub trait Reader: Send + Sync {
    fn generate(&self, query: &str, context: &Passage) -> Result<GeneratedAnswer, ReaderError>;

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ReaderError>;
}

pub fn render_prompt(template: &str, query: &str, context: &str) -> String {
    template.replace("{query}", query).replace("{context}", context)
}

fn check_query(query: &str) -> Result<(), ReaderError> {
    if query.trim().is_empty() {
        Err(ReaderError::InvalidInput("empty query".into()))
    } else {
        Ok(())
    }
}

fn check_texts(texts: &[String]) -> Result<(), ReaderError> {
    if texts.is_empty() {
        Err(ReaderError::InvalidInput("no texts to embed".into()))
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StubEntry {
    pub query: String,
    pub passage_id: String,
    pub answer: String,
    pub token_probs: Vec<f64>,
}

/// Table-driven reader. Unknown `(query, passage_id)` pairs fall back to the
/// first sentence of the context with a single step probability of 0.5.
#[derive(Debug, Clone, Default)]
pub struct StubReader {
    table: HashMap<(String, String), GeneratedAnswer>,
    embed_dim: usize,
}

impl StubReader {
    pub fn new(entries: impl IntoIterator<Item = StubEntry>) -> Result<Self, ReaderError> {
        let mut table = HashMap::new();
        for entry in entries {
            let answer = GeneratedAnswer {
                text: entry.answer,
                step_probs: entry.token_probs,
            };
            answer
                .validate()
                .map_err(|e| ReaderError::InvalidStub(format!("({:?}, {:?}): {e}", entry.query, entry.passage_id)))?;
            table.insert((entry.query, entry.passage_id), answer);
        }
        Ok(StubReader {
            table,
            embed_dim: DEFAULT_STUB_EMBED_DIM,
        })
    }

    pub fn with_embed_dim(mut self, dim: usize) -> Self {
        self.embed_dim = dim.max(1);
        self
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    /// Reads `{query, passage_id, answer, token_probs}` JSONL records.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ReaderError> {
        let path = path.as_ref();
        let file =
            File::open(path).map_err(|e| ReaderError::InvalidStub(format!("cannot read {}: {e}", path.display())))?;
        let mut entries = Vec::new();
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| ReaderError::InvalidStub(format!("{}: {e}", path.display())))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: StubEntry = serde_json::from_str(&line)
                .map_err(|e| ReaderError::InvalidStub(format!("{}:{}: {e}", path.display(), idx + 1)))?;
            entries.push(entry);
        }
        Self::new(entries)
    }
}

/// First sentence of `text`: everything up to and including the first `.`,
/// `!` or `?` that ends the text or precedes whitespace.
pub fn first_sentence(text: &str) -> &str {
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            let at_boundary = chars.peek().is_none_or(|&(_, next)| next.is_whitespace());
            if at_boundary {
                return text[..i + c.len_utf8()].trim();
            }
        }
    }
    text.trim()
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Signed feature hashing of the text's tokens, L2-normalized. Texts that
/// share tokens get positively correlated vectors; a text without tokens
/// maps to the first basis vector.
pub fn hashed_embedding(text: &str, dim: usize) -> Vec<f64> {
    let dim = dim.max(1);
    let mut v = vec![0.0; dim];
    for token in tokenize(text) {
        let h = fnv1a(token.as_bytes());
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        v[(h % dim as u64) as usize] += sign;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        v[0] = 1.0;
        return v;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

impl Reader for StubReader {
    fn generate(&self, query: &str, context: &Passage) -> Result<GeneratedAnswer, ReaderError> {
        check_query(query)?;
        if let Some(hit) = self.table.get(&(query.to_owned(), context.id.clone())) {
            return Ok(hit.clone());
        }
        Ok(GeneratedAnswer {
            text: first_sentence(&context.text).to_owned(),
            step_probs: vec![0.5],
        })
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ReaderError> {
        check_texts(texts)?;
        Ok(texts.iter().map(|t| hashed_embedding(t, self.embed_dim)).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReaderConfig {
    pub endpoint_url: String,
    pub max_tokens: usize,
    pub prompt_template: String,
    pub timeout: Duration,
    /// Extra attempts after the first one for retryable failures.
    pub retries: usize,
}

impl ReaderConfig {
    pub fn new(endpoint_url: impl Into<String>) -> Self {
        ReaderConfig {
            endpoint_url: endpoint_url.into(),
            max_tokens: 32,
            prompt_template: DEFAULT_PROMPT_TEMPLATE.into(),
            timeout: Duration::from_secs(30),
            retries: 2,
        }
    }
}

#[derive(Serialize)]
struct GenerateRequest<'a> {
    prompt: &'a str,
    max_tokens: usize,
}

#[derive(Deserialize)]
struct GenerateResponse {
    answer: String,
    token_probs: Vec<f64>,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
    dim: usize,
}

/// Blocking client for the inference sidecar. Each call owns its request and
/// response, so concurrent callers never see each other's results.
#[derive(Debug, Clone)]
pub struct HttpReader {
    config: ReaderConfig,
    client: reqwest::blocking::Client,
}

impl HttpReader {
    pub fn new(config: ReaderConfig) -> Result<Self, ReaderError> {
        if config.max_tokens == 0 {
            return Err(ReaderError::InvalidInput("max_tokens must be >= 1".into()));
        }
        if !config.prompt_template.contains("{query}") || !config.prompt_template.contains("{context}") {
            return Err(ReaderError::InvalidInput(
                "prompt template needs {query} and {context} placeholders".into(),
            ));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| ReaderError::Transport(e.to_string()))?;
        Ok(HttpReader { config, client })
    }

    pub fn config(&self) -> &ReaderConfig {
        &self.config
    }

    fn url(&self, route: &str) -> String {
        format!("{}{route}", self.config.endpoint_url.trim_end_matches('/'))
    }

    fn with_retries<T>(&self, mut call: impl FnMut() -> Result<T, ReaderError>) -> Result<T, ReaderError> {
        let mut attempt = 0;
        loop {
            match call() {
                Err(e) if e.is_retryable() && attempt < self.config.retries => {
                    attempt += 1;
                    std::thread::sleep(Duration::from_millis(50 * attempt as u64));
                }
                other => return other,
            }
        }
    }

    fn post<B: Serialize, R: for<'de> Deserialize<'de>>(&self, route: &str, body: &B) -> Result<R, ReaderError> {
        let response = self
            .client
            .post(self.url(route))
            .json(body)
            .send()
            .map_err(|e| ReaderError::Transport(e.to_string()))?;
        let status = response.status();
        let bytes = response.bytes().map_err(|e| ReaderError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(ReaderError::Status {
                status: status.as_u16(),
                body: String::from_utf8_lossy(&bytes).chars().take(200).collect(),
            });
        }
        serde_json::from_slice(&bytes).map_err(|e| ReaderError::Malformed(e.to_string()))
    }

    pub fn health(&self) -> Result<(), ReaderError> {
        #[derive(Deserialize)]
        struct Health {
            status: String,
        }
        let response = self
            .client
            .get(self.url("/healthz"))
            .send()
            .map_err(|e| ReaderError::Transport(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            return Err(ReaderError::Status {
                status: status.as_u16(),
                body: String::new(),
            });
        }
        let health: Health = response.json().map_err(|e| ReaderError::Malformed(e.to_string()))?;
        if health.status == "ok" {
            Ok(())
        } else {
            Err(ReaderError::Malformed(format!("status {:?}", health.status)))
        }
    }
}

impl Reader for HttpReader {
    fn generate(&self, query: &str, context: &Passage) -> Result<GeneratedAnswer, ReaderError> {
        check_query(query)?;
        let prompt = render_prompt(&self.config.prompt_template, query, &context.text);
        let request = GenerateRequest {
            prompt: &prompt,
            max_tokens: self.config.max_tokens,
        };
        self.with_retries(|| {
            let response: GenerateResponse = self.post("/generate", &request)?;
            let answer = GeneratedAnswer {
                text: response.answer,
                step_probs: response.token_probs,
            };
            answer.validate().map_err(ReaderError::Malformed)?;
            Ok(answer)
        })
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ReaderError> {
        check_texts(texts)?;
        self.with_retries(|| {
            let response: EmbedResponse = self.post("/embed", &EmbedRequest { texts })?;
            if response.vectors.len() != texts.len() {
                return Err(ReaderError::Malformed(format!(
                    "{} vectors for {} texts",
                    response.vectors.len(),
                    texts.len()
                )));
            }
            if response.dim == 0 || response.vectors.iter().any(|v| v.len() != response.dim) {
                return Err(ReaderError::Malformed(format!(
                    "vectors do not all have the reported dim {}",
                    response.dim
                )));
            }
            Ok(response.vectors)
        })
    }
}

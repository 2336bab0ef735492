//! LLM gateway: one entry point for chat completions with disk caching,
//! retry with exponential backoff, and interchangeable providers (HTTP or the
//! deterministic stub used for tests and offline runs).

pub mod cache;
mod http;
pub mod stub;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use cache::{CacheEntry, DiskCache};
use http::HttpProvider;
use stub::{StubProvider, StubSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message { role: Role::System, content: content.into() }
    }
    pub fn user(content: impl Into<String>) -> Self {
        Message { role: Role::User, content: content.into() }
    }
    pub fn assistant(content: impl Into<String>) -> Self {
        Message { role: Role::Assistant, content: content.into() }
    }
}

/// A fully specified chat completion request. Every field participates in the
/// cache key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
}

/// A completion plus bookkeeping about where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub provider: String,
    pub cached: bool,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Stub,
    Http,
}

/// Provider selection and request shaping. `temperature` is the creative
/// temperature used for proposer/rewriter calls; reviewer and judge calls pin
/// temperature 0 when building their requests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub base_url: String,
    pub model: String,
    pub api_key_env: String,
    pub timeout_s: u64,
    pub max_retries: u32,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Base delay for exponential backoff between retries.
    pub retry_base_ms: u64,
    pub stub: StubSettings,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            kind: ProviderKind::Stub,
            base_url: String::new(),
            model: "stub-model".into(),
            api_key_env: "APRES_API_KEY".into(),
            timeout_s: 60,
            max_retries: 3,
            temperature: 0.7,
            max_tokens: 4096,
            retry_base_ms: 100,
            stub: StubSettings::default(),
        }
    }
}

/// Why a single provider call failed. Only transient failures are retried.
#[derive(Debug, Clone)]
pub enum ProviderFailure {
    Timeout,
    Connect(String),
    Status { code: u16, body: String },
    Auth(String),
    Malformed(String),
}

impl ProviderFailure {
    fn retryable(&self) -> bool {
        match self {
            ProviderFailure::Timeout | ProviderFailure::Connect(_) => true,
            ProviderFailure::Status { code, .. } => *code == 429 || *code >= 500,
            ProviderFailure::Auth(_) | ProviderFailure::Malformed(_) => false,
        }
    }

    fn describe(&self) -> String {
        match self {
            ProviderFailure::Timeout => "request timed out".into(),
            ProviderFailure::Connect(e) => format!("connection failed: {e}"),
            ProviderFailure::Status { code, body } => format!("status {code}: {body}"),
            ProviderFailure::Auth(env) => format!("missing credentials in ${env}"),
            ProviderFailure::Malformed(e) => format!("malformed provider response: {e}"),
        }
    }
}

/// A completion backend. Implementations must be pure with respect to the
/// request for caching and replay to be sound (the stub is; HTTP providers are
/// assumed to be close enough at temperature 0).
pub trait Provider {
    /// Stable identifier mixed into cache keys, e.g. `"stub"` or a base URL.
    fn id(&self) -> &str;
    fn call(&self, request: &ChatRequest) -> Result<String, ProviderFailure>;
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("API key environment variable `{0}` is not set")]
    AuthMissing(String),
    #[error("provider returned status {status}: {body}")]
    ProviderError { status: u16, body: String },
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error("no fenced block labeled `{0}` in response")]
    NoBlockFound(String),
    #[error("cache I/O: {0}")]
    Io(#[from] std::io::Error),
}

/// Gateway through which every LLM call in the pipeline flows.
pub struct Gateway {
    config: ProviderConfig,
    provider: Box<dyn Provider>,
    cache: Option<DiskCache>,
}

impl Gateway {
    pub fn new(config: ProviderConfig) -> Self {
        let provider: Box<dyn Provider> = match config.kind {
            ProviderKind::Stub => Box::new(StubProvider::new(config.stub.clone())),
            ProviderKind::Http => Box::new(HttpProvider::new(
                config.base_url.clone(),
                config.api_key_env.clone(),
                config.timeout_s,
            )),
        };
        Gateway { config, provider, cache: None }
    }

    /// Replace the backend. Intended for tests that script provider behavior.
    pub fn with_provider(mut self, provider: Box<dyn Provider>) -> Self {
        self.provider = provider;
        self
    }

    /// Enable the content-addressed disk cache rooted at `dir`
    /// (conventionally `<run_dir>/cache`).
    pub fn with_cache_dir(mut self, dir: impl AsRef<Path>) -> Result<Self, GatewayError> {
        self.cache = Some(DiskCache::new(dir)?);
        Ok(self)
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    /// Temperature for proposer/rewriter calls; reviewer/judge calls use 0.
    pub fn creative_temperature(&self) -> f64 {
        self.config.temperature
    }

    /// Build a request against the configured model and token budget.
    pub fn request(&self, messages: Vec<Message>, temperature: f64) -> ChatRequest {
        ChatRequest {
            model: self.config.model.clone(),
            messages,
            temperature,
            max_tokens: self.config.max_tokens,
        }
    }

    /// Complete a request, consulting the cache first. Identical requests
    /// against the same provider and model always share one cache entry.
    pub fn complete(&self, request: &ChatRequest) -> Result<Completion, GatewayError> {
        let key = cache_key(self.provider.id(), request);
        if let Some(cache) = &self.cache {
            if let Some(entry) = cache.get(&key) {
                return Ok(Completion {
                    text: entry.text,
                    provider: entry.provider,
                    cached: true,
                    latency_ms: 0,
                });
            }
        }
        let started = Instant::now();
        let attempts = self.config.max_retries + 1;
        let mut last: Option<ProviderFailure> = None;
        for attempt in 0..attempts {
            if attempt > 0 {
                let delay = self.config.retry_base_ms.saturating_mul(1 << (attempt - 1).min(16));
                std::thread::sleep(std::time::Duration::from_millis(delay.min(2_000)));
            }
            match self.provider.call(request) {
                Ok(text) => {
                    if let Some(cache) = &self.cache {
                        cache.put(
                            &key,
                            &CacheEntry { text: text.clone(), provider: self.provider.id().to_string() },
                        )?;
                    }
                    return Ok(Completion {
                        text,
                        provider: self.provider.id().to_string(),
                        cached: false,
                        latency_ms: started.elapsed().as_millis() as u64,
                    });
                }
                Err(failure) if failure.retryable() => last = Some(failure),
                Err(ProviderFailure::Auth(env)) => return Err(GatewayError::AuthMissing(env)),
                Err(ProviderFailure::Status { code, body }) => {
                    return Err(GatewayError::ProviderError { status: code, body })
                }
                Err(failure) => return Err(GatewayError::MalformedResponse(failure.describe())),
            }
        }
        Err(GatewayError::RetriesExhausted {
            attempts,
            last: last.map(|f| f.describe()).unwrap_or_else(|| "unknown failure".into()),
        })
    }
}

#[derive(Serialize)]
struct KeyMaterial<'a> {
    provider: &'a str,
    model: &'a str,
    messages: &'a [Message],
    temperature: f64,
    max_tokens: u32,
}

/// Content hash identifying a request: provider id, model, full message list,
/// temperature, and max_tokens all participate.
pub fn cache_key(provider_id: &str, request: &ChatRequest) -> String {
    let material = KeyMaterial {
        provider: provider_id,
        model: &request.model,
        messages: &request.messages,
        temperature: request.temperature,
        max_tokens: request.max_tokens,
    };
    let bytes = serde_json::to_vec(&material).expect("key material serialization cannot fail");
    let digest = Sha256::digest(&bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Extract the contents of the first fenced block labeled `label`
/// (` ```label ... ``` `). Leading and trailing newlines of the block body are
/// trimmed; interior whitespace is preserved verbatim.
pub fn extract_fenced_block(text: &str, label: &str) -> Result<String, GatewayError> {
    let open = format!("```{label}");
    let mut lines = text.lines();
    for line in lines.by_ref() {
        if line.trim() == open {
            let mut body = Vec::new();
            for inner in lines.by_ref() {
                if inner.trim() == "```" {
                    let joined = body.join("\n");
                    return Ok(joined.trim_matches('\n').to_string());
                }
                body.push(inner);
            }
            return Err(GatewayError::NoBlockFound(label.to_string()));
        }
    }
    Err(GatewayError::NoBlockFound(label.to_string()))
}

/// Strictly parse a JSON payload into `T`.
pub fn parse_structured<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, GatewayError> {
    serde_json::from_str(text.trim()).map_err(|e| GatewayError::MalformedResponse(e.to_string()))
}

/// Remove trailing commas before `}` or `]` outside of string literals, so
/// almost-JSON emitted from a template with a dangling comma still parses.
pub fn strip_trailing_commas(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut in_string = false;
    let mut escaped = false;
    let chars: Vec<char> = text.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        if in_string {
            out.push(c);
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
            continue;
        }
        match c {
            '"' => {
                in_string = true;
                out.push(c);
            }
            ',' => {
                let next = chars[i + 1..].iter().find(|ch| !ch.is_whitespace());
                if !matches!(next, Some('}') | Some(']')) {
                    out.push(c);
                }
            }
            _ => out.push(c),
        }
    }
    out
}

/// Render a map of prompt placeholders into a template. Placeholders are
/// written `{name}`; unknown placeholders are left untouched.
pub fn render_template(template: &str, vars: &BTreeMap<&str, String>) -> String {
    let mut out = template.to_string();
    for (name, value) in vars {
        out = out.replace(&format!("{{{name}}}"), value);
    }
    out
}

//! LLM backends and parsers for the unit outputs.
//!
//! Every AI unit goes through [`Backend::complete`] with a single rendered
//! prompt. Two backends ship: [`RemoteBackend`] posts to an
//! OpenAI-compatible chat-completion endpoint, and [`ScriptedBackend`]
//! replays responses from a JSONL script so sessions can run offline and
//! deterministically.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aspect::AspectKind;
use crate::prompt::{RenderedPrompt, UnitKind};
use crate::retrieval::tokenize;

/// Environment variable holding the bearer token for the remote backend.
pub const API_KEY_ENV: &str = "LLM_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub unit: UnitKind,
    pub raw_text: String,
    pub latency: Duration,
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("request timed out after {0:?}")]
    Timeout(Duration),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("backend returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted {
        attempts: u32,
        last: Box<GatewayError>,
    },
    #[error("script has no response left for unit {0}")]
    ScriptedMiss(UnitKind),
    #[error("malformed backend response: {0}")]
    MalformedResponse(String),
    #[error("invalid backend config: {0}")]
    Config(String),
    #[error("script line {line}: {message}")]
    Script { line: usize, message: String },
    #[error("reading script: {0}")]
    Io(#[from] std::io::Error),
}

impl GatewayError {
    /// Short machine-readable kind, used in HTTP error bodies.
    pub fn kind(&self) -> &'static str {
        match self {
            GatewayError::Timeout(_) => "timeout",
            GatewayError::Transport(_) => "transport",
            GatewayError::Status { .. } => "http-status",
            GatewayError::RetriesExhausted { .. } => "retries-exhausted",
            GatewayError::ScriptedMiss(_) => "scripted-miss",
            GatewayError::MalformedResponse(_) => "malformed-response",
            GatewayError::Config(_) => "config",
            GatewayError::Script { .. } | GatewayError::Io(_) => "script",
        }
    }

    fn retriable(&self) -> bool {
        match self {
            GatewayError::Timeout(_) | GatewayError::Transport(_) => true,
            GatewayError::Status { status, .. } => *status >= 500 || *status == 429,
            _ => false,
        }
    }
}

/// An LLM that turns one rendered prompt into raw text.
pub trait Backend: Send + Sync {
    fn complete(&self, prompt: &RenderedPrompt) -> Result<Completion, GatewayError>;
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn complete(&self, prompt: &RenderedPrompt) -> Result<Completion, GatewayError> {
        (**self).complete(prompt)
    }
}

fn default_timeout() -> Duration {
    Duration::from_secs(60)
}

fn default_retries() -> u32 {
    2
}

fn default_backoff() -> Duration {
    Duration::from_millis(500)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    /// Full chat-completion URL, e.g. `https://api.openai.com/v1/chat/completions`.
    pub endpoint: String,
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_timeout", with = "duration_secs")]
    pub timeout: Duration,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// First retry delay; doubles on every further attempt.
    #[serde(default = "default_backoff", with = "duration_secs")]
    pub backoff: Duration,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            temperature: 0.0,
            timeout: default_timeout(),
            max_retries: default_retries(),
            backoff: default_backoff(),
        }
    }
}

mod duration_secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    Remote(RemoteConfig),
    Scripted { script_path: PathBuf },
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        match self {
            BackendConfig::Remote(r) => {
                if r.endpoint.trim().is_empty() {
                    return Err(GatewayError::Config("remote backend needs an endpoint".into()));
                }
                if r.model.trim().is_empty() {
                    return Err(GatewayError::Config("remote backend needs a model".into()));
                }
                if r.temperature.is_nan() || r.temperature < 0.0 {
                    return Err(GatewayError::Config("temperature must be >= 0".into()));
                }
                Ok(())
            }
            BackendConfig::Scripted { script_path } => {
                if script_path.as_os_str().is_empty() {
                    return Err(GatewayError::Config("scripted backend needs a script path".into()));
                }
                Ok(())
            }
        }
    }

    /// Must be called outside of an async runtime: the remote backend owns a
    /// blocking HTTP client.
    pub fn build(&self) -> Result<Arc<dyn Backend>, GatewayError> {
        self.validate()?;
        Ok(match self {
            BackendConfig::Remote(r) => Arc::new(RemoteBackend::new(r.clone())?),
            BackendConfig::Scripted { script_path } => Arc::new(ScriptedBackend::load(script_path)?),
        })
    }
}

/// Chat-completion client. Sends the prompt as a single user message.
pub struct RemoteBackend {
    cfg: RemoteConfig,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    temperature: f64,
    messages: [ChatMessage<'a>; 1],
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    content: Option<String>,
}

impl RemoteBackend {
    pub fn new(cfg: RemoteConfig) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        let api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Ok(Self { cfg, client, api_key })
    }

    /// Overrides the key read from the environment.
    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }

    fn attempt(&self, prompt: &RenderedPrompt) -> Result<String, GatewayError> {
        let body = ChatRequest {
            model: &self.cfg.model,
            temperature: self.cfg.temperature,
            messages: [ChatMessage { role: "user", content: &prompt.text }],
        };
        let mut req = self.client.post(&self.cfg.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let map_err = |e: reqwest::Error| {
            if e.is_timeout() {
                GatewayError::Timeout(self.cfg.timeout)
            } else {
                GatewayError::Transport(e.to_string())
            }
        };
        let resp = req.send().map_err(map_err)?;
        let status = resp.status();
        let text = resp.text().map_err(map_err)?;
        if !status.is_success() {
            return Err(GatewayError::Status { status: status.as_u16(), body: text });
        }
        let parsed: ChatResponse =
            serde_json::from_str(&text).map_err(|e| GatewayError::MalformedResponse(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| GatewayError::MalformedResponse("no choices in response".into()))
    }
}

impl Backend for RemoteBackend {
    fn complete(&self, prompt: &RenderedPrompt) -> Result<Completion, GatewayError> {
        let start = Instant::now();
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(prompt) {
                Ok(raw_text) => {
                    return Ok(Completion { unit: prompt.unit, raw_text, latency: start.elapsed() })
                }
                Err(e) if !e.retriable() || self.cfg.max_retries == 0 => return Err(e),
                Err(e) if attempts > self.cfg.max_retries => {
                    return Err(GatewayError::RetriesExhausted { attempts, last: Box::new(e) })
                }
                Err(e) => {
                    let delay = self.cfg.backoff.saturating_mul(1 << (attempts - 1).min(10));
                    log::warn!("{} attempt {attempts} failed ({e}); retrying in {delay:?}", prompt.unit);
                    std::thread::sleep(delay);
                }
            }
        }
    }
}

/// One line of a script file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub unit: UnitKind,
    #[serde(default)]
    pub inputs_digest: Option<String>,
    pub response: String,
}

/// Replays scripted responses. An entry whose `inputs_digest` equals the
/// prompt's digest wins; otherwise the next unused entry for the unit in
/// file order is returned. Each entry is used at most once.
#[derive(Debug)]
pub struct ScriptedBackend {
    entries: Vec<ScriptEntry>,
    used: Mutex<Vec<bool>>,
}

impl ScriptedBackend {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        let used = Mutex::new(vec![false; entries.len()]);
        Self { entries, used }
    }

    pub fn from_jsonl_reader(reader: impl Read) -> Result<Self, GatewayError> {
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry = serde_json::from_str(&line)
                .map_err(|e| GatewayError::Script { line: i + 1, message: e.to_string() })?;
            entries.push(entry);
        }
        Ok(Self::new(entries))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        Self::from_jsonl_reader(std::fs::File::open(path)?)
    }

    /// Number of entries not yet replayed.
    pub fn remaining(&self) -> usize {
        self.used.lock().unwrap().iter().filter(|u| !**u).count()
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, prompt: &RenderedPrompt) -> Result<Completion, GatewayError> {
        let start = Instant::now();
        let mut used = self.used.lock().unwrap();
        let free = |i: &usize| !used[*i] && self.entries[*i].unit == prompt.unit;
        let pick = (0..self.entries.len())
            .filter(free)
            .find(|i| self.entries[*i].inputs_digest.as_deref() == Some(prompt.inputs_digest.as_str()))
            .or_else(|| (0..self.entries.len()).find(free))
            .ok_or(GatewayError::ScriptedMiss(prompt.unit))?;
        used[pick] = true;
        Ok(Completion {
            unit: prompt.unit,
            raw_text: self.entries[pick].response.clone(),
            latency: start.elapsed(),
        })
    }
}

/// Answers every prompt of a unit with the same fixed text. Never runs dry.
#[derive(Debug, Clone, Default)]
pub struct CannedBackend {
    responses: BTreeMap<UnitKind, String>,
}

impl CannedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, unit: UnitKind, response: impl Into<String>) -> Self {
        self.responses.insert(unit, response.into());
        self
    }
}

impl Backend for CannedBackend {
    fn complete(&self, prompt: &RenderedPrompt) -> Result<Completion, GatewayError> {
        let raw_text = self
            .responses
            .get(&prompt.unit)
            .cloned()
            .ok_or(GatewayError::ScriptedMiss(prompt.unit))?;
        Ok(Completion { unit: prompt.unit, raw_text, latency: Duration::ZERO })
    }
}

/// Wraps a backend and keeps a copy of every prompt sent through it.
pub struct RecordingBackend<B> {
    inner: B,
    prompts: Mutex<Vec<RenderedPrompt>>,
}

impl<B: Backend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self { inner, prompts: Mutex::new(Vec::new()) }
    }

    pub fn prompts(&self) -> Vec<RenderedPrompt> {
        self.prompts.lock().unwrap().clone()
    }

    pub fn prompts_for(&self, unit: UnitKind) -> Vec<RenderedPrompt> {
        self.prompts().into_iter().filter(|p| p.unit == unit).collect()
    }
}

impl<B: Backend> Backend for RecordingBackend<B> {
    fn complete(&self, prompt: &RenderedPrompt) -> Result<Completion, GatewayError> {
        self.prompts.lock().unwrap().push(prompt.clone());
        self.inner.complete(prompt)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("no aspect keyword in {0:?}")]
    UnparseableAspect(String),
    #[error("no options in backend output")]
    EmptyOptions,
    #[error("no valid API names in backend output")]
    EmptyApis,
}

impl ParseError {
    pub fn kind(&self) -> &'static str {
        match self {
            ParseError::UnparseableAspect(_) => "unparseable-aspect",
            ParseError::EmptyOptions => "empty-options",
            ParseError::EmptyApis => "empty-apis",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParsedOptions(Vec<String>);

impl ParsedOptions {
    pub fn as_slice(&self) -> &[String] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<String> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParsedApis(Vec<String>);

impl ParsedApis {
    pub fn as_slice(&self) -> &[String] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<String> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn first(&self) -> Option<&str> {
        self.0.first().map(String::as_str)
    }
}

/// First aspect name appearing as a whole word, case-insensitively.
pub fn parse_aspect(c: &Completion) -> Result<AspectKind, ParseError> {
    tokenize(&c.raw_text)
        .iter()
        .find_map(|t| t.parse::<AspectKind>().ok())
        .ok_or_else(|| ParseError::UnparseableAspect(c.raw_text.clone()))
}

/// Content of a `1. item` / `1) item` line.
fn numbered_item(line: &str) -> Option<&str> {
    let s = line.trim_start();
    let digits = s.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 {
        return None;
    }
    let rest = s[digits..].strip_prefix(['.', ')'])?;
    let item = rest.trim();
    (!item.is_empty()).then_some(item)
}

/// Numbered lines if there are any, otherwise every non-empty line.
fn list_items(text: &str) -> Vec<&str> {
    let numbered: Vec<&str> = text.lines().filter_map(numbered_item).collect();
    if !numbered.is_empty() {
        return numbered;
    }
    text.lines().map(str::trim).filter(|l| !l.is_empty()).collect()
}

pub fn parse_options(c: &Completion) -> Result<ParsedOptions, ParseError> {
    let mut seen = std::collections::HashSet::new();
    let options: Vec<String> = list_items(&c.raw_text)
        .into_iter()
        .filter(|o| seen.insert(o.to_lowercase()))
        .map(str::to_string)
        .collect();
    if options.is_empty() {
        return Err(ParseError::EmptyOptions);
    }
    Ok(ParsedOptions(options))
}

/// `seg(.seg)+` where each segment is a Java identifier.
pub fn is_qualified_name(s: &str) -> bool {
    let segs: Vec<&str> = s.split('.').collect();
    segs.len() >= 2
        && segs.iter().all(|seg| {
            let mut chars = seg.chars();
            matches!(chars.next(), Some(c) if c.is_alphabetic() || c == '_' || c == '$')
                && chars.all(|c| c.is_alphanumeric() || c == '_' || c == '$')
        })
}

fn clean_api(item: &str) -> &str {
    let item = item.trim().trim_matches(|c| c == '`' || c == '*');
    // drop trailing prose like "- returns a double"
    let item = item.split_whitespace().next().unwrap_or("");
    let item = item.trim_matches(|c| c == '`' || c == '*');
    let item = match item.find('(') {
        Some(open) if item.ends_with(')') => &item[..open],
        _ => item,
    };
    item.trim_end_matches(['.', ',', ';', ':'])
}

pub fn parse_apis(c: &Completion) -> Result<ParsedApis, ParseError> {
    let mut apis = Vec::new();
    for item in list_items(&c.raw_text) {
        let name = clean_api(item);
        if is_qualified_name(name) {
            apis.push(name.to_string());
        } else {
            log::warn!("dropping API line that is not a qualified method name: {item:?}");
        }
    }
    if apis.is_empty() {
        return Err(ParseError::EmptyApis);
    }
    Ok(ParsedApis(apis))
}

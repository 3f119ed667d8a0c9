//! Chat-completion client contract, a fingerprint-keyed replay mock, a
//! recorder that produces replay files, and an HTTP client (feature `http`).

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("LLM unavailable: {0}")]
    Unavailable(String),
    #[error("no scripted reply for prompt fingerprint {0}")]
    UnknownPrompt(String),
    #[error("replay file: {0}")]
    Replay(String),
}

pub trait LlmClient: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, messages: &[Message], temperature: f64) -> Result<String, LlmError>;
}

impl<T: LlmClient + ?Sized> LlmClient for &T {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn complete(&self, messages: &[Message], temperature: f64) -> Result<String, LlmError> {
        (**self).complete(messages, temperature)
    }
}

fn canonical(text: &str) -> String {
    let unix = text.replace("\r\n", "\n");
    let lines: Vec<&str> = unix.lines().map(str::trim_end).collect();
    lines.join("\n").trim().to_string()
}

/// SHA-256 (hex) of the canonicalized conversation: line endings unified,
/// trailing whitespace stripped. Temperature is not part of the key.
pub fn fingerprint(messages: &[Message]) -> String {
    let mut h = Sha256::new();
    for m in messages {
        h.update(m.role.to_string().as_bytes());
        h.update([0u8]);
        h.update(canonical(&m.content).as_bytes());
        h.update([0x1e]);
    }
    hex::encode(h.finalize())
}

/// Short content digest used in transcripts.
pub fn digest(text: &str) -> String {
    hex::encode(&Sha256::digest(text.as_bytes())[..8])
}

/// Candidate code blocks in a reply: fenced blocks in order, or, when the
/// reply has no fences, the whole reply followed by its blank-line separated
/// paragraphs. Callers pick the first candidate that parses.
pub fn extract_code(reply: &str) -> Vec<String> {
    let mut blocks = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    for line in reply.lines() {
        if line.trim_start().starts_with("```") {
            match current.take() {
                Some(lines) => blocks.push(lines.join("\n") + "\n"),
                None => current = Some(Vec::new()),
            }
        } else if let Some(lines) = current.as_mut() {
            lines.push(line);
        }
    }
    if !blocks.is_empty() {
        return blocks;
    }
    let trimmed = reply.trim_matches('\n');
    if trimmed.trim().is_empty() {
        return blocks;
    }
    blocks.push(format!("{trimmed}\n"));
    let mut para: Vec<&str> = Vec::new();
    for line in trimmed.lines().chain(std::iter::once("")) {
        if line.trim().is_empty() {
            if !para.is_empty() {
                blocks.push(para.join("\n") + "\n");
                para.clear();
            }
        } else {
            para.push(line);
        }
    }
    blocks
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub fingerprint: String,
    pub reply: String,
}

/// Replays canned replies keyed by prompt fingerprint.
#[derive(Debug, Clone)]
pub struct ScriptedLlm {
    name: String,
    replies: HashMap<String, String>,
    fallback: Option<String>,
}

impl ScriptedLlm {
    /// Strict replay: unknown prompts are errors.
    pub fn strict(name: impl Into<String>, records: impl IntoIterator<Item = ReplayRecord>) -> Self {
        Self { name: name.into(), replies: records.into_iter().map(|r| (r.fingerprint, r.reply)).collect(), fallback: None }
    }

    /// Unknown prompts get `fallback` instead of an error.
    pub fn lenient(
        name: impl Into<String>,
        records: impl IntoIterator<Item = ReplayRecord>,
        fallback: impl Into<String>,
    ) -> Self {
        Self { fallback: Some(fallback.into()), ..Self::strict(name, records) }
    }

    pub fn insert(&mut self, messages: &[Message], reply: impl Into<String>) {
        self.replies.insert(fingerprint(messages), reply.into());
    }

    pub fn len(&self) -> usize {
        self.replies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.replies.is_empty()
    }

    pub fn load(name: impl Into<String>, path: &Path) -> Result<Self, LlmError> {
        let file = std::fs::File::open(path).map_err(|e| LlmError::Replay(format!("{}: {e}", path.display())))?;
        Ok(Self::strict(name, read_replay(std::io::BufReader::new(file))?))
    }
}

pub fn read_replay(reader: impl BufRead) -> Result<Vec<ReplayRecord>, LlmError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| LlmError::Replay(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ReplayRecord = serde_json::from_str(&line).map_err(|e| LlmError::Replay(format!("line {}: {e}", i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

impl LlmClient for ScriptedLlm {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, messages: &[Message], _temperature: f64) -> Result<String, LlmError> {
        let fp = fingerprint(messages);
        match (self.replies.get(&fp), &self.fallback) {
            (Some(r), _) => Ok(r.clone()),
            (None, Some(f)) => Ok(f.clone()),
            (None, None) => Err(LlmError::UnknownPrompt(fp)),
        }
    }
}

type Responder = dyn Fn(&[Message]) -> Result<String, LlmError> + Send + Sync;

/// Client backed by a closure; handy for rule-based test doubles.
pub struct FnLlm {
    name: String,
    respond: Box<Responder>,
}

impl FnLlm {
    pub fn new(
        name: impl Into<String>,
        respond: impl Fn(&[Message]) -> Result<String, LlmError> + Send + Sync + 'static,
    ) -> Self {
        Self { name: name.into(), respond: Box::new(respond) }
    }
}

impl LlmClient for FnLlm {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, messages: &[Message], _temperature: f64) -> Result<String, LlmError> {
        (self.respond)(messages)
    }
}

/// Wraps a client and keeps every (fingerprint, reply) pair it produced.
pub struct RecordingLlm<C> {
    inner: C,
    log: Mutex<Vec<ReplayRecord>>,
}

impl<C: LlmClient> RecordingLlm<C> {
    pub fn new(inner: C) -> Self {
        Self { inner, log: Mutex::new(Vec::new()) }
    }

    /// Recorded pairs, first occurrence of each fingerprint, in call order.
    pub fn records(&self) -> Vec<ReplayRecord> {
        let log = self.log.lock().unwrap();
        let mut seen = std::collections::HashSet::new();
        log.iter().filter(|r| seen.insert(r.fingerprint.clone())).cloned().collect()
    }

    pub fn write_replay(&self, mut out: impl Write) -> std::io::Result<()> {
        for r in self.records() {
            serde_json::to_writer(&mut out, &r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

impl<C: LlmClient> LlmClient for RecordingLlm<C> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn complete(&self, messages: &[Message], temperature: f64) -> Result<String, LlmError> {
        let reply = self.inner.complete(messages, temperature)?;
        self.log.lock().unwrap().push(ReplayRecord { fingerprint: fingerprint(messages), reply: reply.clone() });
        Ok(reply)
    }
}

/// Millisecond clock; the agents loop reads time only through this.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

pub struct SystemClock {
    start: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        Self { start: Instant::now() }
    }
}

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        self.start.elapsed().as_millis() as u64
    }
}

/// Advances by a fixed step on every read, for reproducible transcripts.
pub struct StepClock {
    now: AtomicU64,
    step: u64,
}

impl StepClock {
    pub fn new(step_ms: u64) -> Self {
        Self { now: AtomicU64::new(0), step: step_ms }
    }
}

impl Clock for StepClock {
    fn now_ms(&self) -> u64 {
        self.now.fetch_add(self.step, Ordering::SeqCst) + self.step
    }
}

#[cfg(feature = "http")]
pub use http::{EndpointConfig, HttpLlm};

#[cfg(feature = "http")]
mod http {
    use std::time::Duration;

    use serde::Deserialize;
    use serde_json::json;

    use super::{LlmClient, LlmError, Message};

    /// Connection settings for one named role (`generator` or `assistant`).
    #[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
    pub struct EndpointConfig {
        pub url: String,
        pub model: String,
        #[serde(default)]
        pub key: Option<String>,
    }

    impl EndpointConfig {
        /// Reads `JARVIS_LLM_URL`, `JARVIS_LLM_MODEL` and `JARVIS_LLM_KEY`.
        /// A role-suffixed variable (`JARVIS_LLM_MODEL_GENERATOR`) wins over
        /// the plain one.
        pub fn from_env(role: &str) -> Option<Self> {
            let var = |base: &str| {
                std::env::var(format!("{base}_{}", role.to_uppercase()))
                    .or_else(|_| std::env::var(base))
                    .ok()
                    .filter(|v| !v.is_empty())
            };
            Some(Self {
                url: var("JARVIS_LLM_URL")?,
                model: var("JARVIS_LLM_MODEL").unwrap_or_else(|| "default".into()),
                key: var("JARVIS_LLM_KEY"),
            })
        }
    }

    /// OpenAI-style `/chat/completions` client.
    pub struct HttpLlm {
        name: String,
        config: EndpointConfig,
        agent: ureq::Agent,
    }

    impl HttpLlm {
        pub fn new(name: impl Into<String>, config: EndpointConfig, timeout: Duration) -> Self {
            let agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into();
            Self { name: name.into(), config, agent }
        }

        fn endpoint(&self) -> String {
            let base = self.config.url.trim_end_matches('/');
            if base.ends_with("/chat/completions") {
                base.to_string()
            } else {
                format!("{base}/chat/completions")
            }
        }
    }

    impl LlmClient for HttpLlm {
        fn name(&self) -> &str {
            &self.name
        }

        fn complete(&self, messages: &[Message], temperature: f64) -> Result<String, LlmError> {
            let body = json!({
                "model": self.config.model,
                "temperature": temperature,
                "messages": messages,
            });
            let mut req = self.agent.post(&self.endpoint());
            if let Some(key) = &self.config.key {
                req = req.header("Authorization", &format!("Bearer {key}"));
            }
            let mut resp = req.send_json(&body).map_err(|e| LlmError::Unavailable(e.to_string()))?;
            let value: serde_json::Value =
                resp.body_mut().read_json().map_err(|e| LlmError::Unavailable(format!("bad response body: {e}")))?;
            match value.pointer("/choices/0/message/content").and_then(|v| v.as_str()) {
                Some(text) if !text.trim().is_empty() => Ok(text.to_string()),
                _ => Err(LlmError::Unavailable("response carried no message content".into())),
            }
        }
    }
}

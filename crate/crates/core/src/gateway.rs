//! The only code that talks to language-model services.
//!
//! Everything above this module sees a [`ChatGateway`]: role-tagged messages
//! in, reply text out. [`HttpGateway`] speaks the chat-completions HTTP
//! shape with retries and a per-attempt transcript; [`ReplayGateway`] serves
//! recorded replies by request digest so model-backed code can be tested
//! without a network.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const ENV_API_BASE: &str = "SPLANNER_API_BASE";
pub const ENV_API_KEY: &str = "SPLANNER_API_KEY";
pub const ENV_MODEL: &str = "SPLANNER_MODEL";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GatewayError {
    #[error("request timed out")]
    Timeout,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("server returned status {0}")]
    Status(u16),
    #[error("model returned an empty reply")]
    EmptyReply,
    #[error("REPLAY_MISS: no recorded reply for request digest {0}")]
    ReplayMiss(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transcript error: {0}")]
    Transcript(String),
}

impl GatewayError {
    pub fn kind(&self) -> &'static str {
        match self {
            GatewayError::Timeout => "timeout",
            GatewayError::Transport(_) => "transport",
            GatewayError::Status(_) => "status",
            GatewayError::EmptyReply => "empty_reply",
            GatewayError::ReplayMiss(_) => "replay_miss",
            GatewayError::InvalidRequest(_) => "invalid_request",
            GatewayError::Transcript(_) => "transcript",
        }
    }

    /// Transport failures, timeouts, 5xx and 429 are worth another attempt.
    pub fn is_retryable(&self) -> bool {
        match self {
            GatewayError::Timeout | GatewayError::Transport(_) => true,
            GatewayError::Status(code) => *code == 429 || (500..600).contains(code),
            _ => false,
        }
    }
}

/// Anything that can turn a conversation into an assistant reply.
pub trait ChatGateway: Send + Sync {
    fn complete(&self, messages: &[Message]) -> Result<String, GatewayError>;
}

impl<G: ChatGateway + ?Sized> ChatGateway for &G {
    fn complete(&self, messages: &[Message]) -> Result<String, GatewayError> {
        (**self).complete(messages)
    }
}

impl<G: ChatGateway + ?Sized> ChatGateway for Box<G> {
    fn complete(&self, messages: &[Message]) -> Result<String, GatewayError> {
        (**self).complete(messages)
    }
}

impl<G: ChatGateway + ?Sized> ChatGateway for Arc<G> {
    fn complete(&self, messages: &[Message]) -> Result<String, GatewayError> {
        (**self).complete(messages)
    }
}

/// Hex SHA-256 over the JSON encoding of the message list. Two requests
/// with the same roles and contents share a digest.
pub fn request_digest(messages: &[Message]) -> String {
    let encoded = serde_json::to_vec(messages).expect("messages serialize");
    hex::encode(Sha256::digest(&encoded))
}

fn check_messages(messages: &[Message]) -> Result<(), GatewayError> {
    match messages.first() {
        None => Err(GatewayError::InvalidRequest("no messages".into())),
        Some(m) if m.role != Role::System => Err(GatewayError::InvalidRequest(
            "the first message must have the system role".into(),
        )),
        Some(_) => Ok(()),
    }
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub total_tokens: u64,
}

/// One request attempt and what came back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub digest: String,
    pub messages: Vec<Message>,
    pub reply: Option<String>,
    pub error: Option<String>,
    pub status: Option<u16>,
    pub attempt: u32,
    pub latency_ms: u64,
    pub usage: Option<Usage>,
    pub timestamp_ms: u64,
}

/// Append-only log of exchanges, optionally mirrored to a JSON-lines file.
/// Writes are serialized through a lock.
#[derive(Debug, Default)]
pub struct Transcript {
    entries: Mutex<Vec<Exchange>>,
    sink: Option<Mutex<File>>,
}

impl Transcript {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Creates (truncating) a transcript file.
    pub fn create(path: &Path) -> Result<Self, GatewayError> {
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(path)
            .map_err(|e| GatewayError::Transcript(format!("{}: {e}", path.display())))?;
        Ok(Self {
            entries: Mutex::new(Vec::new()),
            sink: Some(Mutex::new(file)),
        })
    }

    pub fn record(&self, exchange: Exchange) -> Result<(), GatewayError> {
        let mut entries = self.entries.lock().expect("transcript lock");
        if let Some(sink) = &self.sink {
            let mut line = serde_json::to_string(&exchange).map_err(|e| GatewayError::Transcript(e.to_string()))?;
            line.push('\n');
            let mut file = sink.lock().expect("transcript file lock");
            file.write_all(line.as_bytes())
                .and_then(|_| file.flush())
                .map_err(|e| GatewayError::Transcript(e.to_string()))?;
        }
        entries.push(exchange);
        Ok(())
    }

    pub fn entries(&self) -> Vec<Exchange> {
        self.entries.lock().expect("transcript lock").clone()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("transcript lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Reads every exchange from a transcript file.
    pub fn load(path: &Path) -> Result<Vec<Exchange>, GatewayError> {
        let file = File::open(path).map_err(|e| GatewayError::Transcript(format!("{}: {e}", path.display())))?;
        let mut out = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| GatewayError::Transcript(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let ex: Exchange = serde_json::from_str(&line)
                .map_err(|e| GatewayError::Transcript(format!("{}:{}: {e}", path.display(), i + 1)))?;
            out.push(ex);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatewayConfig {
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub max_retries: u32,
    /// Delay before the first retry; doubles for each further retry.
    pub backoff: Duration,
    pub temperature: f32,
}

impl GatewayConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            api_key: None,
            timeout: Duration::from_secs(60),
            max_retries: 2,
            backoff: Duration::from_secs(1),
            temperature: 0.0,
        }
    }

    /// Builds a config from `SPLANNER_API_BASE`, `SPLANNER_MODEL` and
    /// `SPLANNER_API_KEY`, looked up through `env`.
    pub fn from_env_with(env: impl Fn(&str) -> Option<String>) -> Option<Self> {
        let base = env(ENV_API_BASE)?;
        let model = env(ENV_MODEL).unwrap_or_default();
        let mut cfg = Self::new(base, model);
        cfg.api_key = env(ENV_API_KEY);
        Some(cfg)
    }

    pub fn from_env() -> Option<Self> {
        Self::from_env_with(|k| std::env::var(k).ok())
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.timeout.is_zero() {
            return Err(GatewayError::InvalidRequest("timeout must be positive".into()));
        }
        if self.base_url.is_empty() {
            return Err(GatewayError::InvalidRequest("base URL is empty".into()));
        }
        Ok(())
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [Message],
    temperature: f32,
}

#[derive(Deserialize)]
struct ChatResponse {
    #[serde(default)]
    choices: Vec<Choice>,
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
}

/// Chat-completions client: POST `{base}/chat/completions` with bearer
/// auth. Every attempt, including retried ones, lands in the transcript.
pub struct HttpGateway {
    cfg: GatewayConfig,
    client: reqwest::blocking::Client,
    transcript: Arc<Transcript>,
}

impl HttpGateway {
    pub fn new(cfg: GatewayConfig) -> Result<Self, GatewayError> {
        Self::with_transcript(cfg, Arc::new(Transcript::in_memory()))
    }

    pub fn with_transcript(cfg: GatewayConfig, transcript: Arc<Transcript>) -> Result<Self, GatewayError> {
        cfg.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        Ok(Self {
            cfg,
            client,
            transcript,
        })
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.cfg
    }

    pub fn transcript(&self) -> &Arc<Transcript> {
        &self.transcript
    }

    fn attempt(&self, messages: &[Message]) -> (Result<String, GatewayError>, Option<u16>, Option<Usage>) {
        let body = ChatRequest {
            model: &self.cfg.model,
            messages,
            temperature: self.cfg.temperature,
        };
        let mut req = self.client.post(self.cfg.endpoint()).json(&body);
        if let Some(key) = &self.cfg.api_key {
            req = req.bearer_auth(key);
        }
        let resp = match req.send() {
            Ok(r) => r,
            Err(e) if e.is_timeout() => return (Err(GatewayError::Timeout), None, None),
            Err(e) => return (Err(GatewayError::Transport(e.to_string())), None, None),
        };
        let status = resp.status().as_u16();
        if !resp.status().is_success() {
            return (Err(GatewayError::Status(status)), Some(status), None);
        }
        let text = match resp.text() {
            Ok(t) => t,
            Err(e) if e.is_timeout() => return (Err(GatewayError::Timeout), Some(status), None),
            Err(e) => return (Err(GatewayError::Transport(e.to_string())), Some(status), None),
        };
        let parsed: ChatResponse = match serde_json::from_str(&text) {
            Ok(p) => p,
            Err(_) => return (Err(GatewayError::EmptyReply), Some(status), None),
        };
        let content = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .filter(|c| !c.trim().is_empty());
        match content {
            Some(c) => (Ok(c), Some(status), parsed.usage),
            None => (Err(GatewayError::EmptyReply), Some(status), parsed.usage),
        }
    }
}

impl ChatGateway for HttpGateway {
    fn complete(&self, messages: &[Message]) -> Result<String, GatewayError> {
        check_messages(messages)?;
        let digest = request_digest(messages);
        let mut attempt = 0u32;
        loop {
            let started = Instant::now();
            let (result, status, usage) = self.attempt(messages);
            self.transcript.record(Exchange {
                digest: digest.clone(),
                messages: messages.to_vec(),
                reply: result.as_ref().ok().cloned(),
                error: result.as_ref().err().map(ToString::to_string),
                status,
                attempt,
                latency_ms: started.elapsed().as_millis() as u64,
                usage,
                timestamp_ms: now_ms(),
            })?;
            match result {
                Err(e) if e.is_retryable() && attempt < self.cfg.max_retries => {
                    std::thread::sleep(self.cfg.backoff * 2u32.pow(attempt));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

/// Serves recorded replies by request digest. A digest recorded several
/// times replays its replies in order, then keeps returning the last one.
#[derive(Debug)]
pub struct ReplayGateway {
    replies: HashMap<String, Vec<String>>,
    cursors: Mutex<HashMap<String, usize>>,
}

impl ReplayGateway {
    pub fn from_exchanges(exchanges: impl IntoIterator<Item = Exchange>) -> Self {
        let mut replies: HashMap<String, Vec<String>> = HashMap::new();
        for ex in exchanges {
            if let Some(reply) = ex.reply {
                replies.entry(ex.digest).or_default().push(reply);
            }
        }
        Self {
            replies,
            cursors: Mutex::new(HashMap::new()),
        }
    }

    pub fn open(path: &Path) -> Result<Self, GatewayError> {
        Ok(Self::from_exchanges(Transcript::load(path)?))
    }
}

impl ChatGateway for ReplayGateway {
    fn complete(&self, messages: &[Message]) -> Result<String, GatewayError> {
        check_messages(messages)?;
        let digest = request_digest(messages);
        let replies = self
            .replies
            .get(&digest)
            .ok_or_else(|| GatewayError::ReplayMiss(digest.clone()))?;
        let mut cursors = self.cursors.lock().expect("replay cursor lock");
        let cursor = cursors.entry(digest).or_insert(0);
        let reply = replies[(*cursor).min(replies.len() - 1)].clone();
        *cursor += 1;
        Ok(reply)
    }
}

/// Wraps another gateway and appends one exchange per call to a transcript.
pub struct RecordingGateway<G> {
    inner: G,
    transcript: Arc<Transcript>,
}

impl<G: ChatGateway> RecordingGateway<G> {
    pub fn new(inner: G, transcript: Arc<Transcript>) -> Self {
        Self { inner, transcript }
    }

    pub fn transcript(&self) -> &Arc<Transcript> {
        &self.transcript
    }
}

impl<G: ChatGateway> ChatGateway for RecordingGateway<G> {
    fn complete(&self, messages: &[Message]) -> Result<String, GatewayError> {
        let started = Instant::now();
        let result = self.inner.complete(messages);
        let status = match &result {
            Err(GatewayError::Status(code)) => Some(*code),
            _ => None,
        };
        self.transcript.record(Exchange {
            digest: request_digest(messages),
            messages: messages.to_vec(),
            reply: result.as_ref().ok().cloned(),
            error: result.as_ref().err().map(ToString::to_string),
            status,
            attempt: 0,
            latency_ms: started.elapsed().as_millis() as u64,
            usage: None,
            timestamp_ms: now_ms(),
        })?;
        result
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SessionMode {
    Record,
    Replay,
}

/// Opens a transcript-backed session. In record mode every call to `live`
/// is persisted to `path`; in replay mode `live` is ignored and replies come
/// from the file.
pub fn record_and_replay(
    mode: SessionMode,
    path: &Path,
    live: Option<Box<dyn ChatGateway>>,
) -> Result<Box<dyn ChatGateway>, GatewayError> {
    match mode {
        SessionMode::Replay => Ok(Box::new(ReplayGateway::open(path)?)),
        SessionMode::Record => {
            let live = live.ok_or_else(|| GatewayError::InvalidRequest("record mode needs a live gateway".into()))?;
            let transcript = Arc::new(Transcript::create(path)?);
            Ok(Box::new(RecordingGateway::new(live, transcript)))
        }
    }
}

/// Returns pre-scripted results in order; for tests and demos. Once the
/// script runs out every call fails with [`GatewayError::EmptyReply`].
#[derive(Debug, Default)]
pub struct ScriptedGateway {
    script: Mutex<std::collections::VecDeque<Result<String, GatewayError>>>,
    seen: Mutex<Vec<Vec<Message>>>,
}

impl ScriptedGateway {
    pub fn new(script: impl IntoIterator<Item = Result<String, GatewayError>>) -> Self {
        Self {
            script: Mutex::new(script.into_iter().collect()),
            seen: Mutex::new(Vec::new()),
        }
    }

    pub fn replies<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        Self::new(replies.into_iter().map(|r| Ok(r.into())))
    }

    /// Every request received so far.
    pub fn requests(&self) -> Vec<Vec<Message>> {
        self.seen.lock().expect("scripted lock").clone()
    }
}

impl ChatGateway for ScriptedGateway {
    fn complete(&self, messages: &[Message]) -> Result<String, GatewayError> {
        check_messages(messages)?;
        self.seen.lock().expect("scripted lock").push(messages.to_vec());
        self.script
            .lock()
            .expect("scripted lock")
            .pop_front()
            .unwrap_or(Err(GatewayError::EmptyReply))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn convo(text: &str) -> Vec<Message> {
        vec![Message::system("sys"), Message::user(text)]
    }

    #[test]
    fn digest_depends_on_content_and_role() {
        let a = request_digest(&convo("hi"));
        assert_eq!(a, request_digest(&convo("hi")));
        assert_ne!(a, request_digest(&convo("hi!")));
        let swapped = vec![Message::system("sys"), Message::assistant("hi")];
        assert_ne!(a, request_digest(&swapped));
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn replay_serves_in_order_then_repeats() {
        let ex = |reply: &str| Exchange {
            digest: request_digest(&convo("q")),
            messages: convo("q"),
            reply: Some(reply.into()),
            error: None,
            status: Some(200),
            attempt: 0,
            latency_ms: 1,
            usage: None,
            timestamp_ms: 0,
        };
        let gw = ReplayGateway::from_exchanges([ex("one"), ex("two")]);
        assert_eq!(gw.complete(&convo("q")).unwrap(), "one");
        assert_eq!(gw.complete(&convo("q")).unwrap(), "two");
        assert_eq!(gw.complete(&convo("q")).unwrap(), "two");
        assert!(matches!(gw.complete(&convo("other")), Err(GatewayError::ReplayMiss(_))));
    }

    #[test]
    fn first_message_must_be_system() {
        let gw = ScriptedGateway::replies(["x"]);
        let err = gw.complete(&[Message::user("hello")]).unwrap_err();
        assert_eq!(err.kind(), "invalid_request");
        assert_eq!(gw.complete(&[]).unwrap_err().kind(), "invalid_request");
    }

    #[test]
    fn retry_classification() {
        assert!(GatewayError::Status(500).is_retryable());
        assert!(GatewayError::Status(429).is_retryable());
        assert!(!GatewayError::Status(401).is_retryable());
        assert!(!GatewayError::Status(404).is_retryable());
        assert!(GatewayError::Timeout.is_retryable());
        assert!(!GatewayError::EmptyReply.is_retryable());
    }

    #[test]
    fn env_config() {
        let env = |k: &str| match k {
            ENV_API_BASE => Some("http://localhost:1".to_string()),
            ENV_MODEL => Some("m".to_string()),
            _ => None,
        };
        let cfg = GatewayConfig::from_env_with(env).unwrap();
        assert_eq!(cfg.endpoint(), "http://localhost:1/chat/completions");
        assert_eq!(cfg.max_retries, 2);
        assert_eq!(cfg.timeout, Duration::from_secs(60));
        assert!(GatewayConfig::from_env_with(|_| None).is_none());
    }
}

//! Text-completion gateway.
//!
//! Every LLM call in the crate goes through [`Gateway::complete`]. The
//! gateway resolves the request's [`TaskKind`] to a model tag, then either
//! forwards to an upstream (live HTTP endpoint or scripted responder),
//! forwards and persists (record), or answers strictly from a replay store.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[cfg(feature = "live")]
mod http;
mod store;

#[cfg(feature = "live")]
pub use http::{HttpUpstream, RetryPolicy};
pub use store::{ReplayRecord, ReplayStore, REPLAY_FORMAT_VERSION};

pub const DEFAULT_API_KEY_VAR: &str = "LLM_API_KEY";

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("request has no messages or an empty message")]
    EmptyRequest,
    #[error("no model mapped for task kind {0}")]
    UnmappedRoute(TaskKind),
    #[error("replay miss for digest {digest}")]
    ReplayMiss { digest: String },
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed completion payload: {0}")]
    Payload(String),
    #[error("replay store: {0}")]
    Store(String),
    #[error("live backend not available: {0}")]
    Unavailable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
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

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

/// Which pipeline stage issued a request; drives model routing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Selection,
    Reflection,
    Inference,
    Auxiliary,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] = [
        TaskKind::Selection,
        TaskKind::Reflection,
        TaskKind::Inference,
        TaskKind::Auxiliary,
    ];

    pub fn default_max_tokens(self) -> u32 {
        match self {
            TaskKind::Selection => 512,
            _ => 1024,
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TaskKind::Selection => "selection",
            TaskKind::Reflection => "reflection",
            TaskKind::Inference => "inference",
            TaskKind::Auxiliary => "auxiliary",
        };
        f.write_str(s)
    }
}

/// A chat-shaped completion request.
///
/// `tags` carry structured context about how the prompt was built
/// (template name, bindings). They are never sent upstream and are not
/// part of the cache key; scripted responders read them.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub messages: Vec<Message>,
    pub route: TaskKind,
    pub temperature: f64,
    pub max_tokens: u32,
    pub tags: BTreeMap<String, String>,
}

impl ChatRequest {
    pub fn new(route: TaskKind, messages: Vec<Message>) -> Self {
        Self {
            messages,
            route,
            temperature: 0.0,
            max_tokens: route.default_max_tokens(),
            tags: BTreeMap::new(),
        }
    }

    pub fn tag(mut self, key: &str, value: impl Into<String>) -> Self {
        self.tags.insert(key.to_string(), value.into());
        self
    }

    pub fn tag_value(&self, key: &str) -> Option<&str> {
        self.tags.get(key).map(String::as_str)
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.messages.is_empty() || self.messages.iter().any(|m| m.content.is_empty()) {
            return Err(LlmError::EmptyRequest);
        }
        Ok(())
    }

    pub fn last_content(&self) -> &str {
        self.messages.last().map(|m| m.content.as_str()).unwrap_or("")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseSource {
    Live,
    Cache,
    Script,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatResponse {
    pub text: String,
    pub source: ResponseSource,
    pub usage: Option<Usage>,
    /// The backend returned an empty completion.
    pub empty: bool,
}

/// SHA-256 over the resolved model tag and the canonical request body.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CacheKey(pub String);

// Field order here is the canonical (sorted) order.
#[derive(Serialize)]
struct CanonicalMessage<'a> {
    content: &'a str,
    role: Role,
}

#[derive(Serialize)]
struct CanonicalRequest<'a> {
    max_tokens: u32,
    messages: Vec<CanonicalMessage<'a>>,
    model: &'a str,
    temperature: f64,
}

impl CacheKey {
    pub fn compute(model: &str, req: &ChatRequest) -> Self {
        let canonical = CanonicalRequest {
            max_tokens: req.max_tokens,
            messages: req
                .messages
                .iter()
                .map(|m| CanonicalMessage { content: &m.content, role: m.role })
                .collect(),
            model,
            temperature: req.temperature,
        };
        let bytes = serde_json::to_vec(&canonical).expect("canonical request serializes");
        CacheKey(hex::encode(Sha256::digest(&bytes)))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CacheKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// TaskKind → model tag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteTable(pub BTreeMap<TaskKind, String>);

impl Default for RouteTable {
    fn default() -> Self {
        let chat = "gpt-3.5-turbo-16k-0613".to_string();
        Self(BTreeMap::from([
            (TaskKind::Selection, "text-davinci-003".to_string()),
            (TaskKind::Reflection, chat.clone()),
            (TaskKind::Inference, chat.clone()),
            (TaskKind::Auxiliary, chat),
        ]))
    }
}

impl RouteTable {
    pub fn uniform(model: &str) -> Self {
        Self(TaskKind::ALL.iter().map(|k| (*k, model.to_string())).collect())
    }

    pub fn route_model(&self, kind: TaskKind) -> Result<&str, LlmError> {
        self.0
            .get(&kind)
            .map(String::as_str)
            .ok_or(LlmError::UnmappedRoute(kind))
    }
}

/// Raw completion from an upstream.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub usage: Option<Usage>,
}

/// Something that produces completions: a live endpoint or a script.
pub trait Upstream: Send + Sync {
    fn call(&self, model: &str, req: &ChatRequest) -> Result<Completion, LlmError>;
    fn source(&self) -> ResponseSource;
}

/// Scripted responder; answers every request from a user-supplied function.
pub struct ScriptUpstream {
    responder: Box<dyn Fn(&ChatRequest) -> String + Send + Sync>,
}

impl ScriptUpstream {
    pub fn new(responder: impl Fn(&ChatRequest) -> String + Send + Sync + 'static) -> Self {
        Self { responder: Box::new(responder) }
    }
}

impl Upstream for ScriptUpstream {
    fn call(&self, _model: &str, req: &ChatRequest) -> Result<Completion, LlmError> {
        Ok(Completion { text: (self.responder)(req), usage: None })
    }

    fn source(&self) -> ResponseSource {
        ResponseSource::Script
    }
}

/// Counting semaphore bounding concurrent upstream calls.
struct InflightLimiter {
    max: usize,
    current: Mutex<usize>,
    freed: Condvar,
}

impl InflightLimiter {
    fn new(max: usize) -> Self {
        Self { max: max.max(1), current: Mutex::new(0), freed: Condvar::new() }
    }

    fn run<T>(&self, f: impl FnOnce() -> T) -> T {
        {
            let mut n = self.current.lock().expect("limiter poisoned");
            while *n >= self.max {
                n = self.freed.wait(n).expect("limiter poisoned");
            }
            *n += 1;
        }
        let out = f();
        *self.current.lock().expect("limiter poisoned") -= 1;
        self.freed.notify_one();
        out
    }
}

enum Mode {
    Direct(Arc<dyn Upstream>),
    Record { upstream: Arc<dyn Upstream>, store: Arc<ReplayStore> },
    Replay { store: Arc<ReplayStore> },
}

/// Shareable completion interface with routing and caching.
pub struct Gateway {
    routes: RouteTable,
    mode: Mode,
    limiter: InflightLimiter,
    calls: AtomicUsize,
}

pub const DEFAULT_INFLIGHT: usize = 8;

impl Gateway {
    /// Forward every request to `upstream` without persistence.
    pub fn direct(routes: RouteTable, upstream: Arc<dyn Upstream>) -> Self {
        Self::with_mode(routes, Mode::Direct(upstream))
    }

    /// Forward cache misses to `upstream` and persist them; hits come from the store.
    pub fn record(routes: RouteTable, upstream: Arc<dyn Upstream>, store: Arc<ReplayStore>) -> Self {
        Self::with_mode(routes, Mode::Record { upstream, store })
    }

    /// Answer only from `store`; misses are errors.
    pub fn replay(routes: RouteTable, store: Arc<ReplayStore>) -> Self {
        Self::with_mode(routes, Mode::Replay { store })
    }

    pub fn scripted(responder: impl Fn(&ChatRequest) -> String + Send + Sync + 'static) -> Self {
        Self::direct(RouteTable::default(), Arc::new(ScriptUpstream::new(responder)))
    }

    fn with_mode(routes: RouteTable, mode: Mode) -> Self {
        Self {
            routes,
            mode,
            limiter: InflightLimiter::new(DEFAULT_INFLIGHT),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn with_inflight_limit(mut self, max: usize) -> Self {
        self.limiter = InflightLimiter::new(max);
        self
    }

    pub fn routes(&self) -> &RouteTable {
        &self.routes
    }

    /// Number of `complete` calls served so far.
    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn cache_key(&self, req: &ChatRequest) -> Result<CacheKey, LlmError> {
        Ok(CacheKey::compute(self.routes.route_model(req.route)?, req))
    }

    pub fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        req.validate()?;
        let model = self.routes.route_model(req.route)?;
        self.calls.fetch_add(1, Ordering::Relaxed);
        let response = match &self.mode {
            Mode::Direct(up) => {
                let c = self.limiter.run(|| up.call(model, req))?;
                respond(c.text, up.source(), c.usage)
            }
            Mode::Record { upstream, store } => {
                let key = CacheKey::compute(model, req);
                if let Some(text) = store.get(&key) {
                    respond(text, ResponseSource::Cache, None)
                } else {
                    let c = self.limiter.run(|| upstream.call(model, req))?;
                    store.put(&key, model, req, &c.text)?;
                    respond(c.text, upstream.source(), c.usage)
                }
            }
            Mode::Replay { store } => {
                let key = CacheKey::compute(model, req);
                match store.get(&key) {
                    Some(text) => respond(text, ResponseSource::Cache, None),
                    None => return Err(LlmError::ReplayMiss { digest: key.0 }),
                }
            }
        };
        if response.empty {
            log::warn!("empty completion for {} request", req.route);
        }
        Ok(response)
    }
}

fn respond(text: String, source: ResponseSource, usage: Option<Usage>) -> ChatResponse {
    let empty = text.is_empty();
    ChatResponse { text, source, usage, empty }
}

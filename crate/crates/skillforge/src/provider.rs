//! Model access: the scripted mock, the live HTTPS provider and the gateway
//! that renders prompts and validates responses.
//!
//! Nothing outside this module reads provider credentials.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde_json::{json, Value};
use skillforge_core::stage::{
    render_prompt, validate_response, EffortProfile, PromptBundle, StageError, StageKind, StageModel, StageResponse,
};

pub const URL_VAR: &str = "SF_PROVIDER_URL";
pub const KEY_VAR: &str = "SF_PROVIDER_KEY";

#[derive(Debug, thiserror::Error)]
pub enum ProviderError {
    #[error("no scripted response for {stage} key {key:?} occurrence {occurrence} ({})", path.display())]
    MockMiss {
        stage: StageKind,
        key: String,
        occurrence: u32,
        path: PathBuf,
    },
    #[error("transport failed after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("provider misconfigured: {0}")]
    Config(String),
}

/// Sends one rendered prompt and returns the provider's text.
pub trait Provider: Send + Sync {
    fn invoke(&self, bundle: &PromptBundle, model: &StageModel, key: &str) -> Result<String, ProviderError>;
}

/// Replays response files named `<stage>__<key>__<n>.json`, where `n`
/// counts calls per (stage, key) starting at 1.
#[derive(Debug)]
pub struct MockProvider {
    dir: PathBuf,
    counters: Mutex<BTreeMap<(StageKind, String), u32>>,
}

impl MockProvider {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: dir.into(),
            counters: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn script_path(&self, stage: StageKind, key: &str, occurrence: u32) -> PathBuf {
        self.dir.join(format!("{}__{}__{}.json", stage, key, occurrence))
    }
}

impl Provider for MockProvider {
    fn invoke(&self, bundle: &PromptBundle, _model: &StageModel, key: &str) -> Result<String, ProviderError> {
        if key.is_empty() || key.contains(['/', '\\']) || key.contains("__") {
            return Err(ProviderError::Config(format!("unusable response key {:?}", key)));
        }
        let occurrence = {
            let mut counters = self.counters.lock().expect("mock counter lock poisoned");
            let n = counters.entry((bundle.stage, key.to_string())).or_insert(0);
            *n += 1;
            *n
        };
        let path = self.script_path(bundle.stage, key, occurrence);
        std::fs::read_to_string(&path).map_err(|_| ProviderError::MockMiss {
            stage: bundle.stage,
            key: key.to_string(),
            occurrence,
            path,
        })
    }
}

/// Why one transport attempt failed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Fault {
    /// Worth retrying: connection trouble, 429, 5xx.
    Transient(String),
    Fatal(String),
}

pub trait Transport: Send + Sync {
    fn post(&self, url: &str, credential: &str, body: &str) -> Result<String, Fault>;
}

#[derive(Debug)]
pub struct UreqTransport {
    agent: ureq::Agent,
}

impl Default for UreqTransport {
    fn default() -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(300)))
            .build();
        Self {
            agent: config.new_agent(),
        }
    }
}

impl Transport for UreqTransport {
    fn post(&self, url: &str, credential: &str, body: &str) -> Result<String, Fault> {
        let sent = self
            .agent
            .post(url)
            .header("Authorization", &format!("Bearer {}", credential))
            .header("Content-Type", "application/json")
            .send(body);
        match sent {
            Ok(mut resp) => resp
                .body_mut()
                .read_to_string()
                .map_err(|e| Fault::Transient(e.to_string())),
            Err(ureq::Error::StatusCode(code)) if code == 429 || code >= 500 => {
                Err(Fault::Transient(format!("status {}", code)))
            }
            Err(ureq::Error::StatusCode(code)) => Err(Fault::Fatal(format!("status {}", code))),
            Err(e) => Err(Fault::Transient(e.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub first_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            first_backoff: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    /// Delay after failed attempt `n` (1-based): 1s, 2s, 4s, ...
    pub fn backoff(&self, n: u32) -> Duration {
        self.first_backoff * 2u32.saturating_pow(n.saturating_sub(1))
    }
}

pub type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

/// Token bucket shared by every caller of one provider.
pub struct RateLimiter {
    capacity: f64,
    per_second: f64,
    state: Mutex<(f64, Instant)>,
}

impl RateLimiter {
    pub fn new(capacity: u32, per_second: f64) -> Self {
        Self {
            capacity: f64::from(capacity),
            per_second,
            state: Mutex::new((f64::from(capacity), Instant::now())),
        }
    }

    /// Takes one token, returning how long the caller must wait first.
    pub fn reserve(&self) -> Duration {
        let mut s = self.state.lock().expect("rate limiter lock poisoned");
        let now = Instant::now();
        let refill = now.duration_since(s.1).as_secs_f64() * self.per_second;
        s.0 = (s.0 + refill).min(self.capacity);
        s.1 = now;
        s.0 -= 1.0;
        if s.0 >= 0.0 || self.per_second <= 0.0 {
            Duration::ZERO
        } else {
            Duration::from_secs_f64(-s.0 / self.per_second)
        }
    }
}

pub struct LiveProvider {
    url: String,
    credential: String,
    transport: Box<dyn Transport>,
    retry: RetryPolicy,
    sleeper: Sleeper,
    limiter: RateLimiter,
}

impl LiveProvider {
    pub fn new(url: String, credential: String, transport: Box<dyn Transport>) -> Self {
        Self {
            url,
            credential,
            transport,
            retry: RetryPolicy::default(),
            sleeper: Arc::new(thread::sleep),
            limiter: RateLimiter::new(4, 2.0),
        }
    }

    pub fn from_env() -> Result<Self, ProviderError> {
        let url = std::env::var(URL_VAR).map_err(|_| ProviderError::Config(format!("{} is not set", URL_VAR)))?;
        let key = std::env::var(KEY_VAR).map_err(|_| ProviderError::Config(format!("{} is not set", KEY_VAR)))?;
        Ok(Self::new(url, key, Box::new(UreqTransport::default())))
    }

    pub fn with_retry(mut self, retry: RetryPolicy, sleeper: Sleeper) -> Self {
        self.retry = retry;
        self.sleeper = sleeper;
        self
    }

    pub fn with_rate_limit(mut self, limiter: RateLimiter) -> Self {
        self.limiter = limiter;
        self
    }

    fn request_body(bundle: &PromptBundle, model: &StageModel) -> String {
        json!({
            "model": model.model,
            "reasoning_effort": model.effort,
            "messages": [
                {"role": "system", "content": bundle.system_text},
                {"role": "user", "content": bundle.user_text},
            ],
        })
        .to_string()
    }

    /// The message text of a chat-completion body, or the body itself.
    fn response_text(body: String) -> String {
        serde_json::from_str::<Value>(&body)
            .ok()
            .and_then(|v| {
                v.pointer("/choices/0/message/content")
                    .and_then(Value::as_str)
                    .map(str::to_string)
            })
            .unwrap_or(body)
    }
}

impl Provider for LiveProvider {
    fn invoke(&self, bundle: &PromptBundle, model: &StageModel, _key: &str) -> Result<String, ProviderError> {
        let body = Self::request_body(bundle, model);
        let mut last = String::new();
        for attempt in 1..=self.retry.attempts {
            let wait = self.limiter.reserve();
            if !wait.is_zero() {
                (self.sleeper)(wait);
            }
            match self.transport.post(&self.url, &self.credential, &body) {
                Ok(text) => return Ok(Self::response_text(text)),
                Err(Fault::Fatal(m)) => {
                    return Err(ProviderError::Transport {
                        attempts: attempt,
                        message: m,
                    })
                }
                Err(Fault::Transient(m)) => {
                    last = m;
                    if attempt < self.retry.attempts {
                        (self.sleeper)(self.retry.backoff(attempt));
                    }
                }
            }
        }
        Err(ProviderError::Transport {
            attempts: self.retry.attempts,
            message: last,
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error(transparent)]
    Stage(#[from] StageError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// Renders, invokes and validates. Safe to share across threads.
#[derive(Clone)]
pub struct Gateway {
    provider: Arc<dyn Provider>,
    profile: EffortProfile,
}

impl Gateway {
    pub fn new(provider: Arc<dyn Provider>, profile: EffortProfile) -> Self {
        Self { provider, profile }
    }

    pub fn mock(dir: impl Into<PathBuf>) -> Self {
        Self::new(Arc::new(MockProvider::new(dir)), EffortProfile::default())
    }

    pub fn profile(&self) -> &EffortProfile {
        &self.profile
    }

    pub fn call(
        &self,
        stage: StageKind,
        context: &BTreeMap<String, String>,
        key: &str,
    ) -> Result<StageResponse, GatewayError> {
        let bundle = render_prompt(stage, context)?;
        let raw = self.provider.invoke(&bundle, self.profile.get(stage), key)?;
        Ok(validate_response(stage, &raw)?)
    }
}

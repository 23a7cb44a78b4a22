//! Chat-completion client with a content-addressed response cache.
//!
//! Every request is keyed by a SHA-256 digest over its decoding parameters.
//! Responses live in `cache/<digest>.json` and a warm cache replays a whole
//! experiment without touching the provider. Providers are pluggable: an
//! OpenAI-compatible HTTP endpoint, or a scripted mock for offline runs.

use std::collections::{HashMap, VecDeque};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Model pinned for stance inference.
pub const DEFAULT_INFERENCE_MODEL: &str = "gpt-3.5-turbo-0125";
/// Model pinned for counterfactual generation.
pub const DEFAULT_CAD_MODEL: &str = "gpt-3.5-turbo-0301";
pub const API_KEY_ENV: &str = "STANCE_CALIB_API_KEY";

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("provider error (status {status:?}): {body}")]
    ProviderError { status: Option<u16>, body: String },
    #[error("cache entry {0} is corrupt")]
    CacheCorrupt(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("cache io at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, GatewayError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub model_id: String,
    pub prompt: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub seed: Option<u64>,
}

impl LlmRequest {
    /// Request with the decoding defaults used throughout: temperature 1.0,
    /// top-p 1.0, 1024 max tokens.
    pub fn new(model_id: impl Into<String>, prompt: impl Into<String>) -> Self {
        LlmRequest {
            model_id: model_id.into(),
            prompt: prompt.into(),
            temperature: 1.0,
            top_p: 1.0,
            max_tokens: 1024,
            seed: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature >= 0.0) {
            return Err(GatewayError::InvalidRequest(format!("temperature {}", self.temperature)));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(GatewayError::InvalidRequest(format!("top_p {}", self.top_p)));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_tokens 0".into()));
        }
        Ok(())
    }
}

/// Decoding parameters shared by every request of a stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decoding {
    pub model_id: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub seed: Option<u64>,
}

impl Decoding {
    pub fn new(model_id: impl Into<String>) -> Self {
        Decoding {
            model_id: model_id.into(),
            temperature: 1.0,
            top_p: 1.0,
            max_tokens: 1024,
            seed: Some(0),
        }
    }

    pub fn request(&self, prompt: impl Into<String>) -> LlmRequest {
        LlmRequest {
            model_id: self.model_id.clone(),
            prompt: prompt.into(),
            temperature: self.temperature,
            top_p: self.top_p,
            max_tokens: self.max_tokens,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmResponse {
    pub raw_text: String,
    pub model_id: String,
    pub cached: bool,
    pub request_digest: String,
    pub timestamp: DateTime<Utc>,
}

/// Hex SHA-256 over a length-prefixed, versioned encoding of every decoding
/// parameter. Floats are hashed by their IEEE-754 bit pattern.
pub fn cache_key(request: &LlmRequest) -> String {
    let mut h = Sha256::new();
    h.update(b"stance-calib/llm-request/v1\0");
    let mut field = |bytes: &[u8]| {
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    };
    field(request.model_id.as_bytes());
    field(request.prompt.as_bytes());
    field(&request.temperature.to_bits().to_le_bytes());
    field(&request.top_p.to_bits().to_le_bytes());
    field(&request.max_tokens.to_le_bytes());
    match request.seed {
        Some(s) => field(&[&[1u8][..], &s.to_le_bytes()].concat()),
        None => field(&[0u8]),
    }
    hex::encode(h.finalize())
}

/// A transport failure reported by a provider.
#[derive(Debug, Clone, PartialEq)]
pub struct ProviderFailure {
    pub status: Option<u16>,
    pub body: String,
}

impl ProviderFailure {
    pub fn status(status: u16, body: impl Into<String>) -> Self {
        ProviderFailure {
            status: Some(status),
            body: body.into(),
        }
    }

    /// 408, 429, 5xx and connection-level failures are retried.
    pub fn is_transient(&self) -> bool {
        match self.status {
            None => true,
            Some(s) => s == 408 || s == 429 || s >= 500,
        }
    }
}

pub trait Provider: Send + Sync {
    fn name(&self) -> &str;
    fn send(&self, request: &LlmRequest) -> std::result::Result<String, ProviderFailure>;
}

/// OpenAI-compatible `/chat/completions` endpoint.
pub struct HttpProvider {
    base_url: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpProvider {
    pub fn new(base_url: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .expect("http client builds");
        HttpProvider {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key,
            client,
        }
    }

    /// Reads the credential from [`API_KEY_ENV`].
    pub fn from_env(base_url: impl Into<String>) -> Self {
        Self::new(base_url, std::env::var(API_KEY_ENV).ok(), Duration::from_secs(120))
    }
}

#[derive(Deserialize)]
struct ChatCompletion {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: Option<String>,
}

fn excerpt(body: &str) -> String {
    body.chars().take(200).collect()
}

impl Provider for HttpProvider {
    fn name(&self) -> &str {
        "http"
    }

    fn send(&self, request: &LlmRequest) -> std::result::Result<String, ProviderFailure> {
        let mut body = serde_json::json!({
            "model": request.model_id,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "top_p": request.top_p,
            "max_tokens": request.max_tokens,
        });
        if let Some(seed) = request.seed {
            body["seed"] = seed.into();
        }
        let mut req = self
            .client
            .post(format!("{}/chat/completions", self.base_url))
            .header("content-type", "application/json")
            .body(body.to_string());
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| ProviderFailure {
            status: None,
            body: e.to_string(),
        })?;
        let status = resp.status().as_u16();
        let text = resp.text().map_err(|e| ProviderFailure {
            status: Some(status),
            body: e.to_string(),
        })?;
        if !(200..300).contains(&status) {
            return Err(ProviderFailure::status(status, excerpt(&text)));
        }
        let parsed: ChatCompletion = serde_json::from_str(&text)
            .map_err(|e| ProviderFailure::status(status, format!("bad completion json: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ProviderFailure::status(status, "completion has no content"))
    }
}

type Responder = dyn Fn(&LlmRequest) -> Option<String> + Send + Sync;

/// Offline provider: scripted digest→text table, an optional responder
/// function for unscripted prompts, and a queue of injected faults that are
/// returned (one per call) before any success.
pub struct ScriptedProvider {
    scripts: Mutex<HashMap<String, String>>,
    responder: Option<Box<Responder>>,
    faults: Mutex<VecDeque<ProviderFailure>>,
    calls: AtomicUsize,
}

impl Default for ScriptedProvider {
    fn default() -> Self {
        Self::new()
    }
}

impl ScriptedProvider {
    pub fn new() -> Self {
        ScriptedProvider {
            scripts: Mutex::new(HashMap::new()),
            responder: None,
            faults: Mutex::new(VecDeque::new()),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn with_responder<F>(responder: F) -> Self
    where
        F: Fn(&LlmRequest) -> Option<String> + Send + Sync + 'static,
    {
        ScriptedProvider {
            responder: Some(Box::new(responder)),
            ..Self::new()
        }
    }

    /// Loads every `<digest>.json` entry of a cache directory as a script.
    pub fn from_cache_dir(dir: &Path) -> Result<Self> {
        let provider = Self::new();
        let cache = ResponseCache::new(dir)?;
        for digest in cache.digests()? {
            let entry = cache.read(&digest)?.expect("listed entry exists");
            provider.script_digest(digest, entry.response.raw_text);
        }
        Ok(provider)
    }

    pub fn script(&self, request: &LlmRequest, text: impl Into<String>) {
        self.script_digest(cache_key(request), text.into());
    }

    pub fn script_digest(&self, digest: String, text: String) {
        self.scripts.lock().unwrap().insert(digest, text);
    }

    pub fn push_fault(&self, failure: ProviderFailure) {
        self.faults.lock().unwrap().push_back(failure);
    }

    /// Number of `send` calls received, including failed ones.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Provider for ScriptedProvider {
    fn name(&self) -> &str {
        "mock"
    }

    fn send(&self, request: &LlmRequest) -> std::result::Result<String, ProviderFailure> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if let Some(fault) = self.faults.lock().unwrap().pop_front() {
            return Err(fault);
        }
        let digest = cache_key(request);
        if let Some(text) = self.scripts.lock().unwrap().get(&digest) {
            return Ok(text.clone());
        }
        self.responder
            .as_ref()
            .and_then(|r| r(request))
            .ok_or_else(|| ProviderFailure::status(404, format!("no script for {digest}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachedResponse {
    pub raw_text: String,
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub request: LlmRequest,
    pub response: CachedResponse,
}

/// Directory of `<digest>.json` files.
#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|source| GatewayError::Io {
            path: dir.clone(),
            source,
        })?;
        Ok(ResponseCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, digest: &str) -> PathBuf {
        self.dir.join(format!("{digest}.json"))
    }

    pub fn read(&self, digest: &str) -> Result<Option<CacheEntry>> {
        let path = self.path(digest);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(source) => return Err(GatewayError::Io { path, source }),
        };
        let entry: CacheEntry =
            serde_json::from_slice(&bytes).map_err(|_| GatewayError::CacheCorrupt(digest.to_string()))?;
        if cache_key(&entry.request) != digest {
            return Err(GatewayError::CacheCorrupt(digest.to_string()));
        }
        Ok(Some(entry))
    }

    /// Atomic write via a temp file in the same directory.
    pub fn write(&self, digest: &str, entry: &CacheEntry) -> Result<()> {
        let io = |source| GatewayError::Io {
            path: self.path(digest),
            source,
        };
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(io)?;
        let json = serde_json::to_vec_pretty(entry).expect("cache entry serializes");
        tmp.write_all(&json).map_err(io)?;
        tmp.persist(self.path(digest)).map_err(|e| io(e.error))?;
        Ok(())
    }

    pub fn digests(&self) -> Result<Vec<String>> {
        let rd = fs::read_dir(&self.dir).map_err(|source| GatewayError::Io {
            path: self.dir.clone(),
            source,
        })?;
        let mut out: Vec<String> = rd
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                name.strip_suffix(".json").map(str::to_string)
            })
            .collect();
        out.sort();
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 5,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 2u32.saturating_pow(attempt);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

/// Counting semaphore bounding in-flight provider calls.
struct Semaphore {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn new(n: usize) -> Self {
        Semaphore {
            permits: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut p = self.permits.lock().unwrap();
        while *p == 0 {
            p = self.cv.wait(p).unwrap();
        }
        *p -= 1;
        SemaphoreGuard(self)
    }
}

struct SemaphoreGuard<'a>(&'a Semaphore);

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub max_in_flight: usize,
    pub retry: RetryPolicy,
    /// Minimum spacing between dispatches to the provider.
    pub min_interval: Duration,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            max_in_flight: 8,
            retry: RetryPolicy::default(),
            min_interval: Duration::ZERO,
        }
    }
}

pub struct Gateway {
    provider: Arc<dyn Provider>,
    cache: ResponseCache,
    config: GatewayConfig,
    in_flight: Semaphore,
    digest_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    last_dispatch: Mutex<Option<Instant>>,
    network_calls: AtomicUsize,
    peak_in_flight: AtomicUsize,
    current_in_flight: AtomicUsize,
}

impl Gateway {
    pub fn new(provider: Arc<dyn Provider>, cache_dir: impl Into<PathBuf>, config: GatewayConfig) -> Result<Self> {
        Ok(Gateway {
            provider,
            cache: ResponseCache::new(cache_dir)?,
            in_flight: Semaphore::new(config.max_in_flight),
            config,
            digest_locks: Mutex::new(HashMap::new()),
            last_dispatch: Mutex::new(None),
            network_calls: AtomicUsize::new(0),
            peak_in_flight: AtomicUsize::new(0),
            current_in_flight: AtomicUsize::new(0),
        })
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    /// Provider dispatches issued so far (retries included).
    pub fn network_calls(&self) -> usize {
        self.network_calls.load(Ordering::SeqCst)
    }

    pub fn peak_in_flight(&self) -> usize {
        self.peak_in_flight.load(Ordering::SeqCst)
    }

    fn digest_lock(&self, digest: &str) -> Arc<Mutex<()>> {
        self.digest_locks
            .lock()
            .unwrap()
            .entry(digest.to_string())
            .or_default()
            .clone()
    }

    fn pace(&self) {
        if self.config.min_interval.is_zero() {
            return;
        }
        let mut last = self.last_dispatch.lock().unwrap();
        if let Some(prev) = *last {
            let elapsed = prev.elapsed();
            if elapsed < self.config.min_interval {
                thread::sleep(self.config.min_interval - elapsed);
            }
        }
        *last = Some(Instant::now());
    }

    fn dispatch(&self, request: &LlmRequest) -> std::result::Result<String, ProviderFailure> {
        let _permit = self.in_flight.acquire();
        let now = self.current_in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak_in_flight.fetch_max(now, Ordering::SeqCst);
        self.pace();
        self.network_calls.fetch_add(1, Ordering::SeqCst);
        let out = self.provider.send(request);
        self.current_in_flight.fetch_sub(1, Ordering::SeqCst);
        out
    }

    pub fn complete(&self, request: &LlmRequest) -> Result<LlmResponse> {
        request.validate()?;
        let digest = cache_key(request);
        let lock = self.digest_lock(&digest);
        let _guard = lock.lock().unwrap();

        if let Some(entry) = self.cache.read(&digest)? {
            let timestamp = DateTime::parse_from_rfc3339(&entry.response.timestamp)
                .map_err(|_| GatewayError::CacheCorrupt(digest.clone()))?
                .with_timezone(&Utc);
            return Ok(LlmResponse {
                raw_text: entry.response.raw_text,
                model_id: request.model_id.clone(),
                cached: true,
                request_digest: digest,
                timestamp,
            });
        }

        let mut attempt = 0;
        let raw_text = loop {
            match self.dispatch(request) {
                Ok(text) => break text,
                Err(failure) if failure.is_transient() && attempt < self.config.retry.max_retries => {
                    let delay = self.config.retry.delay(attempt);
                    log::debug!(
                        "transient provider failure {:?}; retry {} in {:?}",
                        failure.status,
                        attempt + 1,
                        delay
                    );
                    thread::sleep(delay);
                    attempt += 1;
                }
                Err(failure) => {
                    return Err(GatewayError::ProviderError {
                        status: failure.status,
                        body: excerpt(&failure.body),
                    })
                }
            }
        };

        let timestamp = Utc::now();
        let entry = CacheEntry {
            request: request.clone(),
            response: CachedResponse {
                raw_text: raw_text.clone(),
                timestamp: timestamp.to_rfc3339_opts(SecondsFormat::Millis, true),
            },
        };
        self.cache.write(&digest, &entry)?;
        Ok(LlmResponse {
            raw_text,
            model_id: request.model_id.clone(),
            cached: false,
            request_digest: digest,
            timestamp,
        })
    }

    /// Completes a batch on up to `max_in_flight` worker threads. Results are
    /// returned in request order regardless of completion order.
    pub fn complete_all(&self, requests: &[LlmRequest]) -> Vec<Result<LlmResponse>> {
        let workers = self.config.max_in_flight.max(1).min(requests.len().max(1));
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<Result<LlmResponse>>>> = requests.iter().map(|_| Mutex::new(None)).collect();
        thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= requests.len() {
                        break;
                    }
                    let out = self.complete(&requests[i]);
                    *slots[i].lock().unwrap() = Some(out);
                });
            }
        });
        slots
            .into_iter()
            .map(|s| s.into_inner().unwrap().expect("every slot filled"))
            .collect()
    }
}

//! Uniform access to generator and target LLMs: a live HTTP chat-completion
//! backend, a deterministic mock backend, and a record/replay cache, all
//! behind one `Gateway` with retry, call accounting and bounded-concurrency
//! batch execution.

mod cache;
mod http;
pub mod mock;

pub use cache::{load_cache, CacheRecord};
pub use mock::{MockOracle, SyntheticOracle, SyntheticOracleParams};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, HashMap};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("backend unavailable after {attempts} attempts: {last_error}")]
    BackendUnavailable { attempts: u32, last_error: String },
    #[error("replay cache has no entry for request key {key}")]
    ReplayMiss { key: String },
    #[error("authentication rejected: {0}")]
    Auth(String),
    #[error("backend returned status {status}: {body}")]
    HttpStatus { status: u16, body: String },
    #[error("invalid backend config: {0}")]
    InvalidConfig(String),
    #[error("invalid completion request: {0}")]
    InvalidRequest(String),
    #[error("cache file {path}: {message}")]
    Cache { path: PathBuf, message: String },
}

/// Why a call is being made; drives ledger accounting, never the wire format.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    Generation,
    Prediction,
    Judging,
}

impl Purpose {
    pub const ALL: [Purpose; 3] = [Purpose::Generation, Purpose::Prediction, Purpose::Judging];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    fn wire_name(&self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub messages: Vec<ChatMessage>,
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub purpose: Purpose,
}

impl CompletionRequest {
    /// Single user-message request, the common case.
    pub fn user(model: &ModelSpec, text: impl Into<String>, purpose: Purpose) -> Self {
        Self {
            messages: vec![ChatMessage {
                role: Role::User,
                text: text.into(),
            }],
            model_id: model.model_id.clone(),
            temperature: model.temperature,
            max_tokens: model.max_tokens,
            purpose,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.messages.is_empty() {
            return Err(GatewayError::InvalidRequest("no messages".into()));
        }
        if self.messages.last().map(|m| m.role) != Some(Role::User) {
            return Err(GatewayError::InvalidRequest(
                "last message must have the user role".into(),
            ));
        }
        if self.temperature < 0.0 {
            return Err(GatewayError::InvalidRequest(
                "temperature must be non-negative".into(),
            ));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }

    /// All message texts concatenated; what mock oracles inspect.
    pub fn flat_text(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.text.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
    pub usage: Usage,
    pub backend: String,
    pub cached: bool,
}

/// Model id plus the sampling parameters requests to it should carry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ModelSpec {
    pub fn new(model_id: impl Into<String>, temperature: f64, max_tokens: u32) -> Self {
        Self {
            model_id: model_id.into(),
            temperature,
            max_tokens,
        }
    }

    pub fn generator_default() -> Self {
        Self::new("mock-generator", 0.7, 1024)
    }

    pub fn target_default() -> Self {
        Self::new("mock-target", 0.0, 512)
    }
}

// Canonical view hashed for cache keys: field order fixed, purpose excluded.
#[derive(Serialize)]
struct CanonicalRequest<'a> {
    model_id: &'a str,
    temperature: f64,
    max_tokens: u32,
    messages: &'a [ChatMessage],
}

/// Stable content hash of a request. Sensitive to messages, model id,
/// temperature and max_tokens; insensitive to purpose.
pub fn canonical_request_hash(request: &CompletionRequest) -> String {
    let canonical = CanonicalRequest {
        model_id: &request.model_id,
        temperature: request.temperature,
        max_tokens: request.max_tokens,
        messages: &request.messages,
    };
    let mut hasher = Sha256::new();
    serde_json::to_writer(HashWriter(&mut hasher), &canonical)
        .expect("canonical request serialization cannot fail");
    hex::encode(hasher.finalize())
}

/// First eight bytes of the canonical hash as a PRNG seed.
pub fn request_seed(request: &CompletionRequest) -> u64 {
    let hex_key = canonical_request_hash(request);
    let bytes = hex::decode(&hex_key[..16]).expect("hash prefix is valid hex");
    u64::from_be_bytes(bytes.try_into().expect("eight bytes"))
}

struct HashWriter<'a>(&'a mut Sha256);

impl std::io::Write for HashWriter<'_> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.update(buf);
        Ok(buf.len())
    }
    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Http,
    Mock,
    Replay,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryConfig {
    pub max_attempts: u32,
    pub base_backoff_ms: u64,
}

impl Default for RetryConfig {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_backoff_ms: 250,
        }
    }
}

fn default_concurrency() -> usize {
    4
}

fn default_timeout_ms() -> u64 {
    30_000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env_var: Option<String>,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
    #[serde(default)]
    pub retry: RetryConfig,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// Record target for http/mock backends, lookup source for replay.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_path: Option<PathBuf>,
    /// Parameters for the shipped synthetic oracle (mock backend only).
    #[serde(default)]
    pub synthetic: SyntheticOracleParams,
}

impl BackendConfig {
    pub fn mock() -> Self {
        Self {
            kind: BackendKind::Mock,
            base_url: None,
            api_key_env_var: None,
            max_concurrency: default_concurrency(),
            retry: RetryConfig::default(),
            timeout_ms: default_timeout_ms(),
            cache_path: None,
            synthetic: SyntheticOracleParams::default(),
        }
    }

    pub fn replay(cache_path: impl Into<PathBuf>) -> Self {
        Self {
            kind: BackendKind::Replay,
            cache_path: Some(cache_path.into()),
            ..Self::mock()
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.max_concurrency == 0 {
            return Err(GatewayError::InvalidConfig(
                "max_concurrency must be at least 1".into(),
            ));
        }
        match self.kind {
            BackendKind::Http => {
                if self.base_url.is_none() {
                    return Err(GatewayError::InvalidConfig(
                        "http backend requires base_url".into(),
                    ));
                }
                if self.api_key_env_var.is_none() {
                    return Err(GatewayError::InvalidConfig(
                        "http backend requires api_key_env_var".into(),
                    ));
                }
            }
            BackendKind::Replay => {
                if self.cache_path.is_none() {
                    return Err(GatewayError::InvalidConfig(
                        "replay backend requires cache_path".into(),
                    ));
                }
            }
            BackendKind::Mock => {}
        }
        if self.retry.max_attempts == 0 {
            return Err(GatewayError::InvalidConfig(
                "retry.max_attempts must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Default)]
struct PurposeCounters {
    requests: AtomicU64,
    attempts: AtomicU64,
    cache_hits: AtomicU64,
    failures: AtomicU64,
}

/// Per-purpose call counters; totals are monotone within a run and safe to
/// bump from concurrent workers.
#[derive(Debug, Default)]
pub struct CallLedger {
    generation: PurposeCounters,
    prediction: PurposeCounters,
    judging: PurposeCounters,
}

impl CallLedger {
    fn slot(&self, purpose: Purpose) -> &PurposeCounters {
        match purpose {
            Purpose::Generation => &self.generation,
            Purpose::Prediction => &self.prediction,
            Purpose::Judging => &self.judging,
        }
    }

    pub fn record_request(&self, purpose: Purpose) {
        self.slot(purpose).requests.fetch_add(1, Ordering::Relaxed);
    }

    pub fn record_attempt(&self, purpose: Purpose) {
        self.slot(purpose).attempts.fetch_add(1, Ordering::Relaxed);
    }

    pub fn record_cache_hit(&self, purpose: Purpose) {
        self.slot(purpose).cache_hits.fetch_add(1, Ordering::Relaxed);
    }

    pub fn record_failure(&self, purpose: Purpose) {
        self.slot(purpose).failures.fetch_add(1, Ordering::Relaxed);
    }

    pub fn requests(&self, purpose: Purpose) -> u64 {
        self.slot(purpose).requests.load(Ordering::Relaxed)
    }

    pub fn attempts(&self, purpose: Purpose) -> u64 {
        self.slot(purpose).attempts.load(Ordering::Relaxed)
    }

    pub fn cache_hits(&self, purpose: Purpose) -> u64 {
        self.slot(purpose).cache_hits.load(Ordering::Relaxed)
    }

    pub fn failures(&self, purpose: Purpose) -> u64 {
        self.slot(purpose).failures.load(Ordering::Relaxed)
    }

    pub fn snapshot(&self) -> LedgerSnapshot {
        let mut counts = BTreeMap::new();
        for purpose in Purpose::ALL {
            let slot = self.slot(purpose);
            counts.insert(
                purpose,
                LedgerCounts {
                    requests: slot.requests.load(Ordering::Relaxed),
                    attempts: slot.attempts.load(Ordering::Relaxed),
                    cache_hits: slot.cache_hits.load(Ordering::Relaxed),
                    failures: slot.failures.load(Ordering::Relaxed),
                },
            );
        }
        LedgerSnapshot { counts }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct LedgerCounts {
    pub requests: u64,
    pub attempts: u64,
    pub cache_hits: u64,
    pub failures: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct LedgerSnapshot {
    pub counts: BTreeMap<Purpose, LedgerCounts>,
}

impl LedgerSnapshot {
    pub fn requests(&self, purpose: Purpose) -> u64 {
        self.counts.get(&purpose).map(|c| c.requests).unwrap_or(0)
    }

    pub fn total_requests(&self) -> u64 {
        self.counts.values().map(|c| c.requests).sum()
    }

    pub fn total_cache_hits(&self) -> u64 {
        self.counts.values().map(|c| c.cache_hits).sum()
    }

    /// Counter-wise difference against an earlier snapshot.
    pub fn since(&self, earlier: &LedgerSnapshot) -> LedgerSnapshot {
        let mut counts = BTreeMap::new();
        for purpose in Purpose::ALL {
            let now = self.counts.get(&purpose).copied().unwrap_or_default();
            let then = earlier.counts.get(&purpose).copied().unwrap_or_default();
            counts.insert(
                purpose,
                LedgerCounts {
                    requests: now.requests - then.requests,
                    attempts: now.attempts - then.attempts,
                    cache_hits: now.cache_hits - then.cache_hits,
                    failures: now.failures - then.failures,
                },
            );
        }
        LedgerSnapshot { counts }
    }
}

enum Backend {
    Http(http::HttpBackend),
    Mock(Arc<dyn MockOracle>),
    Replay(HashMap<String, CompletionResponse>),
}

/// Entry point for all LLM traffic. Safe for concurrent use; batches enforce
/// the configured concurrency bound internally.
pub struct Gateway {
    backend: Backend,
    config: BackendConfig,
    ledger: CallLedger,
    recorder: Option<Mutex<std::fs::File>>,
}

impl Gateway {
    /// Build a gateway from config. Mock backends need an oracle; pass the
    /// shipped [`SyntheticOracle`] or any custom closure.
    pub fn from_config(
        config: BackendConfig,
        oracle: Option<Arc<dyn MockOracle>>,
    ) -> Result<Self, GatewayError> {
        config.validate()?;
        let backend = match config.kind {
            BackendKind::Http => Backend::Http(http::HttpBackend::new(&config)?),
            BackendKind::Mock => {
                let oracle = oracle.ok_or_else(|| {
                    GatewayError::InvalidConfig("mock backend requires an oracle".into())
                })?;
                Backend::Mock(oracle)
            }
            BackendKind::Replay => {
                let path = config.cache_path.as_ref().expect("validated");
                Backend::Replay(cache::load_cache(path)?)
            }
        };
        let recorder = match (&config.kind, &config.cache_path) {
            (BackendKind::Replay, _) | (_, None) => None,
            (_, Some(path)) => {
                if let Some(parent) = path.parent() {
                    if !parent.as_os_str().is_empty() {
                        std::fs::create_dir_all(parent).map_err(|e| GatewayError::Cache {
                            path: path.clone(),
                            message: e.to_string(),
                        })?;
                    }
                }
                let file = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(path)
                    .map_err(|e| GatewayError::Cache {
                        path: path.clone(),
                        message: e.to_string(),
                    })?;
                Some(Mutex::new(file))
            }
        };
        Ok(Self {
            backend,
            config,
            ledger: CallLedger::default(),
            recorder,
        })
    }

    /// Mock gateway with default config, no recording.
    pub fn mock(oracle: Arc<dyn MockOracle>) -> Self {
        Self::from_config(BackendConfig::mock(), Some(oracle)).expect("mock config is valid")
    }

    pub fn ledger(&self) -> &CallLedger {
        &self.ledger
    }

    pub fn kind(&self) -> BackendKind {
        self.config.kind
    }

    pub fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        request.validate()?;
        self.ledger.record_request(request.purpose);
        let response = match &self.backend {
            Backend::Mock(oracle) => {
                self.ledger.record_attempt(request.purpose);
                let text = oracle.respond(request);
                let usage = Usage {
                    prompt_tokens: (request.flat_text().len() / 4) as u64,
                    completion_tokens: (text.len() / 4) as u64,
                };
                Ok(CompletionResponse {
                    text,
                    usage,
                    backend: "mock".into(),
                    cached: false,
                })
            }
            Backend::Http(http) => http.complete(request, &self.config, &self.ledger),
            Backend::Replay(map) => {
                let key = canonical_request_hash(request);
                match map.get(&key) {
                    Some(response) => {
                        self.ledger.record_cache_hit(request.purpose);
                        let mut response = response.clone();
                        response.cached = true;
                        Ok(response)
                    }
                    None => Err(GatewayError::ReplayMiss { key }),
                }
            }
        };
        match response {
            Ok(response) => {
                if let Some(recorder) = &self.recorder {
                    self.record(recorder, request, &response)?;
                }
                Ok(response)
            }
            Err(err) => {
                self.ledger.record_failure(request.purpose);
                Err(err)
            }
        }
    }

    fn record(
        &self,
        recorder: &Mutex<std::fs::File>,
        request: &CompletionRequest,
        response: &CompletionResponse,
    ) -> Result<(), GatewayError> {
        let record = CacheRecord {
            key: canonical_request_hash(request),
            response: CompletionResponse {
                cached: false,
                ..response.clone()
            },
        };
        let mut line = serde_json::to_string(&record).expect("cache record serializes");
        line.push('\n');
        let mut file = recorder.lock().expect("recorder lock");
        file.write_all(line.as_bytes())
            .map_err(|e| GatewayError::Cache {
                path: self.config.cache_path.clone().unwrap_or_default(),
                message: e.to_string(),
            })
    }

    /// Run a batch with at most `max_concurrency` requests in flight.
    /// Responses are positionally aligned with the requests; individual
    /// failures do not abort the rest of the batch.
    pub fn complete_batch(
        &self,
        requests: &[CompletionRequest],
    ) -> Vec<Result<CompletionResponse, GatewayError>> {
        if requests.is_empty() {
            return Vec::new();
        }
        let workers = self.config.max_concurrency.min(requests.len());
        // Mock and replay answer from memory; spawning workers only adds
        // overhead there. Sequential execution stays within the bound.
        let io_bound = matches!(self.backend, Backend::Http(_));
        if workers <= 1 || !io_bound {
            return requests.iter().map(|r| self.complete(r)).collect();
        }
        let cursor = AtomicU64::new(0);
        let slots: Vec<Mutex<Option<Result<CompletionResponse, GatewayError>>>> =
            requests.iter().map(|_| Mutex::new(None)).collect();
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = cursor.fetch_add(1, Ordering::Relaxed) as usize;
                    if i >= requests.len() {
                        break;
                    }
                    let result = self.complete(&requests[i]);
                    *slots[i].lock().expect("slot lock") = Some(result);
                });
            }
        });
        slots
            .into_iter()
            .map(|slot| slot.into_inner().expect("slot lock").expect("slot filled"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn echo_oracle() -> Arc<dyn MockOracle> {
        Arc::new(|request: &CompletionRequest| request.flat_text())
    }

    fn request(text: &str) -> CompletionRequest {
        CompletionRequest::user(&ModelSpec::target_default(), text, Purpose::Prediction)
    }

    #[test]
    fn mock_backend_is_deterministic() {
        let gateway = Gateway::mock(echo_oracle());
        let a = gateway.complete(&request("hello")).unwrap();
        let b = gateway.complete(&request("hello")).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.text, "hello");
    }

    #[test]
    fn hash_is_stable_and_sensitive_to_the_right_fields() {
        let base = request("hello");
        let same = request("hello");
        assert_eq!(canonical_request_hash(&base), canonical_request_hash(&same));

        let mut hotter = base.clone();
        hotter.temperature = 0.7;
        assert_ne!(canonical_request_hash(&base), canonical_request_hash(&hotter));

        let mut reordered = base.clone();
        reordered.messages.insert(
            0,
            ChatMessage {
                role: Role::System,
                text: "sys".into(),
            },
        );
        assert_ne!(
            canonical_request_hash(&base),
            canonical_request_hash(&reordered)
        );

        // Purpose does not participate in the key.
        let mut judged = base.clone();
        judged.purpose = Purpose::Judging;
        assert_eq!(canonical_request_hash(&base), canonical_request_hash(&judged));
    }

    #[test]
    fn batch_results_align_with_requests() {
        let gateway = Gateway::mock(echo_oracle());
        let requests: Vec<CompletionRequest> =
            (0..10).map(|i| request(&format!("msg-{i}"))).collect();
        let responses = gateway.complete_batch(&requests);
        assert_eq!(responses.len(), 10);
        for (i, response) in responses.iter().enumerate() {
            assert_eq!(response.as_ref().unwrap().text, format!("msg-{i}"));
        }
    }

    #[test]
    fn batch_of_fifty_ledgers_fifty() {
        let gateway = Gateway::mock(echo_oracle());
        let requests: Vec<CompletionRequest> =
            (0..50).map(|i| request(&format!("msg-{i}"))).collect();
        let _ = gateway.complete_batch(&requests);
        assert_eq!(gateway.ledger().requests(Purpose::Prediction), 50);
    }

    #[test]
    fn empty_batch_is_empty() {
        let gateway = Gateway::mock(echo_oracle());
        assert!(gateway.complete_batch(&[]).is_empty());
    }

    #[test]
    fn replay_miss_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let cache = dir.path().join("cache.ldjson");
        std::fs::write(&cache, "").unwrap();
        let gateway = Gateway::from_config(BackendConfig::replay(&cache), None).unwrap();
        let err = gateway.complete(&request("unseen")).unwrap_err();
        assert!(matches!(err, GatewayError::ReplayMiss { .. }));
        assert_eq!(gateway.ledger().failures(Purpose::Prediction), 1);
    }

    #[test]
    fn record_then_replay_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let cache = dir.path().join("cache.ldjson");
        let mut config = BackendConfig::mock();
        config.cache_path = Some(cache.clone());
        let recording = Gateway::from_config(config, Some(echo_oracle())).unwrap();
        let original = recording.complete(&request("hello")).unwrap();

        let replay = Gateway::from_config(BackendConfig::replay(&cache), None).unwrap();
        let replayed = replay.complete(&request("hello")).unwrap();
        assert_eq!(replayed.text, original.text);
        assert!(replayed.cached);
        assert_eq!(replay.ledger().cache_hits(Purpose::Prediction), 1);
    }

    #[test]
    fn request_invariants_enforced() {
        let gateway = Gateway::mock(echo_oracle());
        let mut bad = request("x");
        bad.messages.clear();
        assert!(matches!(
            gateway.complete(&bad),
            Err(GatewayError::InvalidRequest(_))
        ));
        let mut assistant_last = request("x");
        assistant_last.messages.push(ChatMessage {
            role: Role::Assistant,
            text: "y".into(),
        });
        assert!(gateway.complete(&assistant_last).is_err());
    }

    #[test]
    fn config_validation_catches_missing_fields() {
        let mut http = BackendConfig::mock();
        http.kind = BackendKind::Http;
        assert!(http.validate().is_err());
        let mut replay = BackendConfig::mock();
        replay.kind = BackendKind::Replay;
        assert!(replay.validate().is_err());
        let mut zero = BackendConfig::mock();
        zero.max_concurrency = 0;
        assert!(zero.validate().is_err());
    }
}

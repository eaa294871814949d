//! LLM access with live, record and replay modes.
//!
//! Recorded exchanges live in an append-only JSON-lines file keyed by a
//! digest of the request, so a replay run needs no network and returns the
//! recorded text byte for byte.

use std::collections::HashMap;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backend::{BackendError, HttpEndpoint};

pub const DEFAULT_MAX_TOKENS: u32 = 256;
pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub system: String,
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl LlmRequest {
    /// Deterministic request with the default length cap.
    pub fn new(system: &str, prompt: &str) -> Self {
        Self {
            system: system.to_string(),
            prompt: prompt.to_string(),
            temperature: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }

    /// sha256 of the canonical JSON form (keys sorted, no whitespace).
    pub fn digest(&self) -> String {
        let value = serde_json::json!({
            "max_tokens": self.max_tokens,
            "prompt": self.prompt,
            "system": self.system,
            "temperature": self.temperature,
        });
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }
}

pub trait LlmBackend: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, request: &LlmRequest) -> Result<String, BackendError>;
}

/// Offline stub: answers with the first ten words of the prompt.
#[derive(Debug, Clone, Copy, Default)]
pub struct EchoLlm;

impl LlmBackend for EchoLlm {
    fn id(&self) -> &str {
        "echo-stub"
    }

    fn complete(&self, request: &LlmRequest) -> Result<String, BackendError> {
        Ok(request.prompt.split_whitespace().take(10).collect::<Vec<_>>().join(" "))
    }
}

/// POSTs the request as JSON and takes the plain-text body as the answer.
#[derive(Debug, Clone)]
pub struct HttpLlm {
    endpoint: HttpEndpoint,
    id: String,
}

impl HttpLlm {
    pub fn new(url: &str, timeout: Duration) -> Self {
        Self {
            endpoint: HttpEndpoint::new(url, timeout),
            id: format!("http-llm:{url}"),
        }
    }
}

impl LlmBackend for HttpLlm {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &LlmRequest) -> Result<String, BackendError> {
        let body = serde_json::to_vec(request).map_err(|e| BackendError::new(&self.id, e.to_string()))?;
        let text = self.endpoint.post_text(&self.id, "application/json", &body)?;
        Ok(text.trim().to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeParameters {
    pub temperature: f64,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmExchange {
    pub digest: String,
    pub backend_id: String,
    pub parameters: ExchangeParameters,
    pub system: String,
    pub prompt: String,
    pub response: String,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("exchange store {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("exchange store {path} line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

/// Append-only exchange log. Lookups are served from memory; appends go
/// through to the file when one is attached.
#[derive(Debug, Default)]
pub struct ExchangeStore {
    path: Option<PathBuf>,
    records: Mutex<HashMap<String, LlmExchange>>,
    file: Mutex<Option<File>>,
}

impl ExchangeStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (creating if needed) a JSON-lines store.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let io = |source| StoreError::Io {
            path: path.clone(),
            source,
        };
        let mut records = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(&path).map_err(io)?);
            for (idx, line) in reader.lines().enumerate() {
                let line = line.map_err(io)?;
                if line.trim().is_empty() {
                    continue;
                }
                let record: LlmExchange = serde_json::from_str(&line).map_err(|e| StoreError::Parse {
                    path: path.clone(),
                    line: idx + 1,
                    message: e.to_string(),
                })?;
                records.entry(record.digest.clone()).or_insert(record);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(io)?;
        Ok(Self {
            path: Some(path),
            records: Mutex::new(records),
            file: Mutex::new(Some(file)),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn lookup(&self, digest: &str) -> Option<LlmExchange> {
        self.records.lock().unwrap().get(digest).cloned()
    }

    pub fn len(&self) -> usize {
        self.records.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stores the exchange unless its digest is already present.
    pub fn append(&self, exchange: LlmExchange) -> Result<(), StoreError> {
        let mut records = self.records.lock().unwrap();
        if records.contains_key(&exchange.digest) {
            return Ok(());
        }
        if let Some(file) = self.file.lock().unwrap().as_mut() {
            let path = self.path.clone().unwrap_or_default();
            let mut line = serde_json::to_string(&exchange).expect("exchange serializes");
            line.push('\n');
            file.write_all(line.as_bytes())
                .and_then(|_| file.flush())
                .map_err(|source| StoreError::Io { path, source })?;
        }
        records.insert(exchange.digest.clone(), exchange);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LlmMode {
    Live,
    Record,
    Replay,
}

impl FromStr for LlmMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "live" => Ok(LlmMode::Live),
            "record" => Ok(LlmMode::Record),
            "replay" => Ok(LlmMode::Replay),
            other => Err(format!("unknown mode `{other}` (expected live, record or replay)")),
        }
    }
}

impl fmt::Display for LlmMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LlmMode::Live => "live",
            LlmMode::Record => "record",
            LlmMode::Replay => "replay",
        })
    }
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("no recorded exchange for prompt digest {digest}")]
    ReplayMiss { digest: String },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{0}")]
    Config(String),
}

/// Counting semaphore bounding in-flight backend calls.
#[derive(Debug)]
struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Slots {
    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        SlotGuard(self)
    }
}

struct SlotGuard<'a>(&'a Slots);

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

/// Mode-aware front end shared by every feedback and tracker call.
pub struct LlmClient {
    mode: LlmMode,
    backend: Option<Arc<dyn LlmBackend>>,
    store: Option<Arc<ExchangeStore>>,
    slots: Slots,
    min_interval: Duration,
    last_start: Mutex<Option<Instant>>,
}

impl fmt::Debug for LlmClient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LlmClient")
            .field("mode", &self.mode)
            .field("backend", &self.backend.as_ref().map(|b| b.id().to_string()))
            .field(
                "store",
                &self.store.as_ref().and_then(|s| s.path().map(Path::to_path_buf)),
            )
            .finish_non_exhaustive()
    }
}

impl LlmClient {
    pub fn live(backend: Arc<dyn LlmBackend>) -> Self {
        Self::build(LlmMode::Live, Some(backend), None)
    }

    pub fn record(backend: Arc<dyn LlmBackend>, store: Arc<ExchangeStore>) -> Self {
        Self::build(LlmMode::Record, Some(backend), Some(store))
    }

    pub fn replay(store: Arc<ExchangeStore>) -> Self {
        Self::build(LlmMode::Replay, None, Some(store))
    }

    /// Validates that the mode has what it needs.
    pub fn new(
        mode: LlmMode,
        backend: Option<Arc<dyn LlmBackend>>,
        store: Option<Arc<ExchangeStore>>,
    ) -> Result<Self, LlmError> {
        match (mode, &backend, &store) {
            (LlmMode::Live, None, _) => Err(LlmError::Config("live mode needs an LLM backend".into())),
            (LlmMode::Record, None, _) | (LlmMode::Record, _, None) => Err(LlmError::Config(
                "record mode needs an LLM backend and an exchange store".into(),
            )),
            (LlmMode::Replay, _, None) => Err(LlmError::Config("replay mode needs an exchange store".into())),
            _ => Ok(Self::build(mode, backend, store)),
        }
    }

    fn build(mode: LlmMode, backend: Option<Arc<dyn LlmBackend>>, store: Option<Arc<ExchangeStore>>) -> Self {
        Self {
            mode,
            backend,
            store,
            slots: Slots {
                free: Mutex::new(DEFAULT_MAX_IN_FLIGHT),
                cv: Condvar::new(),
            },
            min_interval: Duration::ZERO,
            last_start: Mutex::new(None),
        }
    }

    pub fn with_max_in_flight(self, n: usize) -> Self {
        *self.slots.free.lock().unwrap() = n.max(1);
        self
    }

    /// Minimum spacing between the starts of consecutive backend calls.
    pub fn with_min_interval(mut self, interval: Duration) -> Self {
        self.min_interval = interval;
        self
    }

    pub fn mode(&self) -> LlmMode {
        self.mode
    }

    pub fn backend_id(&self) -> &str {
        match (&self.backend, self.mode) {
            (_, LlmMode::Replay) | (None, _) => "replay",
            (Some(b), _) => b.id(),
        }
    }

    pub fn generate(&self, request: &LlmRequest) -> Result<String, LlmError> {
        let digest = request.digest();
        match self.mode {
            LlmMode::Replay => {
                let store = self.store.as_ref().expect("replay client has a store");
                store
                    .lookup(&digest)
                    .map(|e| e.response)
                    .ok_or(LlmError::ReplayMiss { digest })
            }
            LlmMode::Live => Ok(self.call(request)?),
            LlmMode::Record => {
                let response = self.call(request)?;
                let store = self.store.as_ref().expect("record client has a store");
                store.append(LlmExchange {
                    digest,
                    backend_id: self.backend_id().to_string(),
                    parameters: ExchangeParameters {
                        temperature: request.temperature,
                        max_tokens: request.max_tokens,
                    },
                    system: request.system.clone(),
                    prompt: request.prompt.clone(),
                    response: response.clone(),
                })?;
                Ok(response)
            }
        }
    }

    fn call(&self, request: &LlmRequest) -> Result<String, BackendError> {
        let backend = self.backend.as_ref().expect("live client has a backend");
        let _slot = self.slots.acquire();
        if !self.min_interval.is_zero() {
            let mut last = self.last_start.lock().unwrap();
            if let Some(prev) = *last {
                let next = prev + self.min_interval;
                let now = Instant::now();
                if next > now {
                    std::thread::sleep(next - now);
                }
            }
            *last = Some(Instant::now());
        }
        backend.complete(request)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    #[test]
    fn echo_returns_first_ten_words() {
        let r = LlmRequest::new("sys", "one two three four five six seven eight nine ten eleven twelve");
        assert_eq!(
            EchoLlm.complete(&r).unwrap(),
            "one two three four five six seven eight nine ten"
        );
        assert_eq!(
            EchoLlm.complete(&LlmRequest::new("", "  short   prompt ")).unwrap(),
            "short prompt"
        );
    }

    #[test]
    fn digest_depends_on_every_parameter() {
        let base = LlmRequest::new("s", "p");
        let mut other = base.clone();
        assert_eq!(base.digest(), other.digest());
        other.max_tokens += 1;
        assert_ne!(base.digest(), other.digest());
        let mut other = base.clone();
        other.temperature = 0.5;
        assert_ne!(base.digest(), other.digest());
        let mut other = base.clone();
        other.system.push('!');
        assert_ne!(base.digest(), other.digest());
        assert_eq!(base.digest().len(), 64);
    }

    #[test]
    fn record_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exchanges.jsonl");
        let req = LlmRequest::new("sys", "alpha beta gamma");
        {
            let store = Arc::new(ExchangeStore::open(&path).unwrap());
            let client = LlmClient::record(Arc::new(EchoLlm), store.clone());
            assert_eq!(client.generate(&req).unwrap(), "alpha beta gamma");
            // Duplicate digests are stored once.
            client.generate(&req).unwrap();
            assert_eq!(store.len(), 1);
        }
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1);

        let replay = LlmClient::replay(Arc::new(ExchangeStore::open(&path).unwrap()));
        assert_eq!(replay.generate(&req).unwrap(), "alpha beta gamma");
        let miss = LlmRequest::new("sys", "never recorded");
        match replay.generate(&miss) {
            Err(LlmError::ReplayMiss { digest }) => assert_eq!(digest, miss.digest()),
            other => panic!("expected a replay miss, got {other:?}"),
        }
    }

    #[test]
    fn mode_requirements() {
        assert!(LlmClient::new(LlmMode::Replay, None, None).is_err());
        assert!(LlmClient::new(LlmMode::Live, None, None).is_err());
        assert!(LlmClient::new(LlmMode::Record, Some(Arc::new(EchoLlm)), None).is_err());
        assert!(LlmClient::new(LlmMode::Replay, None, Some(Arc::new(ExchangeStore::in_memory()))).is_ok());
        assert_eq!("replay".parse::<LlmMode>().unwrap(), LlmMode::Replay);
        assert!("offline".parse::<LlmMode>().is_err());
    }

    struct Counting {
        current: AtomicUsize,
        peak: AtomicUsize,
    }

    impl LlmBackend for Counting {
        fn id(&self) -> &str {
            "counting"
        }

        fn complete(&self, _: &LlmRequest) -> Result<String, BackendError> {
            let now = self.current.fetch_add(1, Ordering::SeqCst) + 1;
            self.peak.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(Duration::from_millis(20));
            self.current.fetch_sub(1, Ordering::SeqCst);
            Ok(String::new())
        }
    }

    #[test]
    fn in_flight_calls_are_bounded() {
        let backend = Arc::new(Counting {
            current: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        });
        let client = LlmClient::live(backend.clone()).with_max_in_flight(2);
        std::thread::scope(|s| {
            for i in 0..8 {
                let client = &client;
                s.spawn(move || client.generate(&LlmRequest::new("", &i.to_string())).unwrap());
            }
        });
        assert!(backend.peak.load(Ordering::SeqCst) <= 2);
    }

    #[test]
    fn backend_errors_surface_retry_after() {
        struct Busy;
        impl LlmBackend for Busy {
            fn id(&self) -> &str {
                "busy"
            }
            fn complete(&self, _: &LlmRequest) -> Result<String, BackendError> {
                let mut e = BackendError::new("busy", "quota exceeded");
                e.retry_after = Some(Duration::from_secs(7));
                Err(e)
            }
        }
        match LlmClient::live(Arc::new(Busy)).generate(&LlmRequest::new("", "x")) {
            Err(LlmError::Backend(e)) => assert_eq!(e.retry_after, Some(Duration::from_secs(7))),
            other => panic!("unexpected {other:?}"),
        }
    }
}

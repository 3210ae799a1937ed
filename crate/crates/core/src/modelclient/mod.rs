//! Model querying with a content-addressed response cache.
//!
//! Every answer is one `n = 1` request keyed by endpoint, prompt, sampling
//! parameters, answer index and repeat index. A warm cache therefore
//! replays a run byte for byte without touching the network.

pub mod cache;
mod http;
pub mod mock;
pub mod template;

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datamodel::SamplingConfig;

pub use cache::{cache_key, CacheEntry, CacheKey, CachedRequest, ResponseCache};
pub use mock::{GeneralizerSpec, MemorizerSpec, MockEntry, MockModel, MockSpec, MockSpecError};
pub use template::{PromptTemplate, TemplateError, TemplateSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEndpoint {
    pub name: String,
    pub base_url: String,
    pub model_id: String,
    #[serde(skip)]
    pub auth_token: Option<String>,
    pub max_concurrency: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Backend {
    Http,
    Mock(MockSpec),
}

#[derive(Debug, Error, PartialEq)]
pub enum EndpointError {
    #[error("empty endpoint spec")]
    Empty,
    #[error(transparent)]
    Mock(#[from] MockSpecError),
    #[error("endpoint `{0}` must be an http(s) URL or a mock:<model> spec")]
    Scheme(String),
    #[error("endpoint `{0}`: max_concurrency must be positive")]
    Concurrency(String),
}

impl ModelEndpoint {
    /// Parses `[name=]<url>[#model_id]` or `[name=]mock:<model>[?params]`.
    ///
    /// Mock endpoints default their name and model id to the model kind;
    /// URL endpoints default the name to the URL and the model id to
    /// `default`.
    pub fn parse(spec: &str) -> Result<Self, EndpointError> {
        let spec = spec.trim();
        if spec.is_empty() {
            return Err(EndpointError::Empty);
        }
        let (name, rest) = match spec.split_once('=') {
            Some((n, r)) if !n.contains(':') && !n.contains('/') && !n.contains('?') => (Some(n.trim()), r.trim()),
            _ => (None, spec),
        };
        let endpoint = if let Some(mock) = rest.strip_prefix("mock:") {
            let parsed = MockSpec::parse(mock)?;
            let kind = match parsed {
                MockSpec::Memorizer(_) => "memorizer",
                MockSpec::Generalizer(_) => "generalizer",
            };
            ModelEndpoint {
                name: name.unwrap_or(kind).to_string(),
                base_url: rest.to_string(),
                model_id: kind.to_string(),
                auth_token: None,
                max_concurrency: 4,
            }
        } else if rest.starts_with("http://") || rest.starts_with("https://") {
            let (url, model) = rest.split_once('#').unwrap_or((rest, "default"));
            let url = url.trim_end_matches('/');
            ModelEndpoint {
                name: name.unwrap_or(url).to_string(),
                base_url: url.to_string(),
                model_id: model.to_string(),
                auth_token: None,
                max_concurrency: 4,
            }
        } else {
            return Err(EndpointError::Scheme(spec.to_string()));
        };
        Ok(endpoint)
    }

    pub fn backend(&self) -> Result<Backend, EndpointError> {
        if self.max_concurrency == 0 {
            return Err(EndpointError::Concurrency(self.name.clone()));
        }
        match self.base_url.strip_prefix("mock:") {
            Some(m) => Ok(Backend::Mock(MockSpec::parse(m)?)),
            None if self.base_url.starts_with("http://") || self.base_url.starts_with("https://") => Ok(Backend::Http),
            None => Err(EndpointError::Scheme(self.base_url.clone())),
        }
    }
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("n must be at least 1")]
    ZeroAnswers,
    #[error(transparent)]
    Endpoint(#[from] EndpointError),
    #[error("mock endpoint `{0}` has no lookup table registered")]
    NoMockTable(String),
    #[error("endpoint `{endpoint}` unreachable after {attempts} attempts: {last}")]
    Unreachable {
        endpoint: String,
        attempts: u32,
        last: String,
    },
    #[error("endpoint `{endpoint}` answered HTTP {status}: {body}")]
    Status {
        endpoint: String,
        status: u16,
        body: String,
    },
    #[error("endpoint `{endpoint}` returned a malformed body ({reason}): {raw}")]
    Malformed {
        endpoint: String,
        reason: String,
        raw: String,
    },
    #[error("cache write failed: {0}")]
    Cache(#[from] std::io::Error),
}

/// Outputs for one perturbation level, with the cache key of each answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSet {
    pub level: usize,
    pub outputs: Vec<String>,
    pub provenance: Vec<String>,
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub timeout: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base_delay: Duration::from_millis(250),
            timeout: Duration::from_secs(120),
        }
    }
}

struct Semaphore {
    permits: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    fn new(permits: usize) -> Self {
        Semaphore {
            permits: Mutex::new(permits),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.permits.lock().unwrap();
        while *n == 0 {
            n = self.freed.wait(n).unwrap();
        }
        *n -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().unwrap() += 1;
        self.0.freed.notify_one();
    }
}

pub struct ModelClient {
    cache: ResponseCache,
    http: http::HttpBackend,
    mocks: HashMap<String, Arc<MockModel>>,
    limits: Mutex<HashMap<String, Arc<Semaphore>>>,
    backend_calls: AtomicU64,
    network_requests: AtomicU64,
}

impl ModelClient {
    pub fn new(cache: ResponseCache) -> Self {
        Self::with_retry(cache, RetryPolicy::default())
    }

    pub fn with_retry(cache: ResponseCache, retry: RetryPolicy) -> Self {
        ModelClient {
            cache,
            http: http::HttpBackend::new(retry),
            mocks: HashMap::new(),
            limits: Mutex::new(HashMap::new()),
            backend_calls: AtomicU64::new(0),
            network_requests: AtomicU64::new(0),
        }
    }

    /// Registers the lookup table behind a mock endpoint.
    pub fn register_mock(&mut self, endpoint: &ModelEndpoint, table: Vec<MockEntry>) -> Result<(), ClientError> {
        match endpoint.backend()? {
            Backend::Mock(spec) => {
                self.mocks.insert(endpoint.name.clone(), Arc::new(MockModel::new(spec, table)));
                Ok(())
            }
            Backend::Http => Ok(()),
        }
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    /// Answers produced by a backend rather than the cache.
    pub fn backend_calls(&self) -> u64 {
        self.backend_calls.load(Ordering::Relaxed)
    }

    /// HTTP requests sent, retries included.
    pub fn network_requests(&self) -> u64 {
        self.network_requests.load(Ordering::Relaxed)
    }

    /// `n` answers for one prompt; answer `i` uses sample index `i`.
    pub fn complete(
        &self,
        endpoint: &ModelEndpoint,
        prompt: &str,
        sampling: &SamplingConfig,
        n: usize,
        repeat_index: u32,
    ) -> Result<OutputSet, ClientError> {
        if n == 0 {
            return Err(ClientError::ZeroAnswers);
        }
        let backend = endpoint.backend()?;
        let mut outputs = Vec::with_capacity(n);
        let mut provenance = Vec::with_capacity(n);
        for i in 0..n as u32 {
            let key = cache_key(endpoint, prompt, sampling, i, repeat_index);
            let text = match self.cache.get(&key) {
                Some(entry) => entry.response,
                None => {
                    let text = self.call(endpoint, &backend, prompt, sampling, &key)?;
                    self.backend_calls.fetch_add(1, Ordering::Relaxed);
                    let entry = CacheEntry {
                        key: key.hex(),
                        request: CachedRequest {
                            endpoint: endpoint.name.clone(),
                            base_url: endpoint.base_url.clone(),
                            model_id: endpoint.model_id.clone(),
                            prompt: prompt.to_string(),
                            temperature: sampling.temperature,
                            top_p: sampling.nucleus,
                            max_tokens: sampling.max_tokens,
                            sample_index: i,
                            repeat_index,
                        },
                        response: text.clone(),
                        created_unix: SystemTime::now()
                            .duration_since(UNIX_EPOCH)
                            .map(|d| d.as_secs())
                            .unwrap_or(0),
                    };
                    self.cache.put(&key, &entry)?;
                    text
                }
            };
            outputs.push(text);
            provenance.push(key.hex());
        }
        Ok(OutputSet {
            level: 0,
            outputs,
            provenance,
        })
    }

    fn call(
        &self,
        endpoint: &ModelEndpoint,
        backend: &Backend,
        prompt: &str,
        sampling: &SamplingConfig,
        key: &CacheKey,
    ) -> Result<String, ClientError> {
        match backend {
            Backend::Mock(_) => {
                let model = self
                    .mocks
                    .get(&endpoint.name)
                    .ok_or_else(|| ClientError::NoMockTable(endpoint.name.clone()))?;
                Ok(model.respond(prompt, key.seed()))
            }
            Backend::Http => {
                let limit = self.limit_for(endpoint);
                let _permit = limit.acquire();
                self.http.chat(endpoint, prompt, sampling, &self.network_requests)
            }
        }
    }

    fn limit_for(&self, endpoint: &ModelEndpoint) -> Arc<Semaphore> {
        let mut limits = self.limits.lock().unwrap();
        limits
            .entry(endpoint.name.clone())
            .or_insert_with(|| Arc::new(Semaphore::new(endpoint.max_concurrency.max(1))))
            .clone()
    }
}

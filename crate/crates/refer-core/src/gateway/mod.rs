//! Uniform client layer over chat-completion backends.
//!
//! One [`Gateway`] fronts every provider in a run: it validates requests,
//! consults the on-disk response cache, applies per-provider rate limits and
//! the retry policy, fans a multi-response request out into sequential single
//! calls when the provider cannot batch, and exposes counters the
//! orchestrator folds into run diagnostics.

mod cache;
mod clock;
mod http;
mod ledger;
mod mock;
mod ratelimit;

pub use cache::{CacheKey, CachedReply, DiskCache, CACHE_FORMAT_VERSION};
pub use clock::{Clock, FixedClock, SystemClock, VirtualClock};
pub use http::HttpBackend;
pub use ledger::{CostLedger, LedgerEntry, LedgerRow};
pub use mock::{MockBackend, MockScriptError, PromptMatcher, RecordedCall};
pub use ratelimit::RateLimiter;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::score::Rational;

/// Per-1k-token pricing for a model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pricing {
    pub input_cost_per_1k: Rational,
    pub output_cost_per_1k: Rational,
}

impl Pricing {
    pub fn free() -> Self {
        Pricing {
            input_cost_per_1k: Rational::ZERO,
            output_cost_per_1k: Rational::ZERO,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.input_cost_per_1k >= Rational::ZERO && self.output_cost_per_1k >= Rational::ZERO
    }
}

/// A named, priced model on some provider.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelHandle {
    /// Config-level name, used in CLI flags and ledger-free contexts.
    pub name: String,
    pub provider: String,
    pub model_id: String,
    pub pricing: Pricing,
    /// Whether one call may carry n > 1; when false the gateway loops.
    pub supports_n: bool,
    pub supports_images: bool,
}

/// Where an image lives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageLocator {
    Url(String),
    Path(PathBuf),
}

/// An image plus the digest used for cache keying. Local files are keyed by
/// content; bare URLs fall back to a digest of the URL itself (URLs rot, so
/// prefetching to a local store is preferred).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageAttachment {
    pub locator: ImageLocator,
    pub digest: String,
}

impl ImageAttachment {
    pub fn from_path(path: PathBuf) -> std::io::Result<Self> {
        let bytes = std::fs::read(&path)?;
        Ok(ImageAttachment {
            locator: ImageLocator::Path(path),
            digest: hex::encode(Sha256::digest(&bytes)),
        })
    }

    pub fn from_url(url: String) -> Self {
        let digest = format!("url:{}", hex::encode(Sha256::digest(url.as_bytes())));
        ImageAttachment {
            locator: ImageLocator::Url(url),
            digest,
        }
    }
}

/// One chat-completion request.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub prompt: String,
    pub image: Option<ImageAttachment>,
    pub n: u32,
    pub temperature: f64,
    pub top_p: f64,
    /// `None` means no limit.
    pub max_tokens: Option<u32>,
    pub stop: Option<Vec<String>>,
}

impl ChatRequest {
    pub fn text(prompt: impl Into<String>) -> Self {
        ChatRequest {
            prompt: prompt.into(),
            image: None,
            n: 1,
            temperature: 1.0,
            top_p: 1.0,
            max_tokens: None,
            stop: None,
        }
    }

    pub fn with_n(mut self, n: u32) -> Self {
        self.n = n;
        self
    }

    fn validate(&self) -> Result<(), GatewayError> {
        if self.n < 1 {
            return Err(GatewayError::InvalidRequest("n must be >= 1".into()));
        }
        if self.temperature < 0.0 {
            return Err(GatewayError::InvalidRequest("temperature must be >= 0".into()));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(GatewayError::InvalidRequest("top_p must be in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Token counts reported by a backend.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

/// Sampling parameters for one class of call (peer, area chair, …).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CallParams {
    pub temperature: f64,
    pub top_p: f64,
    /// `None` means no limit.
    pub max_tokens: Option<u32>,
}

impl CallParams {
    pub fn request(&self, prompt: impl Into<String>, n: u32) -> ChatRequest {
        ChatRequest {
            prompt: prompt.into(),
            image: None,
            n,
            temperature: self.temperature,
            top_p: self.top_p,
            max_tokens: self.max_tokens,
            stop: None,
        }
    }
}

/// A completed invocation: the n completions plus accounting fields.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatResponse {
    pub completions: Vec<String>,
    pub usage: Usage,
    pub latency: Duration,
    pub from_cache: bool,
}

/// What one raw backend call returns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendReply {
    pub completions: Vec<String>,
    pub usage: Usage,
}

/// Failure taxonomy driving the retry predicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureClass {
    Transport,
    RateLimited,
    Server,
    Client,
    /// Mock-only: the prompt matched no script (a test-fixture gap).
    Unscripted,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{class:?}: {message}")]
pub struct BackendFailure {
    pub class: FailureClass,
    pub message: String,
}

/// Exponential backoff parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Backoff {
    pub initial: Duration,
    pub multiplier: f64,
    pub max: Duration,
}

impl Backoff {
    fn delay(&self, attempt: u32) -> Duration {
        let factor = self.multiplier.powi(attempt.saturating_sub(1) as i32);
        self.initial.mul_f64(factor).min(self.max)
    }
}

/// Retry policy: attempt budget, backoff, and which failures are worth
/// retrying.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub backoff: Backoff,
    pub retry_on: Vec<FailureClass>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            backoff: Backoff {
                initial: Duration::from_secs(1),
                multiplier: 2.0,
                max: Duration::from_secs(30),
            },
            retry_on: vec![
                FailureClass::Transport,
                FailureClass::RateLimited,
                FailureClass::Server,
            ],
        }
    }
}

impl RetryPolicy {
    pub fn no_backoff(max_attempts: u32) -> Self {
        RetryPolicy {
            max_attempts,
            backoff: Backoff {
                initial: Duration::ZERO,
                multiplier: 1.0,
                max: Duration::ZERO,
            },
            ..RetryPolicy::default()
        }
    }

    fn is_retryable(&self, class: FailureClass) -> bool {
        self.retry_on.contains(&class)
    }

    pub fn is_valid(&self) -> bool {
        self.max_attempts >= 1 && self.backoff.multiplier >= 1.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GatewayError {
    #[error("backend exhausted after {attempts} attempt(s): {last}")]
    BackendExhausted { attempts: u32, last: BackendFailure },
    #[error("model {model} does not accept image attachments")]
    UnsupportedImage { model: String },
    #[error("no provider named {0} is configured")]
    UnknownProvider(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl GatewayError {
    /// True when the underlying cause is an unscripted mock prompt — a test
    /// fixture gap rather than a transient provider problem.
    pub fn is_unscripted(&self) -> bool {
        matches!(
            self,
            GatewayError::BackendExhausted {
                last: BackendFailure {
                    class: FailureClass::Unscripted,
                    ..
                },
                ..
            }
        )
    }
}

/// Whether an invocation may read the cache. Writes always happen so the
/// store converges on the most recently accepted completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheMode {
    ReadWrite,
    /// Skip the read: force a fresh sample from the backend.
    WriteOnly,
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, model_id: &str, request: &ChatRequest) -> Result<BackendReply, BackendFailure>;
}

/// The one client object a run shares across worker threads.
pub struct Gateway {
    providers: BTreeMap<String, Arc<dyn ChatBackend>>,
    limiters: BTreeMap<String, RateLimiter>,
    cache: Option<DiskCache>,
    policy: RetryPolicy,
    clock: Arc<dyn Clock>,
    backend_calls: AtomicU64,
    cache_hits: AtomicU64,
}

impl Gateway {
    pub fn builder() -> GatewayBuilder {
        GatewayBuilder {
            providers: BTreeMap::new(),
            limiters: BTreeMap::new(),
            cache: None,
            policy: RetryPolicy::default(),
            clock: Arc::new(SystemClock::new()),
        }
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    pub fn retry_policy(&self) -> &RetryPolicy {
        &self.policy
    }

    /// Network attempts made (cache hits excluded; scripted mock failures
    /// included).
    pub fn backend_calls(&self) -> u64 {
        self.backend_calls.load(Ordering::SeqCst)
    }

    pub fn cache_hits(&self) -> u64 {
        self.cache_hits.load(Ordering::SeqCst)
    }

    /// Invokes with the gateway's configured policy, reading the cache.
    pub fn invoke(
        &self,
        request: &ChatRequest,
        handle: &ModelHandle,
    ) -> Result<ChatResponse, GatewayError> {
        self.invoke_with(request, handle, &self.policy.clone(), CacheMode::ReadWrite)
    }

    /// Full-control invocation.
    ///
    /// Cache hits return the stored completions without touching the
    /// backend. Misses make at most `policy.max_attempts` attempts per
    /// backend call; when the model cannot batch (`supports_n = false`) an
    /// n>1 request becomes n sequential single calls whose completions are
    /// concatenated in call order.
    pub fn invoke_with(
        &self,
        request: &ChatRequest,
        handle: &ModelHandle,
        policy: &RetryPolicy,
        cache_mode: CacheMode,
    ) -> Result<ChatResponse, GatewayError> {
        request.validate()?;
        if request.image.is_some() && !handle.supports_images {
            return Err(GatewayError::UnsupportedImage {
                model: handle.name.clone(),
            });
        }

        let started = self.clock.monotonic();
        let key = CacheKey::compute(&handle.provider, &handle.model_id, request);

        if cache_mode == CacheMode::ReadWrite {
            if let Some(cache) = &self.cache {
                if let Some(hit) = cache.lookup(&key) {
                    self.cache_hits.fetch_add(1, Ordering::SeqCst);
                    return Ok(ChatResponse {
                        completions: hit.completions,
                        usage: hit.usage,
                        latency: self.clock.monotonic().saturating_sub(started),
                        from_cache: true,
                    });
                }
            }
        }

        let backend = self
            .providers
            .get(&handle.provider)
            .ok_or_else(|| GatewayError::UnknownProvider(handle.provider.clone()))?;

        let reply = if handle.supports_n || request.n == 1 {
            self.call_with_retry(backend.as_ref(), handle, request, policy)?
        } else {
            let single = ChatRequest {
                n: 1,
                ..request.clone()
            };
            let mut completions = Vec::with_capacity(request.n as usize);
            let mut usage = Usage::default();
            for _ in 0..request.n {
                let part = self.call_with_retry(backend.as_ref(), handle, &single, policy)?;
                usage.input_tokens += part.usage.input_tokens;
                usage.output_tokens += part.usage.output_tokens;
                completions.extend(part.completions);
            }
            BackendReply { completions, usage }
        };

        if let Some(cache) = &self.cache {
            let stored = CachedReply {
                completions: reply.completions.clone(),
                usage: reply.usage,
                created_unix_ms: self.clock.unix_millis(),
            };
            if let Err(e) = cache.store(&key, &handle.provider, &handle.model_id, &request.prompt, &stored)
            {
                log::warn!("cache store failed for {}: {e}", key.as_hex());
            }
        }

        Ok(ChatResponse {
            completions: reply.completions,
            usage: reply.usage,
            latency: self.clock.monotonic().saturating_sub(started),
            from_cache: false,
        })
    }

    fn call_with_retry(
        &self,
        backend: &dyn ChatBackend,
        handle: &ModelHandle,
        request: &ChatRequest,
        policy: &RetryPolicy,
    ) -> Result<BackendReply, GatewayError> {
        let mut attempt = 0;
        loop {
            attempt += 1;
            if let Some(limiter) = self.limiters.get(&handle.provider) {
                limiter.acquire();
            }
            self.backend_calls.fetch_add(1, Ordering::SeqCst);
            match backend.complete(&handle.model_id, request) {
                Ok(reply) => return Ok(reply),
                Err(failure) => {
                    if attempt >= policy.max_attempts || !policy.is_retryable(failure.class) {
                        return Err(GatewayError::BackendExhausted {
                            attempts: attempt,
                            last: failure,
                        });
                    }
                    self.clock.sleep(policy.backoff.delay(attempt));
                }
            }
        }
    }
}

pub struct GatewayBuilder {
    providers: BTreeMap<String, Arc<dyn ChatBackend>>,
    limiters: BTreeMap<String, RateLimiter>,
    cache: Option<DiskCache>,
    policy: RetryPolicy,
    clock: Arc<dyn Clock>,
}

impl GatewayBuilder {
    pub fn provider(mut self, name: &str, backend: Arc<dyn ChatBackend>) -> Self {
        self.providers.insert(name.to_string(), backend);
        self
    }

    pub fn rate_limit(mut self, provider: &str, requests_per_minute: u32) -> Self {
        let limiter = RateLimiter::per_minute(requests_per_minute, self.clock.clone());
        self.limiters.insert(provider.to_string(), limiter);
        self
    }

    pub fn cache(mut self, cache: DiskCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn retry_policy(mut self, policy: RetryPolicy) -> Self {
        self.policy = policy;
        self
    }

    /// Must be called before `rate_limit` so limiters share the clock.
    pub fn clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn build(self) -> Gateway {
        Gateway {
            providers: self.providers,
            limiters: self.limiters,
            cache: self.cache,
            policy: self.policy,
            clock: self.clock,
            backend_calls: AtomicU64::new(0),
            cache_hits: AtomicU64::new(0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mock_handle(supports_n: bool) -> ModelHandle {
        ModelHandle {
            name: "mock-model".into(),
            provider: "mock".into(),
            model_id: "mock-1".into(),
            pricing: Pricing::free(),
            supports_n,
            supports_images: false,
        }
    }

    fn gateway_with(mock: Arc<MockBackend>, cache: Option<DiskCache>) -> Gateway {
        let mut builder = Gateway::builder()
            .clock(Arc::new(FixedClock))
            .retry_policy(RetryPolicy::no_backoff(3))
            .provider("mock", mock);
        if let Some(cache) = cache {
            builder = builder.cache(cache);
        }
        builder.build()
    }

    #[test]
    fn cache_hit_skips_backend() {
        let dir = tempfile::tempdir().unwrap();
        let mock = Arc::new(MockBackend::new());
        mock.script(PromptMatcher::Any, vec!["Analysis: a.\nRating: 2".into()]);
        let gateway = gateway_with(mock.clone(), Some(DiskCache::open(dir.path()).unwrap()));

        let request = ChatRequest::text("hello");
        let first = gateway.invoke(&request, &mock_handle(true)).unwrap();
        assert!(!first.from_cache);
        let second = gateway.invoke(&request, &mock_handle(true)).unwrap();
        assert!(second.from_cache);
        assert_eq!(second.completions, first.completions);
        assert_eq!(second.usage, first.usage);
        assert_eq!(mock.call_count(), 1);
        assert_eq!(gateway.cache_hits(), 1);
    }

    #[test]
    fn write_only_mode_forces_fresh_sample() {
        let dir = tempfile::tempdir().unwrap();
        let mock = Arc::new(MockBackend::new());
        mock.script(PromptMatcher::Any, vec!["first".into(), "second".into()]);
        let gateway = gateway_with(mock.clone(), Some(DiskCache::open(dir.path()).unwrap()));
        let handle = mock_handle(true);
        let request = ChatRequest::text("p");

        assert_eq!(gateway.invoke(&request, &handle).unwrap().completions, vec!["first"]);
        let policy = gateway.retry_policy().clone();
        let fresh = gateway
            .invoke_with(&request, &handle, &policy, CacheMode::WriteOnly)
            .unwrap();
        assert_eq!(fresh.completions, vec!["second"]);
        // The fresh sample replaced the stored record.
        let hit = gateway.invoke(&request, &handle).unwrap();
        assert!(hit.from_cache);
        assert_eq!(hit.completions, vec!["second"]);
    }

    #[test]
    fn retries_until_success_within_budget() {
        let mock = Arc::new(MockBackend::new());
        mock.script_with_failures(PromptMatcher::Any, vec!["ok".into()], 2, false);
        let gateway = gateway_with(mock.clone(), None);
        let response = gateway.invoke(&ChatRequest::text("p"), &mock_handle(true)).unwrap();
        assert_eq!(response.completions, vec!["ok"]);
        assert_eq!(mock.call_count(), 3);
    }

    #[test]
    fn exhaustion_carries_last_failure() {
        let mock = Arc::new(MockBackend::new());
        mock.script_with_failures(PromptMatcher::Any, vec![], 0, true);
        let gateway = gateway_with(mock.clone(), None);
        let err = gateway.invoke(&ChatRequest::text("p"), &mock_handle(true)).unwrap_err();
        match err {
            GatewayError::BackendExhausted { attempts, last } => {
                assert_eq!(attempts, 3);
                assert_eq!(last.class, FailureClass::Server);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn unscripted_prompts_fail_without_retries() {
        let mock = Arc::new(MockBackend::new());
        let gateway = gateway_with(mock.clone(), None);
        let err = gateway.invoke(&ChatRequest::text("p"), &mock_handle(true)).unwrap_err();
        assert!(err.is_unscripted());
        assert_eq!(mock.call_count(), 1);
    }

    #[test]
    fn n_20_with_batching_is_one_call() {
        let mock = Arc::new(MockBackend::new());
        mock.script(PromptMatcher::Any, vec!["a".into(), "b".into()]);
        let gateway = gateway_with(mock.clone(), None);
        let response = gateway
            .invoke(&ChatRequest::text("p").with_n(20), &mock_handle(true))
            .unwrap();
        assert_eq!(response.completions.len(), 20);
        assert_eq!(mock.call_count(), 1);
    }

    #[test]
    fn n_without_batching_loops_sequential_singles() {
        let mock = Arc::new(MockBackend::new());
        mock.script(PromptMatcher::Any, vec!["a".into(), "b".into(), "c".into()]);
        let gateway = gateway_with(mock.clone(), None);
        let response = gateway
            .invoke(&ChatRequest::text("p").with_n(5), &mock_handle(false))
            .unwrap();
        assert_eq!(response.completions, vec!["a", "b", "c", "a", "b"]);
        assert_eq!(mock.call_count(), 5);
        for call in mock.transcript() {
            assert_eq!(call.n, 1);
        }
    }

    #[test]
    fn image_to_text_only_model_is_rejected() {
        let gateway = gateway_with(Arc::new(MockBackend::new()), None);
        let mut request = ChatRequest::text("p");
        request.image = Some(ImageAttachment::from_url("https://example.com/x.png".into()));
        let err = gateway.invoke(&request, &mock_handle(true)).unwrap_err();
        assert!(matches!(err, GatewayError::UnsupportedImage { .. }));
    }

    #[test]
    fn invalid_requests_are_rejected_up_front() {
        let gateway = gateway_with(Arc::new(MockBackend::new()), None);
        let handle = mock_handle(true);
        let mut bad_n = ChatRequest::text("p");
        bad_n.n = 0;
        assert!(matches!(
            gateway.invoke(&bad_n, &handle),
            Err(GatewayError::InvalidRequest(_))
        ));
        let mut bad_top_p = ChatRequest::text("p");
        bad_top_p.top_p = 0.0;
        assert!(matches!(
            gateway.invoke(&bad_top_p, &handle),
            Err(GatewayError::InvalidRequest(_))
        ));
    }
}

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use base64::Engine;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use super::extract::extract_json_object;
use super::schema::validate_payload;
use super::{AttemptRecord, GatewayConfig, GatewayError, Payload, StructuredRequest};

/// Raw HTTP outcome of one dispatch.
#[derive(Debug, Clone, PartialEq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TransportFailure {
    Timeout,
    Io(String),
}

/// Something that can carry one chat-completions request.
pub trait Backend: Send + Sync {
    /// `body` is the full wire JSON; `request` is passed along so in-process
    /// backends can route on the role without parsing the wire format.
    fn post(&self, request: &StructuredRequest, body: &Value) -> Result<HttpReply, TransportFailure>;

    fn name(&self) -> &str;
}

pub trait Sleeper: Send + Sync {
    fn sleep(&self, d: Duration);
}

#[derive(Debug, Default)]
pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Counting semaphore bounding concurrent dispatches.
#[derive(Debug)]
struct Semaphore {
    state: Mutex<(usize, usize)>, // (in flight, peak)
    cv: Condvar,
    limit: usize,
}

struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    fn new(limit: usize) -> Self {
        Self {
            state: Mutex::new((0, 0)),
            cv: Condvar::new(),
            limit,
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut st = self.state.lock().expect("semaphore poisoned");
        while st.0 >= self.limit {
            st = self.cv.wait(st).expect("semaphore poisoned");
        }
        st.0 += 1;
        st.1 = st.1.max(st.0);
        Permit(self)
    }

    fn peak(&self) -> usize {
        self.state.lock().expect("semaphore poisoned").1
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut st = self.0.state.lock().expect("semaphore poisoned");
        st.0 -= 1;
        self.0.cv.notify_one();
    }
}

/// Thread-safe handle through which every model role is reached.
///
/// All payloads returned by [`GatewayHandle::send`] have passed schema validation.
pub struct GatewayHandle {
    backend: Arc<dyn Backend>,
    config: GatewayConfig,
    sleeper: Arc<dyn Sleeper>,
    dispatched: AtomicU64,
    inflight: Semaphore,
    jitter: Mutex<ChaCha8Rng>,
}

impl std::fmt::Debug for GatewayHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GatewayHandle")
            .field("backend", &self.backend.name())
            .field("dispatched", &self.dispatched.load(Ordering::Relaxed))
            .finish()
    }
}

impl GatewayHandle {
    pub fn new(backend: Arc<dyn Backend>, config: GatewayConfig) -> Result<Self, GatewayError> {
        Self::with_sleeper(backend, config, Arc::new(ThreadSleeper), 0)
    }

    pub fn with_sleeper(
        backend: Arc<dyn Backend>,
        config: GatewayConfig,
        sleeper: Arc<dyn Sleeper>,
        seed: u64,
    ) -> Result<Self, GatewayError> {
        config.validate()?;
        Ok(Self {
            backend,
            inflight: Semaphore::new(config.max_inflight),
            config,
            sleeper,
            dispatched: AtomicU64::new(0),
            jitter: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
        })
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn backend_name(&self) -> &str {
        self.backend.name()
    }

    /// HTTP dispatches made so far (monotone).
    pub fn requests_dispatched(&self) -> u64 {
        self.dispatched.load(Ordering::SeqCst)
    }

    /// Highest number of simultaneous dispatches observed.
    pub fn peak_inflight(&self) -> usize {
        self.inflight.peak()
    }

    /// Sends a structured request and returns the validated payload.
    ///
    /// A reply that fails extraction or validation gets one repair round-trip
    /// carrying the validation error. Transport failures, 429 and 5xx are
    /// retried with exponential backoff. The attempt count across both phases
    /// never exceeds `max_attempts`.
    pub fn send(&self, request: &StructuredRequest) -> Result<Payload, GatewayError> {
        let mut messages = vec![
            json!({"role": "system", "content": super::prompts::system_prompt(request.role, request.expected_schema)}),
            user_message(request),
        ];
        let mut attempts = 0u32;
        let mut trace = Vec::new();
        let mut repaired = false;
        loop {
            let body = json!({
                "model": self.config.model,
                "messages": messages,
                "temperature": 0,
            });
            let content = self.dispatch(request, &body, &mut attempts, &mut trace)?;
            let outcome = match extract_json_object(&content) {
                Some(v) => validate_payload(request.expected_schema, v),
                None => Err("reply contains no JSON object".to_owned()),
            };
            match outcome {
                Ok(payload) => return Ok(payload),
                Err(message) if !repaired && attempts < self.config.max_attempts => {
                    repaired = true;
                    messages.push(json!({"role": "assistant", "content": content}));
                    messages.push(json!({
                        "role": "user",
                        "content": super::prompts::repair_prompt(request.expected_schema, &message),
                    }));
                }
                Err(message) => {
                    return Err(GatewayError::SchemaError {
                        schema: request.expected_schema,
                        message,
                    })
                }
            }
        }
    }

    fn dispatch(
        &self,
        request: &StructuredRequest,
        body: &Value,
        attempts: &mut u32,
        trace: &mut Vec<AttemptRecord>,
    ) -> Result<String, GatewayError> {
        let mut retries = 0u32;
        let mut last_was_timeout = false;
        loop {
            if *attempts >= self.config.max_attempts {
                return Err(if last_was_timeout {
                    GatewayError::Timeout {
                        attempts: *attempts,
                        trace: trace.clone(),
                    }
                } else {
                    GatewayError::TransportError {
                        message: "retry attempts exhausted".into(),
                        trace: trace.clone(),
                    }
                });
            }
            self.charge_budget()?;
            *attempts += 1;
            let result = {
                let _permit = self.inflight.acquire();
                self.backend.post(request, body)
            };
            let failure = match result {
                Ok(reply) if (200..300).contains(&reply.status) => {
                    trace.push(AttemptRecord {
                        attempt: *attempts,
                        outcome: format!("HTTP {}", reply.status),
                        backoff_ms: None,
                    });
                    return chat_content(&reply.body).map_err(|message| GatewayError::TransportError {
                        message,
                        trace: trace.clone(),
                    });
                }
                Ok(reply) if reply.status == 429 || reply.status >= 500 => {
                    last_was_timeout = false;
                    format!("HTTP {}", reply.status)
                }
                Ok(reply) => {
                    trace.push(AttemptRecord {
                        attempt: *attempts,
                        outcome: format!("HTTP {}", reply.status),
                        backoff_ms: None,
                    });
                    return Err(GatewayError::TransportError {
                        message: format!("non-retryable status {}: {}", reply.status, truncate(&reply.body, 200)),
                        trace: trace.clone(),
                    });
                }
                Err(TransportFailure::Timeout) => {
                    last_was_timeout = true;
                    "timeout".to_owned()
                }
                Err(TransportFailure::Io(e)) => {
                    last_was_timeout = false;
                    format!("transport: {e}")
                }
            };
            let backoff = if *attempts < self.config.max_attempts {
                let ms = self.backoff_with_jitter(retries);
                retries += 1;
                Some(ms)
            } else {
                None
            };
            trace.push(AttemptRecord {
                attempt: *attempts,
                outcome: failure,
                backoff_ms: backoff,
            });
            if let Some(ms) = backoff {
                self.sleeper.sleep(Duration::from_millis(ms));
            }
        }
    }

    fn charge_budget(&self) -> Result<(), GatewayError> {
        let limit = self.config.request_budget;
        self.dispatched
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |used| (used < limit).then_some(used + 1))
            .map(|_| ())
            .map_err(|used| GatewayError::BudgetExhausted { used, limit })
    }

    /// `d + U[0, d)` with `d = base · factor^retry`: never shorter than the base delay.
    fn backoff_with_jitter(&self, retry: u32) -> u64 {
        let d = self.config.backoff_ms(retry);
        let jitter: f64 = self.jitter.lock().expect("rng poisoned").gen_range(0.0..1.0);
        (d + jitter * d).round() as u64
    }
}

fn user_message(request: &StructuredRequest) -> Value {
    if request.attachments.is_empty() {
        return json!({"role": "user", "content": request.prompt});
    }
    let mut parts = vec![json!({"type": "text", "text": request.prompt})];
    for a in &request.attachments {
        let data = base64::engine::general_purpose::STANDARD.encode(&a.data);
        parts.push(json!({
            "type": "image_url",
            "image_url": {"url": format!("data:{};base64,{data}", a.mime)},
        }));
    }
    json!({"role": "user", "content": parts})
}

/// Content of the first choice in a chat-completions response body.
fn chat_content(body: &str) -> Result<String, String> {
    let v: Value = serde_json::from_str(body).map_err(|e| format!("response is not JSON: {e}"))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_owned)
        .ok_or_else(|| "response has no choices[0].message.content".to_owned())
}

fn truncate(s: &str, n: usize) -> &str {
    match s.char_indices().nth(n) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

/// Wraps `content` in a minimal chat-completions response body.
pub fn chat_response_body(content: &str) -> String {
    json!({
        "object": "chat.completion",
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": "stop"}],
    })
    .to_string()
}

use serde::{Deserialize, Serialize};

use super::GatewayError;

pub const ENV_ENDPOINT: &str = "FYI_LLM_ENDPOINT";
pub const ENV_MODEL: &str = "FYI_LLM_MODEL";
pub const ENV_API_KEY: &str = "FYI_LLM_API_KEY";

/// Connection and retry settings for a chat-completions backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    pub endpoint: String,
    pub model: String,
    /// Read from the environment; never serialized.
    #[serde(skip)]
    pub api_key: Option<String>,
    pub timeout_s: f64,
    pub max_attempts: u32,
    pub backoff_base_ms: u64,
    pub backoff_factor: f64,
    pub max_inflight: usize,
    /// Upper bound on HTTP dispatches over the handle's lifetime.
    pub request_budget: u64,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://localhost:8000/v1/chat/completions".into(),
            model: "gpt-4o".into(),
            api_key: None,
            timeout_s: 30.0,
            max_attempts: 5,
            backoff_base_ms: 500,
            backoff_factor: 2.0,
            max_inflight: 4,
            request_budget: 10_000,
        }
    }
}

impl GatewayConfig {
    /// Overlays `FYI_LLM_ENDPOINT`, `FYI_LLM_MODEL` and `FYI_LLM_API_KEY` onto `self`.
    pub fn with_env(mut self) -> Self {
        self.apply_env(|k| std::env::var(k).ok());
        self
    }

    pub(crate) fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) {
        if let Some(v) = get(ENV_ENDPOINT).filter(|v| !v.is_empty()) {
            self.endpoint = v;
        }
        if let Some(v) = get(ENV_MODEL).filter(|v| !v.is_empty()) {
            self.model = v;
        }
        if let Some(v) = get(ENV_API_KEY).filter(|v| !v.is_empty()) {
            self.api_key = Some(v);
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let bad = |m: String| Err(GatewayError::InvalidConfig(m));
        if self.max_attempts < 1 {
            return bad("max_attempts must be >= 1".into());
        }
        if !(self.timeout_s > 0.0 && self.timeout_s.is_finite()) {
            return bad(format!("timeout_s must be > 0, got {}", self.timeout_s));
        }
        if !(self.backoff_factor >= 1.0 && self.backoff_factor.is_finite()) {
            return bad(format!("backoff_factor must be >= 1, got {}", self.backoff_factor));
        }
        if self.max_inflight < 1 {
            return bad("max_inflight must be >= 1".into());
        }
        Ok(())
    }

    /// Base delay before retry number `retry` (0 for the first retry).
    pub fn backoff_ms(&self, retry: u32) -> f64 {
        self.backoff_base_ms as f64 * self.backoff_factor.powi(retry as i32)
    }
}

use std::time::Duration;

use serde_json::Value;

use super::client::{Backend, HttpReply, TransportFailure};
use super::{GatewayConfig, GatewayError, StructuredRequest};

/// Live chat-completions transport over HTTP(S).
pub struct HttpBackend {
    agent: ureq::Agent,
    endpoint: String,
    api_key: String,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend").field("endpoint", &self.endpoint).finish_non_exhaustive()
    }
}

impl HttpBackend {
    pub fn new(config: &GatewayConfig) -> Result<Self, GatewayError> {
        config.validate()?;
        let api_key = config.api_key.clone().ok_or(GatewayError::MissingApiKey)?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_s)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            agent,
            endpoint: config.endpoint.clone(),
            api_key,
        })
    }
}

impl Backend for HttpBackend {
    fn post(&self, _request: &StructuredRequest, body: &Value) -> Result<HttpReply, TransportFailure> {
        let result = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .content_type("application/json")
            .send(body.to_string());
        match result {
            Ok(mut resp) => {
                let status = resp.status().as_u16();
                match resp.body_mut().read_to_string() {
                    Ok(body) => Ok(HttpReply { status, body }),
                    Err(ureq::Error::Timeout(_)) => Err(TransportFailure::Timeout),
                    Err(e) => Err(TransportFailure::Io(e.to_string())),
                }
            }
            Err(ureq::Error::Timeout(_)) => Err(TransportFailure::Timeout),
            Err(e) => Err(TransportFailure::Io(e.to_string())),
        }
    }

    fn name(&self) -> &str {
        "http"
    }
}

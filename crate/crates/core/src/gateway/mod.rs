//! The seam between the engine and any chat-completions model.
//!
//! Every role (collector, locator, judge, planner) goes through
//! [`GatewayHandle::send`]. Offline runs plug in the rule-based backends from
//! [`mock`]; live runs use [`HttpBackend`].

mod client;
mod config;
mod extract;
mod http;
pub mod mock;
pub mod prompts;
mod schema;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use client::{chat_response_body, Backend, GatewayHandle, HttpReply, Sleeper, ThreadSleeper, TransportFailure};
pub use config::{GatewayConfig, ENV_API_KEY, ENV_ENDPOINT, ENV_MODEL};
pub use extract::extract_json_object;
pub use http::HttpBackend;
pub use mock::{mock_backend, mock_gateway, MockBackend};
pub use schema::validate_payload;

use crate::assets::SceneDecomposition;
use crate::geometry::Vec3;
use crate::optimize::JudgeVerdict;
use crate::planner::ActionPlan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleTag {
    Collector,
    Locator,
    Judge,
    Planner,
}

impl RoleTag {
    pub const ALL: [RoleTag; 4] = [RoleTag::Collector, RoleTag::Locator, RoleTag::Judge, RoleTag::Planner];

    pub fn as_str(&self) -> &'static str {
        match self {
            RoleTag::Collector => "collector",
            RoleTag::Locator => "locator",
            RoleTag::Judge => "judge",
            RoleTag::Planner => "planner",
        }
    }

    /// The schema a role's replies are validated against.
    pub fn schema(&self) -> SchemaId {
        match self {
            RoleTag::Collector => SchemaId::SceneDecomposition,
            RoleTag::Locator => SchemaId::RelocationProposal,
            RoleTag::Judge => SchemaId::JudgeVerdict,
            RoleTag::Planner => SchemaId::ActionPlan,
        }
    }
}

impl fmt::Display for RoleTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RoleTag {
    type Err = GatewayError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RoleTag::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| GatewayError::UnknownRole(s.to_owned()))
    }
}

/// Registered reply schemas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SchemaId {
    SceneDecomposition,
    RelocationProposal,
    JudgeVerdict,
    ActionPlan,
}

impl fmt::Display for SchemaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// An encoded image sent alongside the prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct Attachment {
    pub mime: String,
    pub data: Vec<u8>,
}

impl Attachment {
    pub fn png(data: Vec<u8>) -> Self {
        Self {
            mime: "image/png".into(),
            data,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructuredRequest {
    pub role: RoleTag,
    pub prompt: String,
    pub attachments: Vec<Attachment>,
    pub expected_schema: SchemaId,
}

impl StructuredRequest {
    /// A request whose expected schema is the role's own.
    pub fn new(role: RoleTag, prompt: impl Into<String>) -> Self {
        Self {
            role,
            prompt: prompt.into(),
            attachments: Vec::new(),
            expected_schema: role.schema(),
        }
    }

    pub fn with_attachments(mut self, attachments: Vec<Attachment>) -> Self {
        self.attachments = attachments;
        self
    }
}

/// A locator's answer: move one instance so its bottom-center lands at `position`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelocationProposal {
    pub instance_id: String,
    pub position: Vec3,
}

/// Wire shape of a judge reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgeReply {
    pub verdicts: Vec<JudgeVerdict>,
}

/// A schema-validated reply.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    SceneDecomposition(SceneDecomposition),
    RelocationProposal(RelocationProposal),
    JudgeVerdicts(Vec<JudgeVerdict>),
    ActionPlan(ActionPlan),
}

impl Payload {
    pub fn schema(&self) -> SchemaId {
        match self {
            Payload::SceneDecomposition(_) => SchemaId::SceneDecomposition,
            Payload::RelocationProposal(_) => SchemaId::RelocationProposal,
            Payload::JudgeVerdicts(_) => SchemaId::JudgeVerdict,
            Payload::ActionPlan(_) => SchemaId::ActionPlan,
        }
    }

    pub fn into_decomposition(self) -> Result<SceneDecomposition, GatewayError> {
        match self {
            Payload::SceneDecomposition(d) => Ok(d),
            other => Err(GatewayError::UnexpectedPayload(other.schema())),
        }
    }

    pub fn into_relocation(self) -> Result<RelocationProposal, GatewayError> {
        match self {
            Payload::RelocationProposal(p) => Ok(p),
            other => Err(GatewayError::UnexpectedPayload(other.schema())),
        }
    }

    pub fn into_verdicts(self) -> Result<Vec<JudgeVerdict>, GatewayError> {
        match self {
            Payload::JudgeVerdicts(v) => Ok(v),
            other => Err(GatewayError::UnexpectedPayload(other.schema())),
        }
    }

    pub fn into_plan(self) -> Result<ActionPlan, GatewayError> {
        match self {
            Payload::ActionPlan(p) => Ok(p),
            other => Err(GatewayError::UnexpectedPayload(other.schema())),
        }
    }
}

/// One dispatch in a request's history.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttemptRecord {
    pub attempt: u32,
    pub outcome: String,
    pub backoff_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GatewayError {
    #[error("invalid gateway config: {0}")]
    InvalidConfig(String),
    #[error("no API key: set {ENV_API_KEY}")]
    MissingApiKey,
    #[error("unknown role `{0}`")]
    UnknownRole(String),
    #[error("timed out after {attempts} attempts")]
    Timeout { attempts: u32, trace: Vec<AttemptRecord> },
    #[error("request budget exhausted ({used} of {limit} used)")]
    BudgetExhausted { used: u64, limit: u64 },
    #[error("reply failed {schema} validation: {message}")]
    SchemaError { schema: SchemaId, message: String },
    #[error("transport error: {message} ({} attempts)", trace.len())]
    TransportError { message: String, trace: Vec<AttemptRecord> },
    #[error("unexpected {0} payload")]
    UnexpectedPayload(SchemaId),
}

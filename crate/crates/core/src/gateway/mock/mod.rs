//! Deterministic rule-based backends for every role.
//!
//! Each backend reads the `<instruction>` and `<context>` blocks of the user
//! prompt and answers with a JSON document:
//!
//! * collector: the keyword grammar in [`collector`];
//! * judge: rebuilds the scene from the context, renders the listed cameras
//!   and scores with the geometric judge;
//! * locator: the offline relocation policy;
//! * planner: the verb grammar in [`planner`], or the offline stretch policy
//!   when the context carries violations.

pub mod collector;
pub mod planner;

use std::sync::Arc;

use serde::Deserialize;
use serde_json::{json, Value};

use super::client::{chat_response_body, Backend, HttpReply, ThreadSleeper, TransportFailure};
use super::prompts::{context_block, instruction_block};
use super::{GatewayConfig, GatewayError, GatewayHandle, JudgeReply, RelocationProposal, RoleTag, StructuredRequest};
use crate::assets::SpatialConstraint;
use crate::export::import_scene_value;
use crate::layout::{LayoutConfig, SceneLayout};
use crate::optimize::{geometric_judge, propose_relocation, CameraRig};
use crate::render::render_view;

/// A backend answering from rule tables for a set of roles.
#[derive(Debug, Clone)]
pub struct MockBackend {
    roles: Vec<RoleTag>,
}

impl MockBackend {
    pub fn new(roles: &[RoleTag]) -> Self {
        Self { roles: roles.to_vec() }
    }

    pub fn all() -> Self {
        Self::new(&RoleTag::ALL)
    }

    /// The reply text for a request, or an error message for prose replies.
    pub fn answer(&self, request: &StructuredRequest) -> Result<Value, String> {
        let instruction = instruction_block(&request.prompt).unwrap_or_default();
        let context = context_block(&request.prompt).unwrap_or(Value::Null);
        match request.role {
            RoleTag::Collector => collector::decompose(instruction).map(|d| json!(d)),
            RoleTag::Judge => judge_reply(&context).map(|r| json!(r)),
            RoleTag::Locator => locator_reply(&context).map(|r| json!(r)),
            RoleTag::Planner => planner::reply(instruction, &context).map(|p| json!(p)),
        }
    }
}

impl Backend for MockBackend {
    fn post(&self, request: &StructuredRequest, _body: &Value) -> Result<HttpReply, TransportFailure> {
        if !self.roles.contains(&request.role) {
            return Ok(HttpReply {
                status: 404,
                body: format!("no mock registered for role {}", request.role),
            });
        }
        let content = match self.answer(request) {
            Ok(v) => v.to_string(),
            // A prose reply; the gateway's validation turns it into a schema error.
            Err(message) => format!("I cannot answer this request: {message}"),
        };
        Ok(HttpReply {
            status: 200,
            body: chat_response_body(&content),
        })
    }

    fn name(&self) -> &str {
        "mock"
    }
}

fn handle(backend: MockBackend, seed: u64) -> GatewayHandle {
    GatewayHandle::with_sleeper(Arc::new(backend), GatewayConfig::default(), Arc::new(ThreadSleeper), seed)
        .expect("default gateway config is valid")
}

/// A handle served by the mock for one role; other roles are refused.
pub fn mock_backend(role: &str, seed: u64) -> Result<GatewayHandle, GatewayError> {
    let role: RoleTag = role.parse()?;
    Ok(handle(MockBackend::new(&[role]), seed))
}

/// A handle served by the mocks for every role.
pub fn mock_gateway(seed: u64) -> GatewayHandle {
    handle(MockBackend::all(), seed)
}

fn field<T: for<'de> Deserialize<'de>>(context: &Value, key: &str) -> Result<T, String> {
    let v = context.get(key).ok_or_else(|| format!("context has no `{key}`"))?;
    T::deserialize(v).map_err(|e| format!("context `{key}`: {e}"))
}

fn scene_from(context: &Value) -> Result<SceneLayout, String> {
    let config: LayoutConfig = match context.get("layout_config") {
        Some(v) => LayoutConfig::deserialize(v).map_err(|e| e.to_string())?,
        None => LayoutConfig::default(),
    };
    import_scene_value(field(context, "scene")?, config).map_err(|e| e.to_string())
}

fn judge_reply(context: &Value) -> Result<JudgeReply, String> {
    let layout = scene_from(context)?;
    let cameras: Vec<CameraRig> = field(context, "cameras")?;
    let indices: Vec<u32> = field(context, "view_indices")?;
    let constraint: SpatialConstraint = field(context, "constraint")?;
    if indices.len() != cameras.len() {
        return Err("view_indices and cameras differ in length".into());
    }
    let views: Vec<_> = cameras
        .iter()
        .zip(&indices)
        .map(|(c, &i)| render_view(&layout, &c.intrinsics, &c.pose, i))
        .collect();
    let verdicts = geometric_judge(&layout, &views, &constraint).map_err(|e| e.to_string())?;
    Ok(JudgeReply { verdicts })
}

fn locator_reply(context: &Value) -> Result<RelocationProposal, String> {
    let layout = scene_from(context)?;
    let cameras: Vec<CameraRig> = field(context, "cameras")?;
    let constraint: SpatialConstraint = field(context, "constraint")?;
    let position = propose_relocation(&layout, &constraint, &cameras).map_err(|e| e.to_string())?;
    Ok(RelocationProposal {
        instance_id: constraint.subject,
        position,
    })
}

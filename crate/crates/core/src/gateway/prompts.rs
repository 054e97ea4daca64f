//! Prompt templates for the four roles.
//!
//! These texts are reconstructions: the original system's prompts were never
//! published. User prompts carry two machine-readable blocks,
//! `<instruction>` and `<context>` (a JSON document), so that the offline
//! backends can answer without parsing prose.

use serde_json::Value;

use super::{RoleTag, SchemaId};

pub fn system_prompt(role: RoleTag, schema: SchemaId) -> String {
    let task = match role {
        RoleTag::Collector => {
            "You decompose a scene instruction into sub-scenes. For each sub-scene list the objects \
             to fetch (label, free-text query) and the spatial constraints between them, using only the \
             predicates on, above, left_of, right_of, in_front_of, behind, near, inside. Labels of repeated \
             objects are suffixed _1, _2, ..."
        }
        RoleTag::Locator => {
            "You repair a 3D layout. Given the scene, the failing constraint and the judge's scores, propose \
             a new world position for the bottom-center of one object."
        }
        RoleTag::Judge => {
            "You verify spatial relations in rendered views. For each constraint and each attached view, \
             answer with a confidence score in [0, 1] that the relation holds as seen in that view, and a \
             one-sentence rationale."
        }
        RoleTag::Planner => {
            "You turn an instruction about motion in a verified scene into a timed executable plan of \
             move_to, rotate_to, orbit_camera, dolly and hold actions. When given smoothness violations, \
             revise the plan by stretching actions or inserting intermediate steps."
        }
    };
    format!(
        "{task}\nReply with a single JSON object matching the {schema} schema and nothing else.\n{}",
        schema_hint(schema)
    )
}

fn schema_hint(schema: SchemaId) -> &'static str {
    match schema {
        SchemaId::SceneDecomposition => {
            r#"{"sub_scenes": [{"description": str, "requested_assets": [{"label": str, "query": str, "asset_id": str|null}], "constraints": [{"predicate": str, "subject": label, "reference": label, "param": number|null, "reference_view": int|null}], "explicit_placements": [{"label": str, "target": [x, y, z]}]}]}"#
        }
        SchemaId::RelocationProposal => r#"{"instance_id": str, "position": [x, y, z]}"#,
        SchemaId::JudgeVerdict => {
            r#"{"verdicts": [{"constraint": {...}, "view_index": int, "score": number, "rationale": str}]}"#
        }
        SchemaId::ActionPlan => {
            r#"{"actions": [{"actor": str, "start_s": number, "end_s": number, "kind": {"type": "move_to"|"rotate_to"|"orbit_camera"|"dolly"|"hold", ...}}], "duration_s": number, "fps": number, "camera": {"eye": [x, y, z], "target": [x, y, z]}}"#
        }
    }
}

pub fn repair_prompt(schema: SchemaId, error: &str) -> String {
    format!(
        "Your previous reply could not be used: {error}\nReply again with only a JSON object matching the {schema} schema."
    )
}

/// Renders a user prompt with the instruction and a JSON context block.
pub fn user_prompt(lead: &str, instruction: &str, context: &Value) -> String {
    format!("{lead}\n<instruction>{instruction}</instruction>\n<context>{context}</context>\n")
}

fn block<'a>(prompt: &'a str, tag: &str) -> Option<&'a str> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let start = prompt.find(&open)? + open.len();
    let end = start + prompt[start..].find(&close)?;
    Some(&prompt[start..end])
}

pub fn instruction_block(prompt: &str) -> Option<&str> {
    block(prompt, "instruction")
}

pub fn context_block(prompt: &str) -> Option<Value> {
    block(prompt, "context").and_then(|s| serde_json::from_str(s).ok())
}

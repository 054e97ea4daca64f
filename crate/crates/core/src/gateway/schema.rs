use serde::de::DeserializeOwned;
use serde_json::Value;

use super::{JudgeReply, Payload, RelocationProposal, SchemaId};
use crate::assets::SceneDecomposition;
use crate::planner::ActionPlan;

fn decode<T: DeserializeOwned>(v: Value) -> Result<T, String> {
    serde_json::from_value(v).map_err(|e| e.to_string())
}

/// Structural decoding plus the semantic checks each schema carries.
pub fn validate_payload(schema: SchemaId, v: Value) -> Result<Payload, String> {
    match schema {
        SchemaId::SceneDecomposition => {
            let d: SceneDecomposition = decode(v)?;
            d.validate()?;
            Ok(Payload::SceneDecomposition(d))
        }
        SchemaId::RelocationProposal => {
            let p: RelocationProposal = decode(v)?;
            if p.instance_id.is_empty() {
                return Err("instance_id is empty".into());
            }
            if !p.position.is_finite() {
                return Err("position must be finite".into());
            }
            Ok(Payload::RelocationProposal(p))
        }
        SchemaId::JudgeVerdict => {
            let r: JudgeReply = decode(v)?;
            if r.verdicts.is_empty() {
                return Err("verdicts is empty".into());
            }
            for v in &r.verdicts {
                v.validate()?;
            }
            Ok(Payload::JudgeVerdicts(r.verdicts))
        }
        SchemaId::ActionPlan => {
            let p: ActionPlan = decode(v)?;
            p.validate().map_err(|e| e.to_string())?;
            Ok(Payload::ActionPlan(p))
        }
    }
}

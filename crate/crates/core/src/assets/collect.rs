use std::collections::BTreeMap;

use serde_json::json;

use super::{retrieve_top_k, AssetError, AssetRepository, AssetRequest, SceneDecomposition, SubScene};
use crate::gateway::{prompts, GatewayHandle, RoleTag, StructuredRequest};

/// Retrieval depth used when resolving queries.
pub const DEFAULT_TOP_K: usize = 3;

/// A text instruction, optionally with assets chosen up front (the visual-input path).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InstructionInput {
    pub text: String,
    pub explicit_assets: Vec<String>,
}

impl InstructionInput {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            explicit_assets: Vec::new(),
        }
    }
}

pub fn collect_request(input: &InstructionInput) -> StructuredRequest {
    let context = json!({ "explicit_assets": input.explicit_assets });
    StructuredRequest::new(
        RoleTag::Collector,
        prompts::user_prompt(
            "Decompose this instruction into sub-scenes, assets and spatial constraints.",
            &input.text,
            &context,
        ),
    )
}

/// Labels for an explicit asset list: the category, suffixed `_1.._n` when it repeats.
pub fn explicit_labels(repo: &AssetRepository, ids: &[String]) -> Result<Vec<String>, AssetError> {
    let categories = ids
        .iter()
        .map(|id| {
            repo.get(id)
                .map(|r| r.category.clone())
                .ok_or_else(|| AssetError::UnknownAsset(id.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut totals: BTreeMap<&str, usize> = BTreeMap::new();
    for c in &categories {
        *totals.entry(c).or_default() += 1;
    }
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    Ok(categories
        .iter()
        .map(|c| {
            let n = seen.entry(c).or_default();
            *n += 1;
            if totals[c.as_str()] > 1 {
                format!("{c}_{n}")
            } else {
                c.clone()
            }
        })
        .collect())
}

/// Turns an instruction into a validated decomposition with every asset resolved.
///
/// Queries resolve to the best-ranked of the top `k` records that shares at
/// least one token with the query; a query matching nothing lexically is
/// unresolvable rather than silently mapped to an arbitrary asset. Explicit
/// assets replace the requested list verbatim and skip retrieval.
pub fn collect(
    input: &InstructionInput,
    repo: &AssetRepository,
    gateway: &GatewayHandle,
    k: usize,
) -> Result<SceneDecomposition, AssetError> {
    if repo.is_empty() {
        return Err(AssetError::EmptyRepository);
    }
    let mut decomposition = gateway.send(&collect_request(input))?.into_decomposition()?;

    if !input.explicit_assets.is_empty() {
        let labels = explicit_labels(repo, &input.explicit_assets)?;
        let requested: Vec<AssetRequest> = labels
            .iter()
            .zip(&input.explicit_assets)
            .map(|(label, id)| AssetRequest {
                label: label.clone(),
                query: repo.get(id).map(|r| r.description.clone()).unwrap_or_default(),
                asset_id: Some(id.clone()),
            })
            .collect();
        let known = |l: &str| labels.iter().any(|x| x == l);
        let mut merged = SubScene {
            description: input.text.clone(),
            requested_assets: requested,
            constraints: Vec::new(),
            explicit_placements: Vec::new(),
        };
        for sub in decomposition.sub_scenes {
            merged
                .constraints
                .extend(sub.constraints.into_iter().filter(|c| known(&c.subject) && known(&c.reference)));
            merged
                .explicit_placements
                .extend(sub.explicit_placements.into_iter().filter(|p| known(&p.label)));
        }
        decomposition = SceneDecomposition {
            sub_scenes: vec![merged],
        };
    } else {
        for sub in &mut decomposition.sub_scenes {
            for req in &mut sub.requested_assets {
                if req.asset_id.as_deref().is_some_and(|id| repo.get(id).is_some()) {
                    continue;
                }
                let ranked = retrieve_top_k(repo, &req.query, k)?;
                let hit = ranked
                    .into_iter()
                    .find(|(r, _)| r.shares_token_with(&req.query))
                    .ok_or_else(|| AssetError::UnresolvableAsset {
                        label: req.label.clone(),
                        query: req.query.clone(),
                    })?;
                req.asset_id = Some(hit.0.asset_id.clone());
            }
        }
    }
    decomposition.validate().map_err(AssetError::InvalidDecomposition)?;
    Ok(decomposition)
}

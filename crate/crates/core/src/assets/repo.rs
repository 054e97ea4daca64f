use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::embed::{cosine, embed_text, tokenize, Embedding};
use super::AssetError;
use crate::canonical::to_canonical_bytes;
use crate::geometry::Vec3;

/// Manifest schema version written to and accepted from `assets.json`.
pub const MANIFEST_SCHEMA: u32 = 1;

/// The demo asset manifest shipped with the crate.
pub const DEMO_MANIFEST: &str = include_str!("../../data/assets.json");

/// A retrievable asset.
///
/// `canonical_dims` are full extents along local x, y and z; z is vertical.
/// `support_surface` is measured from the asset's bottom.
#[derive(Debug, Clone, PartialEq)]
pub struct AssetRecord {
    pub asset_id: String,
    pub description: String,
    pub tags: Vec<String>,
    pub canonical_dims: Vec3,
    pub category: String,
    pub support_surface: Option<f64>,
    pub embedding: Embedding,
}

impl AssetRecord {
    pub fn new(
        asset_id: impl Into<String>,
        description: impl Into<String>,
        tags: Vec<String>,
        canonical_dims: Vec3,
        category: impl Into<String>,
        support_surface: Option<f64>,
    ) -> Result<Self, AssetError> {
        let asset_id = asset_id.into();
        let description = description.into();
        if asset_id.is_empty() {
            return Err(AssetError::InvalidRecord {
                id: asset_id,
                reason: "empty id".into(),
            });
        }
        if !canonical_dims.is_finite() || canonical_dims.min_component() <= 0.0 {
            return Err(AssetError::InvalidRecord {
                id: asset_id,
                reason: format!("dims must be positive, got {:?}", canonical_dims.to_array()),
            });
        }
        if let Some(h) = support_surface {
            if !(h.is_finite() && h > 0.0 && h <= canonical_dims.z + 1e-12) {
                return Err(AssetError::InvalidRecord {
                    id: asset_id,
                    reason: format!("support surface {h} outside (0, {}]", canonical_dims.z),
                });
            }
        }
        let embedding = embed_text(&description).map_err(|_| AssetError::InvalidRecord {
            id: asset_id.clone(),
            reason: "description has no tokens".into(),
        })?;
        Ok(Self {
            asset_id,
            description,
            tags,
            canonical_dims,
            category: category.into(),
            support_surface,
            embedding,
        })
    }

    /// Tokens of description, tags and category.
    pub fn lexicon(&self) -> BTreeSet<String> {
        let mut set: BTreeSet<String> = tokenize(&self.description).into_iter().collect();
        for t in &self.tags {
            set.extend(tokenize(t));
        }
        set.extend(tokenize(&self.category));
        set
    }

    /// True when any query token appears in the record's lexicon.
    pub fn shares_token_with(&self, query: &str) -> bool {
        let lex = self.lexicon();
        tokenize(query).iter().any(|t| lex.contains(t))
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    id: String,
    description: String,
    tags: Vec<String>,
    dims: [f64; 3],
    category: String,
    support_surface: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    schema: u32,
    assets: Vec<ManifestEntry>,
}

/// An immutable, id-unique collection of assets. Embeddings are computed at load.
#[derive(Debug, Clone, Default)]
pub struct AssetRepository {
    records: Vec<AssetRecord>,
}

impl AssetRepository {
    pub fn new(records: Vec<AssetRecord>) -> Result<Self, AssetError> {
        let mut seen = BTreeSet::new();
        for r in &records {
            if !seen.insert(r.asset_id.as_str()) {
                return Err(AssetError::DuplicateId(r.asset_id.clone()));
            }
        }
        Ok(Self { records })
    }

    pub fn demo() -> Self {
        Self::from_json(DEMO_MANIFEST.as_bytes()).expect("shipped demo manifest is valid")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, AssetError> {
        let manifest: Manifest = serde_json::from_slice(bytes).map_err(|e| AssetError::Manifest(e.to_string()))?;
        if manifest.schema != MANIFEST_SCHEMA {
            return Err(AssetError::Manifest(format!(
                "unsupported schema {} (expected {MANIFEST_SCHEMA})",
                manifest.schema
            )));
        }
        let records = manifest
            .assets
            .into_iter()
            .map(|e| AssetRecord::new(e.id, e.description, e.tags, Vec3::from(e.dims), e.category, e.support_surface))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(records)
    }

    pub fn load(path: &Path) -> Result<Self, AssetError> {
        let bytes = std::fs::read(path).map_err(|e| AssetError::Manifest(format!("{}: {e}", path.display())))?;
        Self::from_json(&bytes)
    }

    /// Canonical manifest bytes; embeddings are never persisted.
    pub fn to_json(&self) -> Vec<u8> {
        let manifest = Manifest {
            schema: MANIFEST_SCHEMA,
            assets: self
                .records
                .iter()
                .map(|r| ManifestEntry {
                    id: r.asset_id.clone(),
                    description: r.description.clone(),
                    tags: r.tags.clone(),
                    dims: r.canonical_dims.to_array(),
                    category: r.category.clone(),
                    support_surface: r.support_surface,
                })
                .collect(),
        };
        to_canonical_bytes(&manifest).expect("manifest serializes")
    }

    pub fn records(&self) -> &[AssetRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, asset_id: &str) -> Option<&AssetRecord> {
        self.records.iter().find(|r| r.asset_id == asset_id)
    }
}

/// The `k` records most similar to `query`, by cosine, descending; ties by ascending id.
pub fn retrieve_top_k<'a>(
    repo: &'a AssetRepository,
    query: &str,
    k: usize,
) -> Result<Vec<(&'a AssetRecord, f64)>, AssetError> {
    if repo.is_empty() {
        return Err(AssetError::EmptyRepository);
    }
    if k == 0 {
        return Err(AssetError::InvalidK);
    }
    let q = embed_text(query)?;
    let mut scored: Vec<(&AssetRecord, f64)> = repo.records.iter().map(|r| (r, cosine(&q, &r.embedding))).collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.asset_id.cmp(&b.0.asset_id)));
    scored.truncate(k);
    Ok(scored)
}

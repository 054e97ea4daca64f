//! Asset manifest, text embedding, top-k retrieval and instruction collection.

mod collect;
mod decomposition;
mod embed;
mod repo;

pub use collect::{collect, collect_request, explicit_labels, InstructionInput, DEFAULT_TOP_K};
pub use decomposition::{
    AssetRequest, ExplicitPlacement, Predicate, SceneDecomposition, SpatialConstraint, SubScene,
    DEFAULT_NEAR_DISTANCE,
};
pub use embed::{cosine, embed_text, tokenize, Embedding, EMBED_DIM};
pub use repo::{retrieve_top_k, AssetRecord, AssetRepository, DEMO_MANIFEST, MANIFEST_SCHEMA};

use crate::gateway::GatewayError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AssetError {
    #[error("text has no tokens")]
    EmptyText,
    #[error("asset repository is empty")]
    EmptyRepository,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("duplicate asset id `{0}`")]
    DuplicateId(String),
    #[error("invalid asset `{id}`: {reason}")]
    InvalidRecord { id: String, reason: String },
    #[error("asset manifest: {0}")]
    Manifest(String),
    #[error("no asset matches `{query}` (for {label})")]
    UnresolvableAsset { label: String, query: String },
    #[error("unknown asset id `{0}`")]
    UnknownAsset(String),
    #[error("invalid decomposition: {0}")]
    InvalidDecomposition(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

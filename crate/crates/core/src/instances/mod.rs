//! Reference embeddings and instance resolution.

mod db;
mod embedder;
mod embedding;

pub use db::{
    read_query, undo_correct, write_query, DeviceDirectory, EmbeddingDb, RankedMatch,
    ReferenceEntry, Resolution, DB_MAGIC, DB_VERSION, QUERY_MAGIC,
};
pub use embedder::{ClusterGenerator, CountingEmbedder, Embedder, PixelEmbedder};
pub use embedding::{scene_similarity, PatchEmbedding, DEFAULT_DIM, DEFAULT_GRID};

use thiserror::Error;
use uuid::Uuid;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("shape mismatch: expected (grid, dim) = {expected:?}, found {found}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: String,
    },
    #[error("degenerate embedding: {0}")]
    DegenerateEmbedding(String),
    #[error("embedding database is empty")]
    EmptyDatabase,
    #[error("device {0} is not registered")]
    UnknownDevice(Uuid),
    #[error("no query is pending correction")]
    NoPendingQuery,
    #[error("malformed embedding file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

//! Query-by-example retrieval over sentence embeddings.

mod index;
mod provider;
mod vector;

pub use index::{build_vector_index, example_centroid, query_by_example, VectorIndex, VECTOR_FILE};
pub use provider::{
    embed_sentence, EmbeddingProvider, HashEmbedder, PrecomputedEmbeddings, ProviderMode,
    RemoteEmbedder,
};
pub use vector::{cosine_similarity, EmbeddingVector};

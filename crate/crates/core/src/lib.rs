//! Human-in-the-loop query development for information retrieval.
//!
//! A sentence-segmented corpus is explored with a probabilistic weighted-term
//! retriever; graded relevance feedback re-weights the query; embedding-based
//! query-by-example retrieval grows the set of example sentences; the final
//! fine-grained query is exported and evaluated with nDCG.
//!
//! Numeric code (scoring, embeddings, metrics) is generic over [`Scalar`]
//! (`f32` or `f64`). The aliases at the crate root pin the `f64` instantiation
//! used by sessions, the server and the CLI.

pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod neural_ir;
pub mod prob_ir;
pub mod session;

use std::fmt::{Debug, Display};
use std::iter::Sum;

use serde::de::DeserializeOwned;
use serde::Serialize;

pub use error::{Error, Result};

/// Floating-point scalar used by scoring, embedding and evaluation code.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Lossy conversion from `f64`; all call sites pass representable constants.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable in scalar")
    }

    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

pub type WeightedQuery = prob_ir::WeightedQuery<f64>;
pub type FieldWeights = prob_ir::FieldWeights<f64>;
pub type TranslationTable = prob_ir::TranslationTable<f64>;
pub type LanguageModel = prob_ir::LanguageModel<f64>;
pub type RetrievalModel = prob_ir::RetrievalModel<f64>;
pub type ScoringConfig = prob_ir::ScoringConfig<f64>;
pub type RankedList = prob_ir::RankedList<f64>;
pub type EmbeddingVector = neural_ir::EmbeddingVector<f64>;
pub type VectorIndex = neural_ir::VectorIndex<f64>;

pub type WeightedQueryF32 = prob_ir::WeightedQuery<f32>;
pub type RankedListF32 = prob_ir::RankedList<f32>;
pub type EmbeddingVectorF32 = neural_ir::EmbeddingVector<f32>;
pub type VectorIndexF32 = neural_ir::VectorIndex<f32>;

pub use corpus::{
    Corpus, Document, EventFeature, IngestConfig, InvertedIndex, Role, SentenceRecord,
};
pub use session::{Engine, RelevanceLevel, Session, SessionConfig, SessionStore};

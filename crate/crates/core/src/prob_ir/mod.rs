//! Probabilistic weighted-term retrieval: field-weighted query construction,
//! translation-smoothed query-likelihood scoring, graded feedback and
//! two-pass retrieval with composite event terms.

mod model;
mod query;
mod score;

pub use model::{estimate_lm, LanguageModel, RetrievalModel, TranslationTable};
pub use query::{
    apply_feedback, build_weighted_query, fields, merge_queries, FieldWeights, QueryFields,
    RelevanceLevel, WeightedQuery,
};
pub use score::{
    first_pass_search, score_item, second_pass_rescore, RankedItem, RankedList, ScoringConfig,
};

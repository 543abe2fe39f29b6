//! Query-development sessions: an append-only event log folded into session
//! state, plus the operations that drive both retrievers from that state.

mod log;
mod stats;
mod store;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, InvertedIndex, SentenceRecord, Target};
use crate::neural_ir::{query_by_example, EmbeddingProvider, HashEmbedder, VectorIndex};
use crate::prob_ir::{
    apply_feedback, build_weighted_query, fields, first_pass_search, second_pass_rescore,
    FieldWeights, QueryFields, RankedList, RetrievalModel, ScoringConfig, TranslationTable,
    WeightedQuery,
};
use crate::{Error, Result};

pub use crate::prob_ir::RelevanceLevel;
pub use log::{append_event, read_events, Event, EventKind, Stage};
pub use stats::{compute_stats, IterationRow, SessionStats, StageStats};
pub use store::SessionStore;

/// Number of selected sentences after which enrichment reports a warning.
pub const SELECTION_TARGET: usize = 25;

/// Per-session settings, snapshotted into the log when the session is created.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub field_weights: FieldWeights<f64>,
    pub scoring: ScoringConfig<f64>,
    pub search_k: usize,
    pub enrich_k: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            field_weights: FieldWeights::default(),
            scoring: ScoringConfig::for_target(Target::Sentences),
            search_k: 10,
            enrich_k: 10,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        self.field_weights.validate()?;
        self.scoring.validate()?;
        if self.search_k == 0 || self.enrich_k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        Ok(())
    }
}

/// Everything a session reads: the corpus, its inverted index and retrieval
/// model, and optionally a sentence-embedding index with its provider.
pub struct Engine {
    pub corpus: Corpus,
    pub index: InvertedIndex,
    pub model: RetrievalModel<f64>,
    pub vectors: Option<VectorIndex<f64>>,
    pub provider: Arc<dyn EmbeddingProvider<f64>>,
}

impl Engine {
    /// Engine without a vector index; the provider defaults to the hashing
    /// embedder configured like the corpus tokenizer.
    pub fn new(
        corpus: Corpus,
        index: InvertedIndex,
        translation: TranslationTable<f64>,
    ) -> Result<Self> {
        let model = RetrievalModel::from_index(&index, translation)?;
        let provider = Arc::new(HashEmbedder::new(
            HashEmbedder::DEFAULT_DIM,
            *corpus.config(),
        ));
        Ok(Engine {
            corpus,
            index,
            model,
            vectors: None,
            provider,
        })
    }

    /// Indexes `corpus` and embeds every sentence with the hashing embedder.
    pub fn from_corpus(corpus: Corpus) -> Result<Self> {
        let index = corpus.build_index();
        let mut engine = Engine::new(corpus, index, TranslationTable::Identity)?;
        engine.build_vectors()?;
        Ok(engine)
    }

    pub fn build_vectors(&mut self) -> Result<()> {
        self.vectors = Some(crate::neural_ir::build_vector_index(
            self.provider.as_ref(),
            &self.corpus,
        )?);
        Ok(())
    }

    pub fn with_vectors(
        mut self,
        vectors: VectorIndex<f64>,
        provider: Arc<dyn EmbeddingProvider<f64>>,
    ) -> Result<Self> {
        if vectors.dim() != provider.dim() {
            return Err(Error::DimensionMismatch {
                expected: provider.dim(),
                found: vectors.dim(),
            });
        }
        if let Some(id) = vectors
            .ids()
            .iter()
            .find(|id| self.corpus.sentence(id).is_none())
        {
            return Err(Error::UnknownSentence(id.clone()));
        }
        self.vectors = Some(vectors);
        self.provider = provider;
        Ok(self)
    }

    pub fn sentence(&self, sentence_id: &str) -> Result<&SentenceRecord> {
        self.corpus
            .sentence(sentence_id)
            .ok_or_else(|| Error::UnknownSentence(sentence_id.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionStatus {
    Active,
    Exported,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRecord {
    pub iteration: u32,
    pub terms: String,
    pub term_count: usize,
    pub k: usize,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Judgment {
    pub sentence_id: String,
    pub level: RelevanceLevel,
    pub iteration: u32,
    pub stage: Stage,
    pub token_len: usize,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichmentRecord {
    pub iteration: u32,
    pub k: usize,
    pub timestamp: DateTime<Utc>,
}

/// The exported fine-grained query and the evidence behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportRecord {
    pub session_id: String,
    pub task_narrative: String,
    pub request_narrative: String,
    pub query: WeightedQuery<f64>,
    pub selected_sentence_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub session_id: String,
    pub task_narrative: String,
    pub request_narrative: String,
    pub status: SessionStatus,
    pub stage: Stage,
    pub config: SessionConfig,
    pub search_history: Vec<SearchRecord>,
    pub judgments: Vec<Judgment>,
    pub enrichment_iterations: u32,
    pub selected_sentence_ids: Vec<String>,
    pub positive_count: usize,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub iteration: u32,
    pub search_terms: Vec<String>,
    pub query: WeightedQuery<f64>,
    pub results: RankedList<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichmentOutcome {
    pub iteration: u32,
    pub example_count: usize,
    pub results: RankedList<f64>,
    pub warning: Option<String>,
}

/// Query terms present in a sentence, split into terms the user typed and
/// terms the system added.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchedTerms {
    pub search_terms: Vec<String>,
    pub expanded: Vec<String>,
}

pub fn matched_terms(
    query: &WeightedQuery<f64>,
    typed: &BTreeSet<String>,
    sentence: &SentenceRecord,
) -> MatchedTerms {
    let present: BTreeSet<&str> = sentence.tokens.iter().map(String::as_str).collect();
    let mut out = MatchedTerms::default();
    for term in query
        .terms()
        .keys()
        .filter(|t| present.contains(t.as_str()))
    {
        if typed.contains(term) {
            out.search_terms.push(term.clone());
        } else {
            out.expanded.push(term.clone());
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct Session {
    session_id: String,
    task_narrative: String,
    request_narrative: String,
    config: SessionConfig,
    created_at: DateTime<Utc>,
    updated_at: DateTime<Utc>,
    searches: Vec<SearchRecord>,
    judgments: BTreeMap<String, Judgment>,
    enrichments: Vec<EnrichmentRecord>,
    stage: Stage,
    status: SessionStatus,
    log_path: Option<PathBuf>,
}

impl Session {
    /// New active session. With a `log_path`, every event is appended and
    /// synced there before the state changes.
    pub fn create(
        task_narrative: &str,
        request_narrative: &str,
        config: SessionConfig,
        log_path: Option<PathBuf>,
    ) -> Result<Self> {
        let session_id = uuid::Uuid::new_v4().simple().to_string();
        Self::create_with_id(
            session_id,
            task_narrative,
            request_narrative,
            config,
            log_path,
        )
    }

    pub fn create_with_id(
        session_id: String,
        task_narrative: &str,
        request_narrative: &str,
        config: SessionConfig,
        log_path: Option<PathBuf>,
    ) -> Result<Self> {
        if task_narrative.trim().is_empty() {
            return Err(Error::EmptyNarrative("task"));
        }
        if request_narrative.trim().is_empty() {
            return Err(Error::EmptyNarrative("request"));
        }
        config.validate()?;
        let created = Event::now(EventKind::Created {
            session_id,
            task_narrative: task_narrative.to_string(),
            request_narrative: request_narrative.to_string(),
            config,
        });
        if let Some(path) = &log_path {
            append_event(path, &created)?;
        }
        let mut session = Self::replay([created])?;
        session.log_path = log_path;
        Ok(session)
    }

    /// Rebuilds a session by folding its events in order.
    pub fn replay(events: impl IntoIterator<Item = Event>) -> Result<Self> {
        let mut events = events.into_iter();
        let first = events
            .next()
            .ok_or_else(|| Error::InvalidConfig("session log is empty".into()))?;
        let EventKind::Created {
            session_id,
            task_narrative,
            request_narrative,
            config,
        } = first.kind
        else {
            return Err(Error::InvalidConfig(
                "session log must start with a created event".into(),
            ));
        };
        let mut session = Session {
            session_id,
            task_narrative,
            request_narrative,
            config,
            created_at: first.timestamp,
            updated_at: first.timestamp,
            searches: Vec::new(),
            judgments: BTreeMap::new(),
            enrichments: Vec::new(),
            stage: Stage::Initial,
            status: SessionStatus::Active,
            log_path: None,
        };
        for event in events {
            session.apply(event)?;
        }
        Ok(session)
    }

    /// Replays a log file; later events are appended to the same file.
    pub fn open(log_path: impl AsRef<Path>) -> Result<Self> {
        let path = log_path.as_ref();
        let mut session = Self::replay(read_events(path)?)?;
        session.log_path = Some(path.to_path_buf());
        Ok(session)
    }

    fn apply(&mut self, event: Event) -> Result<()> {
        if self.status == SessionStatus::Exported {
            return Err(Error::SessionFrozen(self.session_id.clone()));
        }
        let ts = event.timestamp;
        match event.kind {
            EventKind::Created { .. } => {
                return Err(Error::InvalidConfig(
                    "duplicate created event in session log".into(),
                ));
            }
            EventKind::Search {
                iteration,
                terms,
                term_count,
                k,
            } => {
                self.searches.push(SearchRecord {
                    iteration,
                    terms,
                    term_count,
                    k,
                    timestamp: ts,
                });
                self.stage = Stage::Initial;
            }
            EventKind::Judgment {
                sentence_id,
                level,
                iteration,
                stage,
                token_len,
            } => {
                self.judgments.insert(
                    sentence_id.clone(),
                    Judgment {
                        sentence_id,
                        level,
                        iteration,
                        stage,
                        token_len,
                        timestamp: ts,
                    },
                );
            }
            EventKind::Enrichment { iteration, k } => {
                self.enrichments.push(EnrichmentRecord {
                    iteration,
                    k,
                    timestamp: ts,
                });
                self.stage = Stage::Enrichment;
            }
            EventKind::Exported => self.status = SessionStatus::Exported,
        }
        self.updated_at = ts;
        Ok(())
    }

    fn commit(&mut self, kind: EventKind) -> Result<()> {
        self.ensure_active()?;
        let event = Event::now(kind);
        if let Some(path) = &self.log_path {
            append_event(path, &event)?;
        }
        self.apply(event)
    }

    fn ensure_active(&self) -> Result<()> {
        match self.status {
            SessionStatus::Active => Ok(()),
            SessionStatus::Exported => Err(Error::SessionFrozen(self.session_id.clone())),
        }
    }

    pub fn id(&self) -> &str {
        &self.session_id
    }

    pub fn task_narrative(&self) -> &str {
        &self.task_narrative
    }

    pub fn request_narrative(&self) -> &str {
        &self.request_narrative
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn status(&self) -> SessionStatus {
        self.status
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn log_path(&self) -> Option<&Path> {
        self.log_path.as_deref()
    }

    pub fn searches(&self) -> &[SearchRecord] {
        &self.searches
    }

    pub fn enrichments(&self) -> &[EnrichmentRecord] {
        &self.enrichments
    }

    /// Active judgments keyed by sentence id.
    pub fn judgments(&self) -> &BTreeMap<String, Judgment> {
        &self.judgments
    }

    pub fn judgment(&self, sentence_id: &str) -> Option<&Judgment> {
        self.judgments.get(sentence_id)
    }

    /// Sentences judged RelevantToRequest, in id order.
    pub fn selected_sentence_ids(&self) -> Vec<String> {
        self.judgments
            .values()
            .filter(|j| j.level == RelevanceLevel::RelevantToRequest)
            .map(|j| j.sentence_id.clone())
            .collect()
    }

    /// Sentences with a positive judgment, in id order.
    pub fn example_sentence_ids(&self) -> Vec<String> {
        self.judgments
            .values()
            .filter(|j| j.level.is_positive())
            .map(|j| j.sentence_id.clone())
            .collect()
    }

    /// Iteration number the next judgment is attributed to.
    fn current_iteration(&self) -> u32 {
        match self.stage {
            Stage::Initial => self.searches.len() as u32,
            Stage::Enrichment => self.enrichments.len() as u32,
        }
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        let selected = self.selected_sentence_ids();
        SessionSnapshot {
            session_id: self.session_id.clone(),
            task_narrative: self.task_narrative.clone(),
            request_narrative: self.request_narrative.clone(),
            status: self.status,
            stage: self.stage,
            config: self.config.clone(),
            search_history: self.searches.clone(),
            judgments: self.judgments.values().cloned().collect(),
            enrichment_iterations: self.enrichments.len() as u32,
            positive_count: self.example_sentence_ids().len(),
            selected_sentence_ids: selected,
            created_at: self.created_at,
            updated_at: self.updated_at,
            elapsed_seconds: (self.updated_at - self.created_at).num_milliseconds() as f64 / 1000.0,
        }
    }

    /// Field-weighted counts over `fields` plus the selected-sentences field, then every
    /// active judgment's feedback delta. Event features of selected
    /// sentences become composite query terms weighted by θ of that field.
    fn materialize(&self, engine: &Engine, mut fields: QueryFields) -> Result<WeightedQuery<f64>> {
        let selected: Vec<&SentenceRecord> = self
            .selected_sentence_ids()
            .iter()
            .map(|id| engine.sentence(id))
            .collect::<Result<_>>()?;
        for s in &selected {
            fields.add_tokens(
                fields::SELECTED_SENTENCES,
                s.tokens.iter().map(String::as_str),
            );
        }
        let base = build_weighted_query(&fields, &self.config.field_weights)?;
        let judged: Vec<(&SentenceRecord, RelevanceLevel)> = self
            .judgments
            .values()
            .map(|j| Ok((engine.sentence(&j.sentence_id)?, j.level)))
            .collect::<Result<_>>()?;
        let provenance = format!("{}+feedback[{}]", base.provenance(), judged.len());
        let mut query = apply_feedback(&base, judged).with_provenance(provenance);
        let theta = self
            .config
            .field_weights
            .get(fields::SELECTED_SENTENCES)
            .unwrap_or(0.0);
        let mut features: BTreeMap<String, f64> = BTreeMap::new();
        for s in &selected {
            for f in &s.event_features {
                *features.entry(f.composite()).or_default() += theta;
            }
        }
        for (term, w) in features {
            query.set_feature_weight(term, w);
        }
        Ok(query)
    }

    fn all_search_fields(&self, engine: &Engine) -> QueryFields {
        let mut fields = QueryFields::new();
        for s in &self.searches {
            fields.add_tokens(fields::SEARCH_TERMS, engine.corpus.tokenize(&s.terms));
        }
        fields
    }

    /// The session's working query: every recorded search plus selected
    /// sentences and feedback, without the narratives.
    pub fn current_query(&self, engine: &Engine) -> Result<WeightedQuery<f64>> {
        self.materialize(engine, self.all_search_fields(engine))
    }

    /// Terms typed into any search so far.
    pub fn typed_terms(&self, engine: &Engine) -> BTreeSet<String> {
        self.searches
            .iter()
            .flat_map(|s| engine.corpus.tokenize(&s.terms))
            .collect()
    }

    /// Ranks sentences for `search_terms` (plus selected sentences and
    /// feedback) and drops every sentence already judged in this session.
    pub fn run_initial_search(
        &mut self,
        engine: &Engine,
        search_terms: &str,
        k: usize,
    ) -> Result<SearchOutcome> {
        self.ensure_active()?;
        if k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        let tokens = engine.corpus.tokenize(search_terms);
        if tokens.is_empty() {
            return Err(Error::EmptySearchTerms);
        }
        let mut fields = QueryFields::new();
        fields.add_tokens(fields::SEARCH_TERMS, tokens.iter().map(String::as_str));
        let query = self.materialize(engine, fields)?;
        let mut cfg = self.config.scoring;
        cfg.target = Target::Sentences;
        cfg.first_pass_k = cfg.first_pass_k.max(k + self.judgments.len());
        let first = first_pass_search(&query, &engine.index, &engine.model, &cfg)?;
        let mut results = second_pass_rescore(&first, &query, &engine.index, &engine.model, &cfg)?;
        results
            .items
            .retain(|item| !self.judgments.contains_key(&item.id));
        results.truncate(k);

        let iteration = self.searches.len() as u32 + 1;
        self.commit(EventKind::Search {
            iteration,
            terms: search_terms.to_string(),
            term_count: tokens.len(),
            k,
        })?;
        Ok(SearchOutcome {
            iteration,
            search_terms: tokens,
            query,
            results,
        })
    }

    /// Stores a judgment, replacing any earlier one on the same sentence.
    pub fn record_judgment(
        &mut self,
        engine: &Engine,
        sentence_id: &str,
        level: RelevanceLevel,
    ) -> Result<&Judgment> {
        self.ensure_active()?;
        let sentence = engine.sentence(sentence_id)?;
        self.commit(EventKind::Judgment {
            sentence_id: sentence_id.to_string(),
            level,
            iteration: self.current_iteration(),
            stage: self.stage,
            token_len: sentence.tokens.len(),
        })?;
        Ok(&self.judgments[sentence_id])
    }

    /// Query-by-example over all positively judged sentences, excluding every
    /// judged sentence.
    pub fn run_enrichment(&mut self, engine: &Engine, k: usize) -> Result<EnrichmentOutcome> {
        self.ensure_active()?;
        let vectors = engine.vectors.as_ref().ok_or_else(|| {
            Error::InvalidConfig("no vector index loaded; build one with `embed build`".into())
        })?;
        let ids = self.example_sentence_ids();
        let examples: Vec<&SentenceRecord> = ids
            .iter()
            .map(|id| engine.sentence(id))
            .collect::<Result<_>>()?;
        let exclude: HashSet<String> = self.judgments.keys().cloned().collect();
        let results = query_by_example(&examples, vectors, engine.provider.as_ref(), k, &exclude)?;

        let iteration = self.enrichments.len() as u32 + 1;
        self.commit(EventKind::Enrichment { iteration, k })?;
        let warning = (examples.len() >= SELECTION_TARGET).then(|| {
            format!(
                "{} sentences selected; enrichment usually stops at {SELECTION_TARGET}",
                examples.len()
            )
        });
        Ok(EnrichmentOutcome {
            iteration,
            example_count: examples.len(),
            results,
            warning,
        })
    }

    /// The final query: all searches, both narratives and the selected
    /// sentences, with every feedback delta applied. Does not change state.
    pub fn build_export(&self, engine: &Engine) -> Result<ExportRecord> {
        let mut fields = self.all_search_fields(engine);
        fields.add_text(
            fields::TASK_NARRATIVE,
            &self.task_narrative,
            engine.corpus.config(),
        );
        fields.add_text(
            fields::REQUEST_NARRATIVE,
            &self.request_narrative,
            engine.corpus.config(),
        );
        let query = self.materialize(engine, fields)?;
        let query = query.with_provenance(format!("session {} export", self.session_id));
        Ok(ExportRecord {
            session_id: self.session_id.clone(),
            task_narrative: self.task_narrative.clone(),
            request_narrative: self.request_narrative.clone(),
            query,
            selected_sentence_ids: self.selected_sentence_ids(),
        })
    }

    /// Builds the export, writes it next to the log (if any) and freezes
    /// the session.
    pub fn export_query(&mut self, engine: &Engine) -> Result<ExportRecord> {
        self.ensure_active()?;
        let record = self.build_export(engine)?;
        if let Some(path) = self.export_path() {
            let json = serde_json::to_string_pretty(&record)?;
            fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
        }
        self.commit(EventKind::Exported)?;
        Ok(record)
    }

    pub fn export_path(&self) -> Option<PathBuf> {
        let log = self.log_path.as_ref()?;
        Some(log.with_file_name(format!("{}.export.json", self.session_id)))
    }
}

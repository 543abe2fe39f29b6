//! Document ingestion, sentence records, event annotations and the inverted
//! index both retrievers read.

mod index;
mod store;
pub mod text;

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use index::{InvertedIndex, ItemTable, Posting, Target};
pub use store::{load_index, save_index, INDEX_FILE, INDEX_FORMAT_VERSION};
pub use text::{segment_sentences, tokenize, IngestConfig};

use crate::{Error, Result};

/// Separator of the three parts of a composite event term.
pub const FEATURE_SEPARATOR: char = '▸';

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Document {
    pub doc_id: String,
    pub raw_text: String,
    pub sentence_ids: Vec<String>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Agent,
    Patient,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Agent => "agent",
            Role::Patient => "patient",
        })
    }
}

/// A predicate with one thematic-role argument.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventFeature {
    pub trigger: String,
    pub role: Role,
    pub argument: String,
}

impl EventFeature {
    /// The composite term `trigger▸role▸argument` indexed in the feature vocabulary.
    pub fn composite(&self) -> String {
        format!(
            "{}{sep}{}{sep}{}",
            self.trigger,
            self.role,
            self.argument,
            sep = FEATURE_SEPARATOR
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SentenceRecord {
    pub sentence_id: String,
    pub doc_id: String,
    pub position: usize,
    pub text: String,
    pub tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub event_features: Vec<EventFeature>,
}

impl SentenceRecord {
    pub fn sentence_id_for(doc_id: &str, position: usize) -> String {
        format!("{doc_id}:{position}")
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DocumentLine {
    doc_id: String,
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    sentences: Option<Vec<String>>,
}

#[derive(Deserialize)]
struct AnnotationLine {
    sentence_id: String,
    trigger: String,
    #[serde(default)]
    agent: Option<String>,
    #[serde(default)]
    patient: Option<String>,
}

/// An ingested corpus. Documents are kept sorted by `doc_id`; sentences are
/// ordered by document, then position.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Corpus {
    config: IngestConfig,
    documents: Vec<Document>,
    sentences: Vec<SentenceRecord>,
    #[serde(skip)]
    doc_lookup: HashMap<String, usize>,
    #[serde(skip)]
    sentence_lookup: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(config: IngestConfig) -> Self {
        Corpus {
            config,
            ..Default::default()
        }
    }

    /// Builds a corpus from in-memory `(doc_id, text)` pairs.
    pub fn from_texts<I, S, T>(config: IngestConfig, docs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
        T: AsRef<str>,
    {
        let mut pending = Vec::new();
        for (id, text) in docs {
            pending.push((
                id.into(),
                text.as_ref().to_string(),
                segment_sentences(text.as_ref()),
            ));
        }
        Self::assemble(config, pending)
    }

    /// Builds a corpus from documents that are already split into sentences.
    pub fn from_sentences<I, S>(config: IngestConfig, docs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<String>)>,
        S: Into<String>,
    {
        let pending = docs
            .into_iter()
            .map(|(id, sentences)| (id.into(), sentences.join(" "), sentences))
            .collect();
        Self::assemble(config, pending)
    }

    fn assemble(
        config: IngestConfig,
        mut pending: Vec<(String, String, Vec<String>)>,
    ) -> Result<Self> {
        pending.sort_by(|a, b| a.0.cmp(&b.0));
        if let Some(dup) = pending.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::DuplicateDocId(dup[0].0.clone()));
        }
        let mut corpus = Corpus::new(config);
        for (doc_id, raw_text, segments) in pending {
            let mut sentence_ids = Vec::with_capacity(segments.len());
            for (position, text) in segments
                .into_iter()
                .filter(|s| !s.trim().is_empty())
                .enumerate()
            {
                let sentence_id = SentenceRecord::sentence_id_for(&doc_id, position);
                let tokens = tokenize(&text, &config);
                sentence_ids.push(sentence_id.clone());
                corpus.sentences.push(SentenceRecord {
                    sentence_id,
                    doc_id: doc_id.clone(),
                    position,
                    text,
                    tokens,
                    event_features: Vec::new(),
                });
            }
            corpus.documents.push(Document {
                doc_id,
                raw_text,
                sentence_ids,
            });
        }
        corpus.rebuild_lookups();
        Ok(corpus)
    }

    pub(crate) fn rebuild_lookups(&mut self) {
        self.doc_lookup = self
            .documents
            .iter()
            .enumerate()
            .map(|(i, d)| (d.doc_id.clone(), i))
            .collect();
        self.sentence_lookup = self
            .sentences
            .iter()
            .enumerate()
            .map(|(i, s)| (s.sentence_id.clone(), i))
            .collect();
    }

    pub fn config(&self) -> &IngestConfig {
        &self.config
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn sentences(&self) -> &[SentenceRecord] {
        &self.sentences
    }

    pub fn document(&self, doc_id: &str) -> Option<&Document> {
        self.doc_lookup.get(doc_id).map(|&i| &self.documents[i])
    }

    pub fn sentence(&self, sentence_id: &str) -> Option<&SentenceRecord> {
        self.sentence_lookup
            .get(sentence_id)
            .map(|&i| &self.sentences[i])
    }

    /// Sentences of the same document immediately before and after `sentence_id`.
    pub fn neighbours(
        &self,
        sentence_id: &str,
    ) -> Option<(Option<&SentenceRecord>, Option<&SentenceRecord>)> {
        let &i = self.sentence_lookup.get(sentence_id)?;
        let doc = &self.sentences[i].doc_id;
        let prev = i
            .checked_sub(1)
            .map(|j| &self.sentences[j])
            .filter(|s| &s.doc_id == doc);
        let next = self.sentences.get(i + 1).filter(|s| &s.doc_id == doc);
        Some((prev, next))
    }

    pub fn doc_count(&self) -> usize {
        self.documents.len()
    }

    pub fn sentence_count(&self) -> usize {
        self.sentences.len()
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(|s| s.tokens.len()).sum()
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        tokenize(text, &self.config)
    }

    /// Attaches event annotations from a line-delimited file. Every sentence
    /// named in the file has its previous annotations replaced. Returns the
    /// number of distinct sentences annotated.
    pub fn ingest_event_annotations(&mut self, path: impl AsRef<Path>) -> Result<usize> {
        let path = path.as_ref();
        let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut staged: Vec<(usize, Vec<EventFeature>)> = Vec::new();
        let mut slot: HashMap<usize, usize> = HashMap::new();
        for (n, line) in content.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: AnnotationLine =
                serde_json::from_str(line).map_err(|e| Error::malformed(path, n + 1, e))?;
            let &idx = self
                .sentence_lookup
                .get(&record.sentence_id)
                .ok_or_else(|| Error::UnknownSentence(record.sentence_id.clone()))?;
            let trigger = text::normalize_phrase(&record.trigger, &self.config)
                .ok_or_else(|| Error::malformed(path, n + 1, "trigger has no terms"))?;
            let at = *slot.entry(idx).or_insert_with(|| {
                staged.push((idx, Vec::new()));
                staged.len() - 1
            });
            let features = &mut staged[at].1;
            for (role, arg) in [
                (Role::Agent, &record.agent),
                (Role::Patient, &record.patient),
            ] {
                let Some(arg) = arg else { continue };
                let argument = text::normalize_phrase(arg, &self.config)
                    .ok_or_else(|| Error::malformed(path, n + 1, format!("{role} has no terms")))?;
                features.push(EventFeature {
                    trigger: trigger.clone(),
                    role,
                    argument,
                });
            }
        }
        let count = staged.len();
        for (idx, features) in staged {
            self.sentences[idx].event_features = features;
        }
        Ok(count)
    }

    pub fn build_index(&self) -> InvertedIndex {
        InvertedIndex::build(self)
    }
}

/// Reads a line-delimited corpus file. Each line is either
/// `{"doc_id", "text"}` or `{"doc_id", "sentences": [..]}`.
pub fn ingest_corpus(path: impl AsRef<Path>, config: IngestConfig) -> Result<Corpus> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut pending = Vec::new();
    for (n, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: DocumentLine =
            serde_json::from_str(line).map_err(|e| Error::malformed(path, n + 1, e))?;
        let (raw, segments) = match (record.text, record.sentences) {
            (Some(text), None) => {
                let segments = segment_sentences(&text);
                (text, segments)
            }
            (None, Some(sentences)) => (sentences.join(" "), sentences),
            _ => {
                return Err(Error::malformed(
                    path,
                    n + 1,
                    "expected exactly one of \"text\" or \"sentences\"",
                ))
            }
        };
        pending.push((record.doc_id, raw, segments));
    }
    Corpus::assemble(config, pending)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn ingest_counts_documents_and_sentences() {
        let f = write_tmp(concat!(
            r#"{"doc_id":"d1","text":"Flint changed its water source. Lead levels rose."}"#,
            "\n",
            r#"{"doc_id":"d2","sentences":["Residents complained."]}"#,
            "\n"
        ));
        let corpus = ingest_corpus(f.path(), IngestConfig::default()).unwrap();
        assert_eq!(corpus.doc_count(), 2);
        assert_eq!(corpus.sentence_count(), 3);
        assert_eq!(
            corpus.document("d1").unwrap().sentence_ids,
            ["d1:0", "d1:1"]
        );
        assert_eq!(
            corpus.sentence("d2:0").unwrap().tokens,
            ["residents", "complained"]
        );
    }

    #[test]
    fn empty_file_gives_empty_corpus() {
        let f = write_tmp("");
        let corpus = ingest_corpus(f.path(), IngestConfig::default()).unwrap();
        assert_eq!(corpus.doc_count(), 0);
        let index = corpus.build_index();
        assert_eq!(index.total_tokens(), 0);
        assert!(index.postings("anything").is_empty());
    }

    #[test]
    fn duplicate_doc_id_is_rejected() {
        let f = write_tmp(concat!(
            r#"{"doc_id":"d1","text":"a"}"#,
            "\n",
            r#"{"doc_id":"d1","text":"b"}"#,
            "\n"
        ));
        let err = ingest_corpus(f.path(), IngestConfig::default()).unwrap_err();
        assert_eq!(err.to_string(), "duplicate doc_id d1");
    }

    #[test]
    fn malformed_line_names_line_number() {
        let f = write_tmp(concat!(r#"{"doc_id":"d1","text":"a"}"#, "\n", "not json\n"));
        let err = ingest_corpus(f.path(), IngestConfig::default()).unwrap_err();
        assert!(matches!(err, Error::MalformedLine { line: 2, .. }), "{err}");

        let f = write_tmp(r#"{"doc_id":"d1"}"#);
        let err = ingest_corpus(f.path(), IngestConfig::default()).unwrap_err();
        assert!(matches!(err, Error::MalformedLine { line: 1, .. }), "{err}");
    }

    #[test]
    fn event_annotations_attach_one_feature_per_role() {
        let mut corpus = Corpus::from_texts(
            IngestConfig::default(),
            [("d1", "The manager switched the source.")],
        )
        .unwrap();
        let f = write_tmp(
            r#"{"sentence_id":"d1:0","trigger":"switch","agent":"manager","patient":"source"}"#,
        );
        assert_eq!(corpus.ingest_event_annotations(f.path()).unwrap(), 1);
        let features = &corpus.sentence("d1:0").unwrap().event_features;
        assert_eq!(features.len(), 2);
        assert_eq!(features[0].composite(), "switch▸agent▸manager");
        assert_eq!(features[1].composite(), "switch▸patient▸source");

        // re-ingestion replaces
        let f = write_tmp(
            r#"{"sentence_id":"d1:0","trigger":"switch","agent":null,"patient":"river"}"#,
        );
        corpus.ingest_event_annotations(f.path()).unwrap();
        let features = &corpus.sentence("d1:0").unwrap().event_features;
        assert_eq!(features.len(), 1);
        assert_eq!(features[0].composite(), "switch▸patient▸river");
    }

    #[test]
    fn event_annotation_errors() {
        let mut corpus = Corpus::from_texts(IngestConfig::default(), [("d1", "Text.")]).unwrap();
        let f = write_tmp("");
        assert_eq!(corpus.ingest_event_annotations(f.path()).unwrap(), 0);

        let f = write_tmp(r#"{"sentence_id":"s999","trigger":"x","agent":null,"patient":null}"#);
        let err = corpus.ingest_event_annotations(f.path()).unwrap_err();
        assert_eq!(err.to_string(), "unknown sentence_id s999");

        let f = write_tmp("{\n");
        let err = corpus.ingest_event_annotations(f.path()).unwrap_err();
        assert!(matches!(err, Error::MalformedLine { line: 1, .. }));
    }

    #[test]
    fn neighbours_stay_within_document() {
        let corpus = Corpus::from_texts(
            IngestConfig::default(),
            [("a", "One. Two. Three."), ("b", "Other.")],
        )
        .unwrap();
        let (prev, next) = corpus.neighbours("a:1").unwrap();
        assert_eq!(prev.unwrap().text, "One.");
        assert_eq!(next.unwrap().text, "Three.");
        let (prev, next) = corpus.neighbours("a:2").unwrap();
        assert_eq!(prev.unwrap().text, "Two.");
        assert!(next.is_none());
    }
}

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::Corpus;

/// Retrieval granularity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Documents,
    #[default]
    Sentences,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    /// Ordinal of the item within its [`ItemTable`].
    pub item: u32,
    pub tf: u32,
}

/// Postings and lengths for one granularity. Items with no tokens are not
/// indexed.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ItemTable {
    ids: Vec<String>,
    lengths: Vec<u32>,
    feature_lengths: Vec<u32>,
    postings: BTreeMap<String, Vec<Posting>>,
    feature_postings: BTreeMap<String, Vec<Posting>>,
    #[serde(skip)]
    lookup: HashMap<String, u32>,
    #[serde(skip)]
    id_rank: Vec<u32>,
    #[serde(skip)]
    by_id: Vec<u32>,
}

impl ItemTable {
    fn push(
        &mut self,
        id: &str,
        tokens: &HashMap<&str, u32>,
        length: u32,
        features: &HashMap<String, u32>,
    ) {
        let item = self.ids.len() as u32;
        self.ids.push(id.to_string());
        self.lengths.push(length);
        self.feature_lengths.push(features.values().sum());
        for (&term, &tf) in tokens {
            self.postings
                .entry(term.to_string())
                .or_default()
                .push(Posting { item, tf });
        }
        for (term, &tf) in features {
            self.feature_postings
                .entry(term.clone())
                .or_default()
                .push(Posting { item, tf });
        }
    }

    fn finalize(&mut self) {
        self.lookup = self
            .ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i as u32))
            .collect();
        let mut by_id: Vec<u32> = (0..self.ids.len() as u32).collect();
        by_id.sort_by(|&a, &b| self.ids[a as usize].cmp(&self.ids[b as usize]));
        let mut id_rank = vec![0u32; self.ids.len()];
        for (rank, &item) in by_id.iter().enumerate() {
            id_rank[item as usize] = rank as u32;
        }
        self.by_id = by_id;
        self.id_rank = id_rank;
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn id(&self, item: u32) -> &str {
        &self.ids[item as usize]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn ordinal(&self, id: &str) -> Option<u32> {
        self.lookup.get(id).copied()
    }

    pub fn length(&self, item: u32) -> u32 {
        self.lengths[item as usize]
    }

    pub fn feature_length(&self, item: u32) -> u32 {
        self.feature_lengths[item as usize]
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map_or(&[], Vec::as_slice)
    }

    pub fn feature_postings(&self, term: &str) -> &[Posting] {
        self.feature_postings.get(term).map_or(&[], Vec::as_slice)
    }

    /// Position of `item` in ascending item-id order; the ranking tie-break.
    pub fn id_rank(&self, item: u32) -> u32 {
        self.id_rank[item as usize]
    }

    /// Item ordinals in ascending item-id order.
    pub fn ordinals_by_id(&self) -> &[u32] {
        &self.by_id
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.postings.keys().map(String::as_str)
    }
}

/// Immutable term statistics over a [`Corpus`], at document and sentence
/// granularity, for lexical terms and for composite event terms.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct InvertedIndex {
    documents: ItemTable,
    sentences: ItemTable,
    collection_term_counts: BTreeMap<String, u64>,
    total_tokens: u64,
    feature_counts: BTreeMap<String, u64>,
    feature_total: u64,
}

fn count<'a>(terms: impl Iterator<Item = &'a str>, into: &mut HashMap<&'a str, u32>) {
    for t in terms {
        *into.entry(t).or_default() += 1;
    }
}

impl InvertedIndex {
    pub fn build(corpus: &Corpus) -> Self {
        let mut index = InvertedIndex::default();
        for doc in corpus.documents() {
            let mut doc_tf: HashMap<&str, u32> = HashMap::new();
            let mut doc_features: HashMap<String, u32> = HashMap::new();
            let mut doc_len = 0u32;
            for sid in &doc.sentence_ids {
                let sentence = corpus.sentence(sid).expect("document sentence ids resolve");
                let mut tf = HashMap::new();
                count(sentence.tokens.iter().map(String::as_str), &mut tf);
                let mut features: HashMap<String, u32> = HashMap::new();
                for f in &sentence.event_features {
                    *features.entry(f.composite()).or_default() += 1;
                }
                let len = sentence.tokens.len() as u32;
                if len > 0 {
                    index.sentences.push(sid, &tf, len, &features);
                }
                for (t, n) in tf {
                    *doc_tf.entry(t).or_default() += n;
                }
                for (f, n) in features {
                    *doc_features.entry(f).or_default() += n;
                }
                doc_len += len;
            }
            if doc_len > 0 {
                index
                    .documents
                    .push(&doc.doc_id, &doc_tf, doc_len, &doc_features);
            }
            for (t, n) in doc_tf {
                *index
                    .collection_term_counts
                    .entry(t.to_string())
                    .or_default() += u64::from(n);
            }
            for (f, n) in doc_features {
                *index.feature_counts.entry(f).or_default() += u64::from(n);
            }
            index.total_tokens += u64::from(doc_len);
        }
        index.feature_total = index.feature_counts.values().sum();
        index.finalize();
        index
    }

    pub(crate) fn finalize(&mut self) {
        self.documents.finalize();
        self.sentences.finalize();
    }

    pub fn table(&self, target: Target) -> &ItemTable {
        match target {
            Target::Documents => &self.documents,
            Target::Sentences => &self.sentences,
        }
    }

    /// Document postings for `term` as `(doc_id, tf)`, sorted by `doc_id`.
    pub fn postings(&self, term: &str) -> Vec<(&str, u32)> {
        self.documents
            .postings(term)
            .iter()
            .map(|p| (self.documents.id(p.item), p.tf))
            .collect()
    }

    pub fn sentence_postings(&self, term: &str) -> Vec<&str> {
        self.sentences
            .postings(term)
            .iter()
            .map(|p| self.sentences.id(p.item))
            .collect()
    }

    /// Token count `|D|` of a document; 0 for unknown or empty documents.
    pub fn doc_length(&self, doc_id: &str) -> u32 {
        self.documents
            .ordinal(doc_id)
            .map_or(0, |i| self.documents.length(i))
    }

    pub fn collection_count(&self, term: &str) -> u64 {
        self.collection_term_counts.get(term).copied().unwrap_or(0)
    }

    pub fn collection_counts(&self) -> &BTreeMap<String, u64> {
        &self.collection_term_counts
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn vocab_size(&self) -> usize {
        self.collection_term_counts.len()
    }

    pub fn feature_counts(&self) -> &BTreeMap<String, u64> {
        &self.feature_counts
    }

    pub fn feature_total(&self) -> u64 {
        self.feature_total
    }
}

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use super::provider::{check_dim, EmbeddingProvider};
use super::vector::{dot, EmbeddingVector};
use crate::corpus::{Corpus, SentenceRecord};
use crate::prob_ir::{RankedItem, RankedList};
use crate::{Error, Result, Scalar};

/// Default file name of a persisted vector index inside an index directory.
pub const VECTOR_FILE: &str = "vectors.qbv";
const MAGIC: &[u8; 6] = b"QBVEC\n";
const VERSION: u32 = 1;
const BUILD_CHUNK: usize = 512;

/// Immutable sentence-embedding index searched by exact cosine scan.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex<T> {
    dim: usize,
    provider: String,
    ids: Vec<String>,
    /// Row-major `ids.len() × dim` unit vectors.
    data: Vec<T>,
    lookup: HashMap<String, u32>,
}

impl<T: Scalar> VectorIndex<T> {
    pub fn from_entries(
        dim: usize,
        provider: impl Into<String>,
        entries: impl IntoIterator<Item = (String, EmbeddingVector<T>)>,
    ) -> Result<Self> {
        let mut ids = Vec::new();
        let mut data = Vec::new();
        for (id, v) in entries {
            if v.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: v.dim(),
                });
            }
            ids.push(id);
            data.extend_from_slice(v.values());
        }
        let lookup = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i as u32))
            .collect();
        Ok(VectorIndex {
            dim,
            provider: provider.into(),
            ids,
            data,
            lookup,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn provider_name(&self) -> &str {
        &self.provider
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn contains(&self, sentence_id: &str) -> bool {
        self.lookup.contains_key(sentence_id)
    }

    /// Raw unit vector of an indexed sentence.
    pub fn vector(&self, sentence_id: &str) -> Option<&[T]> {
        self.lookup.get(sentence_id).map(|&i| self.row(i as usize))
    }

    fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[T])> {
        self.ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), self.row(i)))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut write = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
        write(MAGIC)?;
        write(&VERSION.to_le_bytes())?;
        write(&(self.dim as u32).to_le_bytes())?;
        write(&(self.ids.len() as u64).to_le_bytes())?;
        write(&(self.provider.len() as u32).to_le_bytes())?;
        write(self.provider.as_bytes())?;
        for (id, row) in self.iter() {
            write(&(id.len() as u32).to_le_bytes())?;
            write(id.as_bytes())?;
            for v in row {
                write(&v.to_f64().unwrap_or(f64::NAN).to_le_bytes())?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let bad = |message: &str| Error::BadFormat {
            path: path.to_path_buf(),
            message: message.to_string(),
        };
        let mut r = &bytes[..];
        let mut magic = [0u8; 6];
        r.read_exact(&mut magic)
            .map_err(|_| bad("truncated header"))?;
        if &magic != MAGIC {
            return Err(bad("not a vector index file"));
        }
        let mut take = |n: usize| -> Result<Vec<u8>> {
            let mut buf = vec![0u8; n];
            r.read_exact(&mut buf).map_err(|_| bad("truncated file"))?;
            Ok(buf)
        };
        let u32_of = |b: Vec<u8>| u32::from_le_bytes(b.try_into().expect("4 bytes"));
        let version = u32_of(take(4)?);
        if version != VERSION {
            return Err(bad(&format!("unsupported vector index version {version}")));
        }
        let dim = u32_of(take(4)?) as usize;
        let count = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize;
        let provider_len = u32_of(take(4)?) as usize;
        let provider = String::from_utf8(take(provider_len)?)
            .map_err(|_| bad("provider name is not UTF-8"))?;
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let id_len = u32_of(take(4)?) as usize;
            let id =
                String::from_utf8(take(id_len)?).map_err(|_| bad("sentence id is not UTF-8"))?;
            let raw = take(dim * 8)?;
            let values = raw
                .chunks_exact(8)
                .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
                .collect();
            let v = EmbeddingVector::normalized_if_needed(values)
                .map_err(|e| bad(&format!("{id}: {e}")))?;
            entries.push((id, v));
        }
        if !r.is_empty() {
            return Err(bad("trailing bytes"));
        }
        Self::from_entries(dim, provider, entries)
    }
}

/// Embeds every corpus sentence. Chunks are embedded in parallel and
/// reassembled in corpus order.
pub fn build_vector_index<T: Scalar>(
    provider: &dyn EmbeddingProvider<T>,
    corpus: &Corpus,
) -> Result<VectorIndex<T>> {
    let sentences = corpus.sentences();
    let chunks: Vec<Vec<EmbeddingVector<T>>> = sentences
        .par_chunks(BUILD_CHUNK)
        .map(|chunk| {
            let items: Vec<(&str, &str)> = chunk
                .iter()
                .map(|s| (s.sentence_id.as_str(), s.text.as_str()))
                .collect();
            let vectors = provider.embed_sentences(&items)?;
            for (v, s) in vectors.iter().zip(chunk) {
                check_dim(provider, v).map_err(|e| Error::ProviderFailed {
                    sentence_id: s.sentence_id.clone(),
                    message: e.to_string(),
                })?;
            }
            Ok(vectors)
        })
        .collect::<Result<_>>()?;
    VectorIndex::from_entries(
        provider.dim(),
        provider.name(),
        sentences
            .iter()
            .map(|s| s.sentence_id.clone())
            .zip(chunks.into_iter().flatten()),
    )
}

/// Normalized centroid of the example embeddings. Indexed examples reuse
/// their stored vector; others are embedded. Summation runs in sentence-id
/// order so the result does not depend on the order of `examples`.
pub fn example_centroid<T: Scalar>(
    examples: &[&SentenceRecord],
    index: &VectorIndex<T>,
    provider: &dyn EmbeddingProvider<T>,
) -> Result<EmbeddingVector<T>> {
    if examples.is_empty() {
        return Err(Error::NoExamples);
    }
    let mut sorted: Vec<&SentenceRecord> = examples.to_vec();
    sorted.sort_by(|a, b| a.sentence_id.cmp(&b.sentence_id));
    let mut sum = vec![T::zero(); index.dim()];
    for s in sorted {
        let embedded;
        let row = match index.vector(&s.sentence_id) {
            Some(row) => row,
            None => {
                embedded = provider.embed_by_id(&s.sentence_id, &s.text)?;
                embedded.values()
            }
        };
        if row.len() != index.dim() {
            return Err(Error::DimensionMismatch {
                expected: index.dim(),
                found: row.len(),
            });
        }
        sum.iter_mut().zip(row).for_each(|(acc, v)| *acc += *v);
    }
    EmbeddingVector::normalized(sum)
}

/// Top-`k` indexed sentences by cosine similarity to the example centroid,
/// skipping `exclude`. Exact scan; ties go to the smaller sentence id.
pub fn query_by_example<T: Scalar>(
    examples: &[&SentenceRecord],
    index: &VectorIndex<T>,
    provider: &dyn EmbeddingProvider<T>,
    k: usize,
    exclude: &HashSet<String>,
) -> Result<RankedList<T>> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    let centroid = example_centroid(examples, index, provider)?;
    let q = centroid.values();
    let mut scored: Vec<(T, u32)> = (0..index.len())
        .into_par_iter()
        .filter(|&i| !exclude.contains(&index.ids[i]))
        .map(|i| (dot(q, index.row(i)).max(-T::one()).min(T::one()), i as u32))
        .collect();
    let order = |a: &(T, u32), b: &(T, u32)| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(Ordering::Equal)
            .then_with(|| index.ids[a.1 as usize].cmp(&index.ids[b.1 as usize]))
    };
    if scored.len() > k {
        scored.select_nth_unstable_by(k - 1, order);
        scored.truncate(k);
    }
    scored.sort_by(order);
    let items = scored
        .into_iter()
        .map(|(score, i)| RankedItem {
            id: index.ids[i as usize].clone(),
            score,
        })
        .collect();
    Ok(RankedList {
        items,
        provenance: format!(
            "query-by-example[{} examples, {}]",
            examples.len(),
            index.provider_name()
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::IngestConfig;
    use crate::neural_ir::{cosine_similarity, HashEmbedder};

    fn corpus() -> Corpus {
        Corpus::from_texts(
            IngestConfig::default(),
            [
                (
                    "a",
                    "Lead pipes corroded in Flint. The city switched its water source.",
                ),
                (
                    "b",
                    "Residents complained about brown water. Officials denied the problem.",
                ),
                (
                    "c",
                    "The governor apologized. Lead levels in children rose.",
                ),
            ],
        )
        .unwrap()
    }

    #[test]
    fn build_covers_every_sentence() {
        let c = corpus();
        let idx: VectorIndex<f64> = build_vector_index(&HashEmbedder::default(), &c).unwrap();
        assert_eq!(idx.len(), c.sentence_count());
        assert!(idx.iter().all(|(_, v)| v.len() == 256));
        let again: VectorIndex<f64> = build_vector_index(&HashEmbedder::default(), &c).unwrap();
        assert_eq!(idx, again);
        let empty: VectorIndex<f64> = build_vector_index(
            &HashEmbedder::default(),
            &Corpus::new(IngestConfig::default()),
        )
        .unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn self_retrieval_and_exclusion() {
        let c = corpus();
        let provider = HashEmbedder::default();
        let idx: VectorIndex<f64> = build_vector_index(&provider, &c).unwrap();
        let s = c.sentence("b:0").unwrap();
        let top = query_by_example(&[s], &idx, &provider, 3, &HashSet::new()).unwrap();
        assert_eq!(top.items[0].id, "b:0");
        assert!((top.items[0].score - 1.0).abs() < 1e-6);
        let exclude = HashSet::from(["b:0".to_string()]);
        let rest = query_by_example(&[s], &idx, &provider, 10, &exclude).unwrap();
        assert!(rest.ids().all(|id| id != "b:0"));
        assert_eq!(rest.len(), c.sentence_count() - 1);
        assert!(rest.is_ranked());
    }

    #[test]
    fn matches_brute_force_centroid_scan() {
        let texts: Vec<(String, String)> = (0..10)
            .map(|i| {
                (
                    format!("d{i}"),
                    format!("Water lead pipe {} crisis {}.", i % 3, i % 4),
                )
            })
            .collect();
        let c = Corpus::from_texts(IngestConfig::default(), texts).unwrap();
        let provider = HashEmbedder::default();
        let idx: VectorIndex<f64> = build_vector_index(&provider, &c).unwrap();
        let examples = [c.sentence("d3:0").unwrap(), c.sentence("d7:0").unwrap()];
        let got = query_by_example(&examples, &idx, &provider, 10, &HashSet::new()).unwrap();

        let mut centroid = vec![0.0; 256];
        for e in &examples {
            let v: EmbeddingVector<f64> = provider.embed(&e.text).unwrap();
            centroid
                .iter_mut()
                .zip(v.values())
                .for_each(|(a, b)| *a += b);
        }
        let centroid = EmbeddingVector::normalized(centroid).unwrap();
        let mut expected: Vec<(String, f64)> = c
            .sentences()
            .iter()
            .map(|s| {
                let v = provider.embed(&s.text).unwrap();
                (
                    s.sentence_id.clone(),
                    cosine_similarity(&centroid, &v).unwrap(),
                )
            })
            .collect();
        expected.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let got: Vec<(String, f64)> = got.items.into_iter().map(|i| (i.id, i.score)).collect();
        assert_eq!(got.len(), expected.len());
        for (g, e) in got.iter().zip(&expected) {
            assert_eq!(g.0, e.0);
            assert!((g.1 - e.1).abs() < 1e-12);
        }
    }

    #[test]
    fn example_order_does_not_matter() {
        let c = corpus();
        let provider = HashEmbedder::default();
        let idx: VectorIndex<f64> = build_vector_index(&provider, &c).unwrap();
        let (x, y) = (c.sentence("a:0").unwrap(), c.sentence("c:1").unwrap());
        let ab = query_by_example(&[x, y], &idx, &provider, 5, &HashSet::new()).unwrap();
        let ba = query_by_example(&[y, x], &idx, &provider, 5, &HashSet::new()).unwrap();
        assert_eq!(ab, ba);
    }

    #[test]
    fn no_examples_is_an_error() {
        let c = corpus();
        let provider = HashEmbedder::default();
        let idx: VectorIndex<f64> = build_vector_index(&provider, &c).unwrap();
        let err = query_by_example(&[], &idx, &provider, 5, &HashSet::new()).unwrap_err();
        assert_eq!(err.to_string(), "no example sentences selected");
    }

    #[test]
    fn persisted_index_round_trips() {
        let c = corpus();
        let idx: VectorIndex<f64> = build_vector_index(&HashEmbedder::default(), &c).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(VECTOR_FILE);
        idx.save(&path).unwrap();
        let back = VectorIndex::<f64>::load(&path).unwrap();
        assert_eq!(back, idx);
        let back32 = VectorIndex::<f32>::load(&path).unwrap();
        for (_, v) in back32.iter() {
            let n: f32 = v.iter().map(|x| x * x).sum::<f32>().sqrt();
            assert!((n - 1.0).abs() < 1e-6);
        }
        fs::write(&path, b"garbage").unwrap();
        assert!(matches!(
            VectorIndex::<f64>::load(&path),
            Err(Error::BadFormat { .. })
        ));
    }
}

//! Embedding providers. The encoder itself is external; these adapters turn
//! text (or a sentence id) into unit vectors.

use std::collections::HashMap;
use std::fs;
use std::hash::Hasher;
use std::path::Path;
use std::time::Duration;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use super::EmbeddingVector;
use crate::corpus::{tokenize, IngestConfig};
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderMode {
    DeterministicHash,
    PrecomputedFile,
    RemoteService,
}

pub trait EmbeddingProvider<T: Scalar>: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    fn mode(&self) -> ProviderMode;

    fn embed(&self, text: &str) -> Result<EmbeddingVector<T>>;

    /// Embeds a corpus sentence. Providers keyed by sentence id override this.
    fn embed_by_id(&self, sentence_id: &str, text: &str) -> Result<EmbeddingVector<T>> {
        let _ = sentence_id;
        self.embed(text)
    }

    /// Embeds `(sentence_id, text)` pairs in order. Errors name the sentence.
    fn embed_sentences(&self, items: &[(&str, &str)]) -> Result<Vec<EmbeddingVector<T>>> {
        items
            .iter()
            .map(|&(id, text)| {
                self.embed_by_id(id, text).map_err(|e| match e {
                    e @ (Error::ProviderFailed { .. } | Error::MissingEmbedding(_)) => e,
                    other => Error::ProviderFailed {
                        sentence_id: id.to_string(),
                        message: other.to_string(),
                    },
                })
            })
            .collect()
    }
}

pub fn embed_sentence<T: Scalar>(
    provider: &dyn EmbeddingProvider<T>,
    text: &str,
) -> Result<EmbeddingVector<T>> {
    let v = provider.embed(text)?;
    check_dim(provider, &v)?;
    Ok(v)
}

pub(crate) fn check_dim<T: Scalar>(
    provider: &dyn EmbeddingProvider<T>,
    v: &EmbeddingVector<T>,
) -> Result<()> {
    if v.dim() != provider.dim() {
        return Err(Error::DimensionMismatch {
            expected: provider.dim(),
            found: v.dim(),
        });
    }
    Ok(())
}

/// Signed feature hashing of the token bag into `dim` buckets.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
    seed: u64,
    config: IngestConfig,
}

impl HashEmbedder {
    pub const DEFAULT_DIM: usize = 256;
    pub const DEFAULT_SEED: u64 = 0x005e_ed0f_9b1d;

    pub fn new(dim: usize, config: IngestConfig) -> Self {
        Self::with_seed(dim, Self::DEFAULT_SEED, config)
    }

    pub fn with_seed(dim: usize, seed: u64, config: IngestConfig) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        HashEmbedder { dim, seed, config }
    }

    fn bucket(&self, token: &str) -> (usize, bool) {
        let mut h = FnvHasher::default();
        h.write_u64(self.seed);
        h.write(token.as_bytes());
        let x = h.finish();
        ((x % self.dim as u64) as usize, (x >> 63) == 1)
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(Self::DEFAULT_DIM, IngestConfig::default())
    }
}

impl<T: Scalar> EmbeddingProvider<T> for HashEmbedder {
    fn name(&self) -> &str {
        "deterministic-hash"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn mode(&self) -> ProviderMode {
        ProviderMode::DeterministicHash
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector<T>> {
        let mut values = vec![T::zero(); self.dim];
        let mut tokens = tokenize(text, &self.config);
        if tokens.is_empty() {
            // Text without terms maps to the bucket of the empty token.
            tokens.push(String::new());
        }
        for token in &tokens {
            let (i, negative) = self.bucket(token);
            if negative {
                values[i] -= T::one();
            } else {
                values[i] += T::one();
            }
        }
        EmbeddingVector::normalized(values).or_else(|_| {
            // Signed collisions cancelled every bucket.
            let mut values = vec![T::zero(); self.dim];
            values[self.bucket("").0] = T::one();
            EmbeddingVector::normalized(values)
        })
    }
}

#[derive(Deserialize)]
struct PrecomputedLine {
    sentence_id: String,
    vector: Vec<f64>,
}

/// Vectors produced offline, keyed by sentence id.
#[derive(Debug, Clone)]
pub struct PrecomputedEmbeddings<T> {
    name: String,
    dim: usize,
    vectors: HashMap<String, EmbeddingVector<T>>,
}

impl<T: Scalar> PrecomputedEmbeddings<T> {
    /// Reads `{"sentence_id", "vector"}` lines; vectors are normalized on load.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut vectors = HashMap::new();
        let mut dim = None;
        for (n, line) in content.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: PrecomputedLine =
                serde_json::from_str(line).map_err(|e| Error::malformed(path, n + 1, e))?;
            let expected = *dim.get_or_insert(rec.vector.len());
            if rec.vector.len() != expected {
                return Err(Error::malformed(
                    path,
                    n + 1,
                    format!(
                        "vector has dimension {}, expected {expected}",
                        rec.vector.len()
                    ),
                ));
            }
            let v =
                EmbeddingVector::normalized_if_needed(rec.vector.into_iter().map(T::lit).collect())
                    .map_err(|e| Error::malformed(path, n + 1, e))?;
            vectors.insert(rec.sentence_id, v);
        }
        Ok(PrecomputedEmbeddings {
            name: format!("precomputed:{}", path.display()),
            dim: dim.unwrap_or(0),
            vectors,
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

impl<T: Scalar> EmbeddingProvider<T> for PrecomputedEmbeddings<T> {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn mode(&self) -> ProviderMode {
        ProviderMode::PrecomputedFile
    }

    fn embed(&self, _text: &str) -> Result<EmbeddingVector<T>> {
        Err(Error::InvalidConfig(
            "precomputed embeddings are looked up by sentence id, not text".into(),
        ))
    }

    fn embed_by_id(&self, sentence_id: &str, _text: &str) -> Result<EmbeddingVector<T>> {
        self.vectors
            .get(sentence_id)
            .cloned()
            .ok_or_else(|| Error::MissingEmbedding(sentence_id.to_string()))
    }
}

#[derive(Serialize)]
struct RemoteRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct RemoteResponse {
    vectors: Vec<Vec<f64>>,
}

/// HTTP embedding service: `POST {"texts": [..]}` answered by
/// `{"vectors": [[..], ..]}` in the same order.
pub struct RemoteEmbedder {
    endpoint: String,
    dim: usize,
    batch_size: usize,
    agent: ureq::Agent,
}

impl RemoteEmbedder {
    pub fn new(endpoint: impl Into<String>, dim: usize, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        RemoteEmbedder {
            endpoint: endpoint.into(),
            dim,
            batch_size: 64,
            agent,
        }
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    fn request<T: Scalar>(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector<T>>> {
        let unreachable = |message: String| Error::ProviderUnreachable {
            endpoint: self.endpoint.clone(),
            message,
        };
        let response: RemoteResponse = self
            .agent
            .post(&self.endpoint)
            .send_json(RemoteRequest { texts })
            .map_err(|e| unreachable(e.to_string()))?
            .body_mut()
            .read_json()
            .map_err(|e| unreachable(format!("bad response body: {e}")))?;
        if response.vectors.len() != texts.len() {
            return Err(unreachable(format!(
                "sent {} texts, received {} vectors",
                texts.len(),
                response.vectors.len()
            )));
        }
        response
            .vectors
            .into_iter()
            .map(|v| {
                if v.len() != self.dim {
                    return Err(Error::DimensionMismatch {
                        expected: self.dim,
                        found: v.len(),
                    });
                }
                EmbeddingVector::normalized(v.into_iter().map(T::lit).collect())
            })
            .collect()
    }
}

impl<T: Scalar> EmbeddingProvider<T> for RemoteEmbedder {
    fn name(&self) -> &str {
        &self.endpoint
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn mode(&self) -> ProviderMode {
        ProviderMode::RemoteService
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector<T>> {
        Ok(self.request(&[text])?.remove(0))
    }

    fn embed_sentences(&self, items: &[(&str, &str)]) -> Result<Vec<EmbeddingVector<T>>> {
        let mut out = Vec::with_capacity(items.len());
        for chunk in items.chunks(self.batch_size) {
            let texts: Vec<&str> = chunk.iter().map(|&(_, t)| t).collect();
            let vectors = self.request(&texts).map_err(|e| Error::ProviderFailed {
                sentence_id: chunk[0].0.to_string(),
                message: e.to_string(),
            })?;
            out.extend(vectors);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural_ir::cosine_similarity;
    use std::collections::BTreeMap;
    use std::io::Write;

    fn hash_embed(text: &str) -> EmbeddingVector<f64> {
        HashEmbedder::default().embed(text).unwrap()
    }

    #[test]
    fn hash_embedder_is_deterministic_and_unit_norm() {
        let a = hash_embed("Flint water crisis");
        assert_eq!(a, hash_embed("Flint water crisis"));
        assert_eq!(a.dim(), 256);
        assert!((a.norm() - 1.0).abs() < 1e-6);
        assert!((hash_embed("").norm() - 1.0).abs() < 1e-6);
        assert!((hash_embed("!!!").norm() - 1.0).abs() < 1e-6);
    }

    fn bag_cosine(a: &str, b: &str) -> f64 {
        let bag = |s: &str| {
            let mut m: BTreeMap<String, f64> = BTreeMap::new();
            for t in tokenize(s, &IngestConfig::default()) {
                *m.entry(t).or_default() += 1.0;
            }
            m
        };
        let (x, y) = (bag(a), bag(b));
        let dot: f64 = x.iter().map(|(t, v)| v * y.get(t).unwrap_or(&0.0)).sum();
        let n = |m: &BTreeMap<String, f64>| m.values().map(|v| v * v).sum::<f64>().sqrt();
        dot / (n(&x) * n(&y))
    }

    #[test]
    fn hash_similarity_orders_like_bag_of_words() {
        let pairs = [
            ("lead pipes corroded", "corroded lead pipes"),
            ("lead pipes corroded", "governor signed budget"),
            (
                "emergency manager switched source",
                "source switched by emergency manager",
            ),
            ("emergency manager switched source", "children tested blood"),
        ];
        for w in pairs.chunks(2) {
            let (share_all, share_none) = (w[0], w[1]);
            assert!(bag_cosine(share_all.0, share_all.1) > bag_cosine(share_none.0, share_none.1));
            let s_all =
                cosine_similarity(&hash_embed(share_all.0), &hash_embed(share_all.1)).unwrap();
            let s_none =
                cosine_similarity(&hash_embed(share_none.0), &hash_embed(share_none.1)).unwrap();
            assert!(s_all > s_none, "{s_all} <= {s_none}");
        }
    }

    #[test]
    fn precomputed_file_normalizes_and_looks_up_by_id() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, r#"{{"sentence_id":"d1:0","vector":[3.0,4.0]}}"#).unwrap();
        writeln!(f, r#"{{"sentence_id":"d1:1","vector":[0.0,2.0]}}"#).unwrap();
        let p = PrecomputedEmbeddings::<f64>::load(f.path()).unwrap();
        assert_eq!(EmbeddingProvider::<f64>::dim(&p), 2);
        assert_eq!(p.embed_by_id("d1:0", "").unwrap().values(), [0.6, 0.8]);
        assert!(matches!(
            p.embed_by_id("d9:0", ""),
            Err(Error::MissingEmbedding(_))
        ));
        let err = p
            .embed_sentences(&[("d1:0", ""), ("d9:0", "")])
            .unwrap_err();
        assert_eq!(
            err.to_string(),
            "no precomputed embedding for sentence d9:0"
        );
    }

    #[test]
    fn precomputed_file_rejects_ragged_vectors() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, r#"{{"sentence_id":"a","vector":[1.0,0.0]}}"#).unwrap();
        writeln!(f, r#"{{"sentence_id":"b","vector":[1.0]}}"#).unwrap();
        assert!(matches!(
            PrecomputedEmbeddings::<f64>::load(f.path()),
            Err(Error::MalformedLine { line: 2, .. })
        ));
    }

    #[test]
    fn remote_unreachable_reports_endpoint() {
        let r = RemoteEmbedder::new("http://127.0.0.1:9/embed", 4, Duration::from_millis(300));
        let err = EmbeddingProvider::<f64>::embed(&r, "x").unwrap_err();
        assert!(matches!(err, Error::ProviderUnreachable { .. }));
        assert!(err.to_string().contains("retry"));
    }
}

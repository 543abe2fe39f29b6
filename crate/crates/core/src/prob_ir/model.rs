use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::InvertedIndex;
use crate::{Error, Result, Scalar};

const MASS_TOLERANCE: f64 = 1e-6;

/// `P(q|f)`: probability that foreign term `f` translates to query term `q`.
#[derive(Debug, Clone, Default)]
pub enum TranslationTable<T> {
    /// `P(q|f) = 1` iff `q = f`; monolingual retrieval.
    #[default]
    Identity,
    Table {
        forward: BTreeMap<String, BTreeMap<String, T>>,
        /// query term -> (foreign term, probability), sorted by foreign term
        by_query: HashMap<String, Vec<(String, T)>>,
    },
}

impl<T: Scalar> TranslationTable<T> {
    pub fn from_entries<I, F, Q>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (F, Q, T)>,
        F: Into<String>,
        Q: Into<String>,
    {
        let mut forward: BTreeMap<String, BTreeMap<String, T>> = BTreeMap::new();
        for (f, q, p) in entries {
            let (f, q) = (f.into(), q.into());
            if !(p >= T::zero() && p <= T::one()) {
                return Err(Error::InvalidConfig(format!(
                    "P({q}|{f}) = {p} outside [0, 1]"
                )));
            }
            forward.entry(f).or_default().insert(q, p);
        }
        for (f, row) in &forward {
            let mass: T = row.values().copied().sum();
            if mass > T::one() + T::lit(MASS_TOLERANCE) {
                return Err(Error::InvalidConfig(format!(
                    "translation probabilities of {f} sum to {mass} > 1"
                )));
            }
        }
        let mut by_query: HashMap<String, Vec<(String, T)>> = HashMap::new();
        for (f, row) in &forward {
            for (q, &p) in row {
                by_query.entry(q.clone()).or_default().push((f.clone(), p));
            }
        }
        Ok(TranslationTable::Table { forward, by_query })
    }

    /// Reads `foreign<TAB>query<TAB>probability` lines.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        for (n, line) in content.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let [f, q, p] = cols[..] else {
                return Err(Error::malformed(
                    path,
                    n + 1,
                    "expected 3 tab-separated columns",
                ));
            };
            let p: f64 = p
                .trim()
                .parse()
                .map_err(|e| Error::malformed(path, n + 1, format!("bad probability: {e}")))?;
            entries.push((f.to_string(), q.to_string(), T::lit(p)));
        }
        Self::from_entries(entries)
    }

    pub fn prob(&self, query_term: &str, foreign_term: &str) -> T {
        match self {
            TranslationTable::Identity => {
                if query_term == foreign_term {
                    T::one()
                } else {
                    T::zero()
                }
            }
            TranslationTable::Table { forward, .. } => forward
                .get(foreign_term)
                .and_then(|row| row.get(query_term))
                .copied()
                .unwrap_or_else(T::zero),
        }
    }

    /// Calls `f(foreign_term, P(q|foreign_term))` for every foreign term with
    /// an entry for `query_term`, in ascending foreign-term order.
    pub fn for_each_source(&self, query_term: &str, mut f: impl FnMut(&str, T)) {
        match self {
            TranslationTable::Identity => f(query_term, T::one()),
            TranslationTable::Table { by_query, .. } => {
                for (foreign, p) in by_query.get(query_term).into_iter().flatten() {
                    f(foreign, *p);
                }
            }
        }
    }
}

/// Unigram smoothing model `P_LM` with a floor for unseen terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LanguageModel<T> {
    unigram: BTreeMap<String, T>,
    oov_mass: T,
}

impl<T: Scalar> LanguageModel<T> {
    /// Add-one estimate: `P(t) = (c(t)+1)/(N+V+1)`, unseen terms get `1/(N+V+1)`.
    pub fn from_counts(counts: &BTreeMap<String, u64>, total: u64) -> Self {
        let denom = T::from_u64(total + counts.len() as u64 + 1).expect("count fits scalar");
        let unigram = counts
            .iter()
            .map(|(t, &c)| {
                (
                    t.clone(),
                    T::from_u64(c + 1).expect("count fits scalar") / denom,
                )
            })
            .collect();
        LanguageModel {
            unigram,
            oov_mass: T::one() / denom,
        }
    }

    pub fn prob(&self, term: &str) -> T {
        self.unigram.get(term).copied().unwrap_or(self.oov_mass)
    }

    pub fn oov_mass(&self) -> T {
        self.oov_mass
    }

    /// Probability mass of the vocabulary plus the OOV reserve.
    pub fn total_mass(&self) -> T {
        self.unigram.values().copied().sum::<T>() + self.oov_mass
    }
}

/// Estimates the lexical smoothing model from collection counts.
pub fn estimate_lm<T: Scalar>(index: &InvertedIndex) -> Result<LanguageModel<T>> {
    if index.total_tokens() == 0 {
        return Err(Error::EmptyIndex);
    }
    Ok(LanguageModel::from_counts(
        index.collection_counts(),
        index.total_tokens(),
    ))
}

/// Everything scoring needs besides the index: the translation table and the
/// smoothing models for lexical and composite event terms.
#[derive(Debug, Clone)]
pub struct RetrievalModel<T> {
    pub translation: TranslationTable<T>,
    pub lexical_lm: LanguageModel<T>,
    pub feature_lm: LanguageModel<T>,
}

impl<T: Scalar> RetrievalModel<T> {
    pub fn from_index(index: &InvertedIndex, translation: TranslationTable<T>) -> Result<Self> {
        Ok(RetrievalModel {
            translation,
            lexical_lm: estimate_lm(index)?,
            feature_lm: LanguageModel::from_counts(index.feature_counts(), index.feature_total()),
        })
    }
}

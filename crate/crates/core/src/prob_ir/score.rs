//! Query-likelihood scoring with translation and language-model smoothing,
//! evaluated in log space:
//!
//! ```text
//! log P(Q|D) = Σ_i w_i · log( α · Σ_{f∈D} P(q_i|f) / |D| + (1−α) · P_LM(q_i) )
//! ```

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::model::{LanguageModel, RetrievalModel};
use super::query::WeightedQuery;
use crate::corpus::{InvertedIndex, ItemTable, Target};
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", default)]
pub struct ScoringConfig<T> {
    /// Interpolation constant in (0, 1].
    pub alpha: T,
    pub first_pass_k: usize,
    /// How many first-pass items the second pass rescores.
    pub second_pass_depth: usize,
    pub target: Target,
}

impl<T: Scalar> Default for ScoringConfig<T> {
    fn default() -> Self {
        Self::for_target(Target::Sentences)
    }
}

impl<T: Scalar> ScoringConfig<T> {
    pub fn for_target(target: Target) -> Self {
        ScoringConfig {
            alpha: T::lit(0.9),
            first_pass_k: match target {
                Target::Documents => 1000,
                Target::Sentences => 200,
            },
            second_pass_depth: 100,
            target,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > T::zero() && self.alpha <= T::one()) {
            return Err(Error::InvalidConfig(format!(
                "alpha {} outside (0, 1]",
                self.alpha
            )));
        }
        if self.second_pass_depth > self.first_pass_k {
            return Err(Error::InvalidConfig(format!(
                "second_pass_depth {} exceeds first_pass_k {}",
                self.second_pass_depth, self.first_pass_k
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RankedItem<T> {
    pub id: String,
    pub score: T,
}

/// Ranked `(item id, score)` results. Scores are non-increasing with ties
/// broken by ascending id; a second-pass list guarantees this within its
/// rescored block only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RankedList<T> {
    pub items: Vec<RankedItem<T>>,
    pub provenance: String,
}

pub(crate) fn rank_order<T: Scalar>(a_score: T, a_id: &str, b_score: T, b_id: &str) -> Ordering {
    b_score
        .partial_cmp(&a_score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a_id.cmp(b_id))
}

impl<T: Scalar> RankedList<T> {
    pub fn new(provenance: impl Into<String>) -> Self {
        RankedList {
            items: Vec::new(),
            provenance: provenance.into(),
        }
    }

    /// Sorts arbitrary scored items into ranking order.
    pub fn from_scored(mut items: Vec<RankedItem<T>>, provenance: impl Into<String>) -> Self {
        items.sort_by(|a, b| rank_order(a.score, &a.id, b.score, &b.id));
        RankedList {
            items,
            provenance: provenance.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.items.iter().map(|i| i.id.as_str())
    }

    pub fn truncate(&mut self, k: usize) {
        self.items.truncate(k);
    }

    pub fn is_ranked(&self) -> bool {
        self.items
            .windows(2)
            .all(|w| rank_order(w[0].score, &w[0].id, w[1].score, &w[1].id) != Ordering::Greater)
    }
}

fn log_factor<T: Scalar>(alpha: T, evidence: T, length: u32, p_lm: T) -> T {
    let translated = if length == 0 {
        T::zero()
    } else {
        alpha * (evidence / T::from_u32(length).expect("length fits scalar"))
    };
    (translated + (T::one() - alpha) * p_lm).ln()
}

fn tf_of(postings: &[crate::corpus::Posting], item: u32) -> u32 {
    postings
        .binary_search_by_key(&item, |p| p.item)
        .map_or(0, |i| postings[i].tf)
}

fn lexical_score<T: Scalar>(
    query: &WeightedQuery<T>,
    table: &ItemTable,
    item: u32,
    model: &RetrievalModel<T>,
    alpha: T,
) -> T {
    let length = table.length(item);
    let mut score = T::zero();
    for (term, &w) in query.terms() {
        let mut evidence = T::zero();
        model.translation.for_each_source(term, |foreign, p| {
            let tf = tf_of(table.postings(foreign), item);
            if tf > 0 {
                evidence += T::from_u32(tf).expect("tf fits scalar") * p;
            }
        });
        score += w * log_factor(alpha, evidence, length, model.lexical_lm.prob(term));
    }
    score
}

fn feature_score<T: Scalar>(
    query: &WeightedQuery<T>,
    table: &ItemTable,
    item: u32,
    lm: &LanguageModel<T>,
    alpha: T,
) -> T {
    let length = table.feature_length(item);
    let mut score = T::zero();
    for (term, &w) in query.feature_terms() {
        let tf = tf_of(table.feature_postings(term), item);
        let evidence = T::from_u32(tf).expect("tf fits scalar");
        score += w * log_factor(alpha, evidence, length, lm.prob(term));
    }
    score
}

/// Log-score of one item against the lexical terms of `query`.
pub fn score_item<T: Scalar>(
    query: &WeightedQuery<T>,
    item_id: &str,
    index: &InvertedIndex,
    model: &RetrievalModel<T>,
    cfg: &ScoringConfig<T>,
) -> Result<T> {
    if query.terms().is_empty() {
        return Err(Error::EmptyQuery);
    }
    let table = index.table(cfg.target);
    let item = table
        .ordinal(item_id)
        .ok_or_else(|| Error::UnknownItem(item_id.to_string()))?;
    Ok(lexical_score(query, table, item, model, cfg.alpha))
}

/// Top `first_pass_k` items over the whole collection using lexical terms
/// only. Items scoring `−∞` are omitted.
pub fn first_pass_search<T: Scalar>(
    query: &WeightedQuery<T>,
    index: &InvertedIndex,
    model: &RetrievalModel<T>,
    cfg: &ScoringConfig<T>,
) -> Result<RankedList<T>> {
    cfg.validate()?;
    if query.terms().is_empty() {
        return Err(Error::EmptyQuery);
    }
    let table = index.table(cfg.target);
    let terms: Vec<(&str, T)> = query
        .terms()
        .iter()
        .map(|(t, w)| (t.as_str(), *w))
        .collect();
    let m = terms.len();
    let n = table.len();

    // evidence[item * m + i] = Σ_f tf(f, item) · P(q_i|f)
    let mut evidence = vec![T::zero(); n * m];
    let mut touched = vec![false; n];
    let mut candidates: Vec<u32> = Vec::new();
    for (i, (term, _)) in terms.iter().enumerate() {
        model.translation.for_each_source(term, |foreign, p| {
            for posting in table.postings(foreign) {
                let item = posting.item as usize;
                evidence[item * m + i] += T::from_u32(posting.tf).expect("tf fits scalar") * p;
                if !touched[item] {
                    touched[item] = true;
                    candidates.push(posting.item);
                }
            }
        });
    }

    let alpha = cfg.alpha;
    let lm: Vec<T> = terms
        .iter()
        .map(|(t, _)| model.lexical_lm.prob(t))
        .collect();
    let mut background = T::zero();
    for (i, (_, w)) in terms.iter().enumerate() {
        background += *w * log_factor(alpha, T::zero(), 1, lm[i]);
    }

    let mut scored: Vec<(u32, T)> = candidates
        .into_iter()
        .map(|item| {
            let length = table.length(item);
            let row = &evidence[item as usize * m..(item as usize + 1) * m];
            let mut score = T::zero();
            for (i, (_, w)) in terms.iter().enumerate() {
                score += *w * log_factor(alpha, row[i], length, lm[i]);
            }
            (item, score)
        })
        .filter(|(_, s)| s.is_finite())
        .collect();
    let order = |a: &(u32, T), b: &(u32, T)| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then_with(|| table.id_rank(a.0).cmp(&table.id_rank(b.0)))
    };
    scored.sort_by(order);

    let k = cfg.first_pass_k;
    let mut ranked: Vec<(u32, T)> = Vec::with_capacity(k.min(n));
    if background.is_finite() {
        // Items without evidence all share the background score; merge them
        // in id order with the scored candidates.
        let mut rest = table
            .ordinals_by_id()
            .iter()
            .copied()
            .filter(|&i| !touched[i as usize])
            .peekable();
        let mut scored = scored.into_iter().peekable();
        while ranked.len() < k {
            let next = match (scored.peek(), rest.peek()) {
                (Some(a), Some(&b)) => {
                    if order(a, &(b, background)) != Ordering::Greater {
                        scored.next()
                    } else {
                        rest.next().map(|b| (b, background))
                    }
                }
                (Some(_), None) => scored.next(),
                (None, Some(_)) => rest.next().map(|b| (b, background)),
                (None, None) => None,
            };
            match next {
                Some(x) => ranked.push(x),
                None => break,
            }
        }
    } else {
        scored.truncate(k);
        ranked = scored;
    }

    Ok(RankedList {
        items: ranked
            .into_iter()
            .map(|(item, score)| RankedItem {
                id: table.id(item).to_string(),
                score,
            })
            .collect(),
        provenance: query.provenance().to_string(),
    })
}

/// Rescores the top `second_pass_depth` items with lexical plus composite
/// event terms; the remainder keeps its first-pass order below them.
pub fn second_pass_rescore<T: Scalar>(
    first_pass: &RankedList<T>,
    query: &WeightedQuery<T>,
    index: &InvertedIndex,
    model: &RetrievalModel<T>,
    cfg: &ScoringConfig<T>,
) -> Result<RankedList<T>> {
    cfg.validate()?;
    let depth = cfg.second_pass_depth.min(first_pass.len());
    if depth == 0 {
        return Ok(first_pass.clone());
    }
    if query.terms().is_empty() {
        return Err(Error::EmptyQuery);
    }
    let table = index.table(cfg.target);
    let mut block = Vec::with_capacity(depth);
    for entry in &first_pass.items[..depth] {
        let item = table
            .ordinal(&entry.id)
            .ok_or_else(|| Error::UnknownItem(entry.id.clone()))?;
        let score = lexical_score(query, table, item, model, cfg.alpha)
            + feature_score(query, table, item, &model.feature_lm, cfg.alpha);
        block.push((item, score));
    }
    block.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then_with(|| table.id_rank(a.0).cmp(&table.id_rank(b.0)))
    });
    let mut items: Vec<RankedItem<T>> = block
        .into_iter()
        .map(|(item, score)| RankedItem {
            id: table.id(item).to_string(),
            score,
        })
        .collect();
    items.extend(first_pass.items[depth..].iter().cloned());
    Ok(RankedList {
        items,
        provenance: format!("{}+events", first_pass.provenance),
    })
}

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, IngestConfig, SentenceRecord};
use crate::{Error, Result, Scalar};

/// Registered query field names.
pub mod fields {
    pub const TASK_NARRATIVE: &str = "task-narrative";
    pub const REQUEST_NARRATIVE: &str = "request-narrative";
    pub const REQUEST_SAMPLE_DOC_EXCERPT: &str = "request-sample-doc-excerpt";
    pub const SEARCH_TERMS: &str = "search-terms";
    pub const SELECTED_SENTENCES: &str = "selected-sentences";

    pub const REGISTERED: &[&str] = &[
        TASK_NARRATIVE,
        REQUEST_NARRATIVE,
        REQUEST_SAMPLE_DOC_EXCERPT,
        SEARCH_TERMS,
        SELECTED_SENTENCES,
    ];
}

/// Graded relevance judgment levels, most relevant first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RelevanceLevel {
    /// Relevant to the current request, hence also to the task.
    RelevantToRequest,
    /// Relevant to the task but not to the request.
    RelevantToTask,
    /// No label; the sentence should not be shown again.
    Neutral,
    /// Relevant to neither the task nor the request.
    NotRelevant,
}

impl RelevanceLevel {
    pub const ALL: [RelevanceLevel; 4] = [
        RelevanceLevel::RelevantToRequest,
        RelevanceLevel::RelevantToTask,
        RelevanceLevel::Neutral,
        RelevanceLevel::NotRelevant,
    ];

    /// Change applied to the weight of every term of a judged sentence.
    pub fn feedback_delta(self) -> f64 {
        match self {
            RelevanceLevel::RelevantToRequest => 1.0,
            RelevanceLevel::RelevantToTask => 0.5,
            RelevanceLevel::Neutral => 0.0,
            RelevanceLevel::NotRelevant => -1.0,
        }
    }

    pub fn is_positive(self) -> bool {
        matches!(
            self,
            RelevanceLevel::RelevantToRequest | RelevanceLevel::RelevantToTask
        )
    }

    /// Star-widget encoding: 4 stars is the most relevant level.
    pub fn stars(self) -> u8 {
        match self {
            RelevanceLevel::RelevantToRequest => 4,
            RelevanceLevel::RelevantToTask => 3,
            RelevanceLevel::Neutral => 2,
            RelevanceLevel::NotRelevant => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RelevanceLevel::RelevantToRequest => "RelevantToRequest",
            RelevanceLevel::RelevantToTask => "RelevantToTask",
            RelevanceLevel::Neutral => "Neutral",
            RelevanceLevel::NotRelevant => "NotRelevant",
        }
    }
}

impl fmt::Display for RelevanceLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RelevanceLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let folded: String = s
            .chars()
            .filter(|c| *c != '_' && *c != '-')
            .collect::<String>()
            .to_lowercase();
        RelevanceLevel::ALL
            .into_iter()
            .find(|l| l.as_str().to_lowercase() == folded)
            .ok_or_else(|| Error::BadJudgmentLevel(s.to_string()))
    }
}

/// A set of weighted terms. Stored weights are always strictly positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", from = "RawQuery<T>")]
pub struct WeightedQuery<T> {
    terms: BTreeMap<String, T>,
    feature_terms: BTreeMap<String, T>,
    provenance: String,
}

#[derive(Deserialize)]
#[serde(bound = "T: Scalar")]
struct RawQuery<T> {
    #[serde(default)]
    terms: BTreeMap<String, T>,
    #[serde(default)]
    feature_terms: BTreeMap<String, T>,
    #[serde(default)]
    provenance: String,
}

impl<T: Scalar> From<RawQuery<T>> for WeightedQuery<T> {
    fn from(raw: RawQuery<T>) -> Self {
        let mut q = WeightedQuery::new(raw.provenance);
        q.terms = raw.terms;
        q.feature_terms = raw.feature_terms;
        q.prune();
        q
    }
}

impl<T: Scalar> WeightedQuery<T> {
    pub fn new(provenance: impl Into<String>) -> Self {
        WeightedQuery {
            terms: BTreeMap::new(),
            feature_terms: BTreeMap::new(),
            provenance: provenance.into(),
        }
    }

    pub fn from_terms<I, S>(terms: I) -> Self
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
    {
        let mut q = WeightedQuery::new("manual");
        for (t, w) in terms {
            q.set_weight(t, w);
        }
        q
    }

    pub fn terms(&self) -> &BTreeMap<String, T> {
        &self.terms
    }

    pub fn feature_terms(&self) -> &BTreeMap<String, T> {
        &self.feature_terms
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = provenance.into();
        self
    }

    pub fn weight(&self, term: &str) -> Option<T> {
        self.terms.get(term).copied()
    }

    /// Sets a lexical term weight; non-positive weights remove the term.
    pub fn set_weight(&mut self, term: impl Into<String>, weight: T) {
        let term = term.into();
        if weight > T::zero() {
            self.terms.insert(term, weight);
        } else {
            self.terms.remove(&term);
        }
    }

    pub fn set_feature_weight(&mut self, term: impl Into<String>, weight: T) {
        let term = term.into();
        if weight > T::zero() {
            self.feature_terms.insert(term, weight);
        } else {
            self.feature_terms.remove(&term);
        }
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty() && self.feature_terms.is_empty()
    }

    /// Multiplies every weight by `factor` (> 0).
    pub fn scaled(&self, factor: T) -> Self {
        let mut q = self.clone();
        q.terms.values_mut().for_each(|w| *w *= factor);
        q.feature_terms.values_mut().for_each(|w| *w *= factor);
        q.prune();
        q
    }

    fn prune(&mut self) {
        self.terms.retain(|_, w| *w > T::zero());
        self.feature_terms.retain(|_, w| *w > T::zero());
    }
}

/// Per-field term counts `c_s(v)`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QueryFields {
    fields: BTreeMap<String, BTreeMap<String, u32>>,
}

impl QueryFields {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_tokens<I, S>(&mut self, field: &str, tokens: I)
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let counts = self.fields.entry(field.to_string()).or_default();
        for t in tokens {
            *counts.entry(t.into()).or_default() += 1;
        }
        if counts.is_empty() {
            self.fields.remove(field);
        }
    }

    pub fn add_text(&mut self, field: &str, text: &str, config: &IngestConfig) {
        self.add_tokens(field, tokenize(text, config));
    }

    pub fn field(&self, field: &str) -> Option<&BTreeMap<String, u32>> {
        self.fields.get(field)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &BTreeMap<String, u32>)> {
        self.fields.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }
}

/// Field weights `θ_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", transparent)]
pub struct FieldWeights<T> {
    theta: BTreeMap<String, T>,
}

impl<T: Scalar> Default for FieldWeights<T> {
    fn default() -> Self {
        let theta = [
            (fields::SEARCH_TERMS, 2.0),
            (fields::SELECTED_SENTENCES, 1.0),
            (fields::TASK_NARRATIVE, 0.5),
            (fields::REQUEST_NARRATIVE, 1.0),
            (fields::REQUEST_SAMPLE_DOC_EXCERPT, 1.0),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), T::lit(v)))
        .collect();
        FieldWeights { theta }
    }
}

impl<T: Scalar> FieldWeights<T> {
    pub fn empty() -> Self {
        FieldWeights {
            theta: BTreeMap::new(),
        }
    }

    pub fn with(mut self, field: &str, weight: T) -> Self {
        self.set(field, weight);
        self
    }

    pub fn set(&mut self, field: &str, weight: T) {
        self.theta.insert(field.to_string(), weight);
    }

    pub fn get(&self, field: &str) -> Option<T> {
        self.theta.get(field).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, T)> {
        self.theta.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn validate(&self) -> Result<()> {
        for (field, w) in &self.theta {
            if !fields::REGISTERED.contains(&field.as_str()) {
                return Err(Error::UnregisteredField(field.clone()));
            }
            if *w < T::zero() || !w.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "weight of field {field} must be finite and >= 0"
                )));
            }
        }
        Ok(())
    }
}

/// `w(v) = Σ_s c_s(v)·θ_s`, dropping terms whose weight is not positive.
pub fn build_weighted_query<T: Scalar>(
    fields: &QueryFields,
    weights: &FieldWeights<T>,
) -> Result<WeightedQuery<T>> {
    let mut acc: BTreeMap<&str, T> = BTreeMap::new();
    let mut used = Vec::new();
    for (field, counts) in fields.iter() {
        if !fields::REGISTERED.contains(&field) {
            return Err(Error::UnregisteredField(field.to_string()));
        }
        let theta = weights
            .get(field)
            .ok_or_else(|| Error::MissingFieldWeight(field.to_string()))?;
        used.push(field);
        for (term, &c) in counts {
            *acc.entry(term.as_str()).or_insert_with(T::zero) +=
                T::from_u32(c).expect("count fits scalar") * theta;
        }
    }
    let mut query = WeightedQuery::new(format!("fields[{}]", used.join(",")));
    for (term, w) in acc {
        query.set_weight(term, w);
    }
    Ok(query)
}

/// Adds each judged sentence's level delta once to every distinct term of
/// that sentence. Absent terms start at 0; non-positive results are pruned.
pub fn apply_feedback<'a, T, I>(query: &WeightedQuery<T>, judged: I) -> WeightedQuery<T>
where
    T: Scalar,
    I: IntoIterator<Item = (&'a SentenceRecord, RelevanceLevel)>,
{
    let mut weights: BTreeMap<String, T> = query.terms.clone();
    for (sentence, level) in judged {
        if level == RelevanceLevel::Neutral {
            continue;
        }
        let delta = T::lit(level.feedback_delta());
        let mut seen: Vec<&str> = sentence.tokens.iter().map(String::as_str).collect();
        seen.sort_unstable();
        seen.dedup();
        for term in seen {
            *weights.entry(term.to_string()).or_insert_with(T::zero) += delta;
        }
    }
    let mut out = WeightedQuery {
        terms: weights,
        feature_terms: query.feature_terms.clone(),
        provenance: query.provenance.clone(),
    };
    out.prune();
    out
}

/// Convex combination `mix·a + (1−mix)·b` over the union vocabulary.
pub fn merge_queries<T: Scalar>(
    a: &WeightedQuery<T>,
    b: &WeightedQuery<T>,
    mix: T,
) -> WeightedQuery<T> {
    fn combine<T: Scalar>(
        a: &BTreeMap<String, T>,
        b: &BTreeMap<String, T>,
        mix: T,
    ) -> BTreeMap<String, T> {
        let mut out = BTreeMap::new();
        for term in a.keys().chain(b.keys()) {
            if out.contains_key(term) {
                continue;
            }
            let wa = a.get(term).copied().unwrap_or_else(T::zero);
            let wb = b.get(term).copied().unwrap_or_else(T::zero);
            let w = if wa == wb {
                wa
            } else {
                mix * wa + (T::one() - mix) * wb
            };
            out.insert(term.clone(), w);
        }
        out
    }
    let mut q = WeightedQuery {
        terms: combine(&a.terms, &b.terms, mix),
        feature_terms: combine(&a.feature_terms, &b.feature_terms, mix),
        provenance: if a.provenance == b.provenance {
            a.provenance.clone()
        } else {
            format!("merge({},{})", a.provenance, b.provenance)
        },
    };
    q.prune();
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sentence(text: &str) -> SentenceRecord {
        SentenceRecord {
            sentence_id: "d:0".into(),
            doc_id: "d".into(),
            position: 0,
            text: text.into(),
            tokens: tokenize(text, &IngestConfig::default()),
            event_features: vec![],
        }
    }

    fn fields(spec: &[(&str, &[(&str, u32)])]) -> QueryFields {
        let mut f = QueryFields::new();
        for (name, counts) in spec {
            for (t, c) in *counts {
                f.add_tokens(name, std::iter::repeat_n(*t, *c as usize));
            }
        }
        f
    }

    #[test]
    fn field_weighted_counts() {
        let f = fields(&[(fields::SEARCH_TERMS, &[("flint", 1), ("water", 2)])]);
        let w = FieldWeights::<f64>::empty().with(fields::SEARCH_TERMS, 2.0);
        let q = build_weighted_query(&f, &w).unwrap();
        assert_eq!(
            q.terms(),
            &BTreeMap::from([("flint".into(), 2.0), ("water".into(), 4.0)])
        );
    }

    #[test]
    fn cross_field_sum() {
        let f = fields(&[
            (fields::SEARCH_TERMS, &[("x", 1)]),
            (fields::SELECTED_SENTENCES, &[("x", 1)]),
        ]);
        let w = FieldWeights::<f64>::empty()
            .with(fields::SEARCH_TERMS, 1.0)
            .with(fields::SELECTED_SENTENCES, 0.5);
        assert_eq!(build_weighted_query(&f, &w).unwrap().weight("x"), Some(1.5));
    }

    #[test]
    fn empty_fields_give_empty_query() {
        let q = build_weighted_query::<f64>(&QueryFields::new(), &FieldWeights::default()).unwrap();
        assert!(q.is_empty());
    }

    #[test]
    fn unregistered_or_unweighted_field_is_an_error() {
        let f = fields(&[("headline", &[("x", 1)])]);
        let err = build_weighted_query::<f64>(&f, &FieldWeights::default()).unwrap_err();
        assert_eq!(err.to_string(), "unregistered query field headline");

        let f = fields(&[(fields::SEARCH_TERMS, &[("x", 1)])]);
        let err = build_weighted_query::<f64>(&f, &FieldWeights::empty()).unwrap_err();
        assert!(matches!(err, Error::MissingFieldWeight(_)));
    }

    #[test]
    fn zero_theta_drops_terms() {
        let f = fields(&[(fields::TASK_NARRATIVE, &[("x", 3)])]);
        let w = FieldWeights::<f64>::empty().with(fields::TASK_NARRATIVE, 0.0);
        assert!(build_weighted_query(&f, &w).unwrap().is_empty());
    }

    #[test]
    fn feedback_deltas_per_level() {
        let q = WeightedQuery::from_terms([("flint", 1.0f64)]);
        let s = sentence("Flint water, flint lead.");
        let after = |level| apply_feedback(&q, [(&s, level)]);

        let r = after(RelevanceLevel::RelevantToRequest);
        assert_eq!(r.weight("flint"), Some(2.0));
        assert_eq!(r.weight("water"), Some(1.0));
        assert_eq!(
            after(RelevanceLevel::RelevantToTask).weight("flint"),
            Some(1.5)
        );
        let n = after(RelevanceLevel::NotRelevant);
        assert_eq!(n.weight("flint"), None);
        assert!(n.is_empty());
        assert_eq!(after(RelevanceLevel::Neutral), q);
    }

    #[test]
    fn feedback_round_trip() {
        let q = WeightedQuery::from_terms([("flint", 1.0f64), ("crisis", 0.25)]);
        let s = sentence("Flint water crisis");
        let up = apply_feedback(&q, [(&s, RelevanceLevel::RelevantToRequest)]);
        let back = apply_feedback(&up, [(&s, RelevanceLevel::NotRelevant)]);
        assert_eq!(back, q);
    }

    #[test]
    fn merge_examples() {
        let a = WeightedQuery::from_terms([("x", 2.0f64)]);
        let b = WeightedQuery::from_terms([("x", 1.0f64), ("y", 1.0)]);
        assert_eq!(merge_queries(&a, &b, 1.0), a);
        assert_eq!(merge_queries(&a, &b, 0.0).terms(), b.terms());
        let m = merge_queries(&a, &b, 0.5);
        assert_eq!(m.weight("x"), Some(1.5));
        assert_eq!(m.weight("y"), Some(0.5));
        assert_eq!(merge_queries(&a, &a, 0.3), a);
    }

    #[test]
    fn relevance_level_parsing() {
        assert_eq!(
            "RelevantToRequest".parse::<RelevanceLevel>().unwrap(),
            RelevanceLevel::RelevantToRequest
        );
        assert_eq!(
            "not_relevant".parse::<RelevanceLevel>().unwrap(),
            RelevanceLevel::NotRelevant
        );
        assert!(matches!(
            "five-stars".parse::<RelevanceLevel>(),
            Err(Error::BadJudgmentLevel(_))
        ));
        let stars: Vec<u8> = RelevanceLevel::ALL.iter().map(|l| l.stars()).collect();
        assert_eq!(stars, [4, 3, 2, 1]);
    }

    #[test]
    fn export_format_and_pruning_on_load() {
        let mut q = WeightedQuery::from_terms([("flint", 2.0f64)]).with_provenance("session");
        q.set_feature_weight("switch▸agent▸manager", 1.0);
        let json = serde_json::to_string(&q).unwrap();
        assert_eq!(
            json,
            r#"{"terms":{"flint":2.0},"feature_terms":{"switch▸agent▸manager":1.0},"provenance":"session"}"#
        );
        let loaded: WeightedQuery<f64> =
            serde_json::from_str(r#"{"terms":{"a":1.0,"b":-1.0,"c":0.0},"provenance":"x"}"#)
                .unwrap();
        assert_eq!(loaded.terms().len(), 1);
    }
}

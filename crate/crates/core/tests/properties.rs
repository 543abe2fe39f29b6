use std::collections::BTreeMap;
use std::path::Path;

use proptest::prelude::*;
use querybuilder_core::corpus::Target;
use querybuilder_core::eval::{ndcg_at_k, Qrels};
use querybuilder_core::neural_ir::{cosine_similarity, EmbeddingVector, VectorIndex};
use querybuilder_core::prob_ir::{apply_feedback, first_pass_search, ScoringConfig};
use querybuilder_core::{
    Corpus, IngestConfig, RelevanceLevel, RetrievalModel, SentenceRecord, TranslationTable,
    WeightedQuery,
};

fn token() -> impl Strategy<Value = String> {
    prop::sample::select(vec![
        "lead", "water", "pipe", "flint", "river", "city", "test", "child",
    ])
    .prop_map(String::from)
}

fn level() -> impl Strategy<Value = RelevanceLevel> {
    prop::sample::select(RelevanceLevel::ALL.to_vec())
}

fn record(tokens: Vec<String>) -> SentenceRecord {
    SentenceRecord {
        sentence_id: "d:0".into(),
        doc_id: "d".into(),
        position: 0,
        text: tokens.join(" "),
        tokens,
        event_features: vec![],
    }
}

proptest! {
    #[test]
    fn ndcg_is_a_fraction(grades in prop::collection::vec(0u32..4, 1..12), seed in any::<u64>(), k in 1usize..15) {
        let row: BTreeMap<String, u32> = grades.iter().enumerate().map(|(i, g)| (format!("d{i}"), *g)).collect();
        let mut ranking: Vec<String> = row.keys().cloned().collect();
        let n = ranking.len();
        ranking.rotate_left(seed as usize % n);
        let v: f64 = ndcg_at_k(&ranking, Some(&row), k);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
    }

    #[test]
    fn feedback_keeps_weights_positive(
        base in prop::collection::btree_map(token(), 0.25f64..4.0, 1..5),
        judged in prop::collection::vec((prop::collection::vec(token(), 1..8), level()), 0..6),
    ) {
        let q = WeightedQuery::from_terms(base);
        let records: Vec<(SentenceRecord, RelevanceLevel)> = judged.into_iter().map(|(t, l)| (record(t), l)).collect();
        let out = apply_feedback(&q, records.iter().map(|(s, l)| (s, *l)));
        prop_assert!(out.terms().values().all(|w| *w > 0.0));
    }

    #[test]
    fn first_pass_output_is_ranked(
        docs in prop::collection::vec(prop::collection::vec(token(), 1..20), 1..15),
        query in prop::collection::btree_map(token(), 0.1f64..3.0, 1..4),
        alpha in 0.05f64..1.0,
    ) {
        let corpus = Corpus::from_texts(
            IngestConfig::default(),
            docs.iter().enumerate().map(|(i, t)| (format!("d{i:02}"), t.join(" "))),
        ).unwrap();
        let index = corpus.build_index();
        let model = RetrievalModel::from_index(&index, TranslationTable::Identity).unwrap();
        let mut cfg = ScoringConfig::for_target(Target::Documents);
        cfg.alpha = alpha;
        let list = first_pass_search(&WeightedQuery::from_terms(query), &index, &model, &cfg).unwrap();
        prop_assert!(list.is_ranked());
        prop_assert_eq!(list.len(), docs.len());
    }

    #[test]
    fn qrels_trec_round_trip(rows in prop::collection::btree_map(("q[0-9]", "d[0-9]{1,3}"), 0u32..4, 0..20)) {
        let mut qrels = Qrels::new();
        for ((q, d), g) in &rows {
            qrels.insert(q.clone(), d.clone(), *g);
        }
        let again = Qrels::parse(&qrels.to_trec(), Path::new("mem")).unwrap();
        prop_assert_eq!(again, qrels);
    }

    #[test]
    fn cosine_is_bounded_and_symmetric(
        a in prop::collection::vec(-5.0f64..5.0, 8),
        b in prop::collection::vec(-5.0f64..5.0, 8),
    ) {
        prop_assume!(a.iter().any(|x| x.abs() > 1e-6) && b.iter().any(|x| x.abs() > 1e-6));
        let (a, b) = (EmbeddingVector::normalized(a).unwrap(), EmbeddingVector::normalized(b).unwrap());
        let ab = cosine_similarity(&a, &b).unwrap();
        prop_assert!((-1.0..=1.0).contains(&ab));
        prop_assert_eq!(ab, cosine_similarity(&b, &a).unwrap());
    }

    #[test]
    fn vector_index_file_round_trip(rows in prop::collection::vec(prop::collection::vec(0.1f64..1.0, 4), 1..20)) {
        let entries = rows.iter().enumerate().map(|(i, r)| (format!("d{i}:0"), EmbeddingVector::normalized(r.clone()).unwrap()));
        let index = VectorIndex::from_entries(4, "test", entries).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.qbv");
        index.save(&path).unwrap();
        let loaded = VectorIndex::<f64>::load(&path).unwrap();
        prop_assert_eq!(loaded.ids(), index.ids());
        for id in index.ids() {
            prop_assert_eq!(loaded.vector(id), index.vector(id));
        }
    }
}

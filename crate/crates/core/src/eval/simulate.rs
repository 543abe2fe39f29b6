//! Synthetic end-to-end run of the feedback loop with a scripted user.

use std::fmt::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{evaluate_run, Qrels, RunResult};
use crate::corpus::{Corpus, IngestConfig, Target};
use crate::prob_ir::{first_pass_search, ScoringConfig, TranslationTable};
use crate::session::{Engine, Session, SessionConfig};
use crate::{RelevanceLevel, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub seed: u64,
    pub docs: usize,
    pub topics: usize,
    pub relevant_per_topic: usize,
    /// Documents per topic mentioning only the searched keyword.
    pub distractors_per_topic: usize,
    pub keywords_per_topic: usize,
    pub background_vocab: usize,
    pub sentences_per_doc: usize,
    /// Planted keywords the simulated user types as search terms.
    pub search_keywords: usize,
    /// Retrieved sentences the user inspects per round.
    pub judge_depth: usize,
    pub feedback_rounds: usize,
    /// nDCG cutoff.
    pub k: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            seed: 7,
            docs: 200,
            topics: 5,
            relevant_per_topic: 10,
            distractors_per_topic: 10,
            keywords_per_topic: 6,
            background_vocab: 300,
            sentences_per_doc: 6,
            search_keywords: 1,
            judge_depth: 10,
            feedback_rounds: 1,
            k: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicOutcome {
    pub topic: String,
    pub search_terms: String,
    pub judged: usize,
    pub selected: usize,
    pub before: f64,
    pub after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub config: SimulationConfig,
    pub topics: Vec<TopicOutcome>,
    pub mean_before: f64,
    pub mean_after: f64,
    pub gain: f64,
}

impl SimulationReport {
    pub fn to_text(&self) -> String {
        let c = &self.config;
        let mut out = String::new();
        writeln!(
            out,
            "simulated user: seed {}, {} docs, {} topics, {} relevant/topic, {} feedback round(s)",
            c.seed, c.docs, c.topics, c.relevant_per_topic, c.feedback_rounds
        )
        .unwrap();
        writeln!(
            out,
            "{:<8}  {:<14}  {:>6}  {:>8}  {:>9}  {:>9}",
            "topic",
            "search terms",
            "judged",
            "selected",
            format!("before@{}", c.k),
            format!("after@{}", c.k)
        )
        .unwrap();
        for t in &self.topics {
            writeln!(
                out,
                "{:<8}  {:<14}  {:>6}  {:>8}  {:>9.4}  {:>9.4}",
                t.topic, t.search_terms, t.judged, t.selected, t.before, t.after
            )
            .unwrap();
        }
        writeln!(
            out,
            "mean nDCG@{}: before {:.4}  after {:.4}  gain {:+.4}",
            c.k, self.mean_before, self.mean_after, self.gain
        )
        .unwrap();
        out
    }
}

fn keyword(topic: usize, j: usize) -> String {
    format!("topic{topic}kw{j}")
}

fn sentence(words: Vec<String>) -> String {
    let mut s = words.join(" ");
    if let Some(first) = s.get(0..1) {
        let upper = first.to_uppercase();
        s.replace_range(0..1, &upper);
    }
    s + "."
}

/// The planted corpus and its doc-level qrels.
pub(super) fn synthetic_corpus(cfg: &SimulationConfig) -> Result<(Corpus, Qrels)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let background: Vec<String> = (0..cfg.background_vocab)
        .map(|i| format!("word{i}"))
        .collect();
    let filler = |rng: &mut ChaCha8Rng, n: usize| -> Vec<String> {
        (0..n)
            .map(|_| background[rng.gen_range(0..background.len())].clone())
            .collect()
    };
    let mut qrels = Qrels::new();
    let mut docs = Vec::with_capacity(cfg.docs);
    let planted = cfg.topics * (cfg.relevant_per_topic + cfg.distractors_per_topic);
    // Document ids are shuffled so planting order says nothing about rank ties.
    let mut slots: Vec<usize> = (0..cfg.docs.max(planted)).collect();
    slots.shuffle(&mut rng);
    let mut next = slots.into_iter().map(|i| format!("doc{i:04}"));
    for topic in 0..cfg.topics {
        for _ in 0..cfg.relevant_per_topic {
            let id = next.next().expect("enough ids");
            let mut sentences: Vec<String> = (0..cfg.sentences_per_doc)
                .map(|_| {
                    let n = rng.gen_range(8..14);
                    sentence(filler(&mut rng, n))
                })
                .collect();
            // Two topical sentences, each with 2 or 3 distinct keywords.
            for pos in rand::seq::index::sample(
                &mut rng,
                cfg.sentences_per_doc,
                2.min(cfg.sentences_per_doc),
            ) {
                let mut kws: Vec<usize> = (0..cfg.keywords_per_topic).collect();
                kws.shuffle(&mut rng);
                let take = rng.gen_range(2..=3).min(cfg.keywords_per_topic);
                let n = rng.gen_range(6..10);
                let mut words = filler(&mut rng, n);
                for &kw in &kws[..take] {
                    let at = rng.gen_range(0..=words.len());
                    words.insert(at, keyword(topic, kw));
                }
                sentences[pos] = sentence(words);
            }
            qrels.insert(format!("topic{topic}"), id.clone(), 1);
            docs.push((id, sentences.join(" ")));
        }
        for _ in 0..cfg.distractors_per_topic {
            let id = next.next().expect("enough ids");
            let sentences: Vec<String> = (0..cfg.sentences_per_doc)
                .map(|i| {
                    let n = rng.gen_range(8..14);
                    let mut words = filler(&mut rng, n);
                    if i == 0 {
                        let at = rng.gen_range(0..=words.len());
                        words.insert(
                            at,
                            keyword(topic, rng.gen_range(0..cfg.search_keywords.max(1))),
                        );
                    }
                    sentence(words)
                })
                .collect();
            docs.push((id, sentences.join(" ")));
        }
    }
    for id in next.take(cfg.docs.saturating_sub(planted)) {
        let sentences: Vec<String> = (0..cfg.sentences_per_doc)
            .map(|_| {
                let n = rng.gen_range(8..14);
                sentence(filler(&mut rng, n))
            })
            .collect();
        docs.push((id, sentences.join(" ")));
    }
    let corpus = Corpus::from_texts(IngestConfig::default(), docs)?;
    Ok((corpus, qrels))
}

/// Search-terms-only retrieval, then `feedback_rounds` rounds in which the
/// scripted user marks inspected sentences holding at least two planted
/// keywords RelevantToRequest and the rest Neutral. Documents are ranked
/// with the query before and after feedback and scored with nDCG@k.
pub fn simulated_user_experiment(cfg: &SimulationConfig) -> Result<SimulationReport> {
    let (corpus, qrels) = synthetic_corpus(cfg)?;
    let index = corpus.build_index();
    let engine = Engine::new(corpus, index, TranslationTable::Identity)?;
    let session_cfg = SessionConfig::default();
    let mut doc_cfg = ScoringConfig::<f64>::for_target(Target::Documents);
    doc_cfg.first_pass_k = cfg.k;
    doc_cfg.second_pass_depth = 0;

    let mut before_run = RunResult::new("search terms");
    let mut after_run = RunResult::new("+ feedback");
    let mut topics = Vec::with_capacity(cfg.topics);
    for topic in 0..cfg.topics {
        let qid = format!("topic{topic}");
        let terms: Vec<String> = (0..cfg.search_keywords)
            .map(|j| keyword(topic, j))
            .collect();
        let terms = terms.join(" ");
        let mut session =
            Session::create_with_id(qid.clone(), &qid, &qid, session_cfg.clone(), None)?;
        let is_planted = |t: &String| t.starts_with(&format!("topic{topic}kw"));

        let mut outcome = session.run_initial_search(&engine, &terms, cfg.judge_depth)?;
        let before_query = outcome.query.clone();
        for round in 0..cfg.feedback_rounds {
            for item in &outcome.results.items {
                let s = engine.sentence(&item.id)?;
                let hits = s.tokens.iter().filter(|t| is_planted(t)).count();
                let level = if hits >= 2 {
                    RelevanceLevel::RelevantToRequest
                } else {
                    RelevanceLevel::Neutral
                };
                session.record_judgment(&engine, &item.id, level)?;
            }
            if round + 1 < cfg.feedback_rounds {
                outcome = session.run_initial_search(&engine, &terms, cfg.judge_depth)?;
            }
        }
        let after_query = if cfg.feedback_rounds == 0 {
            before_query.clone()
        } else {
            session.current_query(&engine)?
        };
        let before = first_pass_search(&before_query, &engine.index, &engine.model, &doc_cfg)?;
        let after = first_pass_search(&after_query, &engine.index, &engine.model, &doc_cfg)?;
        before_run.insert_ranked(&qid, &before);
        after_run.insert_ranked(&qid, &after);
        let row = qrels.row(&qid);
        topics.push(TopicOutcome {
            topic: qid.clone(),
            search_terms: terms,
            judged: session.judgments().len(),
            selected: session.selected_sentence_ids().len(),
            before: super::ndcg_at_k(&before_run.rankings[&qid], row, cfg.k),
            after: super::ndcg_at_k(&after_run.rankings[&qid], row, cfg.k),
        });
    }
    let mean_before = evaluate_run::<f64>(&before_run, &qrels, cfg.k, false)?.mean;
    let mean_after = evaluate_run::<f64>(&after_run, &qrels, cfg.k, false)?.mean;
    Ok(SimulationReport {
        config: cfg.clone(),
        topics,
        mean_before,
        mean_after,
        gain: mean_after - mean_before,
    })
}

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{Session, Stage};

/// One iteration of one stage, averaged over the sessions that reached it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRow {
    pub iteration: u32,
    /// Mean number of search-term tokens entered in this iteration.
    pub search_terms: f64,
    /// Sessions that reached this iteration.
    pub requests: usize,
    /// Mean number of positively judged sentences per session.
    pub relevant: f64,
    pub relevant_total: usize,
    /// Mean token length of those sentences.
    pub relevant_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageStats {
    pub stage: Stage,
    pub rows: Vec<IterationRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStats {
    pub sessions: usize,
    pub stages: Vec<StageStats>,
}

#[derive(Default)]
struct Cell {
    requests: usize,
    term_sum: usize,
    relevant: usize,
    length_sum: usize,
}

pub fn compute_stats(sessions: &[Session]) -> SessionStats {
    let mut cells: BTreeMap<(Stage, u32), Cell> = BTreeMap::new();
    for s in sessions {
        for search in s.searches() {
            let cell = cells.entry((Stage::Initial, search.iteration)).or_default();
            cell.requests += 1;
            cell.term_sum += search.term_count;
        }
        for e in s.enrichments() {
            cells
                .entry((Stage::Enrichment, e.iteration))
                .or_default()
                .requests += 1;
        }
        let mut early = false;
        for j in s.judgments().values().filter(|j| j.level.is_positive()) {
            let cell = cells.entry((j.stage, j.iteration)).or_default();
            cell.relevant += 1;
            cell.length_sum += j.token_len;
            early |= j.iteration == 0;
        }
        if early {
            // Judgments made before the first search form their own row.
            cells.entry((Stage::Initial, 0)).or_default().requests += 1;
        }
    }
    let mut stages = vec![
        StageStats {
            stage: Stage::Initial,
            rows: vec![],
        },
        StageStats {
            stage: Stage::Enrichment,
            rows: vec![],
        },
    ];
    let mean = |sum: usize, n: usize| if n == 0 { 0.0 } else { sum as f64 / n as f64 };
    for ((stage, iteration), cell) in cells {
        let row = IterationRow {
            iteration,
            search_terms: mean(cell.term_sum, cell.requests),
            requests: cell.requests,
            relevant: mean(cell.relevant, cell.requests),
            relevant_total: cell.relevant,
            relevant_length: mean(cell.length_sum, cell.relevant),
        };
        stages[stage as usize].rows.push(row);
    }
    SessionStats {
        sessions: sessions.len(),
        stages,
    }
}

impl SessionStats {
    pub fn total_relevant(&self) -> usize {
        self.stages
            .iter()
            .flat_map(|s| &s.rows)
            .map(|r| r.relevant_total)
            .sum()
    }

    /// Aligned text table, one block per stage.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for stage in &self.stages {
            let title = match stage.stage {
                Stage::Initial => "1st annotation stage (search)",
                Stage::Enrichment => "2nd annotation stage (query enrichment)",
            };
            writeln!(out, "{title}").unwrap();
            writeln!(
                out,
                "{:>9}  {:>14}  {:>10}  {:>12}  {:>17}",
                "iteration", "# search terms", "# requests", "# rel. sent.", "rel. sent. length"
            )
            .unwrap();
            for r in &stage.rows {
                writeln!(
                    out,
                    "{:>9}  {:>14.2}  {:>10}  {:>12.2}  {:>17.2}",
                    r.iteration, r.search_terms, r.requests, r.relevant, r.relevant_length
                )
                .unwrap();
            }
        }
        out
    }
}

//! nDCG evaluation of trec-format runs against graded qrels.

mod simulate;

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::prob_ir::RankedList;
use crate::{Error, Result, Scalar};

pub use simulate::{simulated_user_experiment, SimulationConfig, SimulationReport, TopicOutcome};

/// Default rank cutoff.
pub const DEFAULT_K: usize = 20;

/// Graded judgments: query id → doc id → grade. Missing pairs are grade 0.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Qrels {
    rows: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, query_id: impl Into<String>, doc_id: impl Into<String>, grade: u32) {
        self.rows
            .entry(query_id.into())
            .or_default()
            .insert(doc_id.into(), grade);
    }

    pub fn row(&self, query_id: &str) -> Option<&BTreeMap<String, u32>> {
        self.rows.get(query_id)
    }

    pub fn grade(&self, query_id: &str, doc_id: &str) -> u32 {
        self.row(query_id)
            .and_then(|r| r.get(doc_id))
            .copied()
            .unwrap_or(0)
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.rows.keys().map(String::as_str)
    }

    /// Parses `query_id iteration doc_id grade` lines.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut qrels = Qrels::new();
        for (n, line) in text.lines().enumerate() {
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.is_empty() || cols[0].starts_with('#') {
                continue;
            }
            let [q, _, d, g] = cols[..] else {
                return Err(Error::malformed(
                    origin,
                    n + 1,
                    "expected `query_id 0 doc_id grade`",
                ));
            };
            let grade: i64 = g
                .parse()
                .map_err(|e| Error::malformed(origin, n + 1, format!("bad grade {g:?}: {e}")))?;
            if grade < 0 {
                return Err(Error::malformed(
                    origin,
                    n + 1,
                    format!("negative grade {grade}"),
                ));
            }
            qrels.insert(q, d, grade as u32);
        }
        Ok(qrels)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_trec(&self) -> String {
        let mut out = String::new();
        for (q, row) in &self.rows {
            for (d, g) in row {
                writeln!(out, "{q} 0 {d} {g}").unwrap();
            }
        }
        out
    }
}

/// Ranked doc ids per query, under one run label.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub label: String,
    pub rankings: BTreeMap<String, Vec<String>>,
}

impl RunResult {
    pub fn new(label: impl Into<String>) -> Self {
        RunResult {
            label: label.into(),
            rankings: BTreeMap::new(),
        }
    }

    /// Adds a query's ranking. Duplicate doc ids keep their first position.
    pub fn insert(
        &mut self,
        query_id: impl Into<String>,
        ranking: impl IntoIterator<Item = impl Into<String>>,
    ) {
        let mut seen = HashSet::new();
        let docs = ranking
            .into_iter()
            .map(Into::into)
            .filter(|d: &String| seen.insert(d.clone()))
            .collect();
        self.rankings.insert(query_id.into(), docs);
    }

    pub fn insert_ranked<T: Scalar>(&mut self, query_id: impl Into<String>, list: &RankedList<T>) {
        self.insert(query_id, list.ids().map(str::to_string));
    }

    pub fn is_empty(&self) -> bool {
        self.rankings.values().all(Vec::is_empty)
    }

    /// Parses `query_id Q0 doc_id rank score label` lines, ordering each
    /// query by the rank column. The label comes from the first line.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut label = None;
        let mut rows: BTreeMap<String, Vec<(u64, String)>> = BTreeMap::new();
        let mut seen: HashSet<(String, String)> = HashSet::new();
        for (n, line) in text.lines().enumerate() {
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.is_empty() || cols[0].starts_with('#') {
                continue;
            }
            let [q, _, d, rank, score, tag] = cols[..] else {
                return Err(Error::malformed(
                    origin,
                    n + 1,
                    "expected `query_id Q0 doc_id rank score label`",
                ));
            };
            let rank: u64 = rank
                .parse()
                .map_err(|e| Error::malformed(origin, n + 1, format!("bad rank {rank:?}: {e}")))?;
            score.parse::<f64>().map_err(|e| {
                Error::malformed(origin, n + 1, format!("bad score {score:?}: {e}"))
            })?;
            if !seen.insert((q.to_string(), d.to_string())) {
                return Err(Error::malformed(
                    origin,
                    n + 1,
                    format!("duplicate doc {d} for query {q}"),
                ));
            }
            label.get_or_insert_with(|| tag.to_string());
            rows.entry(q.to_string())
                .or_default()
                .push((rank, d.to_string()));
        }
        let mut run = RunResult::new(label.unwrap_or_default());
        for (q, mut docs) in rows {
            docs.sort_by_key(|(rank, _)| *rank);
            run.rankings
                .insert(q, docs.into_iter().map(|(_, d)| d).collect());
        }
        Ok(run)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }
}

/// Writes a ranked list as trec run lines.
pub fn trec_lines<T: Scalar>(query_id: &str, list: &RankedList<T>, label: &str) -> String {
    let mut out = String::new();
    for (i, item) in list.items.iter().enumerate() {
        writeln!(
            out,
            "{query_id} Q0 {} {} {:.6} {label}",
            item.id,
            i + 1,
            item.score
        )
        .unwrap();
    }
    out
}

fn gain<T: Scalar>(grade: u32) -> T {
    T::lit(2f64.powi(grade as i32) - 1.0)
}

fn discount<T: Scalar>(rank: usize) -> T {
    T::from_count(rank + 1).log2()
}

/// nDCG@k with gain `2^g − 1` and discount `log2(i + 1)`; 0 when no
/// document in `row` has a positive grade, and for `k = 0`.
pub fn ndcg_at_k<T: Scalar, S: AsRef<str>>(
    ranking: &[S],
    row: Option<&BTreeMap<String, u32>>,
    k: usize,
) -> T {
    let Some(row) = row else { return T::zero() };
    let mut ideal: Vec<u32> = row.values().copied().filter(|&g| g > 0).collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: T = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| gain::<T>(g) / discount::<T>(i + 1))
        .sum();
    if idcg <= T::zero() {
        return T::zero();
    }
    let dcg: T = ranking
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, d)| gain::<T>(row.get(d.as_ref()).copied().unwrap_or(0)) / discount::<T>(i + 1))
        .sum();
    dcg / idcg
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Evaluation<T> {
    pub label: String,
    pub k: usize,
    pub per_query: BTreeMap<String, T>,
    /// Mean over the queries that count (see [`evaluate_run`]).
    pub mean: T,
    pub counted: usize,
    /// Run queries absent from the qrels; scored 0 and left out of the mean.
    pub missing: Vec<String>,
}

/// Per-query nDCG@k of `run` and their mean over queries present in `qrels`.
/// With `skip_empty`, queries without any positive grade are left out of
/// the mean as well.
pub fn evaluate_run<T: Scalar>(
    run: &RunResult,
    qrels: &Qrels,
    k: usize,
    skip_empty: bool,
) -> Result<Evaluation<T>> {
    if run.rankings.is_empty() {
        return Err(Error::EmptyRun);
    }
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    let mut per_query = BTreeMap::new();
    let mut missing = Vec::new();
    let mut sum = T::zero();
    let mut counted = 0;
    for (q, ranking) in &run.rankings {
        let row = qrels.row(q);
        let value = ndcg_at_k::<T, _>(ranking, row, k);
        per_query.insert(q.clone(), value);
        match row {
            None => missing.push(q.clone()),
            Some(row) if skip_empty && row.values().all(|&g| g == 0) => {}
            Some(_) => {
                sum += value;
                counted += 1;
            }
        }
    }
    let mean = if counted == 0 {
        T::zero()
    } else {
        sum / T::from_count(counted)
    };
    Ok(Evaluation {
        label: run.label.clone(),
        k,
        per_query,
        mean,
        counted,
        missing,
    })
}

impl<T: Scalar> Evaluation<T> {
    pub fn to_text(&self) -> String {
        let width = self
            .per_query
            .keys()
            .map(String::len)
            .max()
            .unwrap_or(0)
            .max(4);
        let mut out = String::new();
        for (q, v) in &self.per_query {
            writeln!(out, "{q:<width$}  ndcg@{}  {v:.4}", self.k).unwrap();
        }
        writeln!(out, "{:<width$}  ndcg@{}  {:.4}", "mean", self.k, self.mean).unwrap();
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ComparisonRow<T> {
    pub label: String,
    /// Mean nDCG per qrels column.
    pub values: Vec<T>,
    /// Difference from the first run, per column.
    pub deltas: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Comparison<T> {
    pub k: usize,
    pub columns: Vec<String>,
    pub rows: Vec<ComparisonRow<T>>,
}

/// One row per run and one column per named qrels, with deltas against the
/// first run.
pub fn compare_runs<T: Scalar>(
    runs: &[RunResult],
    qrels: &[(String, Qrels)],
    k: usize,
) -> Result<Comparison<T>> {
    if runs.len() < 2 {
        return Err(Error::InvalidConfig(
            "comparison needs at least two runs".into(),
        ));
    }
    if qrels.is_empty() {
        return Err(Error::InvalidConfig(
            "comparison needs at least one qrels set".into(),
        ));
    }
    let mut rows: Vec<ComparisonRow<T>> = Vec::with_capacity(runs.len());
    for run in runs {
        let values = qrels
            .iter()
            .map(|(_, q)| evaluate_run::<T>(run, q, k, false).map(|e| e.mean))
            .collect::<Result<Vec<T>>>()?;
        let deltas = match rows.first() {
            Some(base) => values
                .iter()
                .zip(&base.values)
                .map(|(v, b)| *v - *b)
                .collect(),
            None => vec![T::zero(); values.len()],
        };
        rows.push(ComparisonRow {
            label: run.label.clone(),
            values,
            deltas,
        });
    }
    Ok(Comparison {
        k,
        columns: qrels.iter().map(|(n, _)| n.clone()).collect(),
        rows,
    })
}

impl<T: Scalar> Comparison<T> {
    pub fn to_text(&self) -> String {
        let lw = self
            .rows
            .iter()
            .map(|r| r.label.len())
            .max()
            .unwrap_or(0)
            .max(3);
        let cw: Vec<usize> = self.columns.iter().map(|c| c.len().max(6)).collect();
        let mut out = String::new();
        write!(out, "{:<lw$}", "run").unwrap();
        for (c, w) in self.columns.iter().zip(&cw) {
            write!(out, "  {c:>w$}  {:>7}", "delta").unwrap();
        }
        out.push('\n');
        for row in &self.rows {
            write!(out, "{:<lw$}", row.label).unwrap();
            for ((v, d), w) in row.values.iter().zip(&row.deltas).zip(&cw) {
                write!(out, "  {:>w$}  {:>+7.3}", format!("{v:.3}"), d).unwrap();
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(pairs: &[(&str, u32)]) -> BTreeMap<String, u32> {
        pairs.iter().map(|(d, g)| (d.to_string(), *g)).collect()
    }

    #[test]
    fn ndcg_examples() {
        let r = row(&[("a", 1)]);
        assert_eq!(ndcg_at_k::<f64, _>(&["a"], Some(&r), 1), 1.0);
        let v: f64 = ndcg_at_k(&["b", "a"], Some(&r), 2);
        assert!((v - 1.0 / 3f64.log2()).abs() < 1e-12);
        assert!((v - 0.63093).abs() < 1e-5);
        assert_eq!(ndcg_at_k::<f64, _>(&["a"], Some(&row(&[("a", 0)])), 5), 0.0);
        assert_eq!(ndcg_at_k::<f64, _>(&["a"], None, 5), 0.0);
        let v32: f32 = ndcg_at_k(&["b", "a"], Some(&r), 2);
        assert!((v32 - 0.63093).abs() < 1e-5);
    }

    #[test]
    fn parse_trec_files() {
        let q = Qrels::parse("q1 0 a 2\nq1 0 b 0\n\nq2 0 c 1\n", Path::new("q")).unwrap();
        assert_eq!(q.grade("q1", "a"), 2);
        assert_eq!(q.grade("q1", "zzz"), 0);
        assert!(matches!(
            Qrels::parse("q1 0 a", Path::new("q")),
            Err(Error::MalformedLine { line: 1, .. })
        ));
        assert!(Qrels::parse("q1 0 a -1", Path::new("q")).is_err());

        let run =
            RunResult::parse("q1 Q0 b 2 0.5 mine\nq1 Q0 a 1 0.9 mine\n", Path::new("r")).unwrap();
        assert_eq!(run.label, "mine");
        assert_eq!(run.rankings["q1"], ["a", "b"]);
        assert!(RunResult::parse("q1 Q0 a 1 0.9 x\nq1 Q0 a 2 0.5 x\n", Path::new("r")).is_err());
    }

    #[test]
    fn evaluate_ideal_and_reversed() {
        let mut qrels = Qrels::new();
        qrels.insert("q", "a", 1);
        let mut ideal = RunResult::new("ideal");
        ideal.insert("q", ["a", "b"]);
        assert_eq!(
            evaluate_run::<f64>(&ideal, &qrels, 20, false).unwrap().mean,
            1.0
        );
        let mut rev = RunResult::new("rev");
        rev.insert("q", ["b", "a"]);
        assert!(evaluate_run::<f64>(&rev, &qrels, 20, false).unwrap().mean < 1.0);
        assert!(matches!(
            evaluate_run::<f64>(&RunResult::new("x"), &qrels, 20, false),
            Err(Error::EmptyRun)
        ));
    }

    #[test]
    fn missing_and_empty_queries() {
        let mut qrels = Qrels::new();
        qrels.insert("q1", "a", 1);
        qrels.insert("q2", "z", 0);
        let mut run = RunResult::new("r");
        run.insert("q1", ["a"]);
        run.insert("q2", ["a"]);
        run.insert("q3", ["a"]);
        let e = evaluate_run::<f64>(&run, &qrels, 20, false).unwrap();
        assert_eq!(e.missing, ["q3"]);
        assert_eq!((e.counted, e.mean), (2, 0.5));
        let skip = evaluate_run::<f64>(&run, &qrels, 20, true).unwrap();
        assert_eq!((skip.counted, skip.mean), (1, 1.0));
    }

    #[test]
    fn comparison_deltas() {
        let mut qrels = Qrels::new();
        qrels.insert("q", "d1", 2);
        qrels.insert("q", "d3", 1);
        let mut a = RunResult::new("Sample Documents");
        a.insert("q", ["d2", "d1", "d3"]);
        let mut b = RunResult::new("+ QueryBuilder");
        b.insert("q", ["d1", "d3", "d2"]);
        let cmp =
            compare_runs::<f64>(&[a.clone(), b], &[("en".into(), qrels.clone())], 20).unwrap();
        let idcg = 3.0 + 1.0 / 3f64.log2();
        let ndcg_a = (3.0 / 3f64.log2() + 1.0 / 2.0) / idcg;
        assert!((cmp.rows[0].values[0] - ndcg_a).abs() < 1e-12);
        assert!((cmp.rows[1].deltas[0] - (1.0 - ndcg_a)).abs() < 1e-12);
        assert_eq!(cmp.rows[0].deltas[0], 0.0);
        let text = cmp.to_text();
        assert!(text.contains("Sample Documents") && text.contains("+ QueryBuilder"));

        let same = compare_runs::<f64>(&[a.clone(), a], &[("en".into(), qrels)], 20).unwrap();
        assert!(same.rows.iter().all(|r| r.deltas.iter().all(|d| *d == 0.0)));
    }
}

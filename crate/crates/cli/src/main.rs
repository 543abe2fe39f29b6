use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use querybuilder_core::config::AppConfig;
use querybuilder_core::corpus::{ingest_corpus, load_index, save_index, Target};
use querybuilder_core::eval::{
    compare_runs, evaluate_run, simulated_user_experiment, trec_lines, Qrels, RunResult,
    SimulationConfig,
};
use querybuilder_core::neural_ir::{build_vector_index, query_by_example};
use querybuilder_core::prob_ir::{
    build_weighted_query, fields, first_pass_search, second_pass_rescore, QueryFields, RankedList,
    RetrievalModel, ScoringConfig, TranslationTable, WeightedQuery,
};
use querybuilder_core::session::{compute_stats, ExportRecord, SessionStatus};
use querybuilder_core::{Engine, SentenceRecord, SessionStore};

type CliResult<T = ()> = Result<T, Box<dyn std::error::Error + Send + Sync>>;

/// Interactive query development: indexing, retrieval, evaluation and the
/// annotation service.
#[derive(Parser)]
#[command(name = "querybuilder", version)]
struct Cli {
    /// Configuration file shared with the server.
    #[arg(long, global = true, env = "QB_CONFIG")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build or inspect the inverted index.
    #[command(subcommand)]
    Index(IndexCommand),
    /// Build the sentence vector index.
    #[command(subcommand)]
    Embed(EmbedCommand),
    /// Rank documents or sentences for a query.
    Search(SearchArgs),
    /// Query by example from a list of sentence ids.
    Enrich(EnrichArgs),
    /// Per-query and mean nDCG of a run.
    Eval(EvalArgs),
    /// nDCG of several runs against one or more qrels sets.
    Compare(CompareArgs),
    /// Simulated-user experiment on a synthetic benchmark.
    Simulate(SimulateArgs),
    /// Export a session's final query (freezes the session).
    ExportQuery(ExportArgs),
    /// Per-iteration annotation statistics over stored sessions.
    Stats(StatsArgs),
    /// Run the HTTP API.
    Serve(ServeArgs),
}

#[derive(Subcommand)]
enum IndexCommand {
    Build(IndexBuildArgs),
}

#[derive(Subcommand)]
enum EmbedCommand {
    Build(EmbedBuildArgs),
}

#[derive(Args)]
struct IndexBuildArgs {
    /// Line-delimited JSON corpus.
    #[arg(long)]
    corpus: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Line-delimited event annotations.
    #[arg(long)]
    events: Option<PathBuf>,
    #[arg(long)]
    stem: bool,
    #[arg(long)]
    remove_stopwords: bool,
}

#[derive(Args)]
struct EmbedBuildArgs {
    #[arg(long)]
    index: Option<PathBuf>,
    /// Output file; defaults to the configured vector path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    /// `rank id score`
    Plain,
    /// `qid Q0 id rank score label`
    Trec,
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetArg {
    Documents,
    Sentences,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long)]
    index: Option<PathBuf>,
    /// Query text, weighted as search terms.
    #[arg(long, conflicts_with_all = ["query_file", "topics"])]
    query: Option<String>,
    /// Exported session record or weighted-query JSON.
    #[arg(long, conflicts_with = "topics")]
    query_file: Option<PathBuf>,
    /// Tab-separated `qid<TAB>query text` lines.
    #[arg(long)]
    topics: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, value_enum, default_value_t = TargetArg::Documents)]
    target: TargetArg,
    #[arg(long, value_enum, default_value_t = Format::Plain)]
    format: Format,
    /// Query id for trec output of a single query.
    #[arg(long, default_value = "q1")]
    qid: String,
    /// Run label for trec output.
    #[arg(long, default_value = "querybuilder")]
    label: String,
    /// Interpolation constant; overrides the configuration.
    #[arg(long)]
    alpha: Option<f64>,
    /// Translation table; overrides the configuration.
    #[arg(long)]
    translation_table: Option<PathBuf>,
    /// Skip the event-feature rescoring pass.
    #[arg(long)]
    first_pass_only: bool,
}

#[derive(Args)]
struct EnrichArgs {
    #[arg(long)]
    index: Option<PathBuf>,
    /// File with one example sentence id per line.
    #[arg(long, required_unless_present = "example")]
    examples: Option<PathBuf>,
    /// Example sentence id; repeatable.
    #[arg(long)]
    example: Vec<String>,
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Allow the examples themselves in the output.
    #[arg(long)]
    keep_examples: bool,
    #[arg(long, value_enum, default_value_t = Format::Plain)]
    format: Format,
    #[arg(long, default_value = "q1")]
    qid: String,
    #[arg(long, default_value = "querybuilder-qbe")]
    label: String,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    qrels: PathBuf,
    #[arg(long)]
    k: Option<usize>,
    /// Leave queries without any relevant document out of the mean.
    #[arg(long)]
    skip_empty: bool,
}

#[derive(Args)]
struct CompareArgs {
    /// Run file; repeat for each run (at least two).
    #[arg(long = "run", required = true, num_args = 1)]
    runs: Vec<PathBuf>,
    /// `name=path` qrels set; repeatable.
    #[arg(long = "qrels", required = true, num_args = 1)]
    qrels: Vec<String>,
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    docs: Option<usize>,
    #[arg(long)]
    topics: Option<usize>,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    session: String,
    #[arg(long)]
    sessions: Option<PathBuf>,
    #[arg(long)]
    index: Option<PathBuf>,
    /// Also write the record here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    sessions: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long)]
    sessions: Option<PathBuf>,
    #[arg(long)]
    host: Option<String>,
    #[arg(long)]
    port: Option<u16>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> CliResult {
    let mut cfg = AppConfig::load(cli.config.as_deref())?;
    let out = match cli.command {
        Command::Index(IndexCommand::Build(a)) => index_build(&cfg, a)?,
        Command::Embed(EmbedCommand::Build(a)) => {
            override_path(&mut cfg.paths.index, a.index);
            embed_build(&cfg, a.out)?
        }
        Command::Search(a) => {
            override_path(&mut cfg.paths.index, a.index.clone());
            search(&cfg, a)?
        }
        Command::Enrich(a) => {
            override_path(&mut cfg.paths.index, a.index.clone());
            enrich(&cfg, a)?
        }
        Command::Eval(a) => {
            let run = RunResult::load(&a.run)?;
            let qrels = Qrels::load(&a.qrels)?;
            evaluate_run::<f64>(
                &run,
                &qrels,
                a.k.unwrap_or(cfg.defaults.eval_k),
                a.skip_empty,
            )?
            .to_text()
        }
        Command::Compare(a) => compare(&cfg, a)?,
        Command::Simulate(a) => simulate(a)?,
        Command::ExportQuery(a) => {
            override_path(&mut cfg.paths.index, a.index.clone());
            override_path(&mut cfg.paths.sessions, a.sessions.clone());
            export_query(&cfg, a)?
        }
        Command::Stats(a) => {
            override_path(&mut cfg.paths.sessions, a.sessions);
            let sessions = SessionStore::open(&cfg.paths.sessions)?.load_all()?;
            let stats = compute_stats(&sessions);
            if a.json {
                serde_json::to_string_pretty(&stats)? + "\n"
            } else {
                stats.to_text()
            }
        }
        Command::Serve(a) => {
            override_path(&mut cfg.paths.index, a.index);
            override_path(&mut cfg.paths.sessions, a.sessions);
            if let Some(h) = a.host {
                cfg.server.host = h;
            }
            if let Some(p) = a.port {
                cfg.server.port = p;
            }
            serve(cfg)?;
            String::new()
        }
    };
    let mut stdout = std::io::stdout().lock();
    stdout.write_all(out.as_bytes())?;
    stdout.flush()?;
    Ok(())
}

fn override_path(slot: &mut PathBuf, value: Option<PathBuf>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn index_build(cfg: &AppConfig, a: IndexBuildArgs) -> CliResult<String> {
    let mut ingest = cfg.ingest;
    ingest.stem |= a.stem;
    ingest.remove_stopwords |= a.remove_stopwords;
    let mut corpus = ingest_corpus(&a.corpus, ingest)?;
    if let Some(events) = &a.events {
        let n = corpus.ingest_event_annotations(events)?;
        eprintln!("annotated {n} sentences with events");
    }
    let index = corpus.build_index();
    save_index(&a.out, &corpus, &index)?;
    eprintln!(
        "indexed {} documents, {} sentences, {} terms into {}",
        corpus.doc_count(),
        corpus.sentence_count(),
        index.vocab_size(),
        a.out.display()
    );
    Ok(String::new())
}

fn embed_build(cfg: &AppConfig, out: Option<PathBuf>) -> CliResult<String> {
    let (corpus, _) = load_index(&cfg.paths.index)?;
    let provider = cfg.embedding.provider(corpus.config())?;
    let vectors = build_vector_index(provider.as_ref(), &corpus)?;
    let path = out.unwrap_or_else(|| cfg.paths.vectors_path());
    vectors.save(&path)?;
    eprintln!(
        "embedded {} sentences with {} (dim {}) into {}",
        vectors.len(),
        vectors.provider_name(),
        vectors.dim(),
        path.display()
    );
    Ok(String::new())
}

fn text_query(cfg: &AppConfig, corpus_tokens: Vec<String>) -> CliResult<WeightedQuery<f64>> {
    let mut f = QueryFields::new();
    f.add_tokens(
        fields::SEARCH_TERMS,
        corpus_tokens.iter().map(String::as_str),
    );
    Ok(build_weighted_query(&f, &cfg.field_weights)?)
}

fn read_query_file(path: &Path) -> CliResult<WeightedQuery<f64>> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    if let Ok(record) = serde_json::from_str::<ExportRecord>(&text) {
        return Ok(record.query);
    }
    serde_json::from_str::<WeightedQuery<f64>>(&text).map_err(|e| {
        format!(
            "{}: neither an export record nor a weighted query: {e}",
            path.display()
        )
        .into()
    })
}

fn format_list(list: &RankedList<f64>, format: Format, qid: &str, label: &str) -> String {
    match format {
        Format::Trec => trec_lines(qid, list, label),
        Format::Plain => {
            let mut out = String::new();
            for (i, item) in list.items.iter().enumerate() {
                writeln!(out, "{} {} {:.6}", i + 1, item.id, item.score).unwrap();
            }
            out
        }
    }
}

fn search(cfg: &AppConfig, a: SearchArgs) -> CliResult<String> {
    let (corpus, index) = load_index(&cfg.paths.index)?;
    let translation = match a
        .translation_table
        .as_ref()
        .or(cfg.paths.translation_table.as_ref())
    {
        Some(p) => TranslationTable::load(p)?,
        None => TranslationTable::Identity,
    };
    let model = RetrievalModel::from_index(&index, translation)?;
    let target = match a.target {
        TargetArg::Documents => Target::Documents,
        TargetArg::Sentences => Target::Sentences,
    };
    let mut scoring = ScoringConfig::<f64>::for_target(target);
    scoring.alpha = a.alpha.unwrap_or(cfg.scoring.alpha);
    scoring.first_pass_k = scoring.first_pass_k.max(a.k);
    if a.first_pass_only {
        scoring.second_pass_depth = 0;
    }

    let queries: Vec<(String, WeightedQuery<f64>)> = if let Some(q) = &a.query {
        vec![(a.qid.clone(), text_query(cfg, corpus.tokenize(q))?)]
    } else if let Some(p) = &a.query_file {
        vec![(a.qid.clone(), read_query_file(p)?)]
    } else if let Some(p) = &a.topics {
        let text = fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
        let mut out = Vec::new();
        for (n, line) in text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
        {
            let (qid, q) = line.split_once('\t').ok_or_else(|| {
                format!("{}: line {}: expected qid<TAB>query", p.display(), n + 1)
            })?;
            out.push((qid.trim().to_string(), text_query(cfg, corpus.tokenize(q))?));
        }
        out
    } else {
        return Err("one of --query, --query-file or --topics is required".into());
    };

    let mut out = String::new();
    for (qid, query) in &queries {
        let first = first_pass_search(query, &index, &model, &scoring)?;
        let mut list = second_pass_rescore(&first, query, &index, &model, &scoring)?;
        list.truncate(a.k);
        out.push_str(&format_list(&list, a.format, qid, &a.label));
    }
    Ok(out)
}

fn enrich(cfg: &AppConfig, a: EnrichArgs) -> CliResult<String> {
    let engine = Engine::open(cfg)?;
    let vectors = engine
        .vectors
        .as_ref()
        .ok_or("no vector index found; run `querybuilder embed build` first")?;
    let mut ids = a.example.clone();
    if let Some(p) = &a.examples {
        let text = fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
        ids.extend(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(String::from),
        );
    }
    let examples: Vec<&SentenceRecord> = ids
        .iter()
        .map(|id| engine.sentence(id))
        .collect::<Result<_, _>>()?;
    let exclude: HashSet<String> = if a.keep_examples {
        HashSet::new()
    } else {
        ids.iter().cloned().collect()
    };
    let list = query_by_example(&examples, vectors, engine.provider.as_ref(), a.k, &exclude)?;
    Ok(format_list(&list, a.format, &a.qid, &a.label))
}

fn compare(cfg: &AppConfig, a: CompareArgs) -> CliResult<String> {
    let runs: Vec<RunResult> = a
        .runs
        .iter()
        .map(RunResult::load)
        .collect::<Result<_, _>>()?;
    let mut sets = Vec::new();
    for spec in &a.qrels {
        let (name, path) = match spec.split_once('=') {
            Some((n, p)) => (n.to_string(), PathBuf::from(p)),
            None => {
                let p = PathBuf::from(spec);
                let name = p
                    .file_stem()
                    .map_or_else(|| spec.clone(), |s| s.to_string_lossy().into_owned());
                (name, p)
            }
        };
        sets.push((name, Qrels::load(&path)?));
    }
    Ok(compare_runs::<f64>(&runs, &sets, a.k.unwrap_or(cfg.defaults.eval_k))?.to_text())
}

fn simulate(a: SimulateArgs) -> CliResult<String> {
    let mut sim = SimulationConfig::default();
    if let Some(s) = a.seed {
        sim.seed = s;
    }
    if let Some(r) = a.rounds {
        sim.feedback_rounds = r;
    }
    if let Some(d) = a.docs {
        sim.docs = d;
    }
    if let Some(t) = a.topics {
        sim.topics = t;
    }
    let report = simulated_user_experiment(&sim)?;
    Ok(if a.json {
        serde_json::to_string_pretty(&report)? + "\n"
    } else {
        report.to_text()
    })
}

fn export_query(cfg: &AppConfig, a: ExportArgs) -> CliResult<String> {
    let engine = Engine::open(cfg)?;
    let store = SessionStore::open(&cfg.paths.sessions)?;
    let mut session = store.load(&a.session)?;
    let record = match session.status() {
        SessionStatus::Active => session.export_query(&engine)?,
        SessionStatus::Exported => session.build_export(&engine)?,
    };
    let json = serde_json::to_string_pretty(&record)? + "\n";
    if let Some(p) = &a.out {
        fs::write(p, &json).map_err(|e| format!("{}: {e}", p.display()))?;
    }
    Ok(json)
}

fn serve(cfg: AppConfig) -> CliResult {
    tracing_subscriber::fmt()
        .with_max_level(tracing_subscriber::filter::LevelFilter::INFO)
        .with_writer(std::io::stderr)
        .init();
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(querybuilder_server::serve(cfg))
}

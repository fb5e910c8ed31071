use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::{Duration, NaiveDate, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use tagrec_core::engine::{borrowed_in, sweep, EngineError, HistoryMode};
use tagrec_core::evaluate::{
    dedup_grid, evaluate_feedback, standard_grid, write_borrowed_by_score_csv, write_confusion_csv,
    write_histogram_csv, write_sweep_csv, EvalError,
};
use tagrec_core::ingest::{IngestError, IngestPaths};
use tagrec_core::store::{DataDir, Journal, StoreError};
use tagrec_core::synth::{generate, SynthConfig, SynthError};
use tagrec_core::{Corpus, CycleSettings, GroupingConfig, IdfMode};
use tagrec_service::ServiceConfig;

#[derive(Parser)]
#[command(
    name = "tagrec",
    version,
    about = "Tag-based hybrid recommender for library loans"
)]
struct Cli {
    /// Seed for anything random (synthetic corpora, session tokens).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load the datasets into a data directory.
    Ingest(IngestArgs),
    /// Rebuild profiles, the similarity matrix and every list, and mint
    /// feedback links.
    Cycle(CycleArgs),
    /// Score lists against loans (history) or against collected ratings
    /// (feedback).
    Evaluate(EvaluateArgs),
    /// History-stage metrics over a grid of grouping settings.
    Sweep(SweepArgs),
    /// Run the feedback API.
    Serve(ServeArgs),
    /// Write a synthetic corpus with planted structure.
    Synth(SynthArgs),
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    books: PathBuf,
    #[arg(long)]
    documents: PathBuf,
    #[arg(long)]
    loans: PathBuf,
    #[arg(long)]
    enrollments: PathBuf,
    #[arg(long)]
    stopwords: PathBuf,
    #[arg(long)]
    data_dir: PathBuf,
    /// Replace a different corpus and drop the event log built on it.
    #[arg(long)]
    force: bool,
}

fn parse_triple(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!(
            "expected three comma-separated counts, got {}",
            parts.len()
        ));
    }
    let mut out = [0; 3];
    for (slot, p) in out.iter_mut().zip(parts) {
        *slot = p.parse().map_err(|_| format!("`{p}` is not a count"))?;
    }
    Ok(out)
}

/// Overrides on top of the previous cycle's settings (or the defaults).
#[derive(Args, Clone)]
struct SettingsArgs {
    #[arg(long)]
    p1: Option<f64>,
    #[arg(long)]
    p2: Option<f64>,
    /// Minimum shared tags per group, e.g. `4,5,5`.
    #[arg(long, value_parser = parse_triple)]
    m: Option<[usize; 3]>,
    #[arg(long)]
    list_size: Option<usize>,
    #[arg(long, value_parser = |s: &str| s.parse::<IdfMode>())]
    idf_mode: Option<IdfMode>,
    #[arg(long)]
    window_days: Option<u32>,
    /// Last day of the window; defaults to the latest loan.
    #[arg(long)]
    as_of: Option<NaiveDate>,
    /// Cosine threshold for collaborative partners.
    #[arg(long)]
    similarity: Option<f64>,
    /// Take tags from titles as well.
    #[arg(long)]
    include_titles: Option<bool>,
    #[arg(long)]
    stemming: Option<bool>,
}

impl SettingsArgs {
    fn apply(&self, mut s: CycleSettings) -> CycleSettings {
        if let Some(v) = self.p1 {
            s.grouping.p1 = v;
        }
        if let Some(v) = self.p2 {
            s.grouping.p2 = v;
        }
        if let Some([a, b, c]) = self.m {
            (s.grouping.m1, s.grouping.m2, s.grouping.m3) = (a, b, c);
        }
        if let Some(v) = self.list_size {
            s.grouping.list_size = v;
        }
        if let Some(v) = self.idf_mode {
            s.weighting.idf_mode = v;
        }
        if let Some(v) = self.window_days {
            s.weighting.window_days = v;
        }
        if self.as_of.is_some() {
            s.as_of = self.as_of;
        }
        if let Some(v) = self.similarity {
            s.cf.similarity_threshold = v;
        }
        if let Some(v) = self.include_titles {
            s.text.include_titles = v;
        }
        if let Some(v) = self.stemming {
            s.text.stemming_enabled = v;
        }
        s
    }
}

#[derive(Args)]
struct CycleArgs {
    #[arg(long)]
    data_dir: PathBuf,
    #[command(flatten)]
    settings: SettingsArgs,
    #[arg(long, default_value_t = 30)]
    ttl_days: i64,
    /// Prefix of the links written to the outbox.
    #[arg(long, default_value = "http://127.0.0.1:8080")]
    link_base: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum Stage {
    History,
    Feedback,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long, value_enum)]
    stage: Stage,
    #[arg(long)]
    data_dir: PathBuf,
    /// Confusion counts and metrics. The feedback stage also writes
    /// `score_histogram.csv` and `borrowed_by_score.csv` next to it.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    settings: SettingsArgs,
    /// History stage: build profiles before this date and score against
    /// loans from it on.
    #[arg(long)]
    held_out_from: Option<NaiveDate>,
    /// Feedback stage: lowest score counted as relevant.
    #[arg(long, default_value_t = 1)]
    relevance_cut: u8,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON array of {p1, p2, m1, m2, m3}; the standard 25-point grid when
    /// omitted.
    #[arg(long)]
    grid: Option<PathBuf>,
    #[arg(long)]
    data_dir: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    settings: SettingsArgs,
    #[arg(long)]
    held_out_from: Option<NaiveDate>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    listen: Option<String>,
    /// `key = value` settings file; environment variables override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 12)]
    users: usize,
    #[arg(long, default_value_t = 200)]
    items: usize,
    #[arg(long, default_value_t = 0)]
    cold_start_users: usize,
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Usage(String),
    Data(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Data(_) => 3,
        }
    }
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::MissingCorpus(_) => Failure::Usage(e.to_string()),
            StoreError::Engine(e) => e.into(),
            other => Failure::Data(other.to_string()),
        }
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Config(_) => Failure::Usage(e.to_string()),
            other => Failure::Data(other.to_string()),
        }
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        Failure::Data(e.to_string())
    }
}

fn io_fail(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |e| Failure::Data(format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Cycle(a) => cycle(a, cli.seed),
        Command::Evaluate(a) => evaluate(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Serve(a) => serve(a, cli.seed),
        Command::Synth(a) => synth(a, cli.seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Usage(msg) | Failure::Data(msg)) = &f;
            eprintln!("error: {msg}");
            ExitCode::from(f.code())
        }
    }
}

fn ingest(a: IngestArgs) -> Result<(), Failure> {
    for (flag, path) in [
        ("--books", &a.books),
        ("--documents", &a.documents),
        ("--loans", &a.loans),
        ("--enrollments", &a.enrollments),
        ("--stopwords", &a.stopwords),
    ] {
        if !path.is_file() {
            return Err(Failure::Usage(format!(
                "{flag}: no such file {}",
                path.display()
            )));
        }
    }
    let paths = IngestPaths {
        books: a.books,
        documents: a.documents,
        loans: a.loans,
        enrollments: a.enrollments,
        stopwords: a.stopwords,
    };
    let (corpus, report) = Corpus::ingest(&paths).map_err(|e| match e {
        IngestError::Io { .. } => Failure::Usage(e.to_string()),
        other => Failure::Data(other.to_string()),
    })?;
    let dir = DataDir::new(&a.data_dir);
    if dir.has_corpus() {
        let existing = dir.load_corpus()?;
        if existing != corpus {
            if !a.force {
                return Err(Failure::Usage(format!(
                    "{} already holds a different corpus; pass --force to replace it and drop its event log",
                    a.data_dir.display()
                )));
            }
            dir.reset_events()?;
        }
    }
    dir.save_corpus(&corpus)?;
    println!("{}", report.summary());
    let rejects = report.rejects_text();
    if !rejects.is_empty() {
        eprint!("{rejects}");
    }
    Ok(())
}

fn cycle(a: CycleArgs, seed: Option<u64>) -> Result<(), Failure> {
    let mut journal = Journal::open(DataDir::new(&a.data_dir), seed)?;
    let settings = a
        .settings
        .apply(journal.settings().cloned().unwrap_or_default());
    if a.ttl_days < 1 {
        return Err(Failure::Usage("--ttl-days must be at least 1".into()));
    }
    let report = journal.cycle(
        settings,
        Utc::now(),
        Duration::days(a.ttl_days),
        &a.link_base,
    )?;
    println!(
        "{}",
        serde_json::to_string_pretty(&report.summary).expect("summary serializes")
    );
    println!("links: {}", journal.dir.outbox_path().display());
    Ok(())
}

fn history_mode(split: Option<NaiveDate>) -> HistoryMode {
    match split {
        Some(split) => HistoryMode::HeldOut { split },
        None => HistoryMode::SameWindow,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io_fail(parent))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(io_fail(path))
}

fn evaluate(a: EvaluateArgs) -> Result<(), Failure> {
    let mut journal = Journal::open(DataDir::new(&a.data_dir), None)?;
    let (counts, report) = match a.stage {
        Stage::History => {
            let settings = a
                .settings
                .apply(journal.settings().cloned().unwrap_or_default());
            let feedback = journal.state.feedback.clone();
            let index = journal.state.index(&settings.text).clone();
            tagrec_core::engine::evaluate_history_run(
                &journal.state.corpus,
                &index,
                &feedback,
                &settings,
                history_mode(a.held_out_from),
            )?
        }
        Stage::Feedback => {
            if a.relevance_cut > 3 {
                return Err(Failure::Usage("--relevance-cut must be in 0..=3".into()));
            }
            let ratings = journal.state.ratings();
            let borrowed = borrowed_in(&journal.state.corpus.loans, |_| true);
            let fb = evaluate_feedback(&ratings, &borrowed, a.relevance_cut)?;
            let dir = a.out.parent().unwrap_or(Path::new("."));
            let hist = dir.join("score_histogram.csv");
            write_histogram_csv(create(&hist)?, &fb)?;
            let cross = dir.join("borrowed_by_score.csv");
            write_borrowed_by_score_csv(create(&cross)?, &fb)?;
            (fb.counts, fb.metrics)
        }
    };
    write_confusion_csv(create(&a.out)?, &counts, &report)?;
    println!(
        "{} nrr={} nir={} nrn={} nin=n/a precision={:.4} recall={:.4} f_score={:.4}",
        report.stage,
        counts.nrr,
        counts.nir,
        counts.nrn,
        report.precision,
        report.recall,
        report.f_score
    );
    Ok(())
}

fn run_sweep(a: SweepArgs) -> Result<(), Failure> {
    let mut grid: Vec<GroupingConfig> = match &a.grid {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Usage(format!("--grid: {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| Failure::Usage(format!("--grid: {}: {e}", path.display())))?
        }
        None => standard_grid(),
    };
    if grid.is_empty() {
        return Err(Failure::Usage("--grid: the grid is empty".into()));
    }
    let dropped = dedup_grid(&mut grid);
    if dropped > 0 {
        log::warn!("dropped {dropped} duplicate grid point(s)");
    }
    let mut journal = Journal::open(DataDir::new(&a.data_dir), None)?;
    let settings = a
        .settings
        .apply(journal.settings().cloned().unwrap_or_default());
    let feedback = journal.state.feedback.clone();
    let index = journal.state.index(&settings.text).clone();
    let rows = sweep(
        &journal.state.corpus,
        &index,
        &feedback,
        &settings,
        &grid,
        history_mode(a.held_out_from),
    )?;
    write_sweep_csv(create(&a.out)?, &rows)?;
    let best = rows
        .iter()
        .max_by(|x, y| x.report.f_score.total_cmp(&y.report.f_score))
        .expect("grid is not empty");
    println!(
        "{} rows; best f_score {:.4} at {}",
        rows.len(),
        best.report.f_score,
        best.config
    );
    Ok(())
}

fn serve(a: ServeArgs, seed: Option<u64>) -> Result<(), Failure> {
    let mut config =
        ServiceConfig::load(a.config.as_deref()).map_err(|e| Failure::Usage(e.to_string()))?;
    if let Some(d) = a.data_dir {
        config.data_dir = d;
    }
    if let Some(l) = a.listen {
        config.listen = l;
    }
    if seed.is_some() {
        config.seed = seed;
    }
    let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::Data(e.to_string()))?;
    rt.block_on(tagrec_service::serve(config))
        .map_err(|e| match e {
            tagrec_service::ServeError::Store(s) => Failure::from(s),
            other => Failure::Data(other.to_string()),
        })
}

fn synth(a: SynthArgs, seed: Option<u64>) -> Result<(), Failure> {
    let config = SynthConfig {
        users: a.users,
        items: a.items,
        seed: seed.unwrap_or(42),
        cold_start_users: a.cold_start_users,
    };
    let planted = generate(&config).map_err(|e| match e {
        SynthError::Io(_) => Failure::Data(e.to_string()),
        other => Failure::Usage(other.to_string()),
    })?;
    let paths = planted
        .write(&a.out)
        .map_err(|e| Failure::Data(e.to_string()))?;
    let grid = serde_json::to_string_pretty(&standard_grid()).expect("grid serializes");
    let grid_path = a.out.join("grid.json");
    std::fs::write(&grid_path, grid + "\n").map_err(io_fail(&grid_path))?;
    println!(
        "wrote {} books, {} documents, {} loans to {}",
        planted.corpus.books.len(),
        planted.corpus.documents.len(),
        planted.corpus.loans.len(),
        paths.books.parent().unwrap_or(Path::new(".")).display()
    );
    Ok(())
}

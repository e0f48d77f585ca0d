//! Command-line interface for the counter-speech engine.

pub mod live;
pub mod server;
pub mod setup;

use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration as StdDuration;

use anyhow::{bail, Context, Result};
use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};

use counterspeech_core::analysis::{build_report, AnalysisFilter, DEFAULT_RESAMPLES};
use counterspeech_core::classifier::{
    embed, embed_labeled, load_labeled_texts, predict, train, Confusion, HashedBagOfWords, RemoteEmbeddingProvider,
    TrainConfig,
};
use counterspeech_core::experiment::{replay_corpus, ExperimentStatus, Pipeline, ReplayInputs};
use counterspeech_core::fixtures;
use counterspeech_core::ingest::{fetch_recent, load_corpus, persist, PlatformClient, PlatformConfig, PostSource, ReplaySource};
use counterspeech_core::responder::RemoteChatClient;
use counterspeech_core::review::ReplyPoster;
use counterspeech_core::{
    Clock, EmbeddingProvider, Experiment, Metric, PostId, ReviewDesk, ReviewerId, SystemClock, Tail, ThreadPosition,
};

use server::{AppState, TOKEN_ENV};
use setup::{embedder_for, load_config, load_model, load_query, load_responder, open_store, require};

#[derive(Debug, Parser)]
#[command(name = "counterspeech", version, about = "Counter-speech intervention engine")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fetch recent matching posts and store them.
    Ingest(IngestArgs),
    /// Train or apply the harmful-content classifier.
    #[command(subcommand)]
    Classify(ClassifyCommand),
    /// Generate a reply for one stored post and queue it for review.
    Respond(RespondArgs),
    #[command(subcommand)]
    Experiment(ExperimentCommand),
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    #[command(subcommand)]
    Review(ReviewCommand),
    #[command(subcommand)]
    Fixture(FixtureCommand),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub store: PathBuf,
    /// File holding the search query; the built-in harmful query otherwise.
    #[arg(long)]
    pub query_file: Option<PathBuf>,
    /// Read from a corpus file instead of the platform.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Reference time for a corpus run (RFC 3339).
    #[arg(long)]
    pub at: Option<DateTime<Utc>>,
    #[arg(long, default_value_t = 4)]
    pub max_age_hours: i64,
}

#[derive(Debug, Subcommand)]
pub enum ClassifyCommand {
    Train {
        /// JSONL of `{post_id, text, label}`.
        #[arg(long)]
        labeled: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Embed through the remote provider configured in the environment.
        #[arg(long)]
        remote_embeddings: bool,
    },
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, conflicts_with = "labeled", required_unless_present = "labeled")]
        text: Option<String>,
        /// Score a labeled JSONL file and report the confusion matrix.
        #[arg(long)]
        labeled: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct RespondArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub post_id: String,
    /// Print the prompt and retrieved articles without calling the generator.
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RunMode {
    Live,
    Replay,
}

#[derive(Debug, Subcommand)]
pub enum ExperimentCommand {
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value_t = RunMode::Live)]
        mode: RunMode,
        /// Live mode: run one pass and exit.
        #[arg(long)]
        once: bool,
        /// Live mode: also serve the review API on this address.
        #[arg(long)]
        listen: Option<String>,
        #[arg(long, default_value_t = 30)]
        poll_secs: u64,
    },
    /// Take every snapshot that is due now.
    Snapshot {
        #[arg(long)]
        config: PathBuf,
        /// Only list due tasks.
        #[arg(long)]
        list: bool,
    },
    Status {
        #[arg(long)]
        store: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TailArg {
    Lower,
    Upper,
}

#[derive(Debug, Subcommand)]
pub enum AnalyzeCommand {
    Report {
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value = "engagement")]
        metric: Metric,
        #[arg(long, default_value = "original")]
        position: ThreadPosition,
        #[arg(long, default_value_t = 10)]
        min_impr: i64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_RESAMPLES)]
        resamples: usize,
        /// Bootstrap tail; defaults to the metric's hypothesis direction.
        #[arg(long, value_enum)]
        tail: Option<TailArg>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

#[derive(Debug, Subcommand)]
pub enum ReviewCommand {
    /// Serve the review API. The token is read from REVIEW_API_TOKEN.
    Serve {
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: String,
        /// Post approved replies to the platform immediately.
        #[arg(long)]
        post: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum FixtureCommand {
    /// Write the deterministic replay fixture.
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = fixtures::CORPUS_SEED)]
        corpus_seed: u64,
        #[arg(long, default_value_t = fixtures::EXPERIMENT_SEED)]
        experiment_seed: u64,
    },
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Ingest(args) => ingest(args, out),
        Command::Classify(cmd) => classify(cmd, out),
        Command::Respond(args) => respond(args, out),
        Command::Experiment(cmd) => experiment(cmd, out),
        Command::Analyze(AnalyzeCommand::Report {
            store,
            metric,
            position,
            min_impr,
            seed,
            resamples,
            tail,
            format,
        }) => {
            let store = open_store(&store)?;
            let filter = AnalysisFilter::new(position, min_impr)?;
            let tail = match tail {
                Some(TailArg::Lower) => Tail::Lower,
                Some(TailArg::Upper) => Tail::Upper,
                None => metric.default_tail(),
            };
            let report = store.read(|s| build_report(s, metric, &filter, resamples, seed, tail))?;
            match format {
                Format::Text => write!(out, "{}", report.render_text())?,
                Format::Json => writeln!(out, "{}", report.to_json())?,
            }
            Ok(())
        }
        Command::Review(ReviewCommand::Serve { store, listen, post }) => {
            let token = std::env::var(TOKEN_ENV).with_context(|| format!("{TOKEN_ENV} is not set"))?;
            let poster: Option<Arc<dyn ReplyPoster>> = if post {
                Some(Arc::new(PlatformClient::new(PlatformConfig::from_env()?)?))
            } else {
                None
            };
            let state = Arc::new(AppState {
                store: Arc::new(open_store(&store)?),
                known_urls: Vec::new(),
                token,
                clock: Arc::new(SystemClock),
                poster,
                poll_interval: StdDuration::from_millis(500),
            });
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(server::serve(state.clone(), &listen))?;
            drop(rt);
            Ok(())
        }
        Command::Fixture(FixtureCommand::Generate {
            out: dir,
            corpus_seed,
            experiment_seed,
        }) => {
            let fixture = fixtures::generate_replay_fixture(corpus_seed, experiment_seed)?;
            fixture
                .write(&dir)
                .with_context(|| format!("writing {}", dir.display()))?;
            writeln!(out, "wrote {} files to {}", fixtures::FIXTURE_FILES.len(), dir.display())?;
            Ok(())
        }
    }
}

fn ingest(args: IngestArgs, out: &mut dyn Write) -> Result<()> {
    let query = load_query(args.query_file.as_deref())?;
    let max_age = chrono::Duration::hours(args.max_age_hours);
    let (mut source, now): (Box<dyn PostSource>, _) = match &args.corpus {
        Some(path) => {
            let now = args.at.context("--at is required with --corpus")?;
            (Box::new(ReplaySource::open(path)?), now)
        }
        None => (Box::new(PlatformClient::new(PlatformConfig::from_env()?)?), Utc::now()),
    };
    let found = fetch_recent(source.as_mut(), &query, now, max_age)?;
    let store = open_store(&args.store)?;
    let (records, snaps): (Vec<_>, Vec<_>) = found.into_iter().unzip();
    let written = persist(&store, &records, &snaps)?;
    writeln!(out, "fetched {} posts, wrote {written} new records", records.len())?;
    Ok(())
}

fn confusion_line(c: &Confusion) -> String {
    let pct = |v: Option<f64>| v.map_or("n/a".to_owned(), |x| format!("{:.3}", x));
    format!(
        "tp={} fp={} tn={} fn={} accuracy={} precision={} recall={}",
        c.tp,
        c.fp,
        c.tn,
        c.fn_,
        pct(c.accuracy()),
        pct(c.precision()),
        pct(c.recall())
    )
}

fn classify(cmd: ClassifyCommand, out: &mut dyn Write) -> Result<()> {
    match cmd {
        ClassifyCommand::Train {
            labeled,
            out: path,
            remote_embeddings,
        } => {
            let provider: Box<dyn EmbeddingProvider> = if remote_embeddings {
                Box::new(RemoteEmbeddingProvider::from_env()?)
            } else {
                Box::new(HashedBagOfWords::default())
            };
            let texts = load_labeled_texts(&labeled)?;
            let examples = embed_labeled(&texts, provider.as_ref())?;
            let model = train(&examples, &provider.tag(), &TrainConfig::default())?;
            model.save(&path)?;
            let predicted = examples
                .iter()
                .map(|e| predict(&model, &e.embedding).map(|p| p.is_harmful))
                .collect::<Result<Vec<_>, _>>()?;
            let actual: Vec<bool> = examples.iter().map(|e| e.label.is_harmful()).collect();
            writeln!(
                out,
                "trained on {} examples ({} iterations, converged: {}), threshold {:.6}",
                examples.len(),
                model.iterations,
                model.converged,
                model.threshold
            )?;
            writeln!(out, "training set: {}", confusion_line(&Confusion::from_predictions(&predicted, &actual)))?;
            writeln!(out, "saved {}", path.display())?;
        }
        ClassifyCommand::Score { model, text, labeled } => {
            let model = load_model(&model)?;
            let provider = embedder_for(&model)?;
            if let Some(text) = text {
                let p = predict(&model, &embed(&text, provider.as_ref())?)?;
                writeln!(out, "probability {:.6} harmful {}", p.probability, p.is_harmful)?;
            } else if let Some(path) = labeled {
                let texts = load_labeled_texts(&path)?;
                let examples = embed_labeled(&texts, provider.as_ref())?;
                let mut predicted = Vec::new();
                for e in &examples {
                    predicted.push(predict(&model, &e.embedding)?.is_harmful);
                }
                let actual: Vec<bool> = examples.iter().map(|e| e.label.is_harmful()).collect();
                writeln!(out, "{}", confusion_line(&Confusion::from_predictions(&predicted, &actual)))?;
            }
        }
    }
    Ok(())
}

fn respond(args: RespondArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let store = open_store(require(&cfg.store, "store")?)?;
    let model = load_model(require(&cfg.model, "model")?)?;
    let embedder = embedder_for(&model)?;
    let responder = load_responder(&cfg, embedder.as_ref())?;
    let post_id = PostId::new(args.post_id);
    let post = store
        .read(|s| s.posts.get(&post_id).cloned())
        .with_context(|| format!("post {post_id} is not in the store"))?;
    let emb = embed(&post.text, embedder.as_ref())?;
    if args.dry_run {
        let (prompt, scores) = responder.prepare(&post, &emb)?;
        for s in &scores {
            writeln!(out, "{:.4}  {}", s.similarity, s.article_id)?;
        }
        writeln!(out, "{}", prompt.render())?;
        return Ok(());
    }
    let client = RemoteChatClient::from_env()?;
    let reply = responder.respond(&post, &emb, &client, Utc::now())?;
    let urls = responder.known_urls().into_iter().map(str::to_owned).collect();
    let item = ReviewDesk::new(&store, urls).enqueue(reply, post, Utc::now())?;
    writeln!(out, "{}", serde_json::to_string_pretty(&item)?)?;
    Ok(())
}

fn resolve_seed(config_seed: Option<u64>, flag: Option<u64>) -> Result<u64> {
    match (config_seed, flag) {
        (Some(a), Some(b)) if a != b => bail!("--seed {b} conflicts with seed {a} in the config"),
        (Some(s), _) | (None, Some(s)) => Ok(s),
        (None, None) => bail!("a seed is required, in the config or with --seed"),
    }
}

fn experiment(cmd: ExperimentCommand, out: &mut dyn Write) -> Result<()> {
    match cmd {
        ExperimentCommand::Status { store } => {
            let store = open_store(&store)?;
            let status = ExperimentStatus::from_store(&store, Utc::now());
            writeln!(out, "{}", serde_json::to_string_pretty(&status)?)?;
        }
        ExperimentCommand::Snapshot { config, list } => {
            let cfg = load_config(&config)?;
            let store = open_store(require(&cfg.store, "store")?)?;
            let now = Utc::now();
            if list {
                let due: Vec<_> = store.read(|s| {
                    s.tasks
                        .values()
                        .filter(|t| t.completed_at.is_none() && t.due_at <= now)
                        .cloned()
                        .collect()
                });
                writeln!(out, "{}", serde_json::to_string_pretty(&due)?)?;
                return Ok(());
            }
            let client = PlatformClient::new(PlatformConfig::from_env()?)?;
            let summary = counterspeech_core::experiment::run_due_snapshots(&store, &cfg.schedule, &client, now)?;
            writeln!(out, "{}", serde_json::to_string_pretty(&summary)?)?;
        }
        ExperimentCommand::Run {
            config,
            seed,
            mode,
            once,
            listen,
            poll_secs,
        } => {
            let cfg = load_config(&config)?;
            let seed = resolve_seed(cfg.seed, seed)?;
            let store = Arc::new(open_store(require(&cfg.store, "store")?)?);
            let model = load_model(require(&cfg.model, "model")?)?;
            let embedder = embedder_for(&model)?;
            let responder = load_responder(&cfg, embedder.as_ref())?;
            let query = load_query(cfg.query.as_deref())?;
            match mode {
                RunMode::Replay => {
                    if store.read(|s| !s.windows.is_empty()) {
                        bail!("replay needs an empty store");
                    }
                    let corpus = load_corpus(require(&cfg.corpus, "corpus")?)?;
                    let (outcome, _) = replay_corpus(
                        &store,
                        ReplayInputs {
                            schedule: cfg.schedule.clone(),
                            query,
                            seed,
                            model: &model,
                            embedder: embedder.as_ref(),
                            responder: &responder,
                            corpus,
                            reviewer: ReviewerId::new("replay"),
                        },
                    )?;
                    writeln!(
                        out,
                        "replayed {} windows: {} approved, {} rejected, {} expired, {} posted",
                        outcome.windows.len(),
                        outcome.approved,
                        outcome.rejected,
                        outcome.expired,
                        outcome.posted
                    )?;
                    let status = ExperimentStatus::from_store(&store, outcome.finished_at.unwrap_or_else(Utc::now));
                    writeln!(out, "{}", serde_json::to_string_pretty(&status)?)?;
                }
                RunMode::Live => {
                    let client = PlatformClient::new(PlatformConfig::from_env()?)?;
                    let generator = RemoteChatClient::from_env()?;
                    let exp = Experiment::new(
                        &store,
                        cfg.schedule.clone(),
                        query,
                        seed,
                        Pipeline {
                            model: &model,
                            embedder: embedder.as_ref(),
                            responder: &responder,
                            generator: &generator,
                        },
                    )?;
                    let clock = SystemClock;
                    if let Some(addr) = listen {
                        spawn_server(store.clone(), &responder, addr)?;
                    }
                    let mut source = PlatformClient::new(PlatformConfig::from_env()?)?;
                    if once {
                        let r = live::tick(&exp, &mut source, &client, &client, &clock)?;
                        writeln!(out, "{r:?}")?;
                    } else {
                        live::run_forever(&exp, &mut source, &client, &client, &clock, StdDuration::from_secs(poll_secs))?;
                    }
                }
            }
        }
    }
    Ok(())
}

fn spawn_server(store: Arc<counterspeech_core::Store>, responder: &counterspeech_core::Responder, addr: String) -> Result<()> {
    let token = std::env::var(TOKEN_ENV).with_context(|| format!("{TOKEN_ENV} is not set"))?;
    let state = Arc::new(AppState {
        store,
        known_urls: responder.known_urls().into_iter().map(str::to_owned).collect(),
        token,
        clock: Arc::new(SystemClock) as Arc<dyn Clock>,
        poster: None,
        poll_interval: StdDuration::from_millis(500),
    });
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().expect("tokio runtime");
        if let Err(e) = rt.block_on(server::serve(state, &addr)) {
            tracing::error!(error = %e, "review API stopped");
        }
    });
    Ok(())
}

/// Parses arguments from the process and runs, printing to stdout.
pub fn main_with_args(args: impl IntoIterator<Item = String>) -> Result<()> {
    let cli = Cli::parse_from(args);
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    run(cli, &mut lock)
}

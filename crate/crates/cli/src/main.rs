//! `negminer`: embed, reduce, mine, sample, score and evaluate retrieval
//! training triplets.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::PipelineConfig;

#[derive(Parser)]
#[command(name = "negminer", version, about = "Hard-negative mining toolkit for retrieval training data")]
struct Cli {
    /// TOML pipeline config; flags take precedence over its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fetch per-model embeddings from a provider or copy them from precomputed stores.
    Embed(EmbedArgs),
    /// Principal component analysis over the concatenated ensemble vectors.
    #[command(subcommand)]
    Pca(PcaCommand),
    /// Mine hard negatives with the dual distance criteria.
    Mine(MineArgs),
    /// Baseline negatives: random, bm25, inbatch or a hybrid of two.
    Sample(SampleArgs),
    /// Triplet margin loss over a triplet file.
    Loss(LossArgs),
    /// MRR@k of a scored run, overall and by document length.
    Eval(EvalArgs),
    /// Token-length histogram of a JSONL corpus or query file.
    Stats(StatsArgs),
    /// Recompute every distance in a triplet file and check both criteria.
    Verify(VerifyArgs),
    /// Write the synthetic clustered fixture (corpus, queries, qrels, run, stores).
    Fixture(FixtureArgs),
}

#[derive(Subcommand)]
pub enum PcaCommand {
    /// Fit on the union of document and query vectors.
    Fit(PcaFitArgs),
    /// Project documents and queries with a fitted model.
    Transform(PcaTransformArgs),
}

#[derive(Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub queries: Option<PathBuf>,
    /// Output ensemble directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated model names, in concatenation order.
    #[arg(long, value_delimiter = ',')]
    pub models: Option<Vec<String>>,
    #[arg(long, env = "NEGMINER_PROVIDER_URL")]
    pub provider_url: Option<String>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub timeout_ms: Option<u64>,
    #[arg(long)]
    pub max_retries: Option<u32>,
    /// Concurrent requests per model.
    #[arg(long)]
    pub parallelism: Option<usize>,
    /// Take vectors from an existing ensemble directory instead of a provider.
    #[arg(long)]
    pub precomputed: Option<PathBuf>,
    /// Concatenate raw vectors without per-model L2 normalization.
    #[arg(long)]
    pub no_normalize: bool,
}

#[derive(Args)]
pub struct PcaFitArgs {
    #[arg(long)]
    pub stores: Option<PathBuf>,
    /// Output model file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Cumulative explained variance to retain.
    #[arg(long)]
    pub variance: Option<f64>,
}

#[derive(Args)]
pub struct PcaTransformArgs {
    #[arg(long)]
    pub stores: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Output directory; gets `docs` and `queries` stores.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Where distances are computed and how the PCA model is obtained.
#[derive(Args)]
pub struct SpaceArgs {
    #[arg(long, visible_alias = "embeddings")]
    pub stores: Option<PathBuf>,
    /// `pca` or `concat`.
    #[arg(long)]
    pub space: Option<String>,
    /// Fitted PCA model; fitted on the fly when absent.
    #[arg(long)]
    pub pca: Option<PathBuf>,
    /// Variance threshold for an on-the-fly fit.
    #[arg(long)]
    pub variance: Option<f64>,
}

#[derive(Args)]
pub struct MineArgs {
    #[command(flatten)]
    pub space: SpaceArgs,
    #[arg(long)]
    pub qrels: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Negatives per (query, positive) pair.
    #[arg(short, long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Also exclude documents that are positives for any other query.
    #[arg(long)]
    pub exclude_cross_query_positives: bool,
    /// Margin recorded in the metadata sidecar for downstream training.
    #[arg(long)]
    pub margin: Option<f64>,
}

#[derive(Args)]
pub struct SampleArgs {
    /// random, bm25, inbatch or hybrid.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub queries: Option<PathBuf>,
    #[arg(long)]
    pub qrels: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(short, long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// In-batch batch size.
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub k1: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
    /// The two methods a hybrid combines, e.g. `bm25,inbatch`.
    #[arg(long, value_delimiter = ',')]
    pub hybrid: Option<Vec<String>>,
    /// Hybrid share as `first:second`, e.g. `1:1`.
    #[arg(long)]
    pub ratio: Option<String>,
    #[arg(long)]
    pub margin: Option<f64>,
}

#[derive(Args)]
pub struct LossArgs {
    #[arg(long)]
    pub triplets: PathBuf,
    /// Per-triplet TSV output; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub margin: Option<f64>,
    /// sum or mean.
    #[arg(long, default_value = "sum")]
    pub reduction: String,
    /// Recompute distances from these vectors (needed for baseline files).
    #[command(flatten)]
    pub space: SpaceArgs,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Scores TSV: query_id, doc_id, score.
    #[arg(long)]
    pub run: Option<PathBuf>,
    #[arg(long)]
    pub qrels: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub queries: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub ks: Option<Vec<usize>>,
    /// Documents with fewer tokens than this count as short.
    #[arg(long)]
    pub length_threshold: Option<usize>,
    /// Queries absent from the run: `error` or `zero`.
    #[arg(long)]
    pub missing: Option<String>,
    /// Report JSON output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct StatsArgs {
    /// JSONL file with `id` and `text` fields.
    #[arg(long)]
    pub input: PathBuf,
    /// Ascending bucket edges in tokens.
    #[arg(long, value_delimiter = ',', default_value = "64,128,256,512,1024,2048")]
    pub edges: Vec<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub triplets: PathBuf,
    #[command(flatten)]
    pub space: SpaceArgs,
    /// Also check that no negative is a positive for its query.
    #[arg(long)]
    pub qrels: Option<PathBuf>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Full report JSON output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct FixtureArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4000)]
    pub docs: usize,
    #[arg(long, default_value_t = 200)]
    pub queries: usize,
    #[arg(long, default_value_t = 8)]
    pub clusters: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| anyhow::anyhow!("cli: {e}"))?;
    }
    let cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    match cli.command {
        Command::Embed(a) => commands::embed(&cfg, a),
        Command::Pca(PcaCommand::Fit(a)) => commands::pca_fit(&cfg, a),
        Command::Pca(PcaCommand::Transform(a)) => commands::pca_transform(&cfg, a),
        Command::Mine(a) => commands::mine(&cfg, a),
        Command::Sample(a) => commands::sample(&cfg, a),
        Command::Loss(a) => commands::loss(&cfg, a),
        Command::Eval(a) => commands::eval(&cfg, a),
        Command::Stats(a) => commands::stats(a),
        Command::Verify(a) => commands::verify(&cfg, a),
        Command::Fixture(a) => commands::fixture(a),
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or_default();
            eprintln!("error: cli: {}", one_line(first.trim_start_matches("error: ")));
            return ExitCode::from(2);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", one_line(&format!("{e:#}")));
            ExitCode::FAILURE
        }
    }
}

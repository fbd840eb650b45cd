use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "nel", version, about = "Entity linking against a Wikidata knowledge base", arg_required_else_help = true)]
pub struct Cli {
    /// Run every data-parallel step on the calling thread.
    #[arg(long, global = true)]
    pub sequential: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stream a JSON entity dump into a filtered record store.
    Index(IndexArgs),
    /// Rank items by PageRank over the link graph.
    Pagerank(PagerankArgs),
    /// Train the label language model.
    TrainLm(TrainLmArgs),
    /// Build the surface-form dictionary.
    BuildDict(BuildDictArgs),
    /// Train the classifier on gold-annotated documents.
    Train(TrainArgs),
    /// Annotate documents, one per input line, as JSON lines.
    Annotate(AnnotateArgs),
    /// Score the annotator against a gold dataset.
    Evaluate(EvaluateArgs),
    /// Run the HTTP annotation service.
    Serve(ServeArgs),
    /// Insert or replace items in a record store from dump lines.
    Upsert(UpsertArgs),
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    /// Dump file, optionally gzip-compressed.
    #[arg(long)]
    pub dump: PathBuf,
    /// Output store directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated label languages to keep; all when omitted.
    #[arg(long)]
    pub langs: Option<String>,
    /// Comma-separated type roots.
    #[arg(long, default_value = "Q5,Q43229,Q618123")]
    pub roots: String,
}

#[derive(Debug, Args)]
pub struct PagerankArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.85)]
    pub damping: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    /// Rank only the kept items instead of the whole dump graph.
    #[arg(long)]
    pub filtered: bool,
}

#[derive(Debug, Args)]
pub struct TrainLmArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Additive smoothing constant.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
}

#[derive(Debug, Args)]
pub struct BuildDictArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated languages; all when omitted.
    #[arg(long)]
    pub langs: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Gold documents, one JSON object per line.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub dict: PathBuf,
    #[arg(long)]
    pub lm: PathBuf,
    #[arg(long)]
    pub pagerank: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Pick hyperparameters by cross-validated grid search.
    #[arg(long)]
    pub grid: bool,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    #[arg(long, default_value_t = 0.85)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.1)]
    pub eta: f64,
    #[arg(long, default_value_t = 200)]
    pub max_distance: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lambda: f64,
    #[arg(long, default_value_t = 40)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the training report here as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EngineArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Engine configuration file; defaults to `<model>.conf` when present.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnnotateArgs {
    #[command(flatten)]
    pub engine: EngineArgs,
    /// Input file; stdin when omitted.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub engine: EngineArgs,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Write the full report here as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub engine: EngineArgs,
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
    /// Largest accepted request body in bytes.
    #[arg(long)]
    pub body_limit: Option<usize>,
}

#[derive(Debug, Args)]
pub struct UpsertArgs {
    #[arg(long)]
    pub store: PathBuf,
    /// Entity lines in dump format.
    #[arg(long)]
    pub items: PathBuf,
}

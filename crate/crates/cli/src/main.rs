//! `zoomeval` command-line entry point.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

mod common;
mod evaluate;
mod preprocess;
mod redundancy;
mod report;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use common::CliError;

#[derive(Parser)]
#[command(name = "zoomeval", version, about = "Hidden-content recognition harness for vision-language models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Apply zoom-out, squint or enhancement to one image.
    Preprocess(PreprocessArgs),
    /// Run the staged prompting protocol over a manifest.
    Evaluate(EvaluateArgs),
    /// Run the resolution-bucket and/or squint-grid sweeps.
    Sweep(SweepArgs),
    /// Compare token redundancy between two exported embedding files.
    Redundancy(RedundancyArgs),
    /// Re-render the report of an existing run directory.
    Report(ReportArgs),
}

#[derive(Args)]
pub struct PreprocessArgs {
    /// Downscale so the long side is at most N pixels.
    #[arg(long, value_name = "N")]
    pub zoom_out: Option<u32>,
    /// Brightness and contrast deltas, e.g. `-32,+32`.
    #[arg(long, value_name = "B,C", allow_hyphen_values = true)]
    pub squint: Option<String>,
    /// Apply the edge/colour/equalization composite.
    #[arg(long)]
    pub enhance: bool,
    /// JSON preprocessing chain; replaces the individual flags.
    #[arg(long, value_name = "FILE", conflicts_with_all = ["zoom_out", "squint", "enhance"])]
    pub spec: Option<PathBuf>,
    pub input: PathBuf,
    pub output: PathBuf,
}

/// Options shared by commands that talk to models.
#[derive(Args, Clone, Default)]
pub struct RunOptions {
    /// JSON run configuration; flags override its values.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
    /// Endpoint configuration (one object or an array).
    #[arg(long, value_name = "FILE")]
    pub endpoints: Option<PathBuf>,
    /// Use a built-in offline backend instead of HTTP endpoints, e.g.
    /// `semvink-oracle`, `semvink-oracle:8-128`, `enhance-grant`.
    #[arg(long, value_name = "NAME")]
    pub mock: Option<String>,
    #[arg(long, value_name = "DIR")]
    pub cache_dir: Option<PathBuf>,
    /// Disable the response cache.
    #[arg(long)]
    pub no_cache: bool,
    /// Parent directory for run directories.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub run_id: Option<String>,
    /// Overwrite an existing run directory.
    #[arg(long)]
    pub force: bool,
    /// Maximum in-flight requests per endpoint.
    #[arg(long, value_name = "N")]
    pub parallelism: Option<usize>,
    /// Comma separated item ids to restrict the run to.
    #[arg(long, value_name = "IDS", value_delimiter = ',')]
    pub items: Vec<String>,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub run: RunOptions,
    /// `full`, `baselines`, a stage list such as `direct,hinted,zoom-out:64`,
    /// or a JSON plan file.
    #[arg(long)]
    pub plan: Option<String>,
    /// Manual verdict corrections (JSON array).
    #[arg(long, value_name = "FILE")]
    pub overrides: Option<PathBuf>,
}

#[derive(Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunOptions,
    /// Run the zoom-out resolution sweep.
    #[arg(long)]
    pub resolutions: bool,
    /// Run the squint configuration grid.
    #[arg(long)]
    pub squint: bool,
    /// Buckets as `LO-HI` pairs, e.g. `8-32,32-128`.
    #[arg(long, value_name = "LIST", value_delimiter = ',', num_args = 0..)]
    pub buckets: Option<Vec<String>>,
    /// Sampled targets per bucket.
    #[arg(long, value_name = "N")]
    pub samples: Option<usize>,
}

#[derive(Args)]
pub struct RedundancyArgs {
    /// Embeddings of the full-resolution image.
    #[arg(long, value_name = "FILE")]
    pub high: PathBuf,
    /// Embeddings of the zoomed-out image.
    #[arg(long, value_name = "FILE")]
    pub low: PathBuf,
    #[arg(long, default_value_t = zoomeval::redundancy::DEFAULT_THRESHOLD)]
    pub threshold: f32,
    /// Also write `redundancy.json` into this directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,
}

#[derive(Args)]
pub struct ReportArgs {
    /// Run directory containing `report.json` and optionally `transcripts.jsonl`.
    pub run_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,
    #[arg(long, value_name = "FILE")]
    pub overrides: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum OutputFormat {
    Text,
    Markdown,
    Json,
}

impl From<OutputFormat> for zoomeval::reporting::Format {
    fn from(f: OutputFormat) -> Self {
        match f {
            OutputFormat::Text => Self::Text,
            OutputFormat::Markdown => Self::Markdown,
            OutputFormat::Json => Self::Json,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result: Result<(), CliError> = match cli.command {
        Command::Preprocess(a) => preprocess::run(a),
        Command::Evaluate(a) => evaluate::run(a),
        Command::Sweep(a) => sweep::run(a),
        Command::Redundancy(a) => redundancy::run(a),
        Command::Report(a) => report::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

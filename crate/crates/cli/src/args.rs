use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "mrta", version, about = "Assembly-training assistant toolkit")]
pub struct Cli {
    /// JSON config file; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and validate a manual directory and print corpus statistics.
    Ingest(IngestArgs),
    /// Synthesize conversations, context-response pairs and VQA pairs.
    Generate(GenerateArgs),
    /// Score predictions against references, or summarize metric reports.
    Eval(EvalArgs),
    /// Run the session service over HTTP.
    Serve(ServeArgs),
    /// Chat with the trainer in the terminal.
    Chat(ChatArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Directory of manual JSON files.
    #[arg(long, value_name = "DIR")]
    pub manuals: Option<PathBuf>,
    /// Also write the statistics as JSON.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Steps per chunk when counting chunks [default: 10].
    #[arg(long, value_name = "N")]
    pub chunk_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Directory of manual JSON files.
    #[arg(long, value_name = "DIR")]
    pub manuals: Option<PathBuf>,
    /// Backend config file (JSON).
    #[arg(long, value_name = "FILE")]
    pub backend: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Master seed [default: 7].
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Steps per manual chunk [default: 10].
    #[arg(long, value_name = "N")]
    pub chunk_size: Option<usize>,
    /// Share of conversations held out for testing [default: 0.2].
    #[arg(long, value_name = "F")]
    pub test_fraction: Option<f64>,
    /// Conversations generated per chunk [default: 1].
    #[arg(long, value_name = "N")]
    pub conversations_per_chunk: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RougeArg {
    Recall,
    F1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Predictions JSONL: {"id", "text"} per line.
    #[arg(
        long,
        value_name = "FILE",
        requires = "references",
        conflicts_with = "reports"
    )]
    pub predictions: Option<PathBuf>,
    /// References JSONL: {"id", "text"} lines or generated pair records.
    #[arg(long, value_name = "FILE", requires = "predictions")]
    pub references: Option<PathBuf>,
    /// Keep only pair records from this split.
    #[arg(long, value_enum)]
    pub split: Option<SplitArg>,
    /// Manual directory whose theme entities form the theme lexicon.
    #[arg(long, value_name = "DIR")]
    pub manuals: Option<PathBuf>,
    /// JSON array of extra theme entity strings.
    #[arg(long, value_name = "FILE")]
    pub lexicon: Option<PathBuf>,
    /// Row label for the report.
    #[arg(long, default_value = "model")]
    pub model_id: String,
    /// ROUGE variant.
    #[arg(long, value_enum, default_value = "recall")]
    pub rouge: RougeArg,
    /// JSON array of metric reports; prints them with a standard-deviation row.
    #[arg(long, value_name = "FILE", required_unless_present = "predictions")]
    pub reports: Option<PathBuf>,
    /// Write the report (or the deviation row) as JSON.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Directory of manual JSON files.
    #[arg(long, value_name = "DIR", env = "MRTA_MANUALS")]
    pub manuals: Option<PathBuf>,
    /// Backend config file used for new sessions.
    #[arg(long, value_name = "FILE", env = "MRTA_BACKEND")]
    pub backend: Option<PathBuf>,
    /// Address to bind [default: 127.0.0.1].
    #[arg(long, value_name = "ADDR", env = "MRTA_HOST")]
    pub host: Option<String>,
    /// Port to listen on [default: 8080].
    #[arg(long, env = "MRTA_PORT")]
    pub port: Option<u16>,
    /// Directory for per-session event logs; sessions there are restored.
    #[arg(long, value_name = "DIR", env = "MRTA_LOG_DIR")]
    pub log_dir: Option<PathBuf>,
    /// Steps per manual chunk [default: 10].
    #[arg(long, value_name = "N")]
    pub chunk_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ChatArgs {
    /// Manual to train on.
    #[arg(long, value_name = "ID")]
    pub manual: String,
    /// Chunk of the manual.
    #[arg(long, value_name = "N", default_value_t = 0)]
    pub chunk: usize,
    /// Directory of manual JSON files.
    #[arg(long, value_name = "DIR")]
    pub manuals: Option<PathBuf>,
    /// Backend config file (JSON).
    #[arg(long, value_name = "FILE")]
    pub backend: Option<PathBuf>,
    /// Read trainee lines from this file instead of stdin.
    #[arg(long, value_name = "FILE")]
    pub script: Option<PathBuf>,
    /// Keep the session's event log here.
    #[arg(long, value_name = "DIR")]
    pub log_dir: Option<PathBuf>,
    /// Use counting timestamps instead of wall time.
    #[arg(long)]
    pub logical_clock: bool,
    /// Steps per manual chunk [default: 10].
    #[arg(long, value_name = "N")]
    pub chunk_size: Option<usize>,
}

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use scene_mmkg::ErrorCategory;

use crate::config::Overrides;

#[derive(Debug, Parser)]
#[command(
    name = "scene-mmkg",
    version,
    about = "Build, refine and query scene-driven multimodal knowledge graphs"
)]
struct Cli {
    /// Pipeline config (JSON). Relative paths inside it resolve against its directory.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct QueryArgs {
    /// Graph directory; defaults to the config's refined graph.
    #[arg(long, value_name = "DIR")]
    graph: Option<PathBuf>,
    /// Instruction or object text to search with.
    #[arg(long)]
    query: Option<String>,
    /// Observation embedding: a JSON array inline or a path to one.
    #[arg(long, value_name = "JSON|PATH")]
    observation: Option<String>,
    /// Text embedded to stand in for the observation.
    #[arg(long, value_name = "TEXT")]
    observation_text: Option<String>,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 1)]
    hops: usize,
    /// Denoise threshold; defaults to thresholds.gamma3.
    #[arg(long, allow_hyphen_values = true)]
    gamma3: Option<f64>,
    /// Write here instead of stdout.
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MatrixFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportFormat {
    Jsonl,
    Csv,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Mine, expand and cluster scene concepts into schema.json.
    Schema,
    /// Fill the schema with general and scene knowledge.
    Populate,
    /// Hierarchicalize and aggregate attributes; writes the refined graph and a report.
    Refine {
        /// Also write the before/after attribute CDFs as CSV.
        #[arg(long, value_name = "PATH")]
        cdf_csv: Option<PathBuf>,
    },
    /// Print node, edge, image and attribute counts of a graph.
    Stats {
        /// Graph directory; defaults to the config's graph_dir.
        graph: Option<PathBuf>,
    },
    /// Retrieve the entities closest to a query and their neighborhood.
    Retrieve(QueryArgs),
    /// Encode the retrieved subgraph with a graph convolution.
    Encode {
        #[command(flatten)]
        query: QueryArgs,
        /// Weights file; defaults to the config's gcn_params.
        #[arg(long, value_name = "PATH")]
        params: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = MatrixFormat::Json)]
        format: MatrixFormat,
        /// Include the mean of the anchor rows (JSON output only).
        #[arg(long)]
        pool: bool,
    },
    /// Export a graph as a JSONL directory or a flat triples CSV.
    Export {
        #[arg(long, value_name = "DIR")]
        graph: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: ExportFormat,
        #[arg(long, value_name = "PATH")]
        output: PathBuf,
    },
}

fn exit_code(category: ErrorCategory) -> u8 {
    match category {
        ErrorCategory::MissingFile => 2,
        ErrorCategory::Provider => 3,
        ErrorCategory::Integrity => 4,
        ErrorCategory::Invalid => 1,
    }
}

fn category_name(category: ErrorCategory) -> &'static str {
    match category {
        ErrorCategory::MissingFile => "missing_file",
        ErrorCategory::Provider => "provider",
        ErrorCategory::Integrity => "integrity",
        ErrorCategory::Invalid => "invalid",
    }
}

/// Joins the error chain, skipping causes already spelled out by the
/// message above them.
fn describe(err: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if parts.last().is_some_and(|prev| prev.ends_with(&text)) {
            continue;
        }
        parts.push(text);
    }
    parts.join(": ")
}

fn report(err: &anyhow::Error) -> u8 {
    let core = err
        .chain()
        .find_map(|e| e.downcast_ref::<scene_mmkg::Error>());
    let (kind, category) = match core {
        Some(e) => (e.kind(), e.category()),
        None => ("other", ErrorCategory::Invalid),
    };
    let code = exit_code(category);
    let body = serde_json::json!({
        "error": {
            "kind": kind,
            "category": category_name(category),
            "exit_code": code,
            "message": describe(err),
        }
    });
    eprintln!("{body}");
    code
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        // Usage errors share the generic exit code so 2 keeps meaning
        // "missing file".
        Err(e) => {
            let body = serde_json::json!({
                "error": {
                    "kind": "usage",
                    "category": category_name(ErrorCategory::Invalid),
                    "exit_code": 1,
                    "message": e.to_string().trim_end(),
                }
            });
            eprintln!("{body}");
            return ExitCode::from(1);
        }
    };
    let result = config::PipelineConfig::assemble(cli.config.as_deref(), &cli.overrides)
        .and_then(|cfg| commands::run(cli.command, &cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => ExitCode::from(report(&e)),
    }
}

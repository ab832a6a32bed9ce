use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use medmap_cli::{cmd_analyze, cmd_gen_prompts, cmd_judge, cmd_map, AnalyzeTarget, CliError, PipelineConfig};

#[derive(Parser)]
#[command(
    name = "medmap",
    version,
    about = "Build layer-wise maps of medical knowledge in language models"
)]
struct Cli {
    /// Pipeline config (JSON). Paths inside it are relative to the file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Top-level seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; overrides the config.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Expand the prompt templates into a corpus manifest.
    GenPrompts,
    /// Compute per-layer metrics from trace bundles.
    Analyze {
        #[arg(value_enum)]
        analysis: AnalyzeTarget,
        /// Also write 2-D embeddings per layer (umap only).
        #[arg(long)]
        export_embeddings: bool,
    },
    /// Score lesion transcripts with the configured judge endpoint.
    Judge,
    /// Assemble and render the map from the metric reports.
    Map {
        /// Output formats.
        #[arg(long, value_delimiter = ',', default_value = "json,svg")]
        format: Vec<String>,
    },
}

fn run(cli: Cli) -> Result<medmap_cli::Summary, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(jobs) = cli.jobs {
        cfg.jobs = Some(jobs);
    }
    if let Some(out) = cli.out {
        cfg.out_dir = out;
    }
    match cli.command {
        Command::GenPrompts => cmd_gen_prompts(&cfg),
        Command::Analyze {
            analysis,
            export_embeddings,
        } => cmd_analyze(&cfg, analysis, export_embeddings),
        Command::Judge => cmd_judge(&cfg),
        Command::Map { format } => cmd_map(&cfg, &format),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(summary) => {
            println!("{}", serde_json::to_string(&summary).expect("summary serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use persim_cli::{analyze_dir, emit_plots, run_case_study, CaseStudySpec, CliError, Preset};
use persim_core::analysis::AnalysisConfig;

#[derive(Parser)]
#[command(name = "persim", version, about = "Simulate interacting language agents and analyze their perspectives")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a case-study preset once per seed.
    Run {
        #[arg(long)]
        preset: Preset,
        /// Comma-separated master seeds.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
        /// JSON merge patch applied to the preset's experiment config.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        analysis: AnalysisArgs,
    },
    /// Render SVG plots from a run directory's analysis CSVs.
    Plot {
        #[arg(long)]
        run: PathBuf,
    },
    /// Recompute analysis CSVs for a run directory.
    Analyze {
        #[arg(long)]
        run: PathBuf,
        #[command(flatten)]
        analysis: AnalysisArgs,
    },
}

#[derive(clap::Args)]
struct AnalysisArgs {
    /// Perspective dimension.
    #[arg(long, default_value_t = 1)]
    d: usize,
    #[arg(long, default_value_t = 8)]
    kmax: usize,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    /// Neighbours for the iso-mirror's isomap.
    #[arg(long, default_value_t = AnalysisConfig::default().k_neighbors)]
    k_neighbors: usize,
    /// Seed for clustering restarts.
    #[arg(long, default_value_t = 0)]
    analysis_seed: u64,
}

impl From<&AnalysisArgs> for AnalysisConfig {
    fn from(a: &AnalysisArgs) -> Self {
        AnalysisConfig {
            d: a.d,
            k_max: a.kmax,
            restarts: a.restarts,
            k_neighbors: a.k_neighbors,
            seed: a.analysis_seed,
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            preset,
            seeds,
            out,
            config,
            analysis,
        } => {
            let overrides = match config {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Io { path: path.clone(), source: e })?;
                    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
                }
                None => serde_json::Value::Null,
            };
            let spec = CaseStudySpec::new(preset, seeds).with_overrides(overrides);
            let results = run_case_study(&spec, &out, &(&analysis).into())?;
            for r in results {
                println!("seed {} -> {}", r.seed, r.dir.display());
            }
        }
        Command::Plot { run } => {
            for path in emit_plots(&run)? {
                println!("{}", path.display());
            }
        }
        Command::Analyze { run, analysis } => {
            analyze_dir(&run, &(&analysis).into())?;
            println!("analysis written to {}", run.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

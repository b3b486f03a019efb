mod config;
mod evaluate;
mod manifest;
mod simulate;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use kobias_core::dataset::{format_matrix, read_matrix};
use kobias_core::scoring::ScoringKind;

use crate::config::{parse_estimators, read_toml, EvaluateConfig, SimulateConfig};

#[derive(Parser)]
#[command(
    name = "kobias",
    version,
    about = "Knockout-based benchmark for causal gene-network estimators"
)]
struct Cli {
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the Monte Carlo simulation sweep and write `results_table.tsv`.
    Simulate {
        /// TOML config; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated subset of L1,L1R,CD,ICP for the results table.
        #[arg(long)]
        estimators: Option<String>,
        /// Continue an interrupted run in `--out`.
        #[arg(long)]
        resume: bool,
    },
    /// Rank all gene pairs of a dataset and score them against its knockouts.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_parser = parse_scoring)]
        scoring: Option<ScoringKind>,
        #[arg(long)]
        estimators: Option<String>,
        #[arg(long)]
        resume: bool,
    },
    /// Print the default configuration of a command as TOML.
    PrintConfig {
        #[arg(value_enum)]
        command: ConfigKind,
    },
    /// Validate an expression matrix and rewrite it in canonical form.
    Convert {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ConfigKind {
    Simulate,
    Evaluate,
}

fn parse_scoring(s: &str) -> Result<ScoringKind, String> {
    s.parse().map_err(|e: kobias_core::Error| e.to_string())
}

fn config_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn convert(input: &Path, out: &Path) -> Result<()> {
    let (names, m) = read_matrix(input)?;
    let file = input
        .file_name()
        .context("input has no file name")?
        .to_string_lossy()
        .into_owned();
    let summary = serde_json::json!({ "input": input, "rows": m.nrows(), "columns": m.ncols() });
    manifest::tracked(out, "convert", 0, &summary, |run| {
        run.write(&file, &format_matrix(&names, &m))?;
        run.set_summary(summary.clone());
        Ok(())
    })
}

fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .context("starting worker pool")?;
    }
    match cli.command {
        Command::Simulate {
            config,
            out,
            seed,
            estimators,
            resume,
        } => {
            let mut cfg: SimulateConfig = match &config {
                Some(path) => read_toml(path)?,
                None => SimulateConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(list) = estimators {
                cfg.estimators = parse_estimators(&list)?;
            }
            simulate::run(&cfg, &out, resume)
        }
        Command::Evaluate {
            config,
            out,
            seed,
            scoring,
            estimators,
            resume,
        } => {
            let mut cfg: EvaluateConfig = read_toml(&config)?;
            if let Some(s) = seed {
                cfg.pipeline.seed = s;
            }
            if let Some(kind) = scoring {
                cfg.scoring = kind;
            }
            if let Some(list) = estimators {
                cfg.estimators = parse_estimators(&list)?;
            }
            let paths = cfg.dataset.resolved(&config_dir(&config));
            evaluate::run(&cfg, &paths, &out, resume)
        }
        Command::PrintConfig { command } => {
            let text = match command {
                ConfigKind::Simulate => format!(
                    "# n1 defaults to min(300, p / 2) and n2 to p / 4 when omitted.\n{}",
                    toml::to_string(&SimulateConfig::default())?
                ),
                ConfigKind::Evaluate => toml::to_string(&EvaluateConfig::default())?,
            };
            print!("{text}");
            Ok(())
        }
        Command::Convert { input, out } => convert(&input, &out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

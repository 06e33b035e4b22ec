use std::path::PathBuf;

use crate::config::{EvalConfig, ExperimentConfig};
use crate::experiment::{self, ExperimentError, Fig4Options};
use crate::report;
use anyplay_core::xplay::pearson_matrix;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "anyplay", version, about = "Intent-diverse training and cross-play evaluation on a referential game")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every pool member listed in a config file.
    TrainPool { config: PathBuf },
    /// Build the cross-play matrix and score report for a trained pool.
    Crossplay {
        dir: PathBuf,
        /// Games per pairing (default: the value recorded at training time).
        #[arg(long)]
        games: Option<usize>,
        /// Base seed for per-pairing seeds (default: recorded value).
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: the pool directory).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, env = "ANYPLAY_JOBS")]
        jobs: Option<usize>,
    },
    /// Train one pool per intent count and check the sweep's endpoints.
    ReproduceFig4 {
        #[arg(long, default_value_t = 10)]
        seeds: usize,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6")]
        intents: Vec<usize>,
        #[arg(long, default_value = "fig4")]
        out: PathBuf,
        #[arg(long, default_value_t = EvalConfig::default().n_games)]
        games: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, env = "ANYPLAY_JOBS")]
        jobs: Option<usize>,
    },
    /// Correlate the columns of a score table (`NA` marks a missing score).
    Pearson { scores: PathBuf },
}

/// Parses `args` (program name first) and runs the chosen subcommand.
pub fn run<I, T>(args: I) -> Result<(), ExperimentError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(ExperimentError::Usage)?;
    match cli.command {
        Command::TrainPool { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let files = experiment::train_pool(&cfg)?;
            println!("wrote {} files to {}", files.len(), cfg.output_dir.display());
        }
        Command::Crossplay { dir, games, seed, out, jobs } => {
            let out = out.unwrap_or_else(|| dir.clone());
            let result = experiment::with_jobs(jobs, || experiment::crossplay(&dir, games, seed, &out))??;
            print!("{}", report::score_table(&result.report));
        }
        Command::ReproduceFig4 { seeds, intents, out, games, seed, jobs } => {
            if seeds == 0 || intents.is_empty() || intents.contains(&0) {
                return Err(crate::config::ConfigError::Invalid(
                    "need --seeds >= 1 and intent counts >= 1".into(),
                )
                .into());
            }
            let mut opts = Fig4Options::new(out);
            opts.seeds = seeds;
            opts.intents = intents;
            opts.eval = EvalConfig { n_games: games, base_seed: seed };
            let summary = experiment::with_jobs(jobs, || experiment::reproduce_fig4(&opts))??;
            print!("{}", summary.text);
            if !summary.failures.is_empty() {
                return Err(ExperimentError::Assertion(summary.failures.join("; ")));
            }
        }
        Command::Pearson { scores } => {
            let text = std::fs::read_to_string(&scores)
                .map_err(|source| ExperimentError::Io { path: scores.display().to_string(), source })?;
            let (names, columns) = report::parse_score_table(&text)?;
            print!("{}", report::pearson_csv(&names, &pearson_matrix(&columns)));
        }
    }
    Ok(())
}

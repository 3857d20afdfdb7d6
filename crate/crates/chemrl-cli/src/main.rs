//! `chemrl`: batch runner for pretraining, fine-tuning, benchmarking,
//! evaluation, and sampling.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration failure.

mod commands;
mod config;
mod tasks;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{CliError, GenerateArgs};
use config::Config;

#[derive(Parser)]
#[command(
    name = "chemrl",
    version,
    about = "Recurrent chemical language model training and evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct SharedArgs {
    /// Configuration file (flat `key = value` lines)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run seed; repeat for multiple seeds (overrides run.seeds)
    #[arg(long)]
    seed: Vec<u64>,
    /// Output directory (overrides run.out)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Oracle budget (overrides run.budget)
    #[arg(long)]
    budget: Option<u64>,
    /// Algorithm name (overrides algo.name)
    #[arg(long)]
    algo: Option<String>,
    /// Suppress progress output
    #[arg(long)]
    quiet: bool,
    /// Print the fully resolved configuration and exit
    #[arg(long)]
    dump_config: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Teacher-forced pretraining of the prior
    Pretrain {
        #[command(flatten)]
        shared: SharedArgs,
        /// Corpus file, one SMILES per line (overrides pretrain.corpus)
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Fine-tune an agent against a scoring task
    Optimize {
        #[command(flatten)]
        shared: SharedArgs,
        /// Prior checkpoint (overrides run.prior)
        #[arg(long)]
        prior: Option<PathBuf>,
    },
    /// Run a tasks x algorithms x seeds suite and aggregate a report
    Benchmark {
        #[command(flatten)]
        shared: SharedArgs,
        /// Prior checkpoint (overrides run.prior)
        #[arg(long)]
        prior: Option<PathBuf>,
    },
    /// Recompute metrics from history CSVs
    Evaluate {
        #[command(flatten)]
        shared: SharedArgs,
        /// History CSV paths
        #[arg(required = true)]
        histories: Vec<PathBuf>,
    },
    /// Sample molecules from a checkpoint
    Generate {
        #[command(flatten)]
        shared: SharedArgs,
        /// Checkpoint to sample from
        #[arg(long)]
        checkpoint: PathBuf,
        /// Number of molecules
        #[arg(long, default_value_t = 100)]
        count: usize,
        /// Length cap per episode
        #[arg(long, default_value_t = 100)]
        max_len: usize,
        /// Teacher-forced prefix (SMILES)
        #[arg(long)]
        prefix: Option<String>,
        /// Scaffold template with `*` attachment markers
        #[arg(long)]
        scaffold: Option<String>,
        /// Per-attachment prompt, one per `*` in order (repeatable)
        #[arg(long = "prompt")]
        prompts: Vec<String>,
        /// Print the valid fraction to standard error
        #[arg(long)]
        report_validity: bool,
    },
}

fn resolve_config(shared: &SharedArgs) -> Result<Config, CliError> {
    let mut config = match &shared.config {
        Some(path) => Config::from_file(path)?,
        None => Config::default(),
    };
    if !shared.seed.is_empty() {
        let list = shared
            .seed
            .iter()
            .map(u64::to_string)
            .collect::<Vec<_>>()
            .join(",");
        config.set("run.seeds", list);
    }
    if let Some(out) = &shared.out {
        config.set("run.out", out.display().to_string());
    }
    if let Some(budget) = shared.budget {
        config.set("run.budget", budget.to_string());
    }
    if let Some(algo) = &shared.algo {
        config.set("algo.name", algo.clone());
    }
    if shared.quiet {
        config.set("run.quiet", "true".to_string());
    }
    Ok(config)
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Pretrain { shared, corpus } => {
            let mut config = resolve_config(&shared)?;
            if let Some(corpus) = corpus {
                config.set("pretrain.corpus", corpus.display().to_string());
            }
            if shared.dump_config {
                print!("{}", config.dump());
                return Ok(());
            }
            commands::cmd_pretrain(&config)
        }
        Command::Optimize { shared, prior } => {
            let mut config = resolve_config(&shared)?;
            if let Some(prior) = prior {
                config.set("run.prior", prior.display().to_string());
            }
            if shared.dump_config {
                print!("{}", config.dump());
                return Ok(());
            }
            commands::cmd_optimize(&config)
        }
        Command::Benchmark { shared, prior } => {
            let mut config = resolve_config(&shared)?;
            if let Some(prior) = prior {
                config.set("run.prior", prior.display().to_string());
            }
            if shared.dump_config {
                print!("{}", config.dump());
                return Ok(());
            }
            commands::cmd_benchmark(&config)
        }
        Command::Evaluate { shared, histories } => {
            let config = resolve_config(&shared)?;
            if shared.dump_config {
                print!("{}", config.dump());
                return Ok(());
            }
            commands::cmd_evaluate(&config, &histories)
        }
        Command::Generate {
            shared,
            checkpoint,
            count,
            max_len,
            prefix,
            scaffold,
            prompts,
            report_validity,
        } => {
            let config = resolve_config(&shared)?;
            if shared.dump_config {
                print!("{}", config.dump());
                return Ok(());
            }
            let seed = shared.seed.first().copied().unwrap_or_else(|| {
                config
                    .get("run.seeds")
                    .and_then(|s| s.split(',').next())
                    .and_then(|s| s.trim().parse().ok())
                    .unwrap_or(0)
            });
            commands::cmd_generate(&GenerateArgs {
                checkpoint,
                count,
                max_len,
                seed,
                prefix,
                scaffold,
                prompts,
                report_validity,
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(2)
        }
    }
}

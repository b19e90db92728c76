//! `pmil`: synthetic data generation, pseudo-bag MIL training, evaluation
//! and instance scoring from the command line.
//!
//! Exit codes: 0 success, 1 internal or numeric error, 2 bad path or
//! config, 3 unknown bag or class.

mod commands;
mod config;
mod error;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Method;
use config::RunConfig;
use error::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "pmil",
    version,
    about = "Shapley-guided pseudo-bag multiple-instance learning"
)]
struct Cli {
    /// JSON run config; omitted keys take their defaults.
    #[arg(long, global = true, env = "PMIL_CONFIG")]
    config: Option<PathBuf>,

    /// Root seed for every random stream (overrides the config).
    #[arg(long, global = true, env = "PMIL_SEED")]
    seed: Option<u64>,

    /// Worker threads for pseudo-bag reassignment. Results do not depend on it.
    #[arg(long, global = true, env = "PMIL_WORKERS", default_value_t = 1)]
    workers: usize,

    /// Print the resolved config as JSON and exit.
    #[arg(long, global = true)]
    print_config: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// Model file written by `train`.
    #[arg(long)]
    model: PathBuf,

    /// Dataset directory holding `<split>.json` manifests.
    #[arg(long, env = "PMIL_DATA")]
    data: Option<PathBuf>,

    #[arg(long, default_value = "test")]
    split: String,

    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct IisArgs {
    #[arg(long)]
    mu: Option<usize>,
    #[arg(long)]
    tau: Option<usize>,
    /// Pseudo-bag count sizing the Shapley-scored block.
    #[arg(long)]
    pseudo_bags: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a planted-signal dataset (train/val/test splits).
    Synth {
        #[arg(long, env = "PMIL_OUT")]
        out: Option<PathBuf>,
    },
    /// Train a model; writes model.bin, history.jsonl, metrics.json and config.json.
    Train {
        #[arg(long, value_enum, default_value = "pmil-shapley")]
        method: Method,
        #[arg(long, env = "PMIL_DATA")]
        data: Option<PathBuf>,
        #[arg(long, env = "PMIL_OUT")]
        out: Option<PathBuf>,
    },
    /// Bag-level metrics, plus instance-level metrics when labels exist.
    Eval {
        #[command(flatten)]
        io: ModelArgs,
        #[command(flatten)]
        iis: IisArgs,
    },
    /// Per-instance attention and class-wise Shapley scores of one bag as CSV.
    Iis {
        #[command(flatten)]
        io: ModelArgs,
        #[arg(long)]
        bag: String,
        /// `all` or a comma-separated list of class indices.
        #[arg(long, default_value = "all")]
        classes: String,
        #[command(flatten)]
        iis: IisArgs,
    },
    /// Per-bag top-k attention mass with summary quantiles as CSV.
    AttnStats {
        #[command(flatten)]
        io: ModelArgs,
        #[arg(long)]
        k: Option<usize>,
    },
}

fn required<'a>(
    flag: Option<&'a Path>,
    fallback: Option<&'a Path>,
    name: &str,
) -> Result<&'a Path, CliError> {
    flag.or(fallback).ok_or_else(|| {
        CliError::Input(format!(
            "no {name} path given (flag or paths.{name} in the config)"
        ))
    })
}

fn apply_iis(cfg: &mut RunConfig, args: &IisArgs) {
    if let Some(mu) = args.mu {
        cfg.iis.mu = mu;
    }
    if let Some(tau) = args.tau {
        cfg.iis.tau = tau;
    }
    if let Some(m) = args.pseudo_bags {
        cfg.iis.pseudo_bags = m;
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    let seed = cli.seed.unwrap_or(cfg.seed);
    cfg = cfg.with_seed(seed);
    match &cli.command {
        Command::Train { method, .. } => cfg.train = method.apply(cfg.train),
        Command::Eval { iis, .. } | Command::Iis { iis, .. } => apply_iis(&mut cfg, iis),
        Command::AttnStats { k: Some(k), .. } => cfg.attn_k = *k,
        _ => {}
    }
    cfg.validate()?;
    if cli.print_config {
        print!("{}", cfg.to_json());
        return Ok(());
    }
    if cli.workers == 0 {
        return Err(CliError::Input("invalid workers: must be >= 1".into()));
    }

    let paths = cfg.paths.clone();
    match &cli.command {
        Command::Synth { out } => {
            commands::synth(&cfg, required(out.as_deref(), paths.out.as_deref(), "out")?)
        }
        Command::Train { method, data, out } => {
            let data = required(data.as_deref(), paths.data.as_deref(), "data")?;
            let out = required(out.as_deref(), paths.out.as_deref(), "out")?;
            // a single worker is the reference path and needs no pool
            let pool = if cli.workers > 1 {
                Some(
                    rayon::ThreadPoolBuilder::new()
                        .num_threads(cli.workers)
                        .build()
                        .map_err(|e| CliError::Internal(e.to_string()))?,
                )
            } else {
                None
            };
            commands::train(&cfg, *method, data, out, pool.as_ref())
        }
        Command::Eval { io, .. } => {
            let data = required(io.data.as_deref(), paths.data.as_deref(), "data")?;
            commands::eval(&cfg, &io.model, data, &io.split, io.out.as_deref())
        }
        Command::Iis {
            io, bag, classes, ..
        } => {
            let data = required(io.data.as_deref(), paths.data.as_deref(), "data")?;
            commands::iis(
                &cfg,
                &io.model,
                data,
                &io.split,
                bag,
                classes,
                io.out.as_deref(),
            )
        }
        Command::AttnStats { io, .. } => {
            let data = required(io.data.as_deref(), paths.data.as_deref(), "data")?;
            commands::attn_stats(&cfg, &io.model, data, &io.split, io.out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

//! `rhfpt`: batch driver for ground states, perturbation series, (2n+1)-rule
//! checks, finite-difference oracles and the validation suite.
//!
//! Exit status: 0 when every hard check passes, 1 when a check fails, 2 on a
//! module or input error (with `error.json` in the output directory).

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use config::{ExperimentConfig, Mode};
use run::{run, write_error, write_reports, Failure, RunContext, Verb};

#[derive(Debug, Parser)]
#[command(name = "rhfpt", version, about = "Reduced Hartree-Fock perturbation theory on lattices")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
    /// TOML experiment config.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Perturbation order; overrides the config.
    #[arg(long, global = true, value_name = "N")]
    order: Option<usize>,
    #[arg(long, global = true, value_enum, value_name = "M")]
    mode: Option<Mode>,
    /// Output directory; overrides the config.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads for the data-parallel kernels.
    #[arg(long, global = true, value_name = "K")]
    workers: Option<usize>,
    /// Seed of the random perturbation (or of the validation suite).
    #[arg(long, global = true, value_name = "S")]
    seed: Option<u64>,
}

fn effective_config(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match (&cli.config, cli.verb) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Verb::Validate) => ExperimentConfig::validation_default(),
        (None, verb) => anyhow::bail!("`{}` needs --config", verb.as_str()),
    };
    if let Some(n) = cli.order {
        cfg.order = Some(n);
    }
    if let Some(m) = cli.mode {
        cfg.mode = Some(m);
    }
    if let Some(s) = cli.seed {
        cfg.perturbation.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = Some(o.clone());
    }
    cfg.check()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let fallback_out = cli.out.clone().unwrap_or_else(|| PathBuf::from("rhfpt-out"));

    if let Some(k) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            log::warn!("worker pool not configured: {e}");
        }
    }

    let cfg = match effective_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            let failure = Failure {
                module: "cli",
                operation: "config",
                error: e,
            };
            eprintln!("error: {failure}");
            let _ = write_error(&fallback_out, &failure);
            return ExitCode::from(2);
        }
    };
    let out_dir = cfg.output_dir.clone().unwrap_or(fallback_out);
    let ctx = RunContext {
        workers: cli.workers,
        seed: cli.seed,
    };

    match run(cli.verb, &cfg, &out_dir) {
        Ok(outcome) => {
            print!("{}", outcome.summary_text());
            if let Err(e) = write_reports(&outcome, &cfg, &ctx) {
                eprintln!("error: writing reports: {e:#}");
                return ExitCode::from(2);
            }
            if outcome.pass() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(failure) => {
            eprintln!("error: {failure}");
            if let Err(e) = write_error(&out_dir, &failure) {
                eprintln!("error: writing error record: {e:#}");
            }
            ExitCode::from(2)
        }
    }
}

mod commands;
mod config;
mod exit;

use std::path::PathBuf;
use std::process::ExitCode;

use arc_objects::task::TaskKind;
use clap::{Args, Parser, Subcommand};

use crate::config::{ConfigFile, Overrides, RunConfig};
use crate::exit::{Failure, Outcome};

/// Expert-trace augmentation and object clustering for grid puzzles.
#[derive(Debug, Parser)]
#[command(name = "arc-objects", version)]
struct Cli {
    /// JSON config file; command-line flags take precedence over it.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ClusterParams {
    /// DBSCAN radius in layout units.
    #[arg(long)]
    eps: Option<f64>,
    /// DBSCAN core-point threshold.
    #[arg(long)]
    min_pts: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build train.jsonl, eval.jsonl and manifest.json for one task.
    Augment {
        #[arg(long, value_parser = parse_task)]
        task: Option<TaskKind>,
        /// Master seed; every instance seed derives from it.
        #[arg(long)]
        seed: Option<u64>,
        /// Number of training records.
        #[arg(long)]
        train: Option<usize>,
        /// Number of evaluation pairs.
        #[arg(long)]
        eval: Option<usize>,
        /// Expert traces (JSON); defaults to the built-in set for the task.
        #[arg(long, value_name = "PATH")]
        experts: Option<PathBuf>,
        #[command(flatten)]
        params: ClusterParams,
        /// Leave the per-step object maps empty.
        #[arg(long)]
        no_pnp: bool,
        /// Output directory.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Cluster one grid and print its object map.
    Cluster {
        /// A JSON color matrix, or an object with a "grid" field.
        grid: PathBuf,
        #[command(flatten)]
        params: ClusterParams,
        /// Include node positions before and after the force pass.
        #[arg(long)]
        debug: bool,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Score clustering against a directory of labeled fixtures.
    Evalpnp {
        fixtures: PathBuf,
        #[command(flatten)]
        params: ClusterParams,
        /// Print the report as JSON instead of a table.
        #[arg(long)]
        json: bool,
        /// Also write the JSON report to this file.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Print one record of a training dataset.
    Inspect {
        dataset: PathBuf,
        #[arg(long, default_value_t = 0)]
        index: usize,
    },
}

fn parse_task(s: &str) -> Result<TaskKind, String> {
    s.parse().map_err(|e: arc_objects::TaskError| e.to_string())
}

fn run(cli: Cli) -> Outcome {
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    match cli.command {
        Command::Augment {
            task,
            seed,
            train,
            eval,
            experts,
            params,
            no_pnp,
            out,
        } => {
            let flags = Overrides {
                task,
                seed,
                train,
                eval,
                experts,
                eps: params.eps,
                min_pts: params.min_pts,
                jobs: cli.jobs,
                out,
                no_pnp,
            };
            commands::augment(&RunConfig::resolve(&flags, &file)?)
        }
        Command::Cluster {
            grid,
            params,
            debug,
            out,
        } => {
            let params = config::pnp_params(params.eps, params.min_pts, &file)?;
            commands::cluster_grid(&grid, &params, debug, out.as_ref())
        }
        Command::Evalpnp {
            fixtures,
            params,
            json,
            out,
        } => {
            let params = config::pnp_params(params.eps, params.min_pts, &file)?;
            commands::evalpnp(&fixtures, &params, json, out.as_ref())
        }
        Command::Inspect { dataset, index } => commands::inspect(&dataset, index),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(failure)) => {
            eprintln!("error: {:#}", failure.error());
            failure.code()
        }
        Err(_) => Failure::Internal(anyhow::anyhow!("internal error")).code(),
    }
}

//! Run configuration: command-line flags over a JSON config file over
//! built-in defaults.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail};
use arc_objects::pnp::PnpParams;
use arc_objects::task::{GeneratorParams, TaskKind, TaskSpec};
use serde::{Deserialize, Serialize};

use crate::exit::{Classify, Outcome};

/// Every key is optional; missing keys fall through to the defaults.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub task: Option<TaskKind>,
    pub seed: Option<u64>,
    pub train: Option<usize>,
    pub eval: Option<usize>,
    pub experts: Option<PathBuf>,
    pub eps: Option<f64>,
    pub min_pts: Option<usize>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
    pub pnp: Option<bool>,
    pub expert_threshold: Option<usize>,
    pub generator: Option<GeneratorParams>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Outcome<Self> {
        let text = std::fs::read_to_string(path).data(format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).usage(format!("invalid config {}", path.display()))
    }
}

/// Values given on the command line; `None` means "not given".
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub task: Option<TaskKind>,
    pub seed: Option<u64>,
    pub train: Option<usize>,
    pub eval: Option<usize>,
    pub experts: Option<PathBuf>,
    pub eps: Option<f64>,
    pub min_pts: Option<usize>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
    pub no_pnp: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub task: TaskSpec,
    pub seed: u64,
    pub train: usize,
    pub eval: usize,
    pub experts: Option<PathBuf>,
    pub pnp: Option<PnpParams>,
    #[serde(skip)]
    pub jobs: Option<usize>,
    #[serde(skip)]
    pub out: PathBuf,
}

pub const DEFAULT_TRAIN: usize = 10_000;
pub const DEFAULT_EVAL: usize = 2_000;

impl RunConfig {
    pub fn resolve(flags: &Overrides, file: &ConfigFile) -> Outcome<Self> {
        let kind = flags.task.or(file.task).unwrap_or(TaskKind::DiagonalFlip);
        let mut task = TaskSpec::new(kind);
        if let Some(t) = file.expert_threshold {
            task.expert_threshold = t;
        }
        if let Some(g) = &file.generator {
            task.generator = g.clone();
        }
        let defaults = PnpParams::default();
        let params = PnpParams {
            eps: flags.eps.or(file.eps).unwrap_or(defaults.eps),
            min_pts: flags.min_pts.or(file.min_pts).unwrap_or(defaults.min_pts),
        };
        let pnp_enabled = !flags.no_pnp && file.pnp.unwrap_or(true);
        let config = RunConfig {
            task,
            seed: flags.seed.or(file.seed).unwrap_or(0),
            train: flags.train.or(file.train).unwrap_or(DEFAULT_TRAIN),
            eval: flags.eval.or(file.eval).unwrap_or(DEFAULT_EVAL),
            experts: flags.experts.clone().or_else(|| file.experts.clone()),
            pnp: pnp_enabled.then_some(params),
            jobs: flags.jobs.or(file.jobs),
            out: flags
                .out
                .clone()
                .or_else(|| file.out.clone())
                .unwrap_or_else(|| "out".into()),
        };
        config.validate(&params).usage("invalid configuration")?;
        Ok(config)
    }

    fn validate(&self, params: &PnpParams) -> anyhow::Result<()> {
        if self.train == 0 || self.eval == 0 {
            bail!("--train and --eval must be at least 1");
        }
        if self.jobs == Some(0) {
            bail!("--jobs must be at least 1");
        }
        params.validate().map_err(|e| anyhow!(e))?;
        self.task.validate().map_err(|e| anyhow!(e))?;
        Ok(())
    }
}

/// PnP parameters for the commands that only cluster.
pub fn pnp_params(eps: Option<f64>, min_pts: Option<usize>, file: &ConfigFile) -> Outcome<PnpParams> {
    let defaults = PnpParams::default();
    let params = PnpParams {
        eps: eps.or(file.eps).unwrap_or(defaults.eps),
        min_pts: min_pts.or(file.min_pts).unwrap_or(defaults.min_pts),
    };
    params.validate().usage("invalid clustering parameters")?;
    Ok(params)
}

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::anyhow;
use arc_objects::augment::{attach_pnp, build_dataset, default_experts, experts_to_json, parse_experts, ExpertTrace};
use arc_objects::dataset::{read_dataset, write_dataset, write_eval, TrajectoryRecord, FORMAT, WINDOW};
use arc_objects::grid::Grid;
use arc_objects::metrics::{evaluate_fixtures, load_fixtures};
use arc_objects::pnp::{cluster, PnpGraph, PnpParams};
use arc_objects::ActionKind;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::exit::{Classify, Outcome};

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ExpertEntry {
    pub source: String,
    pub actions: Vec<String>,
    pub records: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub records: usize,
    pub sha256: String,
}

/// Written next to the dataset so consumers can check what produced it.
#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub k: usize,
    pub task: String,
    pub master_seed: u64,
    pub train_count: usize,
    pub eval_count: usize,
    pub expert_threshold: usize,
    pub pnp: Option<PnpParams>,
    pub experts: Vec<ExpertEntry>,
    /// sha256 over the resolved configuration and the expert traces.
    pub input_hash: String,
    pub train: FileEntry,
    pub eval: FileEntry,
}

fn load_experts(config: &RunConfig) -> Outcome<Vec<ExpertTrace>> {
    match &config.experts {
        None => Ok(default_experts(config.task.kind)),
        Some(path) => {
            let text = fs::read_to_string(path).data(format!("reading experts {}", path.display()))?;
            parse_experts(&text, &path.display().to_string()).data("parsing expert traces")
        }
    }
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Outcome<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().internal("starting worker pool")?;
    Ok(pool.install(f))
}

pub fn augment(config: &RunConfig) -> Outcome {
    let experts = load_experts(config)?;
    let experts_json = experts_to_json(&experts);
    let input_hash = {
        let canonical = serde_json::to_vec(&(config, &experts_json)).internal("hashing configuration")?;
        sha256_hex(&canonical)
    };

    let dataset = with_pool(config.jobs, || {
        build_dataset(&config.task, &experts, config.train, config.eval, config.seed).map(|mut ds| {
            if let Some(params) = &config.pnp {
                ds.train = attach_pnp(std::mem::take(&mut ds.train), params);
            }
            ds
        })
    })?
    .data("building dataset")?;

    let out = &config.out;
    fs::create_dir_all(out).data(format!("creating {}", out.display()))?;
    let train_path = out.join("train.jsonl");
    let eval_path = out.join("eval.jsonl");
    write_dataset(&dataset.train, &train_path).data(format!("writing {}", train_path.display()))?;
    write_eval(&dataset.eval, &eval_path).data(format!("writing {}", eval_path.display()))?;
    let file_entry = |path: &Path, records: usize| -> Outcome<FileEntry> {
        let bytes = fs::read(path).data(format!("reading back {}", path.display()))?;
        Ok(FileEntry {
            path: path.file_name().expect("file path").to_string_lossy().into_owned(),
            records,
            sha256: sha256_hex(&bytes),
        })
    };

    let manifest = Manifest {
        format: FORMAT.to_string(),
        k: WINDOW,
        task: config.task.kind.name().to_string(),
        master_seed: config.seed,
        train_count: dataset.train.len(),
        eval_count: dataset.eval.len(),
        expert_threshold: config.task.expert_threshold,
        pnp: config.pnp,
        experts: experts
            .iter()
            .enumerate()
            .map(|(i, e)| ExpertEntry {
                source: e.source.clone(),
                actions: e.steps.iter().map(|s| s.action.name().to_string()).collect(),
                records: dataset.provenance.iter().filter(|&&p| p == i).count(),
            })
            .collect(),
        input_hash,
        train: file_entry(&train_path, dataset.train.len())?,
        eval: file_entry(&eval_path, dataset.eval.len())?,
    };
    let manifest_path = out.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest).internal("serializing manifest")?;
    text.push('\n');
    fs::write(&manifest_path, text).data(format!("writing {}", manifest_path.display()))?;
    println!(
        "wrote {} training records and {} evaluation pairs to {}",
        manifest.train_count,
        manifest.eval_count,
        out.display()
    );
    Ok(())
}

/// Accepts a bare JSON matrix or any object with a `grid` field.
fn read_grid(path: &Path) -> Outcome<Grid> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum GridFile {
        Bare(Grid),
        Wrapped { grid: Grid },
    }
    let text = fs::read_to_string(path).data(format!("reading {}", path.display()))?;
    match serde_json::from_str::<GridFile>(&text) {
        Ok(GridFile::Bare(g) | GridFile::Wrapped { grid: g }) => Ok(g),
        Err(_) => Err(anyhow!("expected a color matrix or an object with a \"grid\" field"))
            .data(format!("parsing {}", path.display())),
    }
}

#[derive(Serialize)]
struct DebugDump<'a> {
    map: &'a arc_objects::ClusterMap,
    initial: &'a PnpGraph,
    displaced: &'a PnpGraph,
}

fn emit(out: Option<&PathBuf>, text: &str) -> Outcome {
    match out {
        Some(path) => fs::write(path, text).data(format!("writing {}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).data("writing to stdout")
        }
    }
}

pub fn cluster_grid(grid_path: &Path, params: &PnpParams, debug: bool, out: Option<&PathBuf>) -> Outcome {
    let grid = read_grid(grid_path)?;
    let result = cluster(&grid, params);
    let mut text = if debug {
        serde_json::to_string_pretty(&DebugDump {
            map: &result.map,
            initial: &result.initial,
            displaced: &result.displaced,
        })
    } else {
        serde_json::to_string(&result.map)
    }
    .internal("serializing cluster map")?;
    text.push('\n');
    emit(out, &text)
}

pub fn evalpnp(dir: &Path, params: &PnpParams, json: bool, out: Option<&PathBuf>) -> Outcome {
    let fixtures = load_fixtures(dir).data(format!("loading fixtures from {}", dir.display()))?;
    if fixtures.is_empty() {
        return Err(anyhow!("no fixtures found")).data(format!("loading fixtures from {}", dir.display()));
    }
    let report = evaluate_fixtures(&fixtures, params).data("evaluating fixtures")?;
    let mut json_text = serde_json::to_string_pretty(&report).internal("serializing report")?;
    json_text.push('\n');
    if let Some(path) = out {
        fs::write(path, &json_text).data(format!("writing {}", path.display()))?;
    }
    if json {
        emit(None, &json_text)
    } else {
        emit(None, &report.to_string())
    }
}

fn render_record(record: &TrajectoryRecord) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "task {}  instance {}", record.task, record.instance);
    let _ = writeln!(
        s,
        "{:>4}  {:>4}  {:<14}  {:>6}  {:>4}",
        "step", "t", "action", "rtg", "mask"
    );
    for (i, (step, mask)) in record.steps.iter().zip(&record.mask).enumerate() {
        let action = ActionKind::from_id(step.action).map_or("?", |a| a.name());
        let _ = writeln!(s, "{i:>4}  {:>4}  {action:<14}  {:>6.3}  {mask:>4}", step.t, step.rtg);
    }
    for (i, step) in record.steps.iter().enumerate() {
        let _ = writeln!(s, "\nstate {i}");
        for row in step.state.to_rows() {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "  {}", cells.join(" "));
        }
        if let Some(pnp) = &step.pnp {
            let _ = writeln!(s, "objects {i}");
            for row in pnp.to_rows() {
                let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                let _ = writeln!(s, "  {}", cells.join(" "));
            }
        }
    }
    s
}

pub fn inspect(path: &Path, index: usize) -> Outcome {
    let reader = read_dataset(path).data(format!("opening {}", path.display()))?;
    for (i, record) in reader.enumerate() {
        let record = record.data(format!("reading {}", path.display()))?;
        if i == index {
            return emit(None, &render_record(&record));
        }
    }
    Err(anyhow!("dataset has no record {index}")).data(format!("reading {}", path.display()))
}

//! Line-delimited JSON interchange for trajectory windows and evaluation
//! pairs.
//!
//! Every file starts with a header line `{"format":"arc-objects/1","k":5}`
//! followed by one JSON object per line. Files written here are canonical:
//! reading one back and writing it again reproduces it byte for byte.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::marker::PhantomData;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::ActionKind;
use crate::grid::Grid;
use crate::pnp::ClusterMap;

pub const FORMAT: &str = "arc-objects/1";
/// Steps per training window.
pub const WINDOW: usize = 5;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub format: String,
    pub k: usize,
}

impl Default for Header {
    fn default() -> Self {
        Header {
            format: FORMAT.to_string(),
            k: WINDOW,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRecord {
    /// Grid after the step's action.
    pub state: Grid,
    pub action: u8,
    pub rtg: f64,
    pub t: u32,
    pub pnp: Option<ClusterMap>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryRecord {
    pub task: String,
    pub instance: u64,
    pub steps: Vec<StepRecord>,
    pub mask: Vec<u8>,
}

impl TrajectoryRecord {
    /// Steps whose mask bit is set.
    pub fn valid_steps(&self) -> impl Iterator<Item = &StepRecord> {
        self.steps
            .iter()
            .zip(&self.mask)
            .filter(|(_, &m)| m == 1)
            .map(|(s, _)| s)
    }

    pub fn validate(&self, k: usize) -> Result<(), String> {
        if self.steps.len() != k {
            return Err(format!("expected {k} steps, found {}", self.steps.len()));
        }
        if self.mask.len() != k {
            return Err(format!("expected a mask of length {k}, found {}", self.mask.len()));
        }
        if let Some(m) = self.mask.iter().find(|&&m| m > 1) {
            return Err(format!("mask values must be 0 or 1, found {m}"));
        }
        if !self.mask.contains(&1) {
            return Err("record has no valid steps".into());
        }
        let shape = self.steps[0].state.shape();
        for (i, step) in self.steps.iter().enumerate() {
            if !(0.0..=1.0).contains(&step.rtg) {
                return Err(format!("step {i}: rtg {} outside [0, 1]", step.rtg));
            }
            if step.t == 0 {
                return Err(format!("step {i}: timestep must be at least 1"));
            }
            if ActionKind::from_id(step.action).is_err() {
                return Err(format!("step {i}: unknown action id {}", step.action));
            }
            if step.state.shape() != shape {
                return Err(format!(
                    "step {i}: state shape {:?} differs from {:?}",
                    step.state.shape(),
                    shape
                ));
            }
            if let Some(pnp) = &step.pnp {
                if pnp.shape() != shape {
                    return Err(format!(
                        "step {i}: pnp shape {:?} differs from state {:?}",
                        pnp.shape(),
                        shape
                    ));
                }
            }
        }
        Ok(())
    }
}

/// An evaluation instance: a fresh input and the rule's answer for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalPair {
    pub task: String,
    pub instance: u64,
    pub input: Grid,
    pub answer: Grid,
}

/// Per-line validation hook for [`JsonlReader`].
pub trait Record: Serialize + DeserializeOwned {
    fn check(&self, k: usize) -> Result<(), String>;
}

impl Record for TrajectoryRecord {
    fn check(&self, k: usize) -> Result<(), String> {
        self.validate(k)
    }
}

impl Record for EvalPair {
    fn check(&self, _k: usize) -> Result<(), String> {
        if self.input.shape() != self.answer.shape() {
            return Err(format!(
                "input shape {:?} differs from answer shape {:?}",
                self.input.shape(),
                self.answer.shape()
            ));
        }
        Ok(())
    }
}

/// Streams validated records from a dataset file.
pub struct JsonlReader<R, T> {
    lines: io::Lines<R>,
    line: usize,
    header: Option<Header>,
    failed: bool,
    _record: PhantomData<T>,
}

impl<R: BufRead, T: Record> JsonlReader<R, T> {
    pub fn new(reader: R) -> Self {
        JsonlReader {
            lines: reader.lines(),
            line: 0,
            header: None,
            failed: false,
            _record: PhantomData,
        }
    }

    /// The header, once the first line has been read.
    pub fn header(&self) -> Option<&Header> {
        self.header.as_ref()
    }

    fn next_line(&mut self) -> Option<io::Result<String>> {
        self.line += 1;
        self.lines.next()
    }

    fn read_header(&mut self) -> Option<Result<(), DatasetError>> {
        let text = match self.next_line()? {
            Ok(text) => text,
            Err(e) => return Some(Err(e.into())),
        };
        let schema = |message: String| DatasetError::Schema { line: 1, message };
        let header: Header = match serde_json::from_str(&text) {
            Ok(h) => h,
            Err(e) => return Some(Err(schema(format!("bad header: {e}")))),
        };
        if header.format != FORMAT {
            return Some(Err(schema(format!("unsupported format {:?}", header.format))));
        }
        if header.k == 0 {
            return Some(Err(schema("window size must be positive".into())));
        }
        self.header = Some(header);
        Some(Ok(()))
    }
}

impl<R: BufRead, T: Record> Iterator for JsonlReader<R, T> {
    type Item = Result<T, DatasetError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        if self.header.is_none() {
            match self.read_header()? {
                Ok(()) => {}
                Err(e) => {
                    self.failed = true;
                    return Some(Err(e));
                }
            }
        }
        let k = self.header.as_ref().map_or(WINDOW, |h| h.k);
        let result = match self.next_line()? {
            Err(e) => Err(e.into()),
            Ok(text) => {
                let line = self.line;
                serde_json::from_str::<T>(&text)
                    .map_err(|e| e.to_string())
                    .and_then(|rec| rec.check(k).map(|()| rec))
                    .map_err(|message| DatasetError::Schema { line, message })
            }
        };
        self.failed = result.is_err();
        Some(result)
    }
}

pub type DatasetReader = JsonlReader<BufReader<File>, TrajectoryRecord>;
pub type EvalReader = JsonlReader<BufReader<File>, EvalPair>;

/// Opens a training dataset for streaming. An empty file yields no records.
pub fn read_dataset(path: &Path) -> Result<DatasetReader, DatasetError> {
    Ok(JsonlReader::new(BufReader::new(File::open(path)?)))
}

pub fn read_eval(path: &Path) -> Result<EvalReader, DatasetError> {
    Ok(JsonlReader::new(BufReader::new(File::open(path)?)))
}

/// Writes the header and one compact JSON line per record.
pub fn write_jsonl<'a, W: Write, T: Record + 'a>(
    mut out: W,
    records: impl IntoIterator<Item = &'a T>,
) -> Result<(), DatasetError> {
    serde_json::to_writer(&mut out, &Header::default()).map_err(io::Error::from)?;
    out.write_all(b"\n")?;
    for record in records {
        serde_json::to_writer(&mut out, record).map_err(io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_dataset<'a>(
    records: impl IntoIterator<Item = &'a TrajectoryRecord>,
    path: &Path,
) -> Result<(), DatasetError> {
    write_jsonl(BufWriter::new(File::create(path)?), records)
}

pub fn write_eval<'a>(pairs: impl IntoIterator<Item = &'a EvalPair>, path: &Path) -> Result<(), DatasetError> {
    write_jsonl(BufWriter::new(File::create(path)?), pairs)
}

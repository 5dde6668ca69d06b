//! The four task families and their ground-truth rules.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{components, Color, Coord, Grid};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TaskError {
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("invalid task spec: {0}")]
    InvalidSpec(String),
    #[error("input not supported by the {task} rule: {reason}")]
    UnsupportedInput { task: TaskKind, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    DiagonalFlip,
    Tetris,
    Gravity,
    Stretch,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] = [
        TaskKind::DiagonalFlip,
        TaskKind::Tetris,
        TaskKind::Gravity,
        TaskKind::Stretch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::DiagonalFlip => "diagonal_flip",
            TaskKind::Tetris => "tetris",
            TaskKind::Gravity => "gravity",
            TaskKind::Stretch => "stretch",
        }
    }

    pub fn grid_size(self) -> usize {
        match self {
            TaskKind::Gravity => 7,
            _ => 5,
        }
    }

    pub fn default_expert_threshold(self) -> usize {
        match self {
            TaskKind::DiagonalFlip => 6,
            _ => 8,
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = TaskError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| TaskError::UnknownTask(s.to_string()))
    }
}

/// Knobs for the random input generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorParams {
    /// Per-cell probability of a colored pixel (diagonal_flip, stretch).
    pub density: f64,
    /// Rejection-sampling budget per grid.
    pub max_attempts: u32,
    /// Inclusive range for the number of tetris pieces.
    pub tetris_pieces: (usize, usize),
    /// Per-cell probability of a scattered pixel in the gravity edge columns.
    pub gravity_density: f64,
    /// Row of the stretch object's top edge.
    pub stretch_top: usize,
    /// Height of the stretch object, including its solid base row.
    pub stretch_height: usize,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        GeneratorParams {
            density: 0.4,
            max_attempts: 1000,
            tetris_pieces: (1, 2),
            gravity_density: 0.4,
            stretch_top: 1,
            stretch_height: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub grid_size: usize,
    pub expert_threshold: usize,
    #[serde(default)]
    pub generator: GeneratorParams,
}

impl TaskSpec {
    pub fn new(kind: TaskKind) -> Self {
        TaskSpec {
            kind,
            grid_size: kind.grid_size(),
            expert_threshold: kind.default_expert_threshold(),
            generator: GeneratorParams::default(),
        }
    }

    pub fn validate(&self) -> Result<(), TaskError> {
        if self.grid_size != self.kind.grid_size() {
            return Err(TaskError::InvalidSpec(format!(
                "{} grids are {}x{}, got {}",
                self.kind,
                self.kind.grid_size(),
                self.kind.grid_size(),
                self.grid_size
            )));
        }
        if self.expert_threshold < 3 {
            return Err(TaskError::InvalidSpec("expert threshold must be at least 3".into()));
        }
        let g = &self.generator;
        if !(g.density > 0.0 && g.density <= 1.0) || !(g.gravity_density > 0.0 && g.gravity_density <= 1.0) {
            return Err(TaskError::InvalidSpec("densities must lie in (0, 1]".into()));
        }
        if g.max_attempts == 0 {
            return Err(TaskError::InvalidSpec("max_attempts must be positive".into()));
        }
        if g.tetris_pieces.0 == 0 || g.tetris_pieces.0 > g.tetris_pieces.1 {
            return Err(TaskError::InvalidSpec("tetris_pieces must be a range 1..=n".into()));
        }
        if g.stretch_height < 2 || g.stretch_top + g.stretch_height > self.grid_size {
            return Err(TaskError::InvalidSpec("stretch object does not fit the grid".into()));
        }
        Ok(())
    }
}

/// Computes the correct answer grid for `input` under the task's rule.
pub fn task_rule_oracle(task: &TaskSpec, input: &Grid) -> Result<Grid, TaskError> {
    match task.kind {
        TaskKind::DiagonalFlip => Ok(input.transpose()),
        TaskKind::Tetris => Ok(drop_objects(input)),
        TaskKind::Gravity => attract_to_center_line(input),
        TaskKind::Stretch => stretch(input),
    }
}

/// Drops every 8-connected same-color object straight down until it rests on
/// the floor or on another object.
fn drop_objects(input: &Grid) -> Grid {
    let (rows, cols) = input.shape();
    let mut objects: Vec<(Color, Vec<Coord>)> = components(input)
        .into_iter()
        .map(|cells| (input.get(cells[0].0, cells[0].1), cells))
        .collect();
    // owner[r][c] = index of the object at that cell
    let mut owner: Vec<Option<usize>> = vec![None; rows * cols];
    for (i, (_, cells)) in objects.iter().enumerate() {
        for &(r, c) in cells {
            owner[r * cols + c] = Some(i);
        }
    }
    loop {
        let mut moved = false;
        let mut order: Vec<usize> = (0..objects.len()).collect();
        order.sort_by_key(|&i| std::cmp::Reverse(objects[i].1.iter().map(|p| p.0).max()));
        for i in order {
            loop {
                let cells = &objects[i].1;
                let can_fall = cells
                    .iter()
                    .all(|&(r, c)| r + 1 < rows && owner[(r + 1) * cols + c].is_none_or(|o| o == i));
                if !can_fall {
                    break;
                }
                for &(r, c) in cells {
                    owner[r * cols + c] = None;
                }
                for cell in objects[i].1.iter_mut() {
                    cell.0 += 1;
                }
                for &(r, c) in &objects[i].1 {
                    owner[r * cols + c] = Some(i);
                }
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    let mut out = Grid::new(rows, cols);
    for (color, cells) in &objects {
        for &(r, c) in cells {
            out.set(r, c, *color);
        }
    }
    out
}

/// Pulls every pixel along its row toward the central column line, stacking
/// against the line or against pixels already resting there.
fn attract_to_center_line(input: &Grid) -> Result<Grid, TaskError> {
    let unsupported = |reason: &str| TaskError::UnsupportedInput {
        task: TaskKind::Gravity,
        reason: reason.to_string(),
    };
    let (rows, cols) = input.shape();
    if cols % 2 == 0 {
        return Err(unsupported("grid width must be odd"));
    }
    let mid = cols / 2;
    let line = input.get(0, mid);
    if line.is_black() || (0..rows).any(|r| input.get(r, mid) != line) {
        return Err(unsupported("missing a uniform central column line"));
    }
    if input.non_black().any(|((_, c), color)| c != mid && color == line) {
        return Err(unsupported("line color appears off the central line"));
    }
    let mut out = Grid::new(rows, cols);
    for r in 0..rows {
        out.set(r, mid, line);
        let left: Vec<Color> = (0..mid)
            .rev()
            .map(|c| input.get(r, c))
            .filter(|c| !c.is_black())
            .collect();
        for (k, color) in left.into_iter().enumerate() {
            out.set(r, mid - 1 - k, color);
        }
        let right: Vec<Color> = (mid + 1..cols)
            .map(|c| input.get(r, c))
            .filter(|c| !c.is_black())
            .collect();
        for (k, color) in right.into_iter().enumerate() {
            out.set(r, mid + 1 + k, color);
        }
    }
    Ok(out)
}

/// Lifts the object to the top row and extends its bottom-row pixels down to
/// the last row.
fn stretch(input: &Grid) -> Result<Grid, TaskError> {
    let cells: Vec<(Coord, Color)> = input.non_black().collect();
    if cells.is_empty() {
        return Err(TaskError::UnsupportedInput {
            task: TaskKind::Stretch,
            reason: "no object present".into(),
        });
    }
    let top = cells.iter().map(|((r, _), _)| *r).min().expect("non-empty");
    let bottom = cells.iter().map(|((r, _), _)| *r).max().expect("non-empty");
    let (rows, cols) = input.shape();
    let mut out = Grid::new(rows, cols);
    for &((r, c), color) in &cells {
        out.set(r - top, c, color);
        if r == bottom {
            for rr in bottom - top + 1..rows {
                out.set(rr, c, color);
            }
        }
    }
    Ok(out)
}

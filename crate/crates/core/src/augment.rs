//! Expert-trace replay: random task inputs, trajectory synthesis, return-to-go
//! annotation and dataset assembly.

use std::collections::HashSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{apply_action, reflect_x, reflect_y, rotate_cw, ActionArgs, ActionError, ActionKind};
use crate::dataset::{EvalPair, StepRecord, TrajectoryRecord, WINDOW};
use crate::grid::{components, Color, Coord, Grid, Selection};
use crate::pnp::{cluster_map, PnpParams};
use crate::task::{task_rule_oracle, TaskError, TaskKind, TaskSpec};
use crate::trace::{ActionRecord, SelectedCell, Trace, TraceStep};

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("{actions} actions but {grids} grids")]
    LengthMismatch { actions: usize, grids: usize },
    #[error("no acceptable {task} grid after {attempts} attempts")]
    GeneratorExhausted { task: TaskKind, attempts: u32 },
    #[error("replay failed at step {step}: {source}")]
    Replay {
        step: usize,
        #[source]
        source: ActionError,
    },
    #[error("trajectories need at least 2 steps, got {0}")]
    LengthTooShort(usize),
    #[error("invalid expert trace: {0}")]
    InvalidExpert(String),
    #[error("expert {source_tag} rejected: {reason}")]
    NotExpert { source_tag: String, reason: String },
    #[error("no expert traces supplied")]
    NoExperts,
    #[error("instance {index}: {source}")]
    Instance {
        index: u64,
        #[source]
        source: Box<AugmentError>,
    },
    #[error(transparent)]
    Task(#[from] TaskError),
}

/// Which cells a selecting action acts on, resolved against the grid at the
/// moment the action is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SelectorRepr", into = "SelectorRepr")]
pub enum Selector {
    /// Every non-black cell.
    All,
    /// The k-th (1-based) 8-connected same-color component in reading order.
    Object(usize),
    /// Every cell of the inclusive rectangle `[r0, c0, r1, c1]`.
    Rect([usize; 4]),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum SelectorRepr {
    Named(String),
    Object { object: usize },
    Rect { rect: [usize; 4] },
}

impl TryFrom<SelectorRepr> for Selector {
    type Error = String;

    fn try_from(repr: SelectorRepr) -> Result<Self, String> {
        match repr {
            SelectorRepr::Named(s) if s == "all" => Ok(Selector::All),
            SelectorRepr::Named(s) => Err(format!("unknown selector {s:?}")),
            SelectorRepr::Object { object: 0 } => Err("object indices start at 1".into()),
            SelectorRepr::Object { object } => Ok(Selector::Object(object)),
            SelectorRepr::Rect { rect: [r0, c0, r1, c1] } if r0 > r1 || c0 > c1 => {
                Err(format!("empty rectangle {:?}", [r0, c0, r1, c1]))
            }
            SelectorRepr::Rect { rect } => Ok(Selector::Rect(rect)),
        }
    }
}

impl From<Selector> for SelectorRepr {
    fn from(sel: Selector) -> Self {
        match sel {
            Selector::All => SelectorRepr::Named("all".into()),
            Selector::Object(object) => SelectorRepr::Object { object },
            Selector::Rect(rect) => SelectorRepr::Rect { rect },
        }
    }
}

impl Selector {
    pub fn resolve(self, grid: &Grid) -> Result<Selection, String> {
        match self {
            Selector::All => Ok(Selection::non_black(grid)),
            Selector::Object(k) => components(grid)
                .into_iter()
                .nth(k - 1)
                .map(Selection::new)
                .ok_or_else(|| format!("grid has no object #{k}")),
            Selector::Rect([r0, c0, r1, c1]) => {
                if r1 >= grid.rows() || c1 >= grid.cols() {
                    return Err(format!(
                        "rectangle {:?} exceeds grid {:?}",
                        [r0, c0, r1, c1],
                        grid.shape()
                    ));
                }
                Ok((r0..=r1).flat_map(|r| (c0..=c1).map(move |c| (r, c))).collect())
            }
        }
    }
}

/// A color argument: fixed, or the grid's first non-black color in reading
/// order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ColorRepr", into = "ColorRepr")]
pub enum ColorSpec {
    Foreground,
    Fixed(Color),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ColorRepr {
    Named(String),
    Value(u8),
}

impl TryFrom<ColorRepr> for ColorSpec {
    type Error = String;

    fn try_from(repr: ColorRepr) -> Result<Self, String> {
        match repr {
            ColorRepr::Named(s) if s == "fg" => Ok(ColorSpec::Foreground),
            ColorRepr::Named(s) => Err(format!("unknown color {s:?}")),
            ColorRepr::Value(v) => Color::new(v).map(ColorSpec::Fixed).map_err(|e| e.to_string()),
        }
    }
}

impl From<ColorSpec> for ColorRepr {
    fn from(c: ColorSpec) -> Self {
        match c {
            ColorSpec::Foreground => ColorRepr::Named("fg".into()),
            ColorSpec::Fixed(c) => ColorRepr::Value(c.value()),
        }
    }
}

impl ColorSpec {
    pub fn resolve(self, grid: &Grid) -> Result<Color, String> {
        match self {
            ColorSpec::Fixed(c) => Ok(c),
            ColorSpec::Foreground => grid
                .non_black()
                .map(|(_, c)| c)
                .next()
                .ok_or_else(|| "grid has no foreground color".to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpertStep {
    pub action: ActionKind,
    pub select: Option<Selector>,
    pub color: Option<ColorSpec>,
}

impl ExpertStep {
    pub fn plain(action: ActionKind) -> Self {
        ExpertStep {
            action,
            select: None,
            color: None,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum StepRepr {
    Name(String),
    Full {
        tool: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        select: Option<Selector>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        color: Option<ColorSpec>,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TraceRepr {
    Bare(Vec<StepRepr>),
    Tagged { source: String, actions: Vec<StepRepr> },
}

/// A known-good action sequence for a task, replayable on any of its inputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpertTrace {
    pub steps: Vec<ExpertStep>,
    /// Where the trace came from, e.g. `diagonal_flip#0`.
    pub source: String,
}

impl ExpertTrace {
    pub fn new(steps: Vec<ExpertStep>, source: impl Into<String>) -> Result<Self, AugmentError> {
        let source = source.into();
        let bad = |msg: String| AugmentError::InvalidExpert(format!("{source}: {msg}"));
        match (steps.first(), steps.last()) {
            (Some(first), Some(last)) if first.action == ActionKind::Start && last.action == ActionKind::End => {}
            _ => return Err(bad("must begin with start and end with end".into())),
        }
        for (i, step) in steps.iter().enumerate() {
            let arity = step.action.arity();
            if arity.selection != step.select.is_some() {
                return Err(bad(format!(
                    "step {i} ({}) {} a selector",
                    step.action,
                    if arity.selection { "needs" } else { "takes no" }
                )));
            }
            if arity.color != step.color.is_some() {
                return Err(bad(format!(
                    "step {i} ({}) {} a color",
                    step.action,
                    if arity.color { "needs" } else { "takes no" }
                )));
            }
        }
        Ok(ExpertTrace { steps, source })
    }

    /// Builds a trace of argument-free actions from their names.
    pub fn from_names<S: AsRef<str>>(names: &[S], source: impl Into<String>) -> Result<Self, AugmentError> {
        let steps = names
            .iter()
            .map(|n| ActionKind::from_name(n.as_ref()).map(ExpertStep::plain))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| AugmentError::InvalidExpert(e.to_string()))?;
        Self::new(steps, source)
    }

    pub fn actions(&self) -> Vec<ActionKind> {
        self.steps.iter().map(|s| s.action).collect()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

impl fmt::Display for ExpertTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.steps.iter().map(|s| s.action.name()).collect();
        write!(f, "{} [{}]", self.source, names.join(", "))
    }
}

/// Parses a JSON list of expert traces. Each trace is either a list of steps
/// or `{"source": ..., "actions": [...]}`; each step is an action name or
/// `{"tool": ..., "select": ..., "color": ...}`. Untagged traces are named
/// `<origin>#<index>`.
pub fn parse_experts(json: &str, origin: &str) -> Result<Vec<ExpertTrace>, AugmentError> {
    let reprs: Vec<TraceRepr> =
        serde_json::from_str(json).map_err(|e| AugmentError::InvalidExpert(format!("{origin}: {e}")))?;
    reprs
        .into_iter()
        .enumerate()
        .map(|(i, repr)| {
            let (source, steps) = match repr {
                TraceRepr::Bare(steps) => (format!("{origin}#{i}"), steps),
                TraceRepr::Tagged { source, actions } => (source, actions),
            };
            let steps = steps
                .into_iter()
                .map(|s| {
                    let (tool, select, color) = match s {
                        StepRepr::Name(tool) => (tool, None, None),
                        StepRepr::Full { tool, select, color } => (tool, select, color),
                    };
                    let action = ActionKind::from_name(&tool)
                        .map_err(|e| AugmentError::InvalidExpert(format!("{source}: {e}")))?;
                    Ok(ExpertStep { action, select, color })
                })
                .collect::<Result<Vec<_>, AugmentError>>()?;
            ExpertTrace::new(steps, source)
        })
        .collect()
}

/// Renders experts in the format [`parse_experts`] reads.
pub fn experts_to_json(experts: &[ExpertTrace]) -> String {
    let reprs: Vec<TraceRepr> = experts
        .iter()
        .map(|e| TraceRepr::Tagged {
            source: e.source.clone(),
            actions: e
                .steps
                .iter()
                .map(|s| match (s.select, s.color) {
                    (None, None) => StepRepr::Name(s.action.name().to_string()),
                    (select, color) => StepRepr::Full {
                        tool: s.action.name().to_string(),
                        select,
                        color,
                    },
                })
                .collect(),
        })
        .collect();
    serde_json::to_string_pretty(&reprs).expect("expert traces serialize")
}

const DIAGONAL_FLIP_EXPERTS: &str = include_str!("../experts/diagonal_flip.json");
const TETRIS_EXPERTS: &str = include_str!("../experts/tetris.json");
const GRAVITY_EXPERTS: &str = include_str!("../experts/gravity.json");
const STRETCH_EXPERTS: &str = include_str!("../experts/stretch.json");

/// The built-in expert traces for a task.
pub fn default_experts(kind: TaskKind) -> Vec<ExpertTrace> {
    let json = match kind {
        TaskKind::DiagonalFlip => DIAGONAL_FLIP_EXPERTS,
        TaskKind::Tetris => TETRIS_EXPERTS,
        TaskKind::Gravity => GRAVITY_EXPERTS,
        TaskKind::Stretch => STRETCH_EXPERTS,
    };
    parse_experts(json, kind.name()).expect("built-in experts parse")
}

/// Accepts a trace when it is shorter than `threshold`, never uses `edit`,
/// and never revisits a grid state.
///
/// `grids[i]` is the grid after `actions[i]`. The states compared for
/// repeats are the initial grid and the grid after every non-marker action;
/// marker actions (`start`, `submit`, `end`) leave the grid unchanged and are
/// not revisits.
pub fn is_expert_trace(actions: &[ActionKind], grids: &[Grid], threshold: usize) -> Result<bool, AugmentError> {
    if actions.len() != grids.len() {
        return Err(AugmentError::LengthMismatch {
            actions: actions.len(),
            grids: grids.len(),
        });
    }
    if actions.len() >= threshold || actions.contains(&ActionKind::Edit) {
        return Ok(false);
    }
    let mut seen = HashSet::new();
    for (i, (action, grid)) in actions.iter().zip(grids).enumerate() {
        if (i == 0 || !action.is_marker()) && !seen.insert(grid) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// One applied step of a replayed trace.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayStep {
    pub action: ActionKind,
    pub selection: Option<Selection>,
    pub color: Option<Color>,
    /// Grid after the action.
    pub grid: Grid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedTrace {
    pub input: Grid,
    pub steps: Vec<ReplayStep>,
}

impl GeneratedTrace {
    pub fn actions(&self) -> Vec<ActionKind> {
        self.steps.iter().map(|s| s.action).collect()
    }

    pub fn grids(&self) -> Vec<Grid> {
        self.steps.iter().map(|s| s.grid.clone()).collect()
    }

    pub fn final_grid(&self) -> &Grid {
        self.steps.last().map_or(&self.input, |s| &s.grid)
    }

    /// Converts to the recorded-trace model. Selected cells carry the color
    /// each cell holds after the action.
    pub fn to_trace(&self, id: i64, task_id: &str, user_id: &str) -> Trace {
        let steps = self
            .steps
            .iter()
            .enumerate()
            .map(|(i, s)| TraceStep {
                action: ActionRecord {
                    tool: s.action.name().to_string(),
                    selected_cells: s.selection.as_ref().map(|sel| {
                        sel.iter()
                            .map(|(row, col)| SelectedCell {
                                row,
                                col,
                                val: s.grid.get(row, col),
                                selected: true,
                            })
                            .collect()
                    }),
                },
                grid: s.grid.clone(),
                submit: s.action == ActionKind::Submit,
                time: i as u64,
            })
            .collect();
        Trace {
            id,
            task_id: task_id.to_string(),
            user_id: user_id.to_string(),
            steps,
        }
    }
}

/// Replays `expert` starting from `grid`. Selectors and symbolic colors are
/// resolved against the grid each action is applied to.
pub fn generate_trace(grid: &Grid, expert: &ExpertTrace) -> Result<GeneratedTrace, AugmentError> {
    let mut current = grid.clone();
    let mut steps = Vec::with_capacity(expert.steps.len());
    for (i, step) in expert.steps.iter().enumerate() {
        let fail = |source: ActionError| AugmentError::Replay { step: i, source };
        let invalid = |reason: String| {
            fail(ActionError::InvalidArgument {
                action: step.action,
                reason,
            })
        };
        let selection = step.select.map(|s| s.resolve(&current)).transpose().map_err(invalid)?;
        let color = step.color.map(|c| c.resolve(&current)).transpose().map_err(invalid)?;
        let args = ActionArgs {
            selection: selection.as_ref(),
            color,
            input: Some(grid),
        };
        current = apply_action(&current, step.action, &args).map_err(fail)?;
        steps.push(ReplayStep {
            action: step.action,
            selection,
            color,
            grid: current.clone(),
        });
    }
    Ok(GeneratedTrace {
        input: grid.clone(),
        steps,
    })
}

/// Equal partition of [0, 1] into `length` points.
pub fn assign_rtg(length: usize) -> Result<Vec<f64>, AugmentError> {
    if length < 2 {
        return Err(AugmentError::LengthTooShort(length));
    }
    let last = (length - 1) as f64;
    Ok((0..length)
        .map(|i| if i + 1 == length { 1.0 } else { i as f64 / last })
        .collect())
}

/// Turns a replayed trace into a fixed window of `k` steps: the last `k`
/// steps when the trace is longer, otherwise the whole trace followed by
/// copies of its first step with mask 0.
pub fn to_record(
    task: &str,
    instance: u64,
    trace: &GeneratedTrace,
    k: usize,
) -> Result<TrajectoryRecord, AugmentError> {
    let rtg = assign_rtg(trace.steps.len())?;
    let all: Vec<StepRecord> = trace
        .steps
        .iter()
        .zip(rtg)
        .enumerate()
        .map(|(i, (s, rtg))| StepRecord {
            state: s.grid.clone(),
            action: s.action.id(),
            rtg,
            t: i as u32 + 1,
            pnp: None,
        })
        .collect();
    let start = all.len().saturating_sub(k);
    let mut steps: Vec<StepRecord> = all[start..].to_vec();
    let valid = steps.len();
    let pad = steps[0].clone();
    steps.resize(k, pad);
    let mask = (0..k).map(|i| u8::from(i < valid)).collect();
    Ok(TrajectoryRecord {
        task: task.to_string(),
        instance,
        steps,
        mask,
    })
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of instance `index` under `master`.
pub fn instance_seed(master: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master) ^ index)
}

/// Evaluation instances draw from a disjoint index range.
const EVAL_STREAM: u64 = 1 << 63;
/// Seeds of the grids experts are checked against.
const PROBE_SEEDS: [u64; 4] = [0x5eed_0001, 0x5eed_0002, 0x5eed_0003, 0x5eed_0004];

fn random_color(rng: &mut impl Rng) -> Color {
    Color::new(rng.gen_range(1..=9)).expect("1..=9 are colors")
}

fn two_colors(rng: &mut impl Rng) -> (Color, Color) {
    let a = random_color(rng);
    loop {
        let b = random_color(rng);
        if b != a {
            return (a, b);
        }
    }
}

/// Tetromino orientations that are two rows tall, plus the flat I piece,
/// as (row, col) offsets whose lowest row is 1.
const PIECES: [&[Coord]; 10] = [
    &[(1, 0), (1, 1), (1, 2), (1, 3)],
    &[(0, 0), (0, 1), (1, 0), (1, 1)],
    &[(0, 0), (0, 1), (0, 2), (1, 1)],
    &[(0, 1), (1, 0), (1, 1), (1, 2)],
    &[(0, 1), (0, 2), (1, 0), (1, 1)],
    &[(0, 0), (0, 1), (1, 1), (1, 2)],
    &[(0, 2), (1, 0), (1, 1), (1, 2)],
    &[(0, 0), (0, 1), (0, 2), (1, 0)],
    &[(0, 0), (1, 0), (1, 1), (1, 2)],
    &[(0, 0), (0, 1), (0, 2), (1, 2)],
];

fn piece_width(piece: &[Coord]) -> usize {
    piece.iter().map(|p| p.1).max().unwrap_or(0) + 1
}

/// True when some rotation or reflection other than the identity maps the
/// grid onto itself. On such grids a geometric action can be a no-op, which
/// would make an expert trace revisit a state.
fn has_symmetry(grid: &Grid) -> bool {
    let r1 = rotate_cw(grid);
    let r2 = rotate_cw(&r1);
    let r3 = rotate_cw(&r2);
    let m = reflect_x(grid);
    [r1, r2, r3, m.clone(), rotate_cw(&m), reflect_y(grid), grid.transpose()]
        .iter()
        .any(|g| g == grid)
}

/// One candidate grid, or `None` when the draw must be rejected.
fn draw(task: &TaskSpec, rng: &mut ChaCha8Rng) -> Option<Grid> {
    let n = task.grid_size;
    let g = &task.generator;
    match task.kind {
        TaskKind::DiagonalFlip => {
            let color = random_color(rng);
            let grid = Grid::from_fn(n, n, |_, _| if rng.gen_bool(g.density) { color } else { Color::BLACK });
            (!grid.is_all_black() && !has_symmetry(&grid)).then_some(grid)
        }
        TaskKind::Tetris => {
            let (a, b) = two_colors(rng);
            let count = rng.gen_range(g.tetris_pieces.0..=g.tetris_pieces.1);
            let pieces: Vec<&[Coord]> = (0..count).map(|_| *PIECES.choose(rng).expect("non-empty")).collect();
            let used: usize = pieces.iter().map(|p| piece_width(p)).sum();
            if used > n {
                return None;
            }
            // distribute the spare columns over the count + 1 gaps
            let mut gaps = vec![0; count + 1];
            for _ in 0..n - used {
                gaps[rng.gen_range(0..=count)] += 1;
            }
            let mut grid = Grid::square(n);
            let mut col = gaps[0];
            for (i, piece) in pieces.iter().enumerate() {
                let color = if i % 2 == 0 { a } else { b };
                for &(r, c) in piece.iter() {
                    grid.set(r, col + c, color);
                }
                col += piece_width(piece) + gaps[i + 1];
            }
            (components(&grid).len() == count).then_some(grid)
        }
        TaskKind::Gravity => {
            let (line, dots) = two_colors(rng);
            let mid = n / 2;
            let mut grid = Grid::square(n);
            for r in 0..n {
                grid.set(r, mid, line);
                for c in [0, n - 1] {
                    if rng.gen_bool(g.gravity_density) {
                        grid.set(r, c, dots);
                    }
                }
            }
            let side = |c: usize| (0..n).any(|r| !grid.get(r, c).is_black());
            (side(0) && side(n - 1)).then_some(grid)
        }
        TaskKind::Stretch => {
            let color = random_color(rng);
            let top = g.stretch_top;
            let bottom = top + g.stretch_height - 1;
            let grid = Grid::from_fn(n, n, |r, _| {
                let on = (r == bottom) || ((top..bottom).contains(&r) && rng.gen_bool(g.density));
                if on {
                    color
                } else {
                    Color::BLACK
                }
            });
            let top_row_used = (0..n).any(|c| !grid.get(top, c).is_black());
            top_row_used.then_some(grid)
        }
    }
}

/// Samples a random input grid for the task, deterministically in `seed`.
pub fn generate_random_grid(task: &TaskSpec, seed: u64) -> Result<Grid, AugmentError> {
    task.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..task.generator.max_attempts {
        if let Some(grid) = draw(task, &mut rng) {
            return Ok(grid);
        }
    }
    Err(AugmentError::GeneratorExhausted {
        task: task.kind,
        attempts: task.generator.max_attempts,
    })
}

/// Checks that `expert` is an expert trace for `task` and solves it, on a
/// fixed set of probe grids.
pub fn validate_expert(task: &TaskSpec, expert: &ExpertTrace) -> Result<(), AugmentError> {
    let reject = |reason: String| AugmentError::NotExpert {
        source_tag: expert.source.clone(),
        reason,
    };
    for seed in PROBE_SEEDS {
        let grid = generate_random_grid(task, seed)?;
        let trace = generate_trace(&grid, expert).map_err(|e| reject(e.to_string()))?;
        if !is_expert_trace(&trace.actions(), &trace.grids(), task.expert_threshold)? {
            return Err(reject(format!(
                "needs fewer than {} actions, no edit, and no repeated grid state",
                task.expert_threshold
            )));
        }
        if *trace.final_grid() != task_rule_oracle(task, &grid)? {
            return Err(reject(format!("does not solve the {} task", task.kind)));
        }
    }
    Ok(())
}

/// Training windows, evaluation pairs, and the expert index behind each
/// training record.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Vec<TrajectoryRecord>,
    pub eval: Vec<EvalPair>,
    pub provenance: Vec<usize>,
}

/// Replays the experts round-robin over fresh random grids. Instances are
/// generated in parallel on the current rayon pool; the output does not
/// depend on the pool size.
pub fn build_dataset(
    task: &TaskSpec,
    experts: &[ExpertTrace],
    n_train: usize,
    n_eval: usize,
    master_seed: u64,
) -> Result<Dataset, AugmentError> {
    task.validate()?;
    if experts.is_empty() {
        return Err(AugmentError::NoExperts);
    }
    for expert in experts {
        validate_expert(task, expert)?;
    }
    let name = task.kind.name();
    let at = |index: u64| {
        move |source: AugmentError| AugmentError::Instance {
            index,
            source: Box::new(source),
        }
    };

    let train: Vec<Result<TrajectoryRecord, AugmentError>> = (0..n_train as u64)
        .into_par_iter()
        .map(|i| {
            let expert = &experts[i as usize % experts.len()];
            let grid = generate_random_grid(task, instance_seed(master_seed, i)).map_err(at(i))?;
            let trace = generate_trace(&grid, expert).map_err(at(i))?;
            to_record(name, i, &trace, WINDOW).map_err(at(i))
        })
        .collect();
    let eval: Vec<Result<EvalPair, AugmentError>> = (0..n_eval as u64)
        .into_par_iter()
        .map(|j| {
            let input = generate_random_grid(task, instance_seed(master_seed, EVAL_STREAM | j)).map_err(at(j))?;
            let answer = task_rule_oracle(task, &input).map_err(|e| at(j)(e.into()))?;
            Ok(EvalPair {
                task: name.to_string(),
                instance: j,
                input,
                answer,
            })
        })
        .collect();

    Ok(Dataset {
        train: train.into_iter().collect::<Result<_, _>>()?,
        eval: eval.into_iter().collect::<Result<_, _>>()?,
        provenance: (0..n_train).map(|i| i % experts.len()).collect(),
    })
}

/// Fills every step's cluster map. Padded steps reuse the first step's map.
pub fn attach_pnp(mut records: Vec<TrajectoryRecord>, params: &PnpParams) -> Vec<TrajectoryRecord> {
    records.par_iter_mut().for_each(|record| {
        let first = cluster_map(&record.steps[0].state, params);
        for (step, &m) in record.steps.iter_mut().zip(&record.mask) {
            step.pnp = Some(if m == 1 {
                cluster_map(&step.state, params)
            } else {
                first.clone()
            });
        }
    });
    records
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(rows: &[&[u8]]) -> Grid {
        Grid::from_rows(rows.iter().map(|r| r.to_vec())).unwrap()
    }

    fn names(actions: &[&str]) -> Vec<ActionKind> {
        actions.iter().map(|a| ActionKind::from_name(a).unwrap()).collect()
    }

    fn replay_names(grid: &Grid, actions: &[&str]) -> GeneratedTrace {
        generate_trace(grid, &ExpertTrace::from_names(actions, "test").unwrap()).unwrap()
    }

    fn asymmetric() -> Grid {
        g(&[&[1, 1, 0], &[0, 0, 0], &[0, 0, 0]])
    }

    #[test]
    fn shortest_listed_trace_is_expert() {
        let grid = asymmetric();
        let t = replay_names(&grid, &["start", "rotate", "reflecty", "end"]);
        assert!(is_expert_trace(&t.actions(), &t.grids(), 6).unwrap());
        assert!(!is_expert_trace(&t.actions(), &t.grids(), 4).unwrap());
        assert_eq!(*t.final_grid(), grid.transpose());
    }

    #[test]
    fn edit_disqualifies() {
        let grid = asymmetric();
        let actions = names(&["start", "rotate", "end"]);
        let mut with_edit = actions.clone();
        with_edit[1] = ActionKind::Edit;
        let grids = vec![grid.clone(), grid.transpose(), grid.transpose()];
        assert!(is_expert_trace(&actions, &grids, 6).unwrap());
        assert!(!is_expert_trace(&with_edit, &grids, 6).unwrap());
    }

    #[test]
    fn four_rotations_are_a_cycle() {
        let t = replay_names(&asymmetric(), &["start", "rotate", "rotate", "rotate", "rotate", "end"]);
        assert!(!is_expert_trace(&t.actions(), &t.grids(), 10).unwrap());
    }

    #[test]
    fn repeated_reflection_is_a_cycle() {
        let t = replay_names(
            &asymmetric(),
            &["start", "reflectx", "reflectx", "rotate", "reflecty", "end"],
        );
        assert!(!is_expert_trace(&t.actions(), &t.grids(), 10).unwrap());
    }

    #[test]
    fn mismatched_lengths() {
        assert!(matches!(
            is_expert_trace(&names(&["start", "end"]), &[asymmetric()], 6),
            Err(AugmentError::LengthMismatch { actions: 2, grids: 1 })
        ));
    }

    #[test]
    fn start_end_keeps_grid() {
        let t = replay_names(&asymmetric(), &["start", "end"]);
        assert_eq!(t.steps.len(), 2);
        assert_eq!(*t.final_grid(), t.input);
    }

    #[test]
    fn rtg_partitions() {
        assert_eq!(assign_rtg(2).unwrap(), vec![0.0, 1.0]);
        assert_eq!(assign_rtg(5).unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let r = assign_rtg(4).unwrap();
        assert!((r[1] - 1.0 / 3.0).abs() < 1e-12 && (r[2] - 2.0 / 3.0).abs() < 1e-12);
        assert!(matches!(assign_rtg(1), Err(AugmentError::LengthTooShort(1))));
    }

    #[test]
    fn short_trace_is_padded_with_its_first_step() {
        let t = replay_names(&asymmetric(), &["start", "rotate", "reflecty", "end"]);
        let rec = to_record("diagonal_flip", 0, &t, 5).unwrap();
        assert_eq!(rec.mask, vec![1, 1, 1, 1, 0]);
        assert_eq!(rec.steps[4], rec.steps[0]);
        assert_eq!(rec.steps[0].state, asymmetric());
        assert_eq!(rec.steps[3].rtg, 1.0);
        assert_eq!(rec.steps.iter().map(|s| s.t).collect::<Vec<_>>(), vec![1, 2, 3, 4, 1]);
        rec.validate(5).unwrap();
    }

    #[test]
    fn long_trace_keeps_its_tail() {
        let t = replay_names(
            &asymmetric(),
            &[
                "start", "rotate", "rotate", "reflectx", "rotate", "rotate", "rotate", "end",
            ],
        );
        let rec = to_record("diagonal_flip", 0, &t, 5).unwrap();
        assert_eq!(rec.mask, vec![1; 5]);
        assert_eq!(rec.steps[0].t, 4);
        assert_eq!(rec.steps[4].rtg, 1.0);
        assert_eq!(rec.steps[4].state, asymmetric().transpose());
    }

    #[test]
    fn selectors_resolve() {
        let grid = g(&[&[1, 0, 2], &[0, 0, 2], &[3, 0, 0]]);
        assert_eq!(Selector::All.resolve(&grid).unwrap().len(), 4);
        let second: Vec<Coord> = Selector::Object(2).resolve(&grid).unwrap().iter().collect();
        assert_eq!(second, vec![(0, 2), (1, 2)]);
        assert!(Selector::Object(4).resolve(&grid).is_err());
        assert_eq!(Selector::Rect([0, 0, 1, 1]).resolve(&grid).unwrap().len(), 4);
        assert!(Selector::Rect([0, 0, 3, 1]).resolve(&grid).is_err());
        assert_eq!(ColorSpec::Foreground.resolve(&grid).unwrap(), Color::new(1).unwrap());
    }

    #[test]
    fn expert_json_round_trips() {
        let json = r#"[
            ["start", "rotate", "reflecty", "end"],
            {"source": "mine", "actions": ["start",
                {"tool": "move_down", "select": {"object": 1}},
                {"tool": "coloring", "select": {"rect": [0, 0, 1, 1]}, "color": "fg"},
                {"tool": "coloring", "select": "all", "color": 4},
                "end"]}
        ]"#;
        let experts = parse_experts(json, "file").unwrap();
        assert_eq!(experts[0].source, "file#0");
        assert_eq!(experts[1].source, "mine");
        assert_eq!(experts[1].steps[2].color, Some(ColorSpec::Foreground));
        assert_eq!(parse_experts(&experts_to_json(&experts), "other").unwrap(), experts);
    }

    #[test]
    fn malformed_experts_are_rejected() {
        for bad in [
            r#"[["rotate", "end"]]"#,
            r#"[["start", "rotate"]]"#,
            r#"[["start", "move_up", "end"]]"#,
            r#"[["start", {"tool": "rotate", "select": "all"}, "end"]]"#,
            r#"[["start", {"tool": "move_up", "select": {"object": 0}}, "end"]]"#,
            r#"[["start", "fly", "end"]]"#,
        ] {
            assert!(parse_experts(bad, "bad").is_err(), "{bad}");
        }
    }

    #[test]
    fn default_experts_are_valid() {
        for kind in TaskKind::ALL {
            let task = TaskSpec::new(kind);
            let experts = default_experts(kind);
            assert!(!experts.is_empty());
            for e in &experts {
                validate_expert(&task, e).unwrap_or_else(|err| panic!("{kind}: {err}"));
            }
        }
    }

    #[test]
    fn generators_are_deterministic() {
        for kind in TaskKind::ALL {
            let task = TaskSpec::new(kind);
            assert_eq!(
                generate_random_grid(&task, 11).unwrap(),
                generate_random_grid(&task, 11).unwrap()
            );
        }
    }

    #[test]
    fn impossible_generator_is_exhausted() {
        let mut task = TaskSpec::new(TaskKind::Tetris);
        task.generator.tetris_pieces = (3, 3);
        task.generator.max_attempts = 20;
        assert!(matches!(
            generate_random_grid(&task, 1),
            Err(AugmentError::GeneratorExhausted { attempts: 20, .. })
        ));
    }

    #[test]
    fn replay_error_names_the_step() {
        let grid = g(&[&[0, 0], &[0, 1]]);
        let expert = parse_experts(r#"[["start", {"tool": "move_down", "select": "all"}, "end"]]"#, "x")
            .unwrap()
            .remove(0);
        match generate_trace(&grid, &expert) {
            Err(AugmentError::Replay {
                step: 1,
                source: ActionError::MoveOffGrid { .. },
            }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dataset_round_robin() {
        let task = TaskSpec::new(TaskKind::Gravity);
        let experts = default_experts(TaskKind::Gravity);
        let ds = build_dataset(&task, &experts[..2], 10, 3, 5).unwrap();
        assert_eq!(ds.provenance, vec![0, 1, 0, 1, 0, 1, 0, 1, 0, 1]);
        assert_eq!(ds.train.len(), 10);
        assert_eq!(ds.eval.len(), 3);
        assert_eq!(ds, build_dataset(&task, &experts[..2], 10, 3, 5).unwrap());
        assert_ne!(ds.train, build_dataset(&task, &experts[..2], 10, 3, 6).unwrap().train);
    }

    #[test]
    fn attach_pnp_is_idempotent() {
        let task = TaskSpec::new(TaskKind::DiagonalFlip);
        let ds = build_dataset(&task, &default_experts(task.kind), 4, 0, 1).unwrap();
        let params = PnpParams::default();
        let once = attach_pnp(ds.train, &params);
        for rec in &once {
            rec.validate(WINDOW).unwrap();
            assert_eq!(rec.steps[4].pnp, rec.steps[0].pnp);
        }
        assert_eq!(attach_pnp(once.clone(), &params), once);
    }

    #[test]
    fn single_pixel_map() {
        let mut grid = Grid::square(5);
        grid.set(2, 3, Color::new(6).unwrap());
        let rec = TrajectoryRecord {
            task: "x".into(),
            instance: 0,
            steps: vec![
                StepRecord {
                    state: grid,
                    action: 0,
                    rtg: 0.0,
                    t: 1,
                    pnp: None
                };
                5
            ],
            mask: vec![1, 0, 0, 0, 0],
        };
        let out = attach_pnp(vec![rec], &PnpParams::default());
        let map = out[0].steps[0].pnp.as_ref().unwrap();
        let ones: Vec<_> = (0..5)
            .flat_map(|r| (0..5).map(move |c| (r, c)))
            .filter(|&(r, c)| map.get(r, c) == 1)
            .collect();
        assert_eq!(ones, vec![(2, 3)]);
        assert_eq!(map.num_clusters(), 1);
    }
}

//! The 14-action grid DSL and its deterministic interpreter.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Color, Coord, Grid, Selection};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ActionError {
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error("unknown action id {0}")]
    UnknownActionId(u8),
    #[error("cell ({row}, {col}) is outside the grid")]
    OutOfBounds { row: usize, col: usize },
    #[error("moving cell ({row}, {col}) would overwrite a colored cell")]
    MoveCollision { row: usize, col: usize },
    #[error("moving cell ({row}, {col}) would leave the grid")]
    MoveOffGrid { row: usize, col: usize },
    #[error("`{action}` requires a {what}")]
    MissingArgument { action: ActionKind, what: &'static str },
    #[error("invalid argument for `{action}`: {reason}")]
    InvalidArgument { action: ActionKind, reason: String },
}

/// Which arguments an action consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arity {
    pub selection: bool,
    pub color: bool,
    pub input: bool,
}

impl Arity {
    const NONE: Arity = Arity {
        selection: false,
        color: false,
        input: false,
    };
}

/// The action catalogue. Discriminants are the stable action ids used in
/// datasets; `Start` (0) and `End` (13) delimit every trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
#[repr(u8)]
pub enum ActionKind {
    Start = 0,
    Edit = 1,
    CopyFromInput = 2,
    RotateCw = 3,
    RotateCcw = 4,
    ReflectX = 5,
    ReflectY = 6,
    MoveUp = 7,
    MoveDown = 8,
    MoveLeft = 9,
    MoveRight = 10,
    Coloring = 11,
    Submit = 12,
    End = 13,
}

impl ActionKind {
    pub const COUNT: usize = 14;

    pub const ALL: [ActionKind; Self::COUNT] = [
        ActionKind::Start,
        ActionKind::Edit,
        ActionKind::CopyFromInput,
        ActionKind::RotateCw,
        ActionKind::RotateCcw,
        ActionKind::ReflectX,
        ActionKind::ReflectY,
        ActionKind::MoveUp,
        ActionKind::MoveDown,
        ActionKind::MoveLeft,
        ActionKind::MoveRight,
        ActionKind::Coloring,
        ActionKind::Submit,
        ActionKind::End,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Result<Self, ActionError> {
        Self::ALL
            .get(id as usize)
            .copied()
            .ok_or(ActionError::UnknownActionId(id))
    }

    /// Canonical tool name, as written in traces.
    pub fn name(self) -> &'static str {
        match self {
            ActionKind::Start => "start",
            ActionKind::Edit => "edit",
            ActionKind::CopyFromInput => "copyFromInput",
            ActionKind::RotateCw => "rotate_cw",
            ActionKind::RotateCcw => "rotate_ccw",
            ActionKind::ReflectX => "reflectx",
            ActionKind::ReflectY => "reflecty",
            ActionKind::MoveUp => "move_up",
            ActionKind::MoveDown => "move_down",
            ActionKind::MoveLeft => "move_left",
            ActionKind::MoveRight => "move_right",
            ActionKind::Coloring => "coloring",
            ActionKind::Submit => "submit",
            ActionKind::End => "end",
        }
    }

    /// Resolves a tool name, accepting the spellings seen in recorded traces.
    pub fn from_name(name: &str) -> Result<Self, ActionError> {
        let kind = match name {
            "start" => ActionKind::Start,
            "end" => ActionKind::End,
            "edit" => ActionKind::Edit,
            "copyFromInput" | "copy_from_input" => ActionKind::CopyFromInput,
            // unsuffixed rotation is clockwise
            "rotate" | "rotate_cw" | "rotateCW" => ActionKind::RotateCw,
            "rotate_ccw" | "rotateCCW" => ActionKind::RotateCcw,
            "reflectx" | "reflect_x" => ActionKind::ReflectX,
            "reflecty" | "reflect_y" => ActionKind::ReflectY,
            "move_up" | "moveUp" => ActionKind::MoveUp,
            "move_down" | "moveDown" => ActionKind::MoveDown,
            "move_left" | "moveLeft" => ActionKind::MoveLeft,
            "move_right" | "moveRight" => ActionKind::MoveRight,
            "coloring" | "floodfill" => ActionKind::Coloring,
            "submit" => ActionKind::Submit,
            other => return Err(ActionError::UnknownAction(other.to_string())),
        };
        Ok(kind)
    }

    pub fn arity(self) -> Arity {
        match self {
            ActionKind::Edit | ActionKind::Coloring => Arity {
                selection: true,
                color: true,
                input: false,
            },
            ActionKind::MoveUp | ActionKind::MoveDown | ActionKind::MoveLeft | ActionKind::MoveRight => Arity {
                selection: true,
                ..Arity::NONE
            },
            ActionKind::CopyFromInput => Arity {
                input: true,
                ..Arity::NONE
            },
            _ => Arity::NONE,
        }
    }

    /// Markers with no effect on the grid.
    pub fn is_marker(self) -> bool {
        matches!(self, ActionKind::Start | ActionKind::End | ActionKind::Submit)
    }

    /// Whole-grid rotations and reflections.
    pub fn is_geometry(self) -> bool {
        matches!(
            self,
            ActionKind::RotateCw | ActionKind::RotateCcw | ActionKind::ReflectX | ActionKind::ReflectY
        )
    }

    fn move_offset(self) -> Option<(isize, isize)> {
        match self {
            ActionKind::MoveUp => Some((-1, 0)),
            ActionKind::MoveDown => Some((1, 0)),
            ActionKind::MoveLeft => Some((0, -1)),
            ActionKind::MoveRight => Some((0, 1)),
            _ => None,
        }
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActionKind {
    type Err = ActionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_name(s)
    }
}

impl From<ActionKind> for u8 {
    fn from(kind: ActionKind) -> u8 {
        kind.id()
    }
}

impl TryFrom<u8> for ActionKind {
    type Error = ActionError;

    fn try_from(id: u8) -> Result<Self, Self::Error> {
        Self::from_id(id)
    }
}

/// Arguments for [`apply_action`]. Arguments the action does not consume are
/// ignored.
#[derive(Debug, Clone, Copy, Default)]
pub struct ActionArgs<'a> {
    pub selection: Option<&'a Selection>,
    pub color: Option<Color>,
    /// The task's input grid, consumed by `copyFromInput`.
    pub input: Option<&'a Grid>,
}

impl<'a> ActionArgs<'a> {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn selection(selection: &'a Selection) -> Self {
        ActionArgs {
            selection: Some(selection),
            ..Self::default()
        }
    }

    pub fn with_color(mut self, color: Color) -> Self {
        self.color = Some(color);
        self
    }

    pub fn with_input(mut self, input: &'a Grid) -> Self {
        self.input = Some(input);
        self
    }
}

/// Applies one action to `grid`, returning the resulting grid.
pub fn apply_action(grid: &Grid, kind: ActionKind, args: &ActionArgs<'_>) -> Result<Grid, ActionError> {
    let arity = kind.arity();
    let selection = match (arity.selection, args.selection) {
        (true, None) => {
            return Err(ActionError::MissingArgument {
                action: kind,
                what: "selection",
            })
        }
        (true, Some(sel)) => {
            if let Some((row, col)) = sel.first_out_of_bounds(grid.rows(), grid.cols()) {
                return Err(ActionError::OutOfBounds { row, col });
            }
            Some(sel)
        }
        (false, _) => None,
    };
    let color = match (arity.color, args.color) {
        (true, None) => {
            return Err(ActionError::MissingArgument {
                action: kind,
                what: "color",
            })
        }
        (_, c) => c,
    };

    match kind {
        ActionKind::Start | ActionKind::End | ActionKind::Submit => Ok(grid.clone()),
        ActionKind::RotateCw => Ok(rotate_cw(grid)),
        ActionKind::RotateCcw => Ok(rotate_ccw(grid)),
        ActionKind::ReflectX => Ok(reflect_x(grid)),
        ActionKind::ReflectY => Ok(reflect_y(grid)),
        ActionKind::CopyFromInput => {
            let input = args.input.ok_or(ActionError::MissingArgument {
                action: kind,
                what: "task input grid",
            })?;
            if input.shape() != grid.shape() {
                return Err(ActionError::InvalidArgument {
                    action: kind,
                    reason: format!(
                        "input shape {:?} differs from working grid {:?}",
                        input.shape(),
                        grid.shape()
                    ),
                });
            }
            Ok(input.clone())
        }
        ActionKind::Edit => {
            let sel = selection.expect("arity checked");
            if sel.len() != 1 {
                return Err(ActionError::InvalidArgument {
                    action: kind,
                    reason: format!("edit targets exactly one cell, got {}", sel.len()),
                });
            }
            let (r, c) = sel.iter().next().expect("one cell");
            let mut out = grid.clone();
            out.set(r, c, color.expect("arity checked"));
            Ok(out)
        }
        ActionKind::Coloring => {
            let color = color.expect("arity checked");
            let mut out = grid.clone();
            for (r, c) in selection.expect("arity checked").iter() {
                out.set(r, c, color);
            }
            Ok(out)
        }
        ActionKind::MoveUp | ActionKind::MoveDown | ActionKind::MoveLeft | ActionKind::MoveRight => {
            let offset = kind.move_offset().expect("move action");
            translate(grid, selection.expect("arity checked"), offset)
        }
    }
}

/// Shifts the colored cells of `selection` by one step. Black selected cells
/// carry nothing; vacated cells become black.
fn translate(grid: &Grid, selection: &Selection, (dr, dc): (isize, isize)) -> Result<Grid, ActionError> {
    let payload: Vec<(Coord, Color)> = selection
        .iter()
        .map(|p| (p, grid.get(p.0, p.1)))
        .filter(|(_, c)| !c.is_black())
        .collect();
    let mut targets = Vec::with_capacity(payload.len());
    for &((r, c), color) in &payload {
        let (nr, nc) = (r as isize + dr, c as isize + dc);
        match grid.try_get(nr, nc) {
            None => return Err(ActionError::MoveOffGrid { row: r, col: c }),
            Some(occupant) => {
                let target = (nr as usize, nc as usize);
                if !occupant.is_black() && !selection.contains(target) {
                    return Err(ActionError::MoveCollision { row: r, col: c });
                }
                targets.push((target, color));
            }
        }
    }
    let mut out = grid.clone();
    for &((r, c), _) in &payload {
        out.set(r, c, Color::BLACK);
    }
    for ((r, c), color) in targets {
        out.set(r, c, color);
    }
    Ok(out)
}

pub fn rotate_cw(grid: &Grid) -> Grid {
    let n = grid.rows();
    Grid::from_fn(grid.cols(), n, |r, c| grid.get(n - 1 - c, r))
}

pub fn rotate_ccw(grid: &Grid) -> Grid {
    let m = grid.cols();
    Grid::from_fn(m, grid.rows(), |r, c| grid.get(c, m - 1 - r))
}

/// Up-down flip: row `r` goes to row `rows - 1 - r`.
pub fn reflect_x(grid: &Grid) -> Grid {
    let n = grid.rows();
    Grid::from_fn(n, grid.cols(), |r, c| grid.get(n - 1 - r, c))
}

/// Left-right flip.
pub fn reflect_y(grid: &Grid) -> Grid {
    let m = grid.cols();
    Grid::from_fn(grid.rows(), m, |r, c| grid.get(r, m - 1 - c))
}

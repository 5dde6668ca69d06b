//! Reader and writer for O2ARC solution traces.
//!
//! A trace document is a JSON object whose `action_sequence` field is itself
//! a JSON document stored as a string. Cell values and coordinates appear
//! both as integers and as digit strings; both normalize to the same model.

use std::io;

use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::action::{ActionError, ActionKind};
use crate::grid::{Color, Grid, GridError, Selection};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("malformed JSON: {0}")]
    MalformedJson(String),
    #[error("action_sequence is not a JSON document: {0}")]
    DoubleEncoding(String),
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("bad grid at {path}: {message}")]
    GridShape { path: String, message: String },
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> TraceError {
    TraceError::Schema {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectedCell {
    pub row: usize,
    pub col: usize,
    pub val: Color,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionRecord {
    /// Tool name exactly as recorded; unknown tools are kept verbatim.
    pub tool: String,
    pub selected_cells: Option<Vec<SelectedCell>>,
}

impl ActionRecord {
    pub fn new(tool: impl Into<String>) -> Self {
        ActionRecord {
            tool: tool.into(),
            selected_cells: None,
        }
    }

    pub fn kind(&self) -> Result<ActionKind, ActionError> {
        ActionKind::from_name(&self.tool)
    }

    /// Cells flagged as selected, if the record carries a selection.
    pub fn selection(&self) -> Option<Selection> {
        self.selected_cells
            .as_ref()
            .map(|cells| cells.iter().filter(|c| c.selected).map(|c| (c.row, c.col)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceStep {
    pub action: ActionRecord,
    pub grid: Grid,
    pub submit: bool,
    /// Milliseconds spent on the step.
    pub time: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub id: i64,
    pub task_id: String,
    pub user_id: String,
    pub steps: Vec<TraceStep>,
}

impl Trace {
    pub fn tools(&self) -> Vec<&str> {
        self.steps.iter().map(|s| s.action.tool.as_str()).collect()
    }

    pub fn final_grid(&self) -> &Grid {
        &self.steps.last().expect("traces are non-empty").grid
    }
}

/// Parses one O2ARC trace record.
pub fn parse_o2arc(document: &[u8]) -> Result<Trace, TraceError> {
    let outer: Value = match serde_json::from_slice(document) {
        Ok(v) => v,
        Err(err) => match reescape_inner_document(document) {
            Some(v) => v,
            None => return Err(TraceError::MalformedJson(err.to_string())),
        },
    };
    let outer = outer.as_object().ok_or_else(|| schema("$", "expected an object"))?;
    let id = outer
        .get("id")
        .ok_or_else(|| schema("$.id", "missing"))
        .and_then(|v| as_int(v, "$.id"))?;
    let task_id = string_field(outer, "task_id")?;
    let user_id = string_field(outer, "user_id")?;
    let inner = match outer.get("action_sequence") {
        Some(Value::String(s)) => {
            serde_json::from_str::<Value>(s).map_err(|e| TraceError::DoubleEncoding(e.to_string()))?
        }
        Some(_) => return Err(schema("$.action_sequence", "expected a JSON-encoded string")),
        None => return Err(schema("$.action_sequence", "missing")),
    };
    let steps = inner
        .as_object()
        .and_then(|o| o.get("action_sequence"))
        .and_then(Value::as_array)
        .ok_or_else(|| schema("$.action_sequence.action_sequence", "expected an array of steps"))?;
    if steps.is_empty() {
        return Err(schema("$.action_sequence.action_sequence", "trace has no steps"));
    }
    let steps = steps
        .iter()
        .enumerate()
        .map(|(i, step)| parse_step(step, &format!("steps[{i}]")))
        .collect::<Result<Vec<_>, _>>()?;
    if steps[0].action.tool != "start" {
        return Err(schema(
            "steps[0].action.tool",
            format!("expected \"start\", found {:?}", steps[0].action.tool),
        ));
    }
    let shape = steps[0].grid.shape();
    if let Some((i, s)) = steps.iter().enumerate().find(|(_, s)| s.grid.shape() != shape) {
        return Err(TraceError::GridShape {
            path: format!("steps[{i}].grid"),
            message: format!("shape {:?} differs from initial {:?}", s.grid.shape(), shape),
        });
    }
    Ok(Trace {
        id,
        task_id,
        user_id,
        steps,
    })
}

/// Recovers records whose embedded `action_sequence` document was written
/// without escaping its quotes, as in `"action_sequence": "{"action_sequence": [...]}"`.
fn reescape_inner_document(document: &[u8]) -> Option<Value> {
    let text = std::str::from_utf8(document).ok()?;
    let key = text.find("\"action_sequence\"")?;
    let after_key = &text[key + "\"action_sequence\"".len()..];
    let colon = after_key.find(':')?;
    if !after_key[..colon].trim().is_empty() {
        return None;
    }
    let rest = after_key[colon + 1..].trim_start();
    if !rest.starts_with("\"{") {
        return None;
    }
    let inner_start = text.len() - rest.len() + 1;
    let close = text.rfind('}')?;
    let inner_end = text[..close].rfind('"')?;
    if inner_end <= inner_start {
        return None;
    }
    let inner = &text[inner_start..inner_end];
    serde_json::from_str::<Value>(inner).ok()?;
    let repaired = format!(
        "{}{}{}",
        &text[..inner_start - 1],
        serde_json::to_string(inner).ok()?,
        &text[inner_end + 1..]
    );
    serde_json::from_str(&repaired).ok()
}

fn string_field(obj: &Map<String, Value>, key: &str) -> Result<String, TraceError> {
    match obj.get(key) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(Value::Number(n)) => Ok(n.to_string()),
        Some(_) => Err(schema(format!("$.{key}"), "expected a string")),
        None => Err(schema(format!("$.{key}"), "missing")),
    }
}

/// Integers may be stored as JSON numbers or as digit strings.
fn as_int(v: &Value, path: &str) -> Result<i64, TraceError> {
    match v {
        Value::Number(n) => n
            .as_i64()
            .ok_or_else(|| schema(path, format!("expected an integer, found {n}"))),
        Value::String(s) => s
            .trim()
            .parse::<i64>()
            .map_err(|_| schema(path, format!("expected an integer, found {s:?}"))),
        other => Err(schema(path, format!("expected an integer, found {other}"))),
    }
}

fn as_index(v: &Value, path: &str) -> Result<usize, TraceError> {
    let i = as_int(v, path)?;
    usize::try_from(i).map_err(|_| schema(path, format!("negative index {i}")))
}

fn as_color(v: &Value, path: &str) -> Result<Color, TraceError> {
    let i = as_int(v, path)?;
    Color::try_from(i).map_err(|e| schema(path, e.to_string()))
}

fn parse_grid(v: &Value, path: &str) -> Result<Grid, TraceError> {
    let rows = v.as_array().ok_or_else(|| schema(path, "expected an array of rows"))?;
    let mut raw = Vec::with_capacity(rows.len());
    for (r, row) in rows.iter().enumerate() {
        let row_path = format!("{path}[{r}]");
        let cells = row
            .as_array()
            .ok_or_else(|| schema(&row_path, "expected an array of cells"))?;
        let row = cells
            .iter()
            .enumerate()
            .map(|(c, cell)| as_color(cell, &format!("{row_path}[{c}]")).map(Color::value))
            .collect::<Result<Vec<u8>, _>>()?;
        raw.push(row);
    }
    Grid::from_rows(raw).map_err(|e: GridError| TraceError::GridShape {
        path: path.to_string(),
        message: e.to_string(),
    })
}

fn parse_step(v: &Value, path: &str) -> Result<TraceStep, TraceError> {
    let obj = v.as_object().ok_or_else(|| schema(path, "expected an object"))?;
    let action = obj
        .get("action")
        .and_then(Value::as_object)
        .ok_or_else(|| schema(format!("{path}.action"), "missing or not an object"))?;
    let tool = match action.get("tool") {
        Some(Value::String(s)) if !s.is_empty() => s.clone(),
        _ => return Err(schema(format!("{path}.action.tool"), "expected a non-empty string")),
    };
    let grid = parse_grid(
        obj.get("grid")
            .ok_or_else(|| schema(format!("{path}.grid"), "missing"))?,
        &format!("{path}.grid"),
    )?;
    let selected_cells = match action.get("selected_cells") {
        None | Some(Value::Null) => None,
        Some(Value::Array(cells)) => Some(
            cells
                .iter()
                .enumerate()
                .map(|(i, c)| parse_selected_cell(c, &format!("{path}.action.selected_cells[{i}]"), &grid))
                .collect::<Result<Vec<_>, _>>()?,
        ),
        Some(_) => return Err(schema(format!("{path}.action.selected_cells"), "expected an array")),
    };
    if let Some(layer) = obj.get("currentLayer") {
        as_index(layer, &format!("{path}.currentLayer"))?;
    }
    if let Some(layers) = obj.get("layer_list") {
        let layers = layers
            .as_array()
            .ok_or_else(|| schema(format!("{path}.layer_list"), "expected an array"))?;
        for (i, layer) in layers.iter().enumerate() {
            parse_grid(layer, &format!("{path}.layer_list[{i}]"))?;
        }
    }
    let submit = match obj.get("submit") {
        None | Some(Value::Null) => false,
        Some(Value::Bool(b)) => *b,
        Some(v) => match as_int(v, &format!("{path}.submit"))? {
            0 => false,
            1 => true,
            other => {
                return Err(schema(
                    format!("{path}.submit"),
                    format!("expected 0 or 1, found {other}"),
                ))
            }
        },
    };
    let time = match obj.get("time") {
        None | Some(Value::Null) => 0,
        Some(v) => {
            let t = as_int(v, &format!("{path}.time"))?;
            u64::try_from(t).map_err(|_| schema(format!("{path}.time"), "negative time"))?
        }
    };
    Ok(TraceStep {
        action: ActionRecord { tool, selected_cells },
        grid,
        submit,
        time,
    })
}

fn parse_selected_cell(v: &Value, path: &str, grid: &Grid) -> Result<SelectedCell, TraceError> {
    let obj = v.as_object().ok_or_else(|| schema(path, "expected an object"))?;
    let field = |key: &str| obj.get(key).ok_or_else(|| schema(format!("{path}.{key}"), "missing"));
    let row = as_index(field("row")?, &format!("{path}.row"))?;
    let col = as_index(field("col")?, &format!("{path}.col"))?;
    if !grid.in_bounds((row, col)) {
        return Err(schema(
            path,
            format!("cell ({row}, {col}) outside {:?} grid", grid.shape()),
        ));
    }
    let val = match obj.get("val") {
        Some(v) => as_color(v, &format!("{path}.val"))?,
        None => grid.get(row, col),
    };
    let selected = match obj.get("selected") {
        None => true,
        Some(Value::Bool(b)) => *b,
        Some(v) => as_int(v, &format!("{path}.selected"))? != 0,
    };
    Ok(SelectedCell {
        row,
        col,
        val,
        selected,
    })
}

#[derive(Serialize)]
struct OuterDoc<'a> {
    id: i64,
    task_id: &'a str,
    user_id: &'a str,
    action_sequence: String,
}

#[derive(Serialize)]
struct InnerDoc<'a> {
    action_sequence: Vec<StepDoc<'a>>,
}

#[derive(Serialize)]
struct StepDoc<'a> {
    action: ActionDoc<'a>,
    grid: &'a Grid,
    #[serde(rename = "currentLayer")]
    current_layer: u32,
    layer_list: [&'a Grid; 1],
    submit: u8,
    time: u64,
}

#[derive(Serialize)]
struct ActionDoc<'a> {
    tool: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    selected_cells: Option<Vec<CellDoc>>,
}

#[derive(Serialize)]
struct CellDoc {
    row: usize,
    col: usize,
    val: u8,
    selected: bool,
}

/// Writes a trace in the two-layer O2ARC shape.
pub fn serialize_trace(trace: &Trace) -> Vec<u8> {
    let inner = InnerDoc {
        action_sequence: trace
            .steps
            .iter()
            .map(|s| StepDoc {
                action: ActionDoc {
                    tool: &s.action.tool,
                    selected_cells: s.action.selected_cells.as_ref().map(|cells| {
                        cells
                            .iter()
                            .map(|c| CellDoc {
                                row: c.row,
                                col: c.col,
                                val: c.val.value(),
                                selected: c.selected,
                            })
                            .collect()
                    }),
                },
                grid: &s.grid,
                current_layer: 0,
                layer_list: [&s.grid],
                submit: s.submit as u8,
                time: s.time,
            })
            .collect(),
    };
    let mut inner_bytes = Vec::new();
    inner
        .serialize(&mut serde_json::Serializer::with_formatter(
            &mut inner_bytes,
            SpacedFormatter,
        ))
        .expect("trace serializes");
    let outer = OuterDoc {
        id: trace.id,
        task_id: &trace.task_id,
        user_id: &trace.user_id,
        action_sequence: String::from_utf8(inner_bytes).expect("serde_json emits UTF-8"),
    };
    let mut out = Vec::new();
    let fmt = serde_json::ser::PrettyFormatter::with_indent(b"    ");
    outer
        .serialize(&mut serde_json::Serializer::with_formatter(&mut out, fmt))
        .expect("trace serializes");
    out
}

/// Single-line JSON with `", "` and `": "` separators, as the recording tool writes.
struct SpacedFormatter;

impl serde_json::ser::Formatter for SpacedFormatter {
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        if first {
            Ok(())
        } else {
            writer.write_all(b", ")
        }
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        if first {
            Ok(())
        } else {
            writer.write_all(b", ")
        }
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        writer.write_all(b": ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(inner_steps: &str) -> Vec<u8> {
        let inner = format!("{{\"action_sequence\": [{inner_steps}]}}");
        serde_json::to_vec(&serde_json::json!({
            "id": 1, "task_id": "t", "user_id": "u", "action_sequence": inner
        }))
        .unwrap()
    }

    const START: &str = r#"{"action": {"tool": "start"}, "grid": [[0, 0], [0, 0]], "currentLayer": 0, "layer_list": [[[0, 0], [0, 0]]], "submit": 0, "time": 8}"#;

    #[test]
    fn empty_step_list_is_schema_error() {
        assert!(matches!(parse_o2arc(&doc("")), Err(TraceError::Schema { .. })));
    }

    #[test]
    fn inner_document_must_be_json() {
        let bad = serde_json::to_vec(&serde_json::json!({
            "id": 1, "task_id": "t", "user_id": "u", "action_sequence": "{not json"
        }))
        .unwrap();
        assert!(matches!(parse_o2arc(&bad), Err(TraceError::DoubleEncoding(_))));
        assert!(matches!(parse_o2arc(b"{\"id\": "), Err(TraceError::MalformedJson(_))));
    }

    #[test]
    fn string_and_integer_colors_normalize() {
        let a = doc(&format!(
            r#"{START}, {{"action": {{"tool": "edit"}}, "grid": [["2", 0], [0, "0"]], "submit": 0, "time": 1}}"#
        ));
        let b = doc(&format!(
            r#"{START}, {{"action": {{"tool": "edit"}}, "grid": [[2, 0], [0, 0]], "submit": "0", "time": "1"}}"#
        ));
        assert_eq!(parse_o2arc(&a).unwrap(), parse_o2arc(&b).unwrap());
    }

    #[test]
    fn ragged_and_resized_grids_are_rejected() {
        let ragged = doc(r#"{"action": {"tool": "start"}, "grid": [[0, 0], [0]]}"#);
        assert!(matches!(parse_o2arc(&ragged), Err(TraceError::GridShape { .. })));
        let resized = doc(&format!(r#"{START}, {{"action": {{"tool": "x"}}, "grid": [[0]]}}"#));
        assert!(matches!(parse_o2arc(&resized), Err(TraceError::GridShape { .. })));
    }

    #[test]
    fn first_tool_must_be_start() {
        let d = doc(r#"{"action": {"tool": "end"}, "grid": [[0]]}"#);
        assert!(matches!(parse_o2arc(&d), Err(TraceError::Schema { .. })));
    }

    #[test]
    fn unknown_tools_survive_parsing() {
        let d = doc(&format!(
            r#"{START}, {{"action": {{"tool": "lasso"}}, "grid": [[0, 0], [0, 0]]}}"#
        ));
        let trace = parse_o2arc(&d).unwrap();
        assert_eq!(trace.steps[1].action.tool, "lasso");
        assert!(matches!(
            trace.steps[1].action.kind(),
            Err(ActionError::UnknownAction(_))
        ));
    }

    #[test]
    fn selected_cells_out_of_bounds() {
        let d = doc(&format!(
            r#"{START}, {{"action": {{"tool": "coloring", "selected_cells": [{{"row": "2", "col": 0, "val": 1, "selected": true}}]}}, "grid": [[0, 0], [0, 0]]}}"#
        ));
        assert!(matches!(parse_o2arc(&d), Err(TraceError::Schema { .. })));
    }

    #[test]
    fn submit_beyond_flag_is_rejected() {
        let d = doc(r#"{"action": {"tool": "start"}, "grid": [[0]], "submit": 2}"#);
        assert!(matches!(parse_o2arc(&d), Err(TraceError::Schema { .. })));
    }

    #[test]
    fn one_step_trace_serializes_start_tool() {
        let trace = Trace {
            id: 3,
            task_id: "t".into(),
            user_id: "u".into(),
            steps: vec![TraceStep {
                action: ActionRecord::new("start"),
                grid: Grid::square(5),
                submit: false,
                time: 0,
            }],
        };
        let bytes = serialize_trace(&trace);
        let text = String::from_utf8(bytes.clone()).unwrap();
        let outer: Value = serde_json::from_str(&text).unwrap();
        let inner = outer["action_sequence"].as_str().unwrap();
        assert!(inner.starts_with(r#"{"action_sequence": [{"action": {"tool": "start"}, "grid": [[0, 0, 0, 0, 0], "#));
        assert_eq!(parse_o2arc(&bytes).unwrap(), trace);
    }
}

//! Colored grids, cell selections and connected-component labeling.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// A `(row, col)` cell coordinate.
pub type Coord = (usize, usize);

/// Offsets of the eight neighbours of a cell.
pub const NEIGHBORS_8: [(isize, isize); 8] = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GridError {
    #[error("color {0} is outside 0..=9")]
    InvalidColor(i64),
    #[error("grid has no cells")]
    Empty,
    #[error("row {row} has {found} cells, expected {expected}")]
    Ragged { row: usize, expected: usize, found: usize },
}

/// One of the ten ARC colors. `0` is the black background.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Color(u8);

impl Color {
    pub const BLACK: Color = Color(0);
    pub const MAX: u8 = 9;

    pub fn new(value: u8) -> Result<Self, GridError> {
        if value <= Self::MAX {
            Ok(Color(value))
        } else {
            Err(GridError::InvalidColor(value as i64))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn is_black(self) -> bool {
        self.0 == 0
    }
}

impl TryFrom<i64> for Color {
    type Error = GridError;

    fn try_from(value: i64) -> Result<Self, Self::Error> {
        if (0..=Self::MAX as i64).contains(&value) {
            Ok(Color(value as u8))
        } else {
            Err(GridError::InvalidColor(value))
        }
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Serialize for Color {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_u8(self.0)
    }
}

impl<'de> Deserialize<'de> for Color {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = i64::deserialize(deserializer)?;
        Color::try_from(v).map_err(serde::de::Error::custom)
    }
}

/// A rectangular matrix of colors, stored row-major.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Grid {
    rows: usize,
    cols: usize,
    cells: Vec<Color>,
}

impl Grid {
    /// An all-black grid.
    pub fn new(rows: usize, cols: usize) -> Self {
        Grid {
            rows,
            cols,
            cells: vec![Color::BLACK; rows * cols],
        }
    }

    pub fn square(n: usize) -> Self {
        Self::new(n, n)
    }

    /// Builds a grid from nested rows of raw color values.
    pub fn from_rows<R, V>(rows: R) -> Result<Self, GridError>
    where
        R: IntoIterator<Item = V>,
        V: AsRef<[u8]>,
    {
        let mut cells = Vec::new();
        let mut n_rows = 0;
        let mut n_cols = None;
        for (r, row) in rows.into_iter().enumerate() {
            let row = row.as_ref();
            match n_cols {
                None => n_cols = Some(row.len()),
                Some(expected) if expected != row.len() => {
                    return Err(GridError::Ragged {
                        row: r,
                        expected,
                        found: row.len(),
                    })
                }
                _ => {}
            }
            for &v in row {
                cells.push(Color::new(v)?);
            }
            n_rows += 1;
        }
        let cols = n_cols.unwrap_or(0);
        if n_rows == 0 || cols == 0 {
            return Err(GridError::Empty);
        }
        Ok(Grid {
            rows: n_rows,
            cols,
            cells,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn in_bounds(&self, (r, c): Coord) -> bool {
        r < self.rows && c < self.cols
    }

    /// Panics when out of bounds.
    pub fn get(&self, r: usize, c: usize) -> Color {
        assert!(r < self.rows && c < self.cols, "({r}, {c}) out of bounds");
        self.cells[r * self.cols + c]
    }

    pub fn try_get(&self, r: isize, c: isize) -> Option<Color> {
        if r < 0 || c < 0 {
            return None;
        }
        let (r, c) = (r as usize, c as usize);
        self.in_bounds((r, c)).then(|| self.cells[r * self.cols + c])
    }

    pub fn set(&mut self, r: usize, c: usize, color: Color) {
        assert!(r < self.rows && c < self.cols, "({r}, {c}) out of bounds");
        self.cells[r * self.cols + c] = color;
    }

    /// Cells in reading order with their coordinates.
    pub fn iter(&self) -> impl Iterator<Item = (Coord, Color)> + '_ {
        let cols = self.cols;
        self.cells
            .iter()
            .enumerate()
            .map(move |(i, &c)| ((i / cols, i % cols), c))
    }

    pub fn non_black(&self) -> impl Iterator<Item = (Coord, Color)> + '_ {
        self.iter().filter(|(_, c)| !c.is_black())
    }

    pub fn is_all_black(&self) -> bool {
        self.cells.iter().all(|c| c.is_black())
    }

    /// Distinct colors present, ascending.
    pub fn palette(&self) -> BTreeSet<Color> {
        self.cells.iter().copied().collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        self.cells
            .chunks(self.cols)
            .map(|row| row.iter().map(|c| c.0).collect())
            .collect()
    }

    /// Builds a grid of the given shape from a per-cell function.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Color) -> Self {
        let mut cells = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                cells.push(f(r, c));
            }
        }
        Grid { rows, cols, cells }
    }

    pub fn transpose(&self) -> Grid {
        Grid::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Grid{:?}", self.to_rows())
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, row) in self.cells.chunks(self.cols).enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            for (j, c) in row.iter().enumerate() {
                if j > 0 {
                    write!(f, " ")?;
                }
                if c.is_black() {
                    write!(f, ".")?;
                } else {
                    write!(f, "{}", c.0)?;
                }
            }
        }
        Ok(())
    }
}

impl Serialize for Grid {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_rows().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Grid {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<i64>>::deserialize(deserializer)?;
        let mut raw = Vec::with_capacity(rows.len());
        for row in rows {
            let row: Result<Vec<u8>, _> = row.into_iter().map(|v| Color::try_from(v).map(Color::value)).collect();
            raw.push(row.map_err(serde::de::Error::custom)?);
        }
        Grid::from_rows(raw).map_err(serde::de::Error::custom)
    }
}

/// A set of cell coordinates with no duplicates, kept in reading order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Selection(BTreeSet<Coord>);

impl Selection {
    pub fn new(cells: impl IntoIterator<Item = Coord>) -> Self {
        Selection(cells.into_iter().collect())
    }

    /// Every non-black cell of `grid`.
    pub fn non_black(grid: &Grid) -> Self {
        Selection(grid.non_black().map(|(p, _)| p).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, cell: Coord) -> bool {
        self.0.contains(&cell)
    }

    pub fn iter(&self) -> impl Iterator<Item = Coord> + '_ {
        self.0.iter().copied()
    }

    /// First coordinate that falls outside a `rows`×`cols` grid.
    pub fn first_out_of_bounds(&self, rows: usize, cols: usize) -> Option<Coord> {
        self.0.iter().copied().find(|&(r, c)| r >= rows || c >= cols)
    }
}

impl FromIterator<Coord> for Selection {
    fn from_iter<T: IntoIterator<Item = Coord>>(iter: T) -> Self {
        Selection::new(iter)
    }
}

/// Labels 8-connected components of equal non-black color.
///
/// Components are returned in reading order of their first cell, each with
/// its cells sorted in reading order.
pub fn components(grid: &Grid) -> Vec<Vec<Coord>> {
    let mut seen = vec![false; grid.rows * grid.cols];
    let mut out = Vec::new();
    for ((r, c), color) in grid.iter() {
        if color.is_black() || seen[r * grid.cols + c] {
            continue;
        }
        seen[r * grid.cols + c] = true;
        let mut stack = vec![(r, c)];
        let mut cells = Vec::new();
        while let Some((cr, cc)) = stack.pop() {
            cells.push((cr, cc));
            for (dr, dc) in NEIGHBORS_8 {
                let (nr, nc) = (cr as isize + dr, cc as isize + dc);
                if grid.try_get(nr, nc) == Some(color) {
                    let idx = nr as usize * grid.cols + nc as usize;
                    if !seen[idx] {
                        seen[idx] = true;
                        stack.push((nr as usize, nc as usize));
                    }
                }
            }
        }
        cells.sort_unstable();
        out.push(cells);
    }
    out
}

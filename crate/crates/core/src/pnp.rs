//! Push-and-pull object clustering.
//!
//! A grid is abstracted into a graph with one node per colored pixel, placed
//! at three times its grid index, and one weighted edge per 8-adjacent pair.
//! A single force pass then pulls strongly related pixels together and pushes
//! weakly related ones apart, and DBSCAN reads the objects off the displaced
//! node positions.
//!
//! | relation                      | edge distance |
//! |-------------------------------|---------------|
//! | same color, direct            | 1             |
//! | same color, diagonal          | 2             |
//! | different color, direct       | 4             |
//! | different color, diagonal     | 5             |
//!
//! Each edge displaces its endpoints by `(distance - 3) / 2` along the unit
//! vector joining their initial positions: negative values pull, positive
//! values push.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::dbscan::{dbscan, Point};
use crate::grid::{Color, Coord, Grid, NEIGHBORS_8};

/// Grid index to layout coordinate scale.
pub const POSITION_SCALE: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PnpError {
    #[error("edge distance {0} is not one of 1, 2, 4, 5")]
    InvalidDistance(u8),
    #[error("cells {0:?} and {1:?} are not 8-adjacent")]
    NotAdjacent(Coord, Coord),
    #[error("cluster map row {row} has {found} labels, expected {expected}")]
    Ragged { row: usize, expected: usize, found: usize },
    #[error("invalid clustering parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PnpParams {
    /// DBSCAN neighbourhood radius in layout units.
    pub eps: f64,
    pub min_pts: usize,
}

impl Default for PnpParams {
    fn default() -> Self {
        // Pulled diagonal same-color pairs end 3*sqrt(2) - 1 ~ 3.243 apart,
        // pushed direct different-color pairs end 4.0 apart.
        PnpParams { eps: 3.6, min_pts: 1 }
    }
}

impl PnpParams {
    pub fn validate(&self) -> Result<(), PnpError> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(PnpError::InvalidParams(format!(
                "eps must be positive, got {}",
                self.eps
            )));
        }
        if self.min_pts == 0 {
            return Err(PnpError::InvalidParams("min_pts must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adjacency {
    Direct,
    Diagonal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PnpNode {
    pub id: usize,
    pub row: usize,
    pub col: usize,
    pub color: Color,
    pub position: Point,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PnpEdge {
    pub u: usize,
    pub v: usize,
    pub distance: u8,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PnpGraph {
    pub nodes: Vec<PnpNode>,
    pub edges: Vec<PnpEdge>,
}

impl PnpGraph {
    pub fn positions(&self) -> Vec<Point> {
        self.nodes.iter().map(|n| n.position).collect()
    }
}

pub fn manhattan(a: Coord, b: Coord) -> usize {
    a.0.abs_diff(b.0) + a.1.abs_diff(b.1)
}

pub fn adjacency(a: Coord, b: Coord) -> Result<Adjacency, PnpError> {
    match (a.0.abs_diff(b.0), a.1.abs_diff(b.1)) {
        (0, 1) | (1, 0) => Ok(Adjacency::Direct),
        (1, 1) => Ok(Adjacency::Diagonal),
        _ => Err(PnpError::NotAdjacent(a, b)),
    }
}

/// Relative distance between two adjacent colored pixels.
pub fn edge_distance(a: Color, b: Color, adjacency: Adjacency) -> u8 {
    let mut distance = 1;
    if a != b {
        distance += 3;
    }
    if adjacency == Adjacency::Diagonal {
        distance += 1;
    }
    distance
}

/// [`edge_distance`] for two concrete cells.
pub fn edge_distance_between(a: (Coord, Color), b: (Coord, Color)) -> Result<u8, PnpError> {
    Ok(edge_distance(a.1, b.1, adjacency(a.0, b.0)?))
}

/// Signed force magnitude of an edge: negative pulls, positive pushes.
pub fn repulsion(distance: u8) -> Result<f64, PnpError> {
    match distance {
        1 | 2 | 4 | 5 => Ok((distance as f64 - 3.0) / 2.0),
        other => Err(PnpError::InvalidDistance(other)),
    }
}

/// Builds the pixel graph of `grid`. Black pixels are background and get no
/// node; nodes are numbered in reading order.
pub fn abstract_grid(grid: &Grid) -> PnpGraph {
    let mut index: HashMap<Coord, usize> = HashMap::new();
    let mut nodes = Vec::new();
    for ((r, c), color) in grid.non_black() {
        index.insert((r, c), nodes.len());
        nodes.push(PnpNode {
            id: nodes.len(),
            row: r,
            col: c,
            color,
            position: [POSITION_SCALE * r as f64, POSITION_SCALE * c as f64],
        });
    }
    let mut edges = Vec::new();
    for node in &nodes {
        for (dr, dc) in NEIGHBORS_8 {
            let (nr, nc) = (node.row as isize + dr, node.col as isize + dc);
            if nr < 0 || nc < 0 {
                continue;
            }
            if let Some(&v) = index.get(&(nr as usize, nc as usize)) {
                if v > node.id {
                    let adj = if dr == 0 || dc == 0 {
                        Adjacency::Direct
                    } else {
                        Adjacency::Diagonal
                    };
                    edges.push(PnpEdge {
                        u: node.id,
                        v,
                        distance: edge_distance(node.color, nodes[v].color, adj),
                    });
                }
            }
        }
    }
    edges.sort_by_key(|e| (e.u, e.v));
    PnpGraph { nodes, edges }
}

/// Per-node displacement accumulated over all edges, using the initial
/// positions for every edge direction.
pub fn displacements(graph: &PnpGraph) -> Vec<Point> {
    let mut disp = vec![[0.0, 0.0]; graph.nodes.len()];
    for edge in &graph.edges {
        let (pu, pv) = (graph.nodes[edge.u].position, graph.nodes[edge.v].position);
        let delta = [pv[0] - pu[0], pv[1] - pu[1]];
        let len = delta[0].hypot(delta[1]);
        if len == 0.0 {
            continue;
        }
        let unit = [delta[0] / len, delta[1] / len];
        let rho = repulsion(edge.distance).expect("abstract_grid emits valid distances");
        disp[edge.v][0] += rho * unit[0];
        disp[edge.v][1] += rho * unit[1];
        disp[edge.u][0] -= rho * unit[0];
        disp[edge.u][1] -= rho * unit[1];
    }
    disp
}

/// One simultaneous push-and-pull pass.
pub fn push_pull(graph: &PnpGraph) -> PnpGraph {
    let disp = displacements(graph);
    let mut out = graph.clone();
    for (node, d) in out.nodes.iter_mut().zip(disp) {
        node.position[0] += d[0];
        node.position[1] += d[1];
    }
    out
}

/// Per-pixel object ids: `0` for background, `1..=k` for objects.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct ClusterMap {
    rows: usize,
    cols: usize,
    labels: Vec<u32>,
}

impl ClusterMap {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        ClusterMap {
            rows,
            cols,
            labels: vec![0; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<u32>>) -> Result<Self, PnpError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut labels = Vec::with_capacity(rows.len() * cols);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(PnpError::Ragged {
                    row: r,
                    expected: cols,
                    found: row.len(),
                });
            }
            labels.extend_from_slice(row);
        }
        Ok(ClusterMap {
            rows: rows.len(),
            cols,
            labels,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, r: usize, c: usize) -> u32 {
        self.labels[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, label: u32) {
        self.labels[r * self.cols + c] = label;
    }

    pub fn num_clusters(&self) -> u32 {
        self.labels.iter().copied().max().unwrap_or(0)
    }

    pub fn to_rows(&self) -> Vec<Vec<u32>> {
        if self.cols == 0 {
            return vec![Vec::new(); self.rows];
        }
        self.labels.chunks(self.cols).map(<[u32]>::to_vec).collect()
    }

    /// Pixel sets of each cluster, indexed by `label - 1`.
    pub fn clusters(&self) -> Vec<Vec<Coord>> {
        let mut out = vec![Vec::new(); self.num_clusters() as usize];
        for (i, &l) in self.labels.iter().enumerate() {
            if l > 0 {
                out[l as usize - 1].push((i / self.cols, i % self.cols));
            }
        }
        out
    }
}

impl fmt::Debug for ClusterMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ClusterMap{:?}", self.to_rows())
    }
}

impl Serialize for ClusterMap {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_rows().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ClusterMap {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<u32>>::deserialize(deserializer)?;
        ClusterMap::from_rows(rows).map_err(serde::de::Error::custom)
    }
}

/// Everything the pipeline computes for one grid.
#[derive(Debug, Clone)]
pub struct Clustering {
    pub initial: PnpGraph,
    pub displaced: PnpGraph,
    /// Cluster label per node, `1..=k`, numbered by each cluster's first
    /// pixel in reading order.
    pub labels: Vec<u32>,
    pub map: ClusterMap,
}

/// Runs abstraction, the force pass and DBSCAN on `grid`.
///
/// DBSCAN noise points (possible only with `min_pts > 1`) become singleton
/// objects so that every colored pixel carries an object id.
pub fn cluster(grid: &Grid, params: &PnpParams) -> Clustering {
    let initial = abstract_grid(grid);
    let displaced = push_pull(&initial);
    let raw = dbscan(&displaced.positions(), params.eps, params.min_pts);
    let mut relabel: HashMap<usize, u32> = HashMap::new();
    let mut next = 0u32;
    let labels: Vec<u32> = raw
        .iter()
        .map(|l| {
            let mut fresh = || {
                next += 1;
                next
            };
            match l {
                Some(c) => *relabel.entry(*c).or_insert_with(fresh),
                None => fresh(),
            }
        })
        .collect();
    let mut map = ClusterMap::zeros(grid.rows(), grid.cols());
    for (node, &label) in initial.nodes.iter().zip(&labels) {
        map.set(node.row, node.col, label);
    }
    Clustering {
        initial,
        displaced,
        labels,
        map,
    }
}

pub fn cluster_map(grid: &Grid, params: &PnpParams) -> ClusterMap {
    cluster(grid, params).map
}

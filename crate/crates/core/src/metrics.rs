//! Object-detection recall, silhouette score and exact-match accuracy, plus
//! the per-category report over a labeled fixture corpus.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dbscan::{euclidean, Point};
use crate::grid::{Coord, Grid};
use crate::pnp::{cluster, ClusterMap, PnpParams};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("ground truth has no objects")]
    NoObjects,
    #[error("silhouette is undefined for fewer than two clusters")]
    SingleCluster,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("nothing to score")]
    Empty,
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize), (usize, usize)),
    #[error("invalid ground truth: {0}")]
    InvalidTruth(String),
    #[error("fixture {path}: {message}")]
    Fixture { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The object categories a fixture can belong to.
pub const CATEGORIES: [&str; 6] = [
    "Same color, Direct adjacency",
    "Same color, Diagonal adjacency",
    "Different color, Direct adjacency",
    "Different color, Diagonal adjacency",
    "Same color, Overlap",
    "Same color, With in specific range",
];

/// Hand-labeled objects of a grid: disjoint pixel sets covering every
/// colored cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectGroundTruth {
    pub grid: Grid,
    pub objects: Vec<BTreeSet<Coord>>,
}

impl ObjectGroundTruth {
    pub fn new(grid: Grid, objects: Vec<BTreeSet<Coord>>) -> Result<Self, MetricsError> {
        let mut seen = BTreeSet::new();
        for obj in &objects {
            if obj.is_empty() {
                return Err(MetricsError::InvalidTruth("empty object".into()));
            }
            for &cell in obj {
                if !grid.in_bounds(cell) {
                    return Err(MetricsError::InvalidTruth(format!("{cell:?} out of bounds")));
                }
                if grid.get(cell.0, cell.1).is_black() {
                    return Err(MetricsError::InvalidTruth(format!("{cell:?} is background")));
                }
                if !seen.insert(cell) {
                    return Err(MetricsError::InvalidTruth(format!("{cell:?} is in two objects")));
                }
            }
        }
        let colored: BTreeSet<Coord> = grid.non_black().map(|(p, _)| p).collect();
        if colored != seen {
            return Err(MetricsError::InvalidTruth(
                "objects do not cover every colored cell".into(),
            ));
        }
        Ok(ObjectGroundTruth { grid, objects })
    }

    /// Reads objects off a label matrix (`0` = background).
    pub fn from_labels(grid: Grid, labels: &ClusterMap) -> Result<Self, MetricsError> {
        if labels.shape() != grid.shape() {
            return Err(MetricsError::ShapeMismatch(labels.shape(), grid.shape()));
        }
        let mut objects: BTreeMap<u32, BTreeSet<Coord>> = BTreeMap::new();
        for ((r, c), _) in grid.iter() {
            let l = labels.get(r, c);
            if l > 0 {
                objects.entry(l).or_default().insert((r, c));
            }
        }
        Self::new(grid, objects.into_values().collect())
    }
}

/// Number of truth objects reproduced exactly by some predicted cluster, and
/// the number of truth objects.
pub fn recall_counts(predicted: &ClusterMap, truth: &ObjectGroundTruth) -> Result<(usize, usize), MetricsError> {
    if predicted.shape() != truth.grid.shape() {
        return Err(MetricsError::ShapeMismatch(predicted.shape(), truth.grid.shape()));
    }
    if truth.objects.is_empty() {
        return Err(MetricsError::NoObjects);
    }
    let clusters: BTreeSet<BTreeSet<Coord>> = predicted
        .clusters()
        .into_iter()
        .map(|c| c.into_iter().collect())
        .collect();
    let correct = truth.objects.iter().filter(|o| clusters.contains(*o)).count();
    Ok((correct, truth.objects.len()))
}

pub fn recall(predicted: &ClusterMap, truth: &ObjectGroundTruth) -> Result<f64, MetricsError> {
    let (correct, total) = recall_counts(predicted, truth)?;
    Ok(correct as f64 / total as f64)
}

/// Mean silhouette coefficient. Points in singleton clusters score 0.
pub fn silhouette<L: Copy + Eq + std::hash::Hash>(points: &[Point], labels: &[L]) -> Result<f64, MetricsError> {
    if points.len() != labels.len() {
        return Err(MetricsError::LengthMismatch(points.len(), labels.len()));
    }
    let mut members: HashMap<L, Vec<usize>> = HashMap::new();
    for (i, &l) in labels.iter().enumerate() {
        members.entry(l).or_default().push(i);
    }
    if members.len() < 2 {
        return Err(MetricsError::SingleCluster);
    }
    let mean_dist = |i: usize, group: &[usize]| -> f64 {
        let sum: f64 = group
            .iter()
            .filter(|&&j| j != i)
            .map(|&j| euclidean(points[i], points[j]))
            .sum();
        let n = group.iter().filter(|&&j| j != i).count();
        sum / n as f64
    };
    let mut total = 0.0;
    for (i, l) in labels.iter().enumerate() {
        let own = &members[l];
        if own.len() == 1 {
            continue;
        }
        let a = mean_dist(i, own);
        let b = members
            .iter()
            .filter(|(k, _)| *k != l)
            .map(|(_, g)| mean_dist(i, g))
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / points.len() as f64)
}

/// Fraction of positions where the predicted grid equals the answer exactly.
pub fn exact_match_accuracy(predictions: &[Grid], answers: &[Grid]) -> Result<f64, MetricsError> {
    if predictions.len() != answers.len() {
        return Err(MetricsError::LengthMismatch(predictions.len(), answers.len()));
    }
    if predictions.is_empty() {
        return Err(MetricsError::Empty);
    }
    let hits = predictions.iter().zip(answers).filter(|(p, a)| p == a).count();
    Ok(hits as f64 / predictions.len() as f64)
}

/// A hand-labeled grid from the clustering corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Fixture {
    pub name: String,
    pub category: String,
    pub grid: Grid,
    /// Label matrix of the true objects.
    pub objects: ClusterMap,
}

impl Fixture {
    pub fn truth(&self) -> Result<ObjectGroundTruth, MetricsError> {
        ObjectGroundTruth::from_labels(self.grid.clone(), &self.objects)
    }
}

/// Loads every `*.json` fixture in `dir`, sorted by file name.
pub fn load_fixtures(dir: &Path) -> Result<Vec<Fixture>, MetricsError> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    let mut out = Vec::with_capacity(paths.len());
    for path in paths {
        let fail = |message: String| MetricsError::Fixture {
            path: path.display().to_string(),
            message,
        };
        let bytes = std::fs::read(&path)?;
        let fixture: Fixture = serde_json::from_slice(&bytes).map_err(|e| fail(e.to_string()))?;
        if !CATEGORIES.contains(&fixture.category.as_str()) {
            return Err(fail(format!("unknown category {:?}", fixture.category)));
        }
        fixture.truth().map_err(|e| fail(e.to_string()))?;
        out.push(fixture);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRow {
    pub category: String,
    pub grids: usize,
    pub objects: usize,
    pub correct: usize,
    pub recall: f64,
    /// Mean silhouette over grids where it is defined.
    pub silhouette: Option<f64>,
    pub silhouette_grids: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub categories: Vec<CategoryRow>,
    pub overall: CategoryRow,
}

#[derive(Default)]
struct Tally {
    grids: usize,
    objects: usize,
    correct: usize,
    silhouettes: Vec<f64>,
}

impl Tally {
    fn row(&self, category: &str) -> CategoryRow {
        CategoryRow {
            category: category.to_string(),
            grids: self.grids,
            objects: self.objects,
            correct: self.correct,
            recall: if self.objects == 0 {
                0.0
            } else {
                self.correct as f64 / self.objects as f64
            },
            silhouette: (!self.silhouettes.is_empty())
                .then(|| self.silhouettes.iter().sum::<f64>() / self.silhouettes.len() as f64),
            silhouette_grids: self.silhouettes.len(),
        }
    }
}

/// Clusters every fixture and aggregates recall (objects as the unit) and
/// silhouette of the displaced node layout per category.
pub fn evaluate_fixtures(fixtures: &[Fixture], params: &PnpParams) -> Result<MetricReport, MetricsError> {
    let mut tallies: BTreeMap<&str, Tally> = CATEGORIES.iter().map(|c| (*c, Tally::default())).collect();
    let mut overall = Tally::default();
    for fixture in fixtures {
        let truth = fixture.truth()?;
        let result = cluster(&fixture.grid, params);
        let (correct, total) = recall_counts(&result.map, &truth)?;
        let sil = silhouette(&result.displaced.positions(), &result.labels).ok();
        let tally = tallies
            .get_mut(fixture.category.as_str())
            .ok_or_else(|| MetricsError::InvalidTruth(format!("unknown category {:?}", fixture.category)))?;
        for t in [tally, &mut overall] {
            t.grids += 1;
            t.objects += total;
            t.correct += correct;
            t.silhouettes.extend(sil);
        }
    }
    Ok(MetricReport {
        categories: CATEGORIES.iter().map(|c| tallies[c].row(c)).collect(),
        overall: overall.row("Overall"),
    })
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = CATEGORIES.iter().map(|c| c.len()).max().unwrap_or(8);
        let line = "-".repeat(width + 36);
        writeln!(
            f,
            "{:<width$}  {:>6}  {:>10}  {:>7}  {:>5}",
            "Category", "recall", "silhouette", "objects", "grids"
        )?;
        writeln!(f, "{line}")?;
        let row = |f: &mut fmt::Formatter<'_>, r: &CategoryRow| {
            let sil = r.silhouette.map_or_else(|| "n/a".to_string(), |s| format!("{s:.2}"));
            writeln!(
                f,
                "{:<width$}  {:>6.2}  {:>10}  {:>7}  {:>5}",
                r.category, r.recall, sil, r.objects, r.grids
            )
        };
        for r in &self.categories {
            row(f, r)?;
        }
        writeln!(f, "{line}")?;
        row(f, &self.overall)
    }
}

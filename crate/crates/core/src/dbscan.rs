//! Density-based clustering of 2-D points under the Euclidean metric.

use std::collections::VecDeque;

pub type Point = [f64; 2];

pub fn euclidean(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn region(points: &[Point], i: usize, eps: f64) -> Vec<usize> {
    points
        .iter()
        .enumerate()
        .filter(|(_, &q)| euclidean(points[i], q) <= eps)
        .map(|(j, _)| j)
        .collect()
}

/// Returns one label per point; `None` marks noise.
///
/// A point is core when at least `min_pts` points (itself included) lie
/// within `eps`. Clusters are numbered from 0 in the order their first core
/// point appears in `points`.
pub fn dbscan(points: &[Point], eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    let n = points.len();
    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut visited = vec![false; n];
    let mut next = 0;
    for i in 0..n {
        if visited[i] {
            continue;
        }
        visited[i] = true;
        let neighbors = region(points, i, eps);
        if neighbors.len() < min_pts {
            continue;
        }
        let cluster = next;
        next += 1;
        labels[i] = Some(cluster);
        let mut queue: VecDeque<usize> = neighbors.into();
        while let Some(j) = queue.pop_front() {
            if labels[j].is_none() {
                labels[j] = Some(cluster);
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            let reach = region(points, j, eps);
            if reach.len() >= min_pts {
                queue.extend(reach.into_iter().filter(|&k| !visited[k] || labels[k].is_none()));
            }
        }
    }
    labels
}

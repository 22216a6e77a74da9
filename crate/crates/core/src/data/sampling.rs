//! Farthest point sampling and k-nearest-neighbor queries.
//!
//! Distances are compared as squared Euclidean values accumulated in f64;
//! every tie resolves to the smallest point index.

use super::pointcloud::Point;
use crate::error::{Error, Result};

#[inline]
pub fn squared_distance(p: &Point, c: [f64; 3]) -> f64 {
    let dx = p[0] as f64 - c[0];
    let dy = p[1] as f64 - c[1];
    let dz = p[2] as f64 - c[2];
    dx * dx + dy * dy + dz * dz
}

#[inline]
pub fn to_f64(p: &Point) -> [f64; 3] {
    [p[0] as f64, p[1] as f64, p[2] as f64]
}

/// Greedy max-min sampling of `count` indices starting from `start`.
pub fn farthest_point_sampling(points: &[Point], count: usize, start: usize) -> Result<Vec<usize>> {
    let n = points.len();
    if count == 0 || count > n {
        return Err(Error::OutOfRange {
            what: "sample count",
            value: count,
            min: 1,
            max: n,
        });
    }
    if start >= n {
        return Err(Error::OutOfRange {
            what: "start index",
            value: start,
            min: 0,
            max: n.saturating_sub(1),
        });
    }
    let mut selected = Vec::with_capacity(count);
    let mut taken = vec![false; n];
    let mut min_dist = vec![f64::INFINITY; n];
    let mut current = start;
    for _ in 0..count {
        selected.push(current);
        taken[current] = true;
        let c = to_f64(&points[current]);
        let mut best = usize::MAX;
        let mut best_d = f64::NEG_INFINITY;
        for (i, p) in points.iter().enumerate() {
            if taken[i] {
                continue;
            }
            let d = squared_distance(p, c);
            if d < min_dist[i] {
                min_dist[i] = d;
            }
            if min_dist[i] > best_d {
                best_d = min_dist[i];
                best = i;
            }
        }
        current = best;
    }
    Ok(selected)
}

/// Indices of the `m` points nearest to `center`, ordered by (distance, index).
pub fn knn_query(points: &[Point], center: [f64; 3], m: usize) -> Result<Vec<usize>> {
    let n = points.len();
    if m == 0 || m > n {
        return Err(Error::OutOfRange {
            what: "neighbor count",
            value: m,
            min: 1,
            max: n,
        });
    }
    let mut keyed: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| (squared_distance(p, center), i))
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if m < n {
        keyed.select_nth_unstable_by(m - 1, cmp);
        keyed.truncate(m);
    }
    keyed.sort_unstable_by(cmp);
    Ok(keyed.into_iter().map(|(_, i)| i).collect())
}

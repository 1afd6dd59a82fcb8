//! k-means over the archive front and per-cluster polylines.

use super::archive::ObjectivePoint;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    /// Indices into the analysed point list, sorted by `f1`.
    pub members: Vec<usize>,
    /// Polyline vertices `(f1, f2)` in the same order.
    pub polyline: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteredFront {
    pub clusters: Vec<Cluster>,
}

pub const KMEANS_MAX_ITERS: usize = 100;

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Min-max scaling per objective; a constant objective maps to 0.
fn normalize(points: &[ObjectivePoint]) -> Vec<[f64; 2]> {
    let get = |p: &ObjectivePoint, k: usize| if k == 0 { p.f1 } else { p.f2 };
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in points {
        for k in 0..2 {
            lo[k] = lo[k].min(get(p, k));
            hi[k] = hi[k].max(get(p, k));
        }
    }
    points
        .iter()
        .map(|p| {
            let mut v = [0.0; 2];
            for k in 0..2 {
                v[k] = if hi[k] > lo[k] { (get(p, k) - lo[k]) / (hi[k] - lo[k]) } else { 0.0 };
            }
            v
        })
        .collect()
}

/// Cluster label per point. Seeding: the smallest-`f1` point, then
/// repeatedly the point farthest from all chosen centres. Labels of empty
/// clusters are dropped and the rest renumbered in order of first use.
pub fn kmeans(points: &[ObjectivePoint], k: usize) -> Vec<usize> {
    let n = points.len();
    if n == 0 {
        return Vec::new();
    }
    let k = k.clamp(1, n);
    let x = normalize(points);
    let first = (0..n).min_by(|&a, &b| points[a].f1.total_cmp(&points[b].f1).then(a.cmp(&b))).unwrap();
    let mut centres = vec![x[first]];
    while centres.len() < k {
        let far = (0..n)
            .map(|i| (i, centres.iter().map(|c| dist2(x[i], *c)).fold(f64::INFINITY, f64::min)))
            .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
        centres.push(x[far.0]);
    }
    let assign = |centres: &[[f64; 2]]| -> Vec<usize> {
        x.iter()
            .map(|p| {
                let mut best = (0, f64::INFINITY);
                for (j, c) in centres.iter().enumerate() {
                    let d = dist2(*p, *c);
                    if d < best.1 {
                        best = (j, d);
                    }
                }
                best.0
            })
            .collect()
    };
    let mut labels = assign(&centres);
    for _ in 0..KMEANS_MAX_ITERS {
        for (j, c) in centres.iter_mut().enumerate() {
            let mem: Vec<&[f64; 2]> = x.iter().zip(&labels).filter(|(_, l)| **l == j).map(|(p, _)| p).collect();
            if !mem.is_empty() {
                let m = mem.len() as f64;
                *c = [mem.iter().map(|p| p[0]).sum::<f64>() / m, mem.iter().map(|p| p[1]).sum::<f64>() / m];
            }
        }
        let next = assign(&centres);
        if next == labels {
            break;
        }
        labels = next;
    }
    let mut remap: Vec<Option<usize>> = vec![None; k];
    let mut used = 0;
    labels
        .into_iter()
        .map(|l| {
            *remap[l].get_or_insert_with(|| {
                used += 1;
                used - 1
            })
        })
        .collect()
}

/// Clusters the points and joins each cluster's members, sorted by `f1`,
/// into a piecewise-linear curve.
pub fn pareto_analysis(points: &[ObjectivePoint], k: usize) -> ClusteredFront {
    let labels = kmeans(points, k);
    let n_clusters = labels.iter().max().map_or(0, |m| m + 1);
    let clusters = (0..n_clusters)
        .map(|c| {
            let mut members: Vec<usize> = (0..points.len()).filter(|&i| labels[i] == c).collect();
            members.sort_by(|&a, &b| points[a].f1.total_cmp(&points[b].f1).then(a.cmp(&b)));
            let polyline = members.iter().map(|&i| [points[i].f1, points[i].f2]).collect();
            Cluster { members, polyline }
        })
        .collect();
    ClusteredFront { clusters }
}

/// Linear interpolation of `f2` at `f1` along a polyline; `None` outside
/// its `f1` span.
pub fn interpolate(polyline: &[[f64; 2]], f1: f64) -> Option<f64> {
    if polyline.len() == 1 {
        return (polyline[0][0] == f1).then_some(polyline[0][1]);
    }
    polyline.windows(2).find(|w| w[0][0] <= f1 && f1 <= w[1][0]).map(|w| {
        let span = w[1][0] - w[0][0];
        if span == 0.0 {
            w[0][1]
        } else {
            w[0][1] + (f1 - w[0][0]) / span * (w[1][1] - w[0][1])
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;

    fn front(n: usize) -> Vec<ObjectivePoint> {
        (0..n).map(|i| ObjectivePoint::new(i as f64, (n - i) as f64 * 2.0)).collect()
    }

    #[test]
    fn single_cluster_is_one_polyline() {
        let pts = vec![ObjectivePoint::new(3.0, 1.0), ObjectivePoint::new(1.0, 3.0), ObjectivePoint::new(2.0, 2.0)];
        let f = pareto_analysis(&pts, 1);
        assert_eq!(f.clusters.len(), 1);
        assert_eq!(f.clusters[0].members, vec![1, 2, 0]);
        assert_eq!(f.clusters[0].polyline, vec![[1.0, 3.0], [2.0, 2.0], [3.0, 1.0]]);
    }

    #[test]
    fn k_equal_to_size_gives_singletons() {
        let pts = front(6);
        let f = pareto_analysis(&pts, 6);
        assert_eq!(f.clusters.len(), 6);
        assert!(f.clusters.iter().all(|c| c.members.len() == 1 && c.polyline.len() == 1));
        // k beyond the size is clamped
        assert_eq!(pareto_analysis(&pts, 50).clusters.len(), 6);
    }

    #[test]
    fn partition_covers_every_point_once() {
        let pts = front(11);
        for k in 1..6 {
            let f = pareto_analysis(&pts, k);
            assert!(f.clusters.len() <= k);
            let mut all: Vec<usize> = f.clusters.iter().flat_map(|c| c.members.clone()).collect();
            all.sort_unstable();
            assert_eq!(all, (0..11).collect::<Vec<_>>());
        }
    }

    #[test]
    fn separated_groups_follow_the_bisector() {
        let mut rng = seed::rng(5);
        for _ in 0..20 {
            let mut pts = Vec::new();
            for _ in 0..rng.random_range(2..8) {
                pts.push(ObjectivePoint::new(rng.random_range(0.0..1.0), rng.random_range(9.0..10.0)));
            }
            for _ in 0..rng.random_range(2..8) {
                pts.push(ObjectivePoint::new(rng.random_range(9.0..10.0), rng.random_range(0.0..1.0)));
            }
            let labels = kmeans(&pts, 2);
            // the two candidate groupings: by the side of the bisector f1 = f2
            let side: Vec<bool> = pts.iter().map(|p| p.f1 < p.f2).collect();
            for i in 0..pts.len() {
                for j in 0..pts.len() {
                    assert_eq!(labels[i] == labels[j], side[i] == side[j]);
                }
            }
        }
    }

    #[test]
    fn interpolation() {
        let line = [[0.0, 4.0], [2.0, 2.0], [4.0, 1.0]];
        assert_eq!(interpolate(&line, 1.0), Some(3.0));
        assert_eq!(interpolate(&line, 3.0), Some(1.5));
        assert_eq!(interpolate(&line, 5.0), None);
    }
}

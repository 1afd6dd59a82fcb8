//! Weight initialization, task selection and performance-buffer pruning.

use super::archive::ObjectivePoint;
use super::EvoError;
use crate::mopg::{TaskTuple, WeightVector};

/// A trained policy with its evaluated objectives.
#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub task: TaskTuple,
    pub point: ObjectivePoint,
    pub generation: usize,
    pub task_index: usize,
}

/// `n` evenly spaced weights `(i / (n - 1), 1 - i / (n - 1))`.
pub fn init_weights(n: usize) -> Result<Vec<WeightVector>, EvoError> {
    if n < 2 {
        return Err(EvoError::InvalidConfig(format!("need at least 2 weights, got {n}")));
    }
    (0..n)
        .map(|i| {
            let a = i as f64 / (n - 1) as f64;
            Ok(WeightVector::new([a, 1.0 - a])?)
        })
        .collect()
}

/// Scaled maximization coordinates used for selection.
pub fn scaled(point: &ObjectivePoint, scale: [f64; 2]) -> [f64; 2] {
    let m = point.max_coords();
    [m[0] / scale[0], m[1] / scale[1]]
}

/// Index of the member maximizing `w . F` (lowest index on ties).
pub fn best_for_weight(points: &[[f64; 2]], w: &WeightVector) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in points.iter().enumerate() {
        let v = w.dot(*p);
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// One new task per weight: the best member under that weight, copied with
/// fresh optimizer state.
pub fn task_update(weights: &[WeightVector], population: &[Member], scale: [f64; 2]) -> Result<Vec<TaskTuple>, EvoError> {
    if population.is_empty() {
        return Err(EvoError::EmptyPopulation);
    }
    let pts: Vec<[f64; 2]> = population.iter().map(|m| scaled(&m.point, scale)).collect();
    Ok(weights.iter().map(|w| population[best_for_weight(&pts, w).unwrap()].task.with_weight(*w)).collect())
}

/// Reference point strictly dominated by every given point: the worst value
/// per coordinate minus 10% of the range (or of the magnitude when the
/// range is zero). Maximization coordinates in, maximization coordinates out.
pub fn auto_reference(points: &[[f64; 2]]) -> [f64; 2] {
    let mut r = [0.0; 2];
    for k in 0..2 {
        let lo = points.iter().map(|p| p[k]).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(|p| p[k]).fold(f64::NEG_INFINITY, f64::max);
        let margin = if hi > lo { 0.1 * (hi - lo) } else { 0.1 * lo.abs().max(1.0) };
        r[k] = lo - margin;
    }
    r
}

fn cosine(a: [f64; 2], b: [f64; 2]) -> f64 {
    let na = (a[0] * a[0] + a[1] * a[1]).sqrt();
    let nb = (b[0] * b[0] + b[1] * b[1]).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (a[0] * b[0] + a[1] * b[1]) / (na * nb)
}

/// Buffer index of each point: the weight with the largest cosine to the
/// point shifted by `z_ref` (lowest index on ties).
pub fn assign_buffers(points: &[[f64; 2]], weights: &[WeightVector], z_ref: [f64; 2]) -> Vec<usize> {
    points
        .iter()
        .map(|p| {
            let v = [p[0] - z_ref[0], p[1] - z_ref[1]];
            let mut best = (0, f64::NEG_INFINITY);
            for (j, w) in weights.iter().enumerate() {
                let c = cosine(v, w.as_array());
                if c > best.1 {
                    best = (j, c);
                }
            }
            best.0
        })
        .collect()
}

/// Keeps, per weight buffer, the `b_size` members farthest from `z_ref`.
/// `points` are the members' scaled maximization coordinates. Survivors keep
/// their input order.
pub fn buffer_prune<T: Clone>(
    members: &[T],
    points: &[[f64; 2]],
    weights: &[WeightVector],
    z_ref: [f64; 2],
    b_size: usize,
) -> Vec<T> {
    let buf = assign_buffers(points, weights, z_ref);
    let dist: Vec<f64> = points.iter().map(|p| ((p[0] - z_ref[0]).powi(2) + (p[1] - z_ref[1]).powi(2)).sqrt()).collect();
    let mut keep = vec![false; members.len()];
    for j in 0..weights.len() {
        let mut idx: Vec<usize> = (0..members.len()).filter(|&i| buf[i] == j).collect();
        idx.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]).then(a.cmp(&b)));
        for &i in idx.iter().take(b_size) {
            keep[i] = true;
        }
    }
    members.iter().zip(keep).filter(|(_, k)| *k).map(|(m, _)| m.clone()).collect()
}

//! Dominance, the external Pareto archive and front metrics.

use super::EvoError;
use crate::mopg::TaskTuple;
use crate::mopg::WeightVector;
use serde::{Deserialize, Serialize};

/// Episode objectives `(f1, f2)`, both minimized: total delay in seconds and
/// total UAV energy in joules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectivePoint {
    pub f1: f64,
    pub f2: f64,
}

impl ObjectivePoint {
    pub fn new(f1: f64, f2: f64) -> Self {
        Self { f1, f2 }
    }

    /// Maximization coordinates `(-f1, -f2)`.
    pub fn max_coords(&self) -> [f64; 2] {
        [-self.f1, -self.f2]
    }

    pub fn from_max_coords(v: [f64; 2]) -> Self {
        Self { f1: -v[0], f2: -v[1] }
    }
}

/// True iff `p` is at least as good as `q` everywhere and strictly better
/// somewhere.
pub fn dominates(p: &ObjectivePoint, q: &ObjectivePoint) -> bool {
    let (a, b) = (p.max_coords(), q.max_coords());
    a[0] >= b[0] && a[1] >= b[1] && (a[0] > b[0] || a[1] > b[1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveEntry {
    pub point: ObjectivePoint,
    pub weight: WeightVector,
    /// Generation (0 = warm-up) and task slot that produced the policy.
    pub generation: usize,
    pub task_index: usize,
    pub task: TaskTuple,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExternalParetoArchive {
    entries: Vec<ArchiveEntry>,
}

impl ExternalParetoArchive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[ArchiveEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn points(&self) -> Vec<ObjectivePoint> {
        self.entries.iter().map(|e| e.point).collect()
    }

    /// Keeps exactly the non-dominated set of the archive and the
    /// candidates. An identical point already present wins over a newcomer.
    pub fn update<I: IntoIterator<Item = ArchiveEntry>>(&mut self, candidates: I) {
        for c in candidates {
            if self.entries.iter().any(|e| e.point == c.point || dominates(&e.point, &c.point)) {
                continue;
            }
            self.entries.retain(|e| !dominates(&c.point, &e.point));
            self.entries.push(c);
        }
    }

    pub fn is_mutually_nondominated(&self) -> bool {
        let p = self.points();
        p.iter().enumerate().all(|(i, a)| p.iter().enumerate().all(|(j, b)| i == j || !dominates(a, b)))
    }

    /// Keeps the `keep` entries with the largest crowding distance once the
    /// archive exceeds `max`.
    pub fn cap(&mut self, max: usize, keep: usize) {
        if max == 0 || self.entries.len() <= max {
            return;
        }
        let cd = crowding_distance(&self.points());
        let mut order: Vec<usize> = (0..self.entries.len()).collect();
        order.sort_by(|&a, &b| cd[b].total_cmp(&cd[a]).then(a.cmp(&b)));
        let mut keep_idx: Vec<usize> = order.into_iter().take(keep).collect();
        keep_idx.sort_unstable();
        let old = std::mem::take(&mut self.entries);
        self.entries = old.into_iter().enumerate().filter(|(i, _)| keep_idx.binary_search(i).is_ok()).map(|(_, e)| e).collect();
    }
}

/// Two-objective crowding distance; extremes get infinity.
pub fn crowding_distance(points: &[ObjectivePoint]) -> Vec<f64> {
    let n = points.len();
    let mut cd = vec![0.0; n];
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    for k in 0..2 {
        let key = |i: usize| if k == 0 { points[i].f1 } else { points[i].f2 };
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| key(a).total_cmp(&key(b)).then(a.cmp(&b)));
        let span = key(idx[n - 1]) - key(idx[0]);
        cd[idx[0]] = f64::INFINITY;
        cd[idx[n - 1]] = f64::INFINITY;
        if span > 0.0 {
            for w in 1..n - 1 {
                cd[idx[w]] += (key(idx[w + 1]) - key(idx[w - 1])) / span;
            }
        }
    }
    cd
}

/// Area dominated by `points` and bounded by `reference`, both in
/// maximization coordinates. Every point must dominate the reference.
pub fn hypervolume(points: &[ObjectivePoint], reference: &ObjectivePoint) -> Result<f64, EvoError> {
    if let Some(p) = points.iter().find(|p| !dominates(p, reference)) {
        return Err(EvoError::ReferenceNotDominated { point: *p, reference: *reference });
    }
    Ok(sweep(points, reference))
}

/// As [`hypervolume`], silently skipping points that do not dominate the
/// reference.
pub fn hypervolume_clipped(points: &[ObjectivePoint], reference: &ObjectivePoint) -> f64 {
    let kept: Vec<ObjectivePoint> = points.iter().copied().filter(|p| dominates(p, reference)).collect();
    sweep(&kept, reference)
}

fn sweep(points: &[ObjectivePoint], reference: &ObjectivePoint) -> f64 {
    let r = reference.max_coords();
    let mut pts: Vec<[f64; 2]> = points.iter().map(|p| p.max_coords()).collect();
    pts.sort_by(|a, b| b[0].total_cmp(&a[0]).then(b[1].total_cmp(&a[1])));
    let mut area = 0.0;
    let mut best_y = r[1];
    for p in pts {
        if p[1] > best_y {
            area += (p[0] - r[0]) * (p[1] - best_y);
            best_y = p[1];
        }
    }
    area
}

/// Mean squared gap between consecutive sorted values, summed over both
/// objectives and divided by `|P| - 1`. `None` below two points.
pub fn sparsity(points: &[ObjectivePoint]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let mut total = 0.0;
    for k in 0..2 {
        let mut v: Vec<f64> = points.iter().map(|p| if k == 0 { p.f1 } else { p.f2 }).collect();
        v.sort_by(f64::total_cmp);
        total += v.windows(2).map(|w| (w[1] - w[0]) * (w[1] - w[0])).sum::<f64>();
    }
    Some(total / (points.len() - 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use proptest::prelude::*;
    use rand::Rng;

    /// Build from maximization coordinates for readability.
    fn mp(a: f64, b: f64) -> ObjectivePoint {
        ObjectivePoint::from_max_coords([a, b])
    }

    fn entry(p: ObjectivePoint, tag: usize) -> ArchiveEntry {
        ArchiveEntry {
            point: p,
            weight: WeightVector::new([0.5, 0.5]).unwrap(),
            generation: 0,
            task_index: tag,
            task: crate::mopg::ppo::tests::task([0.5, 0.5], 0),
        }
    }

    #[test]
    fn dominance_examples() {
        assert!(dominates(&mp(-1.0, -1.0), &mp(-2.0, -2.0)));
        assert!(!dominates(&mp(-1.0, -3.0), &mp(-2.0, -2.0)));
        assert!(!dominates(&mp(-1.0, -1.0), &mp(-1.0, -1.0)));
        assert!(dominates(&mp(-1.0, -2.0), &mp(-1.0, -3.0)));
    }

    #[test]
    fn archive_examples() {
        let mut a = ExternalParetoArchive::new();
        a.update([entry(mp(-2.0, -2.0), 0)]);
        a.update([entry(mp(-1.0, -1.0), 1)]);
        assert_eq!(a.points(), vec![mp(-1.0, -1.0)]);

        let mut a = ExternalParetoArchive::new();
        a.update([entry(mp(-1.0, -3.0), 0), entry(mp(-3.0, -1.0), 1)]);
        assert_eq!(a.len(), 2);
        let before = a.clone();
        a.update([entry(mp(-4.0, -4.0), 2)]);
        assert_eq!(a, before);
        // identical point: the earlier entry stays
        a.update([entry(mp(-1.0, -3.0), 9)]);
        assert_eq!(a.entries()[0].task_index, 0);
        assert_eq!(a.len(), 2);
    }

    #[test]
    fn hypervolume_examples() {
        let r = mp(-3.0, -3.0);
        assert_eq!(hypervolume(&[mp(-1.0, -2.0), mp(-2.0, -1.0)], &r).unwrap(), 3.0);
        assert_eq!(hypervolume(&[mp(-1.0, -1.0)], &mp(-2.0, -2.0)).unwrap(), 1.0);
        let base = hypervolume(&[mp(-1.0, -2.0), mp(-2.0, -1.0)], &r).unwrap();
        let with = hypervolume(&[mp(-1.0, -2.0), mp(-2.0, -1.0), mp(-2.5, -2.5)], &r).unwrap();
        assert_eq!(base, with);
        assert!(hypervolume(&[mp(-4.0, -1.0)], &r).is_err());
        assert_eq!(hypervolume_clipped(&[mp(-4.0, -1.0), mp(-1.0, -1.0)], &r), 4.0);
        assert_eq!(hypervolume(&[], &r).unwrap(), 0.0);
    }

    /// Monte-Carlo estimate of the dominated area inside the bounding box.
    pub(crate) fn monte_carlo_hv(points: &[ObjectivePoint], r: &ObjectivePoint, samples: usize, seed_: u64) -> f64 {
        let rc = r.max_coords();
        let hi = [
            points.iter().map(|p| p.max_coords()[0]).fold(f64::MIN, f64::max),
            points.iter().map(|p| p.max_coords()[1]).fold(f64::MIN, f64::max),
        ];
        let mut rng = seed::rng(seed_);
        let mut hit = 0usize;
        for _ in 0..samples {
            let x = rng.random_range(rc[0]..hi[0]);
            let y = rng.random_range(rc[1]..hi[1]);
            if points.iter().any(|p| {
                let c = p.max_coords();
                c[0] >= x && c[1] >= y
            }) {
                hit += 1;
            }
        }
        hit as f64 / samples as f64 * (hi[0] - rc[0]) * (hi[1] - rc[1])
    }

    #[test]
    fn hypervolume_agrees_with_monte_carlo() {
        let mut rng = seed::rng(77);
        for k in 0..3 {
            let n = rng.random_range(1..=20);
            let pts: Vec<ObjectivePoint> =
                (0..n).map(|_| mp(rng.random_range(-10.0..-1.0), rng.random_range(-10.0..-1.0))).collect();
            let r = mp(-11.0, -11.0);
            let exact = hypervolume(&pts, &r).unwrap();
            let mc = monte_carlo_hv(&pts, &r, 200_000, k);
            assert!((exact - mc).abs() / exact < 0.02, "{exact} vs {mc}");
        }
    }

    #[test]
    fn sparsity_examples() {
        let p = |a: f64, b: f64| ObjectivePoint::new(a, b);
        assert_eq!(sparsity(&[p(0.0, 1.0), p(1.0, 0.0)]), Some(2.0));
        assert_eq!(sparsity(&[p(0.0, 2.0), p(1.0, 1.0), p(2.0, 0.0)]), Some(2.0));
        assert_eq!(sparsity(&[p(0.0, 1.0)]), None);
        // a duplicate adds a zero gap but enlarges |P|
        assert_eq!(sparsity(&[p(0.0, 1.0), p(1.0, 0.0), p(1.0, 0.0)]), Some(1.0));
    }

    #[test]
    fn crowding_cap_keeps_extremes() {
        let mut a = ExternalParetoArchive::new();
        let pts: Vec<_> = (0..6).map(|i| ObjectivePoint::new(i as f64, 5.0 - i as f64)).collect();
        a.update(pts.iter().enumerate().map(|(i, p)| entry(*p, i)));
        a.cap(4, 2);
        let kept: Vec<_> = a.entries().iter().map(|e| e.task_index).collect();
        assert_eq!(kept, vec![0, 5]);
    }

    proptest! {
        #[test]
        fn archive_stays_nondominated(pts in prop::collection::vec((0.0f64..10.0, 0.0f64..10.0), 1..40)) {
            let mut a = ExternalParetoArchive::new();
            let mut hv_prev = 0.0;
            let r = ObjectivePoint::new(11.0, 11.0);
            for (i, (x, y)) in pts.iter().enumerate() {
                let p = ObjectivePoint::new(x.round(), y.round());
                a.update([entry(p, i)]);
                prop_assert!(a.is_mutually_nondominated());
                let hv = hypervolume(&a.points(), &r).unwrap();
                prop_assert!(hv >= hv_prev);
                hv_prev = hv;
            }
            // every input is dominated by or equal to some archive point
            for (x, y) in &pts {
                let p = ObjectivePoint::new(x.round(), y.round());
                prop_assert!(a.points().iter().any(|q| *q == p || dominates(q, &p)));
            }
        }
    }
}

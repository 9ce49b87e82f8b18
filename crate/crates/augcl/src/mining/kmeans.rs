//! Two-cluster k-means: k-means++ seeding, Lloyd iterations, then
//! single-point reassignment polish, best of several restarts.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::numerics::Tensor;
use crate::seed::{derive, tag};

use super::{squared_distance, MiningError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    pub restarts: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl KMeansConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            restarts: 3,
            max_iterations: 50,
            tolerance: 1e-6,
            seed,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.restarts == 0 || self.max_iterations == 0 {
            return Err(MiningError::InvalidConfig(
                "restarts and max_iterations must be at least 1".into(),
            ));
        }
        if self.tolerance < 0.0 {
            return Err(MiningError::InvalidConfig("negative tolerance".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans2 {
    /// Cluster index (0 or 1) per point.
    pub assignments: Vec<usize>,
    /// 2 x D centroid matrix.
    pub centroids: Tensor,
    pub sse: f64,
    /// All points identical: the split is arbitrary and downstream consumers
    /// should not read structure into it.
    pub degenerate: bool,
}

/// Best-of-restarts 2-means. Ties in nearest-centroid go to the lower index;
/// an emptied cluster is repaired by moving the point farthest from its own
/// centroid.
pub fn kmeans2(points: &Tensor, cfg: &KMeansConfig) -> Result<KMeans2> {
    cfg.validate()?;
    let m = points.shape()[0];
    let d = points.last_dim();
    if m == 0 {
        return Err(MiningError::EmptyPoints);
    }

    let identical = (1..m).all(|i| points.row(i) == points.row(0));
    if m == 1 || identical {
        let mut centroids = Vec::with_capacity(2 * d);
        centroids.extend_from_slice(points.row(0));
        centroids.extend_from_slice(points.row(0));
        return Ok(KMeans2 {
            assignments: vec![0; m],
            centroids: Tensor::new(vec![2, d], centroids).expect("sized by construction"),
            sse: 0.0,
            degenerate: true,
        });
    }

    let mut best: Option<KMeans2> = None;
    for r in 0..cfg.restarts {
        // A two-cluster optimum is always a hyperplane cut, so the first
        // restart splits along the principal axis — a strong deterministic
        // start. Later restarts use k-means++ sampling for diversity.
        let init = if r == 0 {
            principal_split(points)
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(derive(cfg.seed, &[tag("kmeans"), r as u64]));
            plusplus_seed(points, &mut rng)
        };
        let candidate = lloyd(points, init, cfg.max_iterations, cfg.tolerance);
        if best.as_ref().map_or(true, |b| candidate.sse < b.sse) {
            best = Some(candidate);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// k-means++ seeding: one uniform point, then a second drawn with
/// probability proportional to squared distance from the first.
fn plusplus_seed(points: &Tensor, rng: &mut ChaCha8Rng) -> [Vec<f64>; 2] {
    let m = points.shape()[0];
    let first = rng.gen_range(0..m);
    let d2: Vec<f64> = (0..m)
        .map(|i| squared_distance(points.row(i), points.row(first)))
        .collect();
    let far = WeightedIndex::new(&d2)
        .expect("identical-point inputs are handled before seeding")
        .sample(rng);
    [points.row(first).to_vec(), points.row(far).to_vec()]
}

/// Split at the centroid along the leading principal direction and return
/// the two side means. Power iteration on the centered second moment,
/// started from the most distant point so the direction is deterministic.
fn principal_split(points: &Tensor) -> [Vec<f64>; 2] {
    let m = points.shape()[0];
    let d = points.last_dim();
    let mut mean = vec![0.0; d];
    for i in 0..m {
        for (s, &x) in mean.iter_mut().zip(points.row(i)) {
            *s += x;
        }
    }
    for s in &mut mean {
        *s /= m as f64;
    }
    let centered: Vec<Vec<f64>> = (0..m)
        .map(|i| points.row(i).iter().zip(&mean).map(|(&x, &c)| x - c).collect())
        .collect();
    let far = (0..m)
        .max_by(|&a, &b| {
            let na: f64 = centered[a].iter().map(|x| x * x).sum();
            let nb: f64 = centered[b].iter().map(|x| x * x).sum();
            na.partial_cmp(&nb).unwrap().then(b.cmp(&a))
        })
        .expect("nonempty checked by caller");
    let mut v = centered[far].clone();
    for _ in 0..12 {
        let mut next = vec![0.0; d];
        for row in &centered {
            let t: f64 = row.iter().zip(&v).map(|(x, w)| x * w).sum();
            for (n, &x) in next.iter_mut().zip(row) {
                *n += t * x;
            }
        }
        let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-12 {
            break;
        }
        for n in &mut next {
            *n /= norm;
        }
        v = next;
    }
    let sides: Vec<bool> = centered
        .iter()
        .map(|row| row.iter().zip(&v).map(|(x, w)| x * w).sum::<f64>() > 0.0)
        .collect();
    if sides.iter().all(|&s| s) || sides.iter().all(|&s| !s) {
        // projections collapsed to one side; fall back to the extremes
        let other = (0..m)
            .max_by(|&a, &b| {
                let da = squared_distance(points.row(a), points.row(far));
                let db = squared_distance(points.row(b), points.row(far));
                da.partial_cmp(&db).unwrap().then(b.cmp(&a))
            })
            .expect("nonempty checked by caller");
        return [points.row(far).to_vec(), points.row(other).to_vec()];
    }
    let mut out = [vec![0.0; d], vec![0.0; d]];
    let mut counts = [0usize; 2];
    for (i, &side) in sides.iter().enumerate() {
        let c = usize::from(side);
        counts[c] += 1;
        for (s, &x) in out[c].iter_mut().zip(points.row(i)) {
            *s += x;
        }
    }
    for c in 0..2 {
        for s in &mut out[c] {
            *s /= counts[c] as f64;
        }
    }
    out
}

fn lloyd(points: &Tensor, init: [Vec<f64>; 2], max_iter: usize, tol: f64) -> KMeans2 {
    let m = points.shape()[0];
    let d = points.last_dim();
    let mut centroids = init;

    let mut assignments = assign(points, &centroids);
    for _ in 0..max_iter {
        let new_centroids = means(points, &assignments, &centroids);
        let shift = squared_distance(&new_centroids[0], &centroids[0])
            .max(squared_distance(&new_centroids[1], &centroids[1]))
            .sqrt();
        centroids = new_centroids;
        let new_assignments = assign(points, &centroids);
        let stable = new_assignments == assignments;
        assignments = new_assignments;
        if stable || shift < tol {
            break;
        }
    }

    // A Lloyd fixed point can still admit an improving single-point move:
    // nearest-centroid assignment ignores that reassigning a point shifts
    // both centroids. Polish with Hartigan-style moves until none helps.
    centroids = means(points, &assignments, &centroids);
    let mut counts = [0usize; 2];
    for &c in &assignments {
        counts[c] += 1;
    }
    'passes: for _ in 0..50 {
        let mut moved = false;
        for i in 0..m {
            let a = assignments[i];
            let b = 1 - a;
            if counts[a] == 1 {
                continue;
            }
            let (na, nb) = (counts[a] as f64, counts[b] as f64);
            let xi = points.row(i);
            let delta = nb / (nb + 1.0) * squared_distance(xi, &centroids[b])
                - na / (na - 1.0) * squared_distance(xi, &centroids[a]);
            if delta < -1e-12 {
                for k in 0..d {
                    centroids[a][k] = (centroids[a][k] * na - xi[k]) / (na - 1.0);
                    centroids[b][k] = (centroids[b][k] * nb + xi[k]) / (nb + 1.0);
                }
                counts[a] -= 1;
                counts[b] += 1;
                assignments[i] = b;
                moved = true;
            }
        }
        if !moved {
            break 'passes;
        }
    }
    centroids = means(points, &assignments, &centroids);

    let sse = assignments
        .iter()
        .enumerate()
        .map(|(i, &c)| squared_distance(points.row(i), &centroids[c]))
        .sum();
    let mut flat = centroids[0].clone();
    flat.extend_from_slice(&centroids[1]);
    KMeans2 {
        assignments,
        centroids: Tensor::new(vec![2, d], flat).expect("sized by construction"),
        sse,
        degenerate: false,
    }
}

fn assign(points: &Tensor, centroids: &[Vec<f64>; 2]) -> Vec<usize> {
    let m = points.shape()[0];
    let mut assignments: Vec<usize> = (0..m)
        .map(|i| {
            let d0 = squared_distance(points.row(i), &centroids[0]);
            let d1 = squared_distance(points.row(i), &centroids[1]);
            usize::from(d1 < d0)
        })
        .collect();
    // repair an emptied cluster with the worst-fitting point
    for empty in 0..2 {
        if assignments.iter().any(|&a| a == empty) {
            continue;
        }
        let worst = (0..m)
            .max_by(|&a, &b| {
                let da = squared_distance(points.row(a), &centroids[assignments[a]]);
                let db = squared_distance(points.row(b), &centroids[assignments[b]]);
                da.partial_cmp(&db).unwrap().then(b.cmp(&a))
            })
            .unwrap();
        assignments[worst] = empty;
    }
    assignments
}

fn means(points: &Tensor, assignments: &[usize], fallback: &[Vec<f64>; 2]) -> [Vec<f64>; 2] {
    let d = points.last_dim();
    let mut sums = [vec![0.0; d], vec![0.0; d]];
    let mut counts = [0usize; 2];
    for (i, &c) in assignments.iter().enumerate() {
        counts[c] += 1;
        for (s, &x) in sums[c].iter_mut().zip(points.row(i)) {
            *s += x;
        }
    }
    let mut out = [Vec::new(), Vec::new()];
    for c in 0..2 {
        out[c] = if counts[c] == 0 {
            fallback[c].clone()
        } else {
            sums[c].iter().map(|s| s / counts[c] as f64).collect()
        };
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn points(rows: &[Vec<f64>]) -> Tensor {
        Tensor::from_rows(rows)
    }

    #[test]
    fn two_far_clouds_split_cleanly() {
        // brute-force optimum by hand: {0,1} vs {2,3}
        let p = points(&[
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            vec![10.0, 0.0],
            vec![10.0, 1.0],
        ]);
        let r = kmeans2(&p, &KMeansConfig::new(0)).unwrap();
        assert_eq!(r.assignments[0], r.assignments[1]);
        assert_eq!(r.assignments[2], r.assignments[3]);
        assert_ne!(r.assignments[0], r.assignments[2]);
        assert!((r.sse - 1.0).abs() < 1e-12); // 4 points each 0.5 from centroid
        assert!(!r.degenerate);
    }

    #[test]
    fn identical_points_are_degenerate() {
        let p = points(&vec![vec![2.0, 3.0]; 5]);
        let r = kmeans2(&p, &KMeansConfig::new(1)).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.assignments, vec![0; 5]);
        assert_eq!(r.sse, 0.0);
    }

    #[test]
    fn two_distinct_points_fit_exactly() {
        let p = points(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let r = kmeans2(&p, &KMeansConfig::new(2)).unwrap();
        assert_ne!(r.assignments[0], r.assignments[1]);
        assert_eq!(r.sse, 0.0);
    }

    #[test]
    fn empty_input_rejected() {
        let p = Tensor::zeros(&[0, 2]);
        assert!(matches!(
            kmeans2(&p, &KMeansConfig::new(0)),
            Err(MiningError::EmptyPoints)
        ));
    }

    #[test]
    fn escapes_lloyd_fixed_point() {
        // {0, 5.5} | {8, 10} is a Lloyd fixed point (threshold 5.875 between
        // the means 2.75 and 9) but not optimal: moving 5.5 across lowers SSE
        // to the true optimum {0} | {5.5, 8, 10} = 61/6. Every start must
        // reach it, so a single restart suffices regardless of seed.
        let p = points(&[vec![0.0], vec![5.5], vec![8.0], vec![10.0]]);
        for seed in 0..20 {
            let mut cfg = KMeansConfig::new(seed);
            cfg.restarts = 1;
            let r = kmeans2(&p, &cfg).unwrap();
            assert!(
                (r.sse - 61.0 / 6.0).abs() < 1e-9,
                "seed {seed}: sse {}",
                r.sse
            );
        }
    }

    #[test]
    fn same_seed_same_result() {
        let p = points(&[
            vec![0.1, 0.4],
            vec![0.3, -0.2],
            vec![5.0, 5.0],
            vec![4.8, 5.2],
            vec![0.0, 0.1],
        ]);
        let cfg = KMeansConfig::new(9);
        assert_eq!(kmeans2(&p, &cfg).unwrap(), kmeans2(&p, &cfg).unwrap());
    }

    #[test]
    fn zero_restarts_rejected() {
        let mut cfg = KMeansConfig::new(0);
        cfg.restarts = 0;
        let p = points(&[vec![0.0], vec![1.0]]);
        assert!(matches!(
            kmeans2(&p, &cfg),
            Err(MiningError::InvalidConfig(_))
        ));
    }
}

//! Lloyd's K-Means with k-means++ seeding, over projected points.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::point::ProjectedPoint;
use crate::error::{Error, Result};

pub const DEFAULT_MAX_ITER: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub centroids: Vec<ProjectedPoint>,
    pub assignments: Vec<usize>,
    /// Sum of squared distances of each point to its assigned centroid.
    pub inertia: f64,
    /// Objective after every assignment step, in order.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Index of the nearest centroid; ties go to the lowest index.
pub fn assign_nearest(p: &ProjectedPoint, centroids: &[ProjectedPoint]) -> Result<usize> {
    if centroids.is_empty() {
        return Err(Error::invalid("no centroids to assign to"));
    }
    Ok(nearest(p, centroids).0)
}

fn nearest(p: &ProjectedPoint, centroids: &[ProjectedPoint]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = p.dist2(c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Sum of squared distances for a given assignment.
pub fn objective(points: &[ProjectedPoint], centroids: &[ProjectedPoint], assignments: &[usize]) -> f64 {
    points
        .iter()
        .zip(assignments)
        .map(|(p, &a)| p.dist2(&centroids[a]))
        .sum()
}

fn distinct_count(points: &[ProjectedPoint]) -> usize {
    let mut keys: Vec<(u64, u64)> = points
        .iter()
        .map(|p| (p.x_km.to_bits(), p.y_km.to_bits()))
        .collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len()
}

fn plus_plus_init(points: &[ProjectedPoint], k: usize, rng: &mut ChaCha8Rng) -> Vec<ProjectedPoint> {
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.gen_range(0..points.len())]);
    let mut d2: Vec<f64> = points.iter().map(|p| p.dist2(&centroids[0])).collect();
    while centroids.len() < k {
        let next = match WeightedIndex::new(&d2) {
            Ok(dist) => dist.sample(rng),
            // every remaining point coincides with a centroid
            Err(_) => break,
        };
        let c = points[next];
        centroids.push(c);
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(p.dist2(&c));
        }
    }
    centroids
}

/// Lloyd iterations until the assignment stops changing or `max_iter` is hit.
pub fn kmeans_cluster(points: &[ProjectedPoint], k: usize, seed: u64) -> Result<KMeansResult> {
    kmeans_with_max_iter(points, k, seed, DEFAULT_MAX_ITER)
}

pub fn kmeans_with_max_iter(
    points: &[ProjectedPoint],
    k: usize,
    seed: u64,
    max_iter: usize,
) -> Result<KMeansResult> {
    if points.is_empty() {
        return Err(Error::invalid("k-means on empty input"));
    }
    if k == 0 {
        return Err(Error::invalid("k must be positive"));
    }
    let distinct = distinct_count(points);
    if k > distinct {
        return Err(Error::invalid(format!("k = {k} exceeds {distinct} distinct points")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(points, k, &mut rng);
    debug_assert_eq!(centroids.len(), k);

    let mut assignments = vec![usize::MAX; points.len()];
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let nearest_of: Vec<(usize, f64)> = points.par_iter().map(|p| nearest(p, &centroids)).collect();
        let changed = nearest_of
            .iter()
            .zip(&assignments)
            .any(|(&(a, _), &old)| a != old);
        for (slot, &(a, _)) in assignments.iter_mut().zip(&nearest_of) {
            *slot = a;
        }
        history.push(objective(points, &centroids, &assignments));
        if !changed {
            converged = true;
            break;
        }
        update_centroids(points, &mut assignments, &mut centroids);
    }
    let inertia = objective(points, &centroids, &assignments);
    Ok(KMeansResult {
        centroids,
        assignments,
        inertia,
        history,
        iterations,
        converged,
    })
}

/// Recompute means; an empty cluster takes over the point farthest from its centroid.
fn update_centroids(points: &[ProjectedPoint], assignments: &mut [usize], centroids: &mut [ProjectedPoint]) {
    let k = centroids.len();
    loop {
        let mut sums = vec![(0.0f64, 0.0f64, 0usize); k];
        for (p, &a) in points.iter().zip(assignments.iter()) {
            let s = &mut sums[a];
            s.0 += p.x_km;
            s.1 += p.y_km;
            s.2 += 1;
        }
        let empty = sums.iter().position(|s| s.2 == 0);
        for (c, s) in centroids.iter_mut().zip(&sums) {
            if s.2 > 0 {
                *c = ProjectedPoint::new(s.0 / s.2 as f64, s.1 / s.2 as f64);
            }
        }
        let Some(e) = empty else { return };
        // Farthest point among clusters that can spare one.
        let mut counts = vec![0usize; k];
        for &a in assignments.iter() {
            counts[a] += 1;
        }
        let far = points
            .iter()
            .enumerate()
            .filter(|(i, _)| counts[assignments[*i]] > 1)
            .map(|(i, p)| (i, p.dist2(&centroids[assignments[i]])))
            .fold(None, |best: Option<(usize, f64)>, (i, d)| match best {
                Some((_, bd)) if bd >= d => best,
                _ => Some((i, d)),
            });
        match far {
            Some((i, _)) => {
                assignments[i] = e;
                centroids[e] = points[i];
            }
            None => return,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::Normal;

    #[test]
    fn single_cluster_is_the_mean() {
        let pts: Vec<_> = [(0.0, 0.0), (2.0, 0.0), (0.0, 4.0), (2.0, 4.0)]
            .iter()
            .map(|&(x, y)| ProjectedPoint::new(x, y))
            .collect();
        let r = kmeans_cluster(&pts, 1, 1).unwrap();
        assert_eq!(r.centroids[0], ProjectedPoint::new(1.0, 2.0));
        // total variance times n: 4 * (1 + 4)
        assert!((r.inertia - 20.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_k() {
        let pts = vec![ProjectedPoint::new(1.0, 1.0); 5];
        assert!(kmeans_cluster(&pts, 2, 0).is_err());
        assert!(kmeans_cluster(&[], 1, 0).is_err());
        assert!(kmeans_cluster(&pts, 1, 0).is_ok());
    }

    #[test]
    fn separated_blobs_recover_their_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sigma = 0.5;
        let noise = Normal::new(0.0, sigma).unwrap();
        let m = 200;
        let centers = [(0.0, 0.0), (20.0, 5.0)];
        let mut pts = Vec::new();
        for &(cx, cy) in &centers {
            for _ in 0..m {
                pts.push(ProjectedPoint::new(cx + noise.sample(&mut rng), cy + noise.sample(&mut rng)));
            }
        }
        let r = kmeans_cluster(&pts, 2, 9).unwrap();
        let bound = 3.0 * sigma / (m as f64).sqrt();
        for &(cx, cy) in &centers {
            let c = r.centroids[assign_nearest(&ProjectedPoint::new(cx, cy), &r.centroids).unwrap()];
            assert!((c.x_km - cx).abs() < bound && (c.y_km - cy).abs() < bound, "{c:?}");
        }
    }

    #[test]
    fn assignments_are_nearest_and_objective_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<_> = (0..300)
            .map(|_| ProjectedPoint::new(rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)))
            .collect();
        let r = kmeans_cluster(&pts, 12, 4).unwrap();
        for (p, &a) in pts.iter().zip(&r.assignments) {
            assert_eq!(assign_nearest(p, &r.centroids).unwrap(), a);
        }
        assert!((objective(&pts, &r.centroids, &r.assignments) - r.inertia).abs() < 1e-9);
        for w in r.history.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let cs: Vec<_> = [(5.0, 5.0), (9.0, 9.0), (-1.0, 0.0), (7.0, 7.0), (0.0, 3.0), (1.0, 0.0)]
            .iter()
            .map(|&(x, y)| ProjectedPoint::new(x, y))
            .collect();
        assert_eq!(assign_nearest(&ProjectedPoint::new(0.0, 0.0), &cs).unwrap(), 2);
        assert_eq!(assign_nearest(&cs[3], &cs).unwrap(), 3);
        assert!(assign_nearest(&cs[0], &[]).is_err());
    }

    #[test]
    fn assignment_commutes_with_centroid_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cs: Vec<_> = (0..10)
            .map(|_| ProjectedPoint::new(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)))
            .collect();
        let perm = [3, 7, 0, 9, 1, 5, 2, 8, 6, 4];
        let permuted: Vec<_> = perm.iter().map(|&i| cs[i]).collect();
        for _ in 0..200 {
            let p = ProjectedPoint::new(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
            let a = assign_nearest(&p, &cs).unwrap();
            let b = assign_nearest(&p, &permuted).unwrap();
            assert_eq!(perm[b], a);
        }
    }
}

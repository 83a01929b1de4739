use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::centroids::{Centroid, CentroidSet};
use super::vectors::{feature_matrix, LatentVector};
use crate::error::{Error, Result};
use crate::numerics::{squared_distance, Matrix};

pub const MAX_LLOYD_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct LloydOutcome {
    /// `k x d`.
    pub centers: Matrix,
    pub assignments: Vec<usize>,
    /// Within-cluster sum of squared distances after the initial assignment
    /// and after every iteration.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    /// Whether an assignment fixed point was reached.
    pub converged: bool,
}

impl LloydOutcome {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace starts with the initial cost")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub centroids: CentroidSet,
    pub assignments: Vec<usize>,
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl KMeansFit {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("nonempty trace")
    }
}

/// Sum over points of the squared distance to their assigned center.
pub fn kmeans_objective(points: &Matrix, centers: &Matrix, assignments: &[usize]) -> f64 {
    points
        .iter_rows()
        .zip(assignments)
        .map(|(x, &j)| squared_distance(x, centers.row(j)))
        .sum()
}

fn nearest_row(centers: &Matrix, x: &[f64]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter_rows().enumerate() {
        let d = squared_distance(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best.0
}

fn assign(points: &Matrix, centers: &Matrix) -> Vec<usize> {
    points.iter_rows().map(|x| nearest_row(centers, x)).collect()
}

fn cluster_mean(points: &Matrix, assignments: &[usize], j: usize, out: &mut [f64]) -> usize {
    out.fill(0.0);
    let mut count = 0;
    for (x, _) in points.iter_rows().zip(assignments).filter(|(_, &a)| a == j) {
        for (o, v) in out.iter_mut().zip(x) {
            *o += v;
        }
        count += 1;
    }
    if count > 0 {
        out.iter_mut().for_each(|o| *o /= count as f64);
    }
    count
}

/// Moves every center to its members' mean. An empty cluster takes the point
/// farthest from its own center (lowest index on ties) out of a cluster with
/// at least two members, and that donor's mean is recomputed.
fn update_centers(points: &Matrix, centers: &mut Matrix, assignments: &mut [usize]) {
    let k = centers.rows();
    let mut counts = vec![0usize; k];
    for j in 0..k {
        counts[j] = cluster_mean(points, assignments, j, centers.row_mut(j));
    }
    while let Some(empty) = counts.iter().position(|&c| c == 0) {
        let mut far = None;
        let mut far_d = f64::NEG_INFINITY;
        for (i, x) in points.iter_rows().enumerate() {
            let a = assignments[i];
            if counts[a] < 2 {
                continue;
            }
            let d = squared_distance(x, centers.row(a));
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        let Some(i) = far else {
            // Fewer points than clusters; callers rule this out.
            break;
        };
        let donor = assignments[i];
        assignments[i] = empty;
        counts[donor] -= 1;
        counts[empty] = 1;
        centers.row_mut(empty).copy_from_slice(points.row(i));
        cluster_mean(points, assignments, donor, centers.row_mut(donor));
    }
}

/// Lloyd iterations from the given centers until the assignment stops
/// changing or `max_iterations` updates have run.
pub fn lloyd(points: &Matrix, init: Matrix, max_iterations: usize) -> Result<LloydOutcome> {
    if points.rows() == 0 {
        return Err(Error::InsufficientData("no points to cluster".into()));
    }
    if init.cols() != points.cols() {
        return Err(Error::shape(format!(
            "centers have dimension {}, points {}",
            init.cols(),
            points.cols()
        )));
    }
    if init.rows() == 0 || init.rows() > points.rows() {
        return Err(Error::invalid(format!(
            "cannot form {} clusters from {} points",
            init.rows(),
            points.rows()
        )));
    }
    let mut centers = init;
    let mut assignments = assign(points, &centers);
    let mut trace = vec![kmeans_objective(points, &centers, &assignments)];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iterations {
        update_centers(points, &mut centers, &mut assignments);
        iterations += 1;
        let next = assign(points, &centers);
        let cost = kmeans_objective(points, &centers, &next);
        let prev = *trace.last().expect("nonempty");
        debug_assert!(
            cost <= prev + 1e-9 * prev.abs().max(1.0),
            "Lloyd objective increased from {prev} to {cost}"
        );
        trace.push(cost);
        let fixed = next == assignments;
        assignments = next;
        if fixed {
            converged = true;
            break;
        }
    }
    Ok(LloydOutcome {
        centers,
        assignments,
        objective_trace: trace,
        iterations,
        converged,
    })
}

/// k-means++ seeding: the first center uniformly, the rest with probability
/// proportional to the squared distance to the nearest chosen center.
pub fn kmeans_plus_plus<R: Rng + ?Sized>(points: &Matrix, k: usize, rng: &mut R) -> Result<Matrix> {
    let n = points.rows();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("cannot seed {k} centers from {n} points")));
    }
    let mut centers = Matrix::zeros(k, points.cols());
    let first = rng.random_range(0..n);
    centers.row_mut(0).copy_from_slice(points.row(first));
    let mut d2: Vec<f64> = points
        .iter_rows()
        .map(|x| squared_distance(x, centers.row(0)))
        .collect();
    for j in 1..k {
        let pick = match WeightedIndex::new(&d2) {
            Ok(dist) => dist.sample(rng),
            // Every point coincides with a chosen center.
            Err(_) => rng.random_range(0..n),
        };
        centers.row_mut(j).copy_from_slice(points.row(pick));
        for (d, x) in d2.iter_mut().zip(points.iter_rows()) {
            *d = d.min(squared_distance(x, centers.row(j)));
        }
    }
    Ok(centers)
}

fn majority<T: Ord + Clone>(items: impl Iterator<Item = T>) -> Option<T> {
    let mut counts: BTreeMap<T, usize> = BTreeMap::new();
    for item in items {
        *counts.entry(item).or_default() += 1;
    }
    // max_by_key keeps the last maximum; iterate in reverse so the smallest
    // key wins ties.
    counts.into_iter().rev().max_by_key(|(_, c)| *c).map(|(item, _)| item)
}

/// k-means++ followed by Lloyd iterations. Each centroid takes the majority
/// class (smallest label on ties) and majority origin of its members.
pub fn kmeans_fit(vectors: &[LatentVector], k: usize, seed: u64) -> Result<KMeansFit> {
    let points = feature_matrix(vectors)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = kmeans_plus_plus(&points, k, &mut rng)?;
    let outcome = lloyd(&points, init, MAX_LLOYD_ITERATIONS)?;
    let centroids = (0..k)
        .map(|j| {
            let members = || vectors.iter().zip(&outcome.assignments).filter(|(_, &a)| a == j);
            let center = outcome.centers.row(j);
            let (label, origin) = match majority(members().map(|(v, _)| v.label)) {
                Some(label) => (
                    label,
                    majority(members().map(|(v, _)| v.origin.clone())).expect("nonempty"),
                ),
                // Only reachable when the iteration cap stops Lloyd mid-way.
                None => {
                    let nearest = vectors
                        .iter()
                        .min_by(|a, b| {
                            squared_distance(&a.values, center).total_cmp(&squared_distance(&b.values, center))
                        })
                        .expect("nonempty");
                    (nearest.label, nearest.origin.clone())
                }
            };
            Centroid {
                values: center.to_vec(),
                label,
                origin,
            }
        })
        .collect();
    Ok(KMeansFit {
        centroids: CentroidSet::new(centroids)?,
        assignments: outcome.assignments,
        objective_trace: outcome.objective_trace,
        iterations: outcome.iterations,
        converged: outcome.converged,
    })
}

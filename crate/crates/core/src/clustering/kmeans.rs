use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::matrix::{axpy, squared_distance};
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansOptions {
    pub max_iters: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self {
            max_iters: 300,
            restarts: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    pub labels: Vec<usize>,
    /// `k x dims`
    pub centroids: Matrix,
    pub total_ssd: f64,
    /// Lloyd iterations of the winning restart.
    pub iterations: usize,
    pub seed: u64,
    /// Restart that produced this result.
    pub restart: usize,
    /// SSD after every assignment step of the winning restart.
    pub ssd_history: Vec<f64>,
}

impl ClusterResult {
    pub fn k(&self) -> usize {
        self.centroids.nrows()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k()];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

/// k-means with k-means++ seeding and Lloyd iterations; the restart with the
/// lowest total SSD wins (earliest restart on ties).
pub fn kmeans(z: &Matrix, k: usize, opts: &KMeansOptions) -> Result<ClusterResult> {
    let n = z.nrows();
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if k > n {
        return Err(Error::TooManyClusters { k, n });
    }
    let mut best: Option<ClusterResult> = None;
    for restart in 0..opts.restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(restart as u64);
        let run = lloyd(z, plus_plus(z, k, &mut rng), opts.max_iters, opts.seed, restart);
        if best.as_ref().is_none_or(|b| run.total_ssd < b.total_ssd) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn plus_plus(z: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let n = z.nrows();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));
    let mut d2: Vec<f64> = z.rows().map(|p| squared_distance(p, z.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    pick = i;
                    break;
                }
            }
            if d2[pick] == 0.0 {
                // rounding at the tail; take the last point with positive weight
                pick = d2.iter().rposition(|&d| d > 0.0).expect("total > 0");
            }
            pick
        } else {
            // every point coincides with a centre already chosen
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (i, p) in z.rows().enumerate() {
            d2[i] = d2[i].min(squared_distance(p, z.row(next)));
        }
    }
    z.select_rows(&chosen)
}

/// Index of the nearest centroid for every row; ties go to the lower index.
pub fn assign_nearest(z: &Matrix, centroids: &Matrix) -> Vec<usize> {
    z.rows().take(z.nrows()).map(|p| nearest(p, centroids).0).collect()
}

#[inline]
fn nearest(p: &[f64], centroids: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.rows().enumerate() {
        let d = squared_distance(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn total_ssd(z: &Matrix, labels: &[usize], centroids: &Matrix) -> f64 {
    z.rows()
        .zip(labels)
        .map(|(p, &l)| squared_distance(p, centroids.row(l)))
        .sum()
}

fn means(z: &Matrix, labels: &[usize], k: usize) -> Matrix {
    let mut sums = Matrix::zeros(k, z.ncols());
    let mut sizes = vec![0usize; k];
    for (p, &l) in z.rows().zip(labels) {
        axpy(1.0, p, sums.row_mut(l));
        sizes[l] += 1;
    }
    for (j, &s) in sizes.iter().enumerate() {
        if s > 0 {
            for v in sums.row_mut(j) {
                *v /= s as f64;
            }
        }
    }
    sums
}

/// Gives every empty cluster the point farthest from its current centroid,
/// taken from clusters that keep at least one member.
fn repair_empty(z: &Matrix, labels: &mut [usize], centroids: &Matrix) {
    let k = centroids.nrows();
    let mut sizes = vec![0usize; k];
    for &l in labels.iter() {
        sizes[l] += 1;
    }
    for j in 0..k {
        if sizes[j] > 0 {
            continue;
        }
        let mut far = None;
        let mut far_d = f64::NEG_INFINITY;
        for (i, p) in z.rows().enumerate() {
            let l = labels[i];
            if sizes[l] > 1 {
                let d = squared_distance(p, centroids.row(l));
                if d > far_d {
                    far_d = d;
                    far = Some(i);
                }
            }
        }
        let i = far.expect("k <= n leaves a cluster with a spare point");
        sizes[labels[i]] -= 1;
        labels[i] = j;
        sizes[j] = 1;
    }
}

fn lloyd(z: &Matrix, mut centroids: Matrix, max_iters: usize, seed: u64, restart: usize) -> ClusterResult {
    let k = centroids.nrows();
    let mut labels = assign_nearest(z, &centroids);
    let mut history = vec![total_ssd(z, &labels, &centroids)];
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        repair_empty(z, &mut labels, &centroids);
        centroids = means(z, &labels, k);
        let next = assign_nearest(z, &centroids);
        let changed = next != labels;
        labels = next;
        history.push(total_ssd(z, &labels, &centroids));
        if !changed {
            break;
        }
    }
    repair_empty(z, &mut labels, &centroids);
    centroids = means(z, &labels, k);
    let ssd = total_ssd(z, &labels, &centroids);
    ClusterResult {
        labels,
        centroids,
        total_ssd: ssd,
        iterations,
        seed,
        restart,
        ssd_history: history,
    }
}

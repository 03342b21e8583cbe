use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::stats::{mad, mean, median, std_error};
use crate::{Error, Matrix, Result};

pub const DEFAULT_SILHOUETTE_SUBSAMPLE: usize = 10_000;
const RESAMPLE_TRIES: usize = 10;

/// Robust and classical summaries of per-point silhouette values.
#[derive(Debug, Clone, PartialEq)]
pub struct SilhouetteStats {
    pub median: f64,
    pub mad: f64,
    pub mean: f64,
    pub stderr: f64,
    pub sample_size: usize,
}

impl SilhouetteStats {
    pub fn from_values(values: &[f64]) -> Self {
        Self {
            median: median(values),
            mad: mad(values),
            mean: mean(values),
            stderr: std_error(values),
            sample_size: values.len(),
        }
    }
}

/// Exact silhouette `(b - a) / max(a, b)` of every row with Euclidean
/// distances. A point alone in its cluster has `a = 0` and scores 1.
pub fn silhouette_values(z: &Matrix, labels: &[usize]) -> Result<Vec<f64>> {
    if labels.len() != z.nrows() {
        return Err(Error::DimensionMismatch {
            what: "labels",
            expected: z.nrows(),
            found: labels.len(),
        });
    }
    // compact ids keep the per-point accumulator small
    let mut ids: BTreeMap<usize, usize> = BTreeMap::new();
    for &l in labels {
        let next = ids.len();
        ids.entry(l).or_insert(next);
    }
    let k = ids.len();
    if k < 2 {
        return Err(Error::SilhouetteUndefined(k));
    }
    let compact: Vec<usize> = labels.iter().map(|l| ids[l]).collect();
    let mut sizes = vec![0usize; k];
    for &c in &compact {
        sizes[c] += 1;
    }

    let n = z.nrows();
    let mut sums = vec![0.0; k];
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        sums.fill(0.0);
        let p = z.row(i);
        for j in 0..n {
            if i != j {
                sums[compact[j]] += libm::sqrt(crate::matrix::squared_distance(p, z.row(j)));
            }
        }
        let own = compact[i];
        if sizes[own] == 1 {
            out.push(1.0);
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        out.push(if denom > 0.0 { (b - a) / denom } else { 0.0 });
    }
    Ok(out)
}

/// Silhouette statistics over a seeded subsample of at most `subsample_size`
/// rows (all rows when that is not smaller than the data). Every cluster is
/// represented in the subsample.
pub fn silhouette(
    z: &Matrix,
    labels: &[usize],
    subsample_size: usize,
    seed: u64,
) -> Result<SilhouetteStats> {
    let n = z.nrows();
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            what: "labels",
            expected: n,
            found: labels.len(),
        });
    }
    let clusters: BTreeMap<usize, usize> = labels
        .iter()
        .enumerate()
        .rev()
        .map(|(i, &l)| (l, i))
        .collect();
    if clusters.len() < 2 {
        return Err(Error::SilhouetteUndefined(clusters.len()));
    }
    let m = subsample_size.max(2);
    if m >= n {
        return Ok(SilhouetteStats::from_values(&silhouette_values(z, labels)?));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = Vec::new();
    for _ in 0..RESAMPLE_TRIES {
        picked = rand::seq::index::sample(&mut rng, n, m).into_vec();
        if covers(&picked, labels, clusters.len()) {
            break;
        }
    }
    if !covers(&picked, labels, clusters.len()) {
        // add the first member of every cluster the draws kept missing
        let mut present: BTreeMap<usize, ()> = picked.iter().map(|&i| (labels[i], ())).collect();
        for (&l, &first) in &clusters {
            if present.insert(l, ()).is_none() {
                picked.push(first);
            }
        }
    }
    picked.sort_unstable();
    let sub = z.select_rows(&picked);
    let sub_labels: Vec<usize> = picked.iter().map(|&i| labels[i]).collect();
    Ok(SilhouetteStats::from_values(&silhouette_values(&sub, &sub_labels)?))
}

fn covers(picked: &[usize], labels: &[usize], k: usize) -> bool {
    let mut seen: BTreeMap<usize, ()> = BTreeMap::new();
    for &i in picked {
        seen.insert(labels[i], ());
    }
    seen.len() == k
}

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{kmeans, KMeansOptions};
use crate::{Error, Matrix, Result};

pub const DEFAULT_K_MAX: usize = 30;
pub const DEFAULT_SSD_SUBSAMPLE: usize = 50_000;
/// Second-difference tolerance for the inflection search.
pub const DEFAULT_TOLERANCE: f64 = 0.005;
const MONOTONE_SLACK: f64 = 1e-9;

/// Total SSD as a function of `k`, with the values scaled by their maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct SsdCurve {
    /// `1..=k_max`
    pub ks: Vec<usize>,
    pub raw: Vec<f64>,
    pub scaled: Vec<f64>,
    pub subsample_size: usize,
    pub seed: u64,
    /// `k` values whose scaled SSD exceeds the previous one by more than 1e-9
    /// (k-means stopped in a poor local optimum).
    pub violations: Vec<usize>,
}

impl SsdCurve {
    /// Curve for `k = 1..=raw.len()`.
    pub fn from_raw(raw: Vec<f64>, subsample_size: usize, seed: u64) -> Self {
        let max = raw.iter().copied().fold(0.0, f64::max);
        let scaled: Vec<f64> = if max > 0.0 {
            raw.iter().map(|v| v / max).collect()
        } else {
            raw.clone()
        };
        let violations = scaled
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[1] > w[0] + MONOTONE_SLACK)
            .map(|(i, _)| i + 2)
            .collect();
        Self {
            ks: (1..=raw.len()).collect(),
            raw,
            scaled,
            subsample_size,
            seed,
            violations,
        }
    }

    pub fn k_max(&self) -> usize {
        self.ks.len()
    }

    /// `s(k+1) - 2 s(k) + s(k-1)` for `k = 2..k_max-1`, as `(k, value)`.
    pub fn second_differences(&self) -> Vec<(usize, f64)> {
        self.scaled
            .windows(3)
            .enumerate()
            .map(|(i, w)| (i + 2, w[2] - 2.0 * w[1] + w[0]))
            .collect()
    }
}

/// Rows used by [`ssd_sweep`]: a seeded subsample without replacement, in
/// original order, or every row when `subsample_size >= n`.
pub fn sweep_subsample(z: &Matrix, subsample_size: usize, seed: u64) -> Matrix {
    if subsample_size >= z.nrows() {
        return z.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, z.nrows(), subsample_size).into_vec();
    idx.sort_unstable();
    z.select_rows(&idx)
}

/// Runs k-means for every `k` in `1..=k_max` on one fixed subsample.
pub fn ssd_sweep(z: &Matrix, k_max: usize, subsample_size: usize, opts: &KMeansOptions) -> Result<SsdCurve> {
    if k_max < 3 {
        return Err(Error::InvalidParameter(alloc::format!("k_max must be at least 3, got {k_max}")));
    }
    let sub = sweep_subsample(z, subsample_size, opts.seed);
    let raw = (1..=k_max)
        .map(|k| kmeans(&sub, k, opts).map(|r| r.total_ssd))
        .collect::<Result<Vec<_>>>()?;
    Ok(SsdCurve::from_raw(raw, sub.nrows(), opts.seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InflectionMode {
    /// First `k` where the second difference is zero or changes sign.
    Exact,
    /// First `k` where the second difference is within the tolerance of zero.
    Tolerance,
}

/// Smallest `k` at which the curve's second difference vanishes, or `None`.
pub fn inflection_k(curve: &SsdCurve, tolerance: f64, mode: InflectionMode) -> Result<Option<usize>> {
    if curve.scaled.len() < 4 {
        return Err(Error::CurveTooShort(curve.scaled.len()));
    }
    let d2 = curve.second_differences();
    let found = match mode {
        InflectionMode::Tolerance => d2.iter().find(|(_, v)| v.abs() <= tolerance).map(|&(k, _)| k),
        InflectionMode::Exact => d2
            .iter()
            .enumerate()
            .find(|&(i, &(_, v))| v == 0.0 || (i > 0 && d2[i - 1].1.signum() != v.signum() && d2[i - 1].1 != 0.0))
            .map(|(_, &(k, _))| k),
    };
    Ok(found)
}

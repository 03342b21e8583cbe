//! Fixed-grid density of the embedding and the upper-fence outlier rule that
//! turns it into a cluster count.
//!
//! The sigmoid bottleneck keeps every embedded point in `[0, 1]^d`, so one grid
//! of `B^d` equal bins fits any input. Most bins hold few or no points; dense
//! regions show up as bins whose count lies more than 1.5 inter-quartile ranges
//! above the upper quartile of all bin counts.

use alloc::vec;
use alloc::vec::Vec;

use crate::stats::{quantile_sorted, skewness};
use crate::{Error, Matrix, Result};

/// Bins per dimension used by default.
pub const DEFAULT_BINS: usize = 10;
/// Outlier bins with counts below this percentile of the outlier counts are dropped.
pub const DEFAULT_PERCENTILE_FLOOR: f64 = 20.0;
/// Upper-fence multiplier on the inter-quartile range.
pub const IQR_FENCE: f64 = 1.5;

/// Grid bin of a point in the unit cube; the upper edge `1.0` belongs to the last bin.
pub fn bin_index(z: &[f64], bins: usize) -> Result<Vec<usize>> {
    z.iter()
        .enumerate()
        .map(|(dim, &v)| coordinate_bin(v, bins).ok_or(Error::OutsideUnitCube { row: 0, dim, value: v }))
        .collect()
}

#[inline]
fn coordinate_bin(v: f64, bins: usize) -> Option<usize> {
    if !(0.0..=1.0).contains(&v) {
        return None;
    }
    Some((libm::floor(v * bins as f64) as usize).min(bins - 1))
}

/// Point counts of a `bins^dims` grid over the unit cube, row-major over the
/// bin coordinates (the last dimension varies fastest).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DensityHistogram {
    bins: usize,
    dims: usize,
    counts: Vec<u64>,
}

impl DensityHistogram {
    pub fn from_counts(bins: usize, dims: usize, counts: Vec<u64>) -> Result<Self> {
        let expected = checked_cells(bins, dims)?;
        if counts.len() != expected {
            return Err(Error::DimensionMismatch {
                what: "histogram cells",
                expected,
                found: counts.len(),
            });
        }
        Ok(Self { bins, dims, counts })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Per-dimension bin coordinates of a flat cell index.
    pub fn coords(&self, flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims];
        let mut rest = flat;
        for slot in out.iter_mut().rev() {
            *slot = rest % self.bins;
            rest /= self.bins;
        }
        out
    }

    pub fn flat_index(&self, coords: &[usize]) -> usize {
        coords.iter().fold(0, |acc, &c| acc * self.bins + c)
    }

    /// Adds the counts of another histogram over the same grid.
    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if other.bins != self.bins || other.dims != self.dims {
            return Err(Error::DimensionMismatch {
                what: "histogram grid",
                expected: self.counts.len(),
                found: other.counts.len(),
            });
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }
}

fn checked_cells(bins: usize, dims: usize) -> Result<usize> {
    if bins == 0 || dims == 0 {
        return Err(Error::InvalidParameter("histogram needs at least one bin and one dimension".into()));
    }
    u32::try_from(dims)
        .ok()
        .and_then(|d| bins.checked_pow(d))
        .ok_or_else(|| Error::InvalidParameter("histogram grid too large".into()))
}

/// Counts embedded rows per grid cell.
pub fn histogram(z: &Matrix, bins: usize) -> Result<DensityHistogram> {
    let dims = z.ncols();
    let cells = checked_cells(bins, dims)?;
    let mut counts = vec![0u64; cells];
    for (row, point) in z.rows().enumerate().take(z.nrows()) {
        let mut flat = 0;
        for (dim, &v) in point.iter().enumerate() {
            let b = coordinate_bin(v, bins).ok_or(Error::OutsideUnitCube { row, dim, value: v })?;
            flat = flat * bins + b;
        }
        counts[flat] += 1;
    }
    Ok(DensityHistogram { bins, dims, counts })
}

/// Cluster-count estimate from the dense-bin outliers.
#[derive(Debug, Clone, PartialEq)]
pub struct KEstimate {
    /// `None` when no bin clears the fence (homogeneous embedding).
    pub k: Option<usize>,
    /// Every bin above the fence, as `(flat index, count)`, in index order.
    pub outliers: Vec<(usize, u64)>,
    /// Outliers kept after the percentile floor; `k` is their number.
    pub retained: Vec<(usize, u64)>,
    pub q1: f64,
    pub q3: f64,
    /// `q3 + 1.5 * (q3 - q1)`; a bin is an outlier when its count is strictly greater.
    pub threshold: f64,
    /// Percentile of the outlier counts below which outliers are dropped.
    pub floor: f64,
    pub homogeneous: bool,
}

/// Upper-fence outliers of all bin counts (empty bins included), filtered by
/// the `percentile_floor`-th percentile of the outlier counts.
pub fn estimate_k(hist: &DensityHistogram, percentile_floor: f64) -> Result<KEstimate> {
    if !(0.0..=100.0).contains(&percentile_floor) {
        return Err(Error::InvalidParameter(alloc::format!(
            "percentile floor must lie in [0, 100], got {percentile_floor}"
        )));
    }
    let mut sorted: Vec<f64> = hist.counts.iter().map(|&c| c as f64).collect();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&sorted, 0.25);
    let q3 = quantile_sorted(&sorted, 0.75);
    let threshold = q3 + IQR_FENCE * (q3 - q1);

    let outliers: Vec<(usize, u64)> = hist
        .counts
        .iter()
        .enumerate()
        .filter(|&(_, &c)| c as f64 > threshold)
        .map(|(i, &c)| (i, c))
        .collect();

    if outliers.is_empty() {
        return Ok(KEstimate {
            k: None,
            outliers,
            retained: Vec::new(),
            q1,
            q3,
            threshold,
            floor: f64::NAN,
            homogeneous: true,
        });
    }

    let mut outlier_counts: Vec<f64> = outliers.iter().map(|&(_, c)| c as f64).collect();
    outlier_counts.sort_by(f64::total_cmp);
    let floor = quantile_sorted(&outlier_counts, percentile_floor / 100.0);
    let retained: Vec<(usize, u64)> = outliers
        .iter()
        .copied()
        .filter(|&(_, c)| c as f64 >= floor)
        .collect();

    Ok(KEstimate {
        k: Some(retained.len()),
        outliers,
        retained,
        q1,
        q3,
        threshold,
        floor,
        homogeneous: false,
    })
}

/// Shape of the bin-count distribution, for checking that the embedding is
/// mostly empty space with a few dense regions.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityDiagnostics {
    pub empty_fraction: f64,
    pub occupied_bins: usize,
    pub max_count: u64,
    pub median_count: f64,
    /// `max / median`; infinite when the median bin is empty.
    pub max_median_ratio: f64,
    pub skewness: f64,
}

pub fn dense_region_check(hist: &DensityHistogram) -> DensityDiagnostics {
    let cells = hist.counts.len();
    let occupied = hist.counts.iter().filter(|&&c| c > 0).count();
    let values: Vec<f64> = hist.counts.iter().map(|&c| c as f64).collect();
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    let median = quantile_sorted(&sorted, 0.5);
    let max = hist.counts.iter().copied().max().unwrap_or(0);
    let ratio = if median > 0.0 {
        max as f64 / median
    } else if max > 0 {
        f64::INFINITY
    } else {
        0.0
    };
    DensityDiagnostics {
        empty_fraction: (cells - occupied) as f64 / cells as f64,
        occupied_bins: occupied,
        max_count: max,
        median_count: median,
        max_median_ratio: ratio,
        skewness: skewness(&values),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bin_index_examples() {
        assert_eq!(bin_index(&[0.0, 0.0, 0.0], 10).unwrap(), vec![0, 0, 0]);
        assert_eq!(bin_index(&[1.0, 1.0, 1.0], 10).unwrap(), vec![9, 9, 9]);
        assert_eq!(bin_index(&[0.25, 0.5, 0.999], 10).unwrap(), vec![2, 5, 9]);
        assert!(matches!(
            bin_index(&[0.5, 1.0001, 0.0], 10),
            Err(Error::OutsideUnitCube { dim: 1, .. })
        ));
        assert!(bin_index(&[f64::NAN], 10).is_err());
    }

    #[test]
    fn identical_points_share_one_bin() {
        let z = Matrix::from_rows(&[[0.31, 0.72, 0.05]; 3]);
        let h = histogram(&z, 10).unwrap();
        assert_eq!(h.total(), 3);
        assert_eq!(h.counts().iter().filter(|&&c| c > 0).count(), 1);
        assert_eq!(h.counts()[h.flat_index(&[3, 7, 0])], 3);
        assert_eq!(h.coords(h.flat_index(&[3, 7, 0])), vec![3, 7, 0]);
    }

    #[test]
    fn histogram_reports_offending_row() {
        let z = Matrix::from_rows(&[[0.1, 0.1], [0.2, -0.1]]);
        assert_eq!(
            histogram(&z, 4),
            Err(Error::OutsideUnitCube { row: 1, dim: 1, value: -0.1 })
        );
    }

    #[test]
    fn single_heavy_bin() {
        let mut counts = vec![0u64; 1000];
        counts[123] = 1000;
        let h = DensityHistogram::from_counts(10, 3, counts).unwrap();
        let est = estimate_k(&h, 20.0).unwrap();
        assert_eq!((est.q1, est.q3, est.threshold), (0.0, 0.0, 0.0));
        assert_eq!(est.k, Some(1));
        assert_eq!(est.retained, vec![(123, 1000)]);
        let diag = dense_region_check(&h);
        assert_eq!(diag.empty_fraction, 0.999);
        assert!(diag.skewness > 1.0);
    }

    #[test]
    fn uniform_counts_are_homogeneous() {
        let h = DensityHistogram::from_counts(10, 3, vec![7; 1000]).unwrap();
        let est = estimate_k(&h, 20.0).unwrap();
        assert!(est.homogeneous);
        assert_eq!(est.k, None);
        assert_eq!(est.threshold, 7.0);
        assert_eq!(dense_region_check(&h).skewness, 0.0);
    }

    #[test]
    fn ten_equal_heavy_bins_give_ten() {
        let mut counts = vec![0u64; 1000];
        for i in 0..10 {
            counts[i * 97 + 5] = 400;
        }
        let h = DensityHistogram::from_counts(10, 3, counts).unwrap();
        assert_eq!(estimate_k(&h, 20.0).unwrap().k, Some(10));
    }

    #[test]
    fn percentile_floor_drops_light_outliers() {
        // five outliers 10, 20, 30, 40, 50: 20th percentile (type 7) is 18
        let mut counts = vec![0u64; 1000];
        for (i, c) in [10u64, 20, 30, 40, 50].iter().enumerate() {
            counts[i * 100] = *c;
        }
        let h = DensityHistogram::from_counts(10, 3, counts).unwrap();
        let est = estimate_k(&h, 20.0).unwrap();
        assert_eq!(est.outliers.len(), 5);
        assert_eq!(est.floor, 18.0);
        assert_eq!(est.k, Some(4));
        assert_eq!(estimate_k(&h, 0.0).unwrap().k, Some(5));
    }

    #[test]
    fn ties_at_threshold_are_not_outliers() {
        // counts 0..=7 over 8 bins: q1 = 1.75, q3 = 5.25, fence = 10.5
        let h = DensityHistogram::from_counts(2, 3, (0..8).collect()).unwrap();
        let est = estimate_k(&h, 20.0).unwrap();
        assert_eq!(est.threshold, 10.5);
        assert!(est.homogeneous);
        // a count of exactly the fence
        let h = DensityHistogram::from_counts(2, 2, vec![1, 1, 1, 1]).unwrap();
        assert!(estimate_k(&h, 20.0).unwrap().homogeneous);
    }

    #[test]
    fn merge_equals_sequential() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data: Vec<f64> = (0..3000).map(|_| rng.random::<f64>()).collect();
        let z = Matrix::from_vec(1000, 3, data).unwrap();
        let full = histogram(&z, 10).unwrap();
        let mut sharded = histogram(&z.select_rows(&(0..400).collect::<Vec<_>>()), 10).unwrap();
        sharded
            .merge(&histogram(&z.select_rows(&(400..1000).collect::<Vec<_>>()), 10).unwrap())
            .unwrap();
        assert_eq!(full, sharded);
    }

    proptest! {
        #[test]
        fn permutation_invariance(seed in 0u64..500, n in 1usize..300) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<f64> = (0..n * 3).map(|_| rng.random::<f64>().powi(3)).collect();
            let z = Matrix::from_vec(n, 3, data).unwrap();
            let mut order: Vec<usize> = (0..n).collect();
            order.reverse();
            order.rotate_left(seed as usize % n);
            let h1 = histogram(&z, 10).unwrap();
            let h2 = histogram(&z.select_rows(&order), 10).unwrap();
            prop_assert_eq!(&h1, &h2);
            prop_assert_eq!(h1.total(), n as u64);
            let (a, b) = (estimate_k(&h1, 20.0).unwrap(), estimate_k(&h2, 20.0).unwrap());
            prop_assert_eq!(a.k, b.k);
            let occupied = h1.counts().iter().filter(|&&c| c > 0).count();
            prop_assert!(a.k.unwrap_or(0) <= occupied);
        }

        #[test]
        fn finer_grid_never_merges_into_smaller_occupied_bins(seed in 0u64..200, n in 1usize..200) {
            // same points, grid refined by an integer factor: every occupied fine bin
            // count is bounded by its parent coarse bin count, and totals agree
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<f64> = (0..n * 3).map(|_| rng.random::<f64>()).collect();
            let z = Matrix::from_vec(n, 3, data).unwrap();
            let coarse = histogram(&z, 5).unwrap();
            let fine = histogram(&z, 10).unwrap();
            prop_assert_eq!(coarse.total(), fine.total());
            for (flat, &c) in fine.counts().iter().enumerate() {
                let parent: Vec<usize> = fine.coords(flat).iter().map(|v| v / 2).collect();
                prop_assert!(c <= coarse.counts()[coarse.flat_index(&parent)]);
            }
        }
    }
}

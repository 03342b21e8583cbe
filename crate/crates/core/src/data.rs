//! Multiplex image container, per-channel normalization and the synthetic
//! blob generator used as ground truth.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::{Error, Matrix, Result};

/// An `height x width` image where every pixel carries `channels` intensities.
/// Pixels are stored row-major, one matrix row per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplexImage {
    height: usize,
    width: usize,
    data: Matrix,
    channel_names: Option<Vec<String>>,
}

impl MultiplexImage {
    pub fn new(height: usize, width: usize, data: Matrix) -> Result<Self> {
        if data.nrows() != height * width {
            return Err(Error::DimensionMismatch {
                what: "pixel rows (height * width)",
                expected: height * width,
                found: data.nrows(),
            });
        }
        if let Some((row, col)) = data.find_non_finite() {
            return Err(Error::NonFinite { row, col });
        }
        Ok(Self {
            height,
            width,
            data,
            channel_names: None,
        })
    }

    pub fn with_channel_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.channels() {
            return Err(Error::DimensionMismatch {
                what: "channel names",
                expected: self.channels(),
                found: names.len(),
            });
        }
        self.channel_names = Some(names);
        Ok(self)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> usize {
        self.data.nrows()
    }

    pub fn channels(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &Matrix {
        &self.data
    }

    pub fn into_data(self) -> Matrix {
        self.data
    }

    pub fn channel_names(&self) -> Option<&[String]> {
        self.channel_names.as_deref()
    }

    fn replace_data(&self, data: Matrix) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data,
            channel_names: self.channel_names.clone(),
        }
    }
}

/// Per-channel min-max map onto `[0, 1]`, recorded so unseen data can be put
/// on the training scale.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationSpec {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormalizationSpec {
    pub fn fit(data: &Matrix) -> Self {
        let d = data.ncols();
        let mut min = vec![f64::INFINITY; d];
        let mut max = vec![f64::NEG_INFINITY; d];
        for row in data.rows() {
            for (j, &v) in row.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        if data.nrows() == 0 {
            min.fill(0.0);
            max.fill(0.0);
        }
        Self { min, max }
    }

    /// Identity map for `channels` channels already in `[0, 1]`.
    pub fn identity(channels: usize) -> Self {
        Self {
            min: vec![0.0; channels],
            max: vec![1.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.min.len()
    }

    pub fn is_constant(&self, channel: usize) -> bool {
        self.min[channel] >= self.max[channel]
    }

    pub fn constant_channels(&self) -> Vec<usize> {
        (0..self.channels()).filter(|&j| self.is_constant(j)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.min.len() != self.max.len() {
            return Err(Error::DimensionMismatch {
                what: "normalization max",
                expected: self.min.len(),
                found: self.max.len(),
            });
        }
        for j in 0..self.min.len() {
            let (lo, hi) = (self.min[j], self.max[j]);
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(Error::InvalidParameter(format!(
                    "normalization range for channel {j} is [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }

    /// Maps values onto `[0, 1]`, clamping anything outside the recorded range.
    /// Constant channels map to 0.
    pub fn apply(&self, data: &Matrix) -> Result<Matrix> {
        self.check_channels(data.ncols())?;
        let mut out = data.clone();
        for row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = if self.is_constant(j) {
                    0.0
                } else {
                    ((*v - self.min[j]) / (self.max[j] - self.min[j])).clamp(0.0, 1.0)
                };
            }
        }
        Ok(out)
    }

    pub fn denormalize(&self, data: &Matrix) -> Result<Matrix> {
        self.check_channels(data.ncols())?;
        let mut out = data.clone();
        for row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.min[j] + *v * (self.max[j] - self.min[j]);
            }
        }
        Ok(out)
    }

    fn check_channels(&self, found: usize) -> Result<()> {
        if found != self.channels() {
            return Err(Error::DimensionMismatch {
                what: "channels",
                expected: self.channels(),
                found,
            });
        }
        Ok(())
    }
}

/// Min-max normalizes every channel of `img` to `[0, 1]`.
pub fn normalize(img: &MultiplexImage) -> (MultiplexImage, NormalizationSpec) {
    let spec = NormalizationSpec::fit(img.data());
    let data = spec
        .apply(img.data())
        .expect("spec fitted on the same channel count");
    (img.replace_data(data), spec)
}

/// Normalizes unseen data with a stored spec.
pub fn normalize_with(img: &MultiplexImage, spec: &NormalizationSpec) -> Result<MultiplexImage> {
    Ok(img.replace_data(spec.apply(img.data())?))
}

/// Isotropic Gaussian blobs with well separated means.
#[derive(Debug, Clone, PartialEq)]
pub struct BlobSpec {
    pub n_clusters: usize,
    pub points_per_cluster: usize,
    pub channels: usize,
    /// Minimum pairwise distance between means, in units of `noise_sigma`.
    pub mean_separation: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

/// Means are drawn uniformly from a cube whose side is this multiple of the
/// minimum mean distance.
pub const BLOB_BOX_FACTOR: f64 = 100.0;
const PLACEMENT_TRIES: usize = 1000;
const PLACEMENT_RESTARTS: usize = 50;

impl BlobSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_clusters == 0 || self.points_per_cluster == 0 || self.channels == 0 {
            return Err(Error::InvalidParameter(
                "blob counts and channel count must be positive".into(),
            ));
        }
        if !(self.mean_separation > 0.0 && self.mean_separation.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "mean_separation must be positive, got {}",
                self.mean_separation
            )));
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "noise_sigma must be positive, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

/// Generates `n_clusters` Gaussian blobs laid out as an image with one blob per
/// image row (`height = n_clusters`, `width = points_per_cluster`). Values are
/// clipped at zero. Returns the image and the blob index of every pixel.
pub fn synth_blobs(spec: &BlobSpec) -> Result<(MultiplexImage, Vec<usize>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let means = place_means(spec, &mut rng)?;
    let noise = Normal::new(0.0, spec.noise_sigma)
        .map_err(|e| Error::InvalidParameter(format!("{e}")))?;

    let n = spec.n_clusters * spec.points_per_cluster;
    let mut data = Matrix::zeros(n, spec.channels);
    let mut labels = Vec::with_capacity(n);
    for (c, mean) in means.iter().enumerate() {
        for p in 0..spec.points_per_cluster {
            let row = data.row_mut(c * spec.points_per_cluster + p);
            for (v, &m) in row.iter_mut().zip(mean) {
                *v = (m + noise.sample(&mut rng)).max(0.0);
            }
            labels.push(c);
        }
    }
    let img = MultiplexImage::new(spec.n_clusters, spec.points_per_cluster, data)?;
    Ok((img, labels))
}

fn place_means(spec: &BlobSpec, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
    let min_dist = spec.mean_separation * spec.noise_sigma;
    let side = BLOB_BOX_FACTOR * min_dist;
    let min_d2 = min_dist * min_dist;
    for _ in 0..PLACEMENT_RESTARTS {
        let mut means: Vec<Vec<f64>> = Vec::with_capacity(spec.n_clusters);
        'place: while means.len() < spec.n_clusters {
            for _ in 0..PLACEMENT_TRIES {
                let cand: Vec<f64> = (0..spec.channels)
                    .map(|_| rng.random::<f64>() * side)
                    .collect();
                if means
                    .iter()
                    .all(|m| crate::matrix::squared_distance(m, &cand) >= min_d2)
                {
                    means.push(cand);
                    continue 'place;
                }
            }
            break;
        }
        if means.len() == spec.n_clusters {
            return Ok(means);
        }
    }
    Err(Error::SeparationUnreachable {
        clusters: spec.n_clusters,
        attempts: PLACEMENT_RESTARTS * PLACEMENT_TRIES,
    })
}

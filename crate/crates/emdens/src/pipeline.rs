//! Training, the density path and the optional SSD sweep for one dataset.

use std::time::Instant;

use emdens_core::autoencoder::{train_stacked, DsaModel, SparseAeHyper, StackConfig, TrainingLog, DEFAULT_LAYER_SIZES};
use emdens_core::clustering::{
    inflection_k, kmeans, silhouette, sweep_subsample, ClusterResult, InflectionMode, KMeansOptions, SilhouetteStats,
    SsdCurve, DEFAULT_K_MAX, DEFAULT_SILHOUETTE_SUBSAMPLE, DEFAULT_SSD_SUBSAMPLE, DEFAULT_TOLERANCE,
};
use emdens_core::data::{normalize, MultiplexImage};
use emdens_core::density::{
    dense_region_check, estimate_k, histogram, DensityDiagnostics, DensityHistogram, KEstimate, DEFAULT_BINS,
    DEFAULT_PERCENTILE_FLOOR,
};
use emdens_core::evaluation::{correlate_maps, CorrelationMatrix};
use emdens_core::Matrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub layer_sizes: Vec<usize>,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub max_epochs: usize,
    pub seed: u64,
    pub fine_tune_epochs: usize,
    /// Train on this many evenly spaced pixels instead of all of them.
    pub train_subsample: Option<usize>,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let h = SparseAeHyper::default();
        Self {
            layer_sizes: DEFAULT_LAYER_SIZES.to_vec(),
            alpha: h.alpha,
            beta: h.beta,
            gamma: h.gamma,
            max_epochs: h.max_epochs,
            seed: 0,
            fine_tune_epochs: 0,
            train_subsample: None,
        }
    }
}

impl TrainSettings {
    pub fn stack_config(&self) -> StackConfig {
        let hyper = SparseAeHyper {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            max_epochs: self.max_epochs,
        };
        let mut cfg = StackConfig::uniform(&self.layer_sizes, hyper, self.seed);
        cfg.fine_tune_epochs = self.fine_tune_epochs;
        cfg
    }
}

/// `m` row indices spread evenly over `0..n`, or every row when `m >= n`.
pub fn strided_rows(n: usize, m: usize) -> Vec<usize> {
    if m >= n {
        return (0..n).collect();
    }
    (0..m).map(|i| i * n / m).collect()
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: DsaModel,
    pub log: TrainingLog,
    pub rows_used: usize,
    pub seconds: f64,
}

/// Fits the normalization on all of `img`, then trains on the selected rows.
pub fn train(img: &MultiplexImage, settings: &TrainSettings) -> Result<Trained> {
    let start = Instant::now();
    let (normalized, spec) = normalize(img);
    let x = match settings.train_subsample {
        Some(m) => normalized.data().select_rows(&strided_rows(img.pixels(), m)),
        None => normalized.into_data(),
    };
    let rows_used = x.nrows();
    let (model, log) = train_stacked(&x, spec, &settings.stack_config())?;
    Ok(Trained {
        model,
        log,
        rows_used,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSettings {
    pub bins: usize,
    pub percentile_floor: f64,
    pub kmeans_restarts: usize,
    pub kmeans_max_iters: usize,
    pub silhouette_subsample: usize,
    /// Also run the SSD sweep and report its inflection points.
    pub ssd_sweep: bool,
    pub k_max: usize,
    pub tolerance: f64,
    pub ssd_subsample: usize,
    /// Channel values above this count as signal in the correlation maps.
    pub threshold: f64,
    pub seed: u64,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        let km = KMeansOptions::default();
        Self {
            bins: DEFAULT_BINS,
            percentile_floor: DEFAULT_PERCENTILE_FLOOR,
            kmeans_restarts: km.restarts,
            kmeans_max_iters: km.max_iters,
            silhouette_subsample: DEFAULT_SILHOUETTE_SUBSAMPLE,
            ssd_sweep: false,
            k_max: DEFAULT_K_MAX,
            tolerance: DEFAULT_TOLERANCE,
            ssd_subsample: DEFAULT_SSD_SUBSAMPLE,
            threshold: 0.0,
            seed: 0,
        }
    }
}

impl AnalysisSettings {
    pub fn kmeans_options(&self) -> KMeansOptions {
        KMeansOptions {
            max_iters: self.kmeans_max_iters,
            restarts: self.kmeans_restarts,
            seed: self.seed,
        }
    }
}

/// Wall-clock seconds per stage. Absent stages did not run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub embedding: Option<f64>,
    pub density_estimation: Option<f64>,
    pub outlier_detection: Option<f64>,
    /// Sum of the three stages above.
    pub density_path_total: Option<f64>,
    pub kmeans: Option<f64>,
    pub silhouette: Option<f64>,
    pub ssd_sweep: Option<f64>,
    pub inflection: Option<f64>,
    pub training: Option<f64>,
    /// Training time divided by the number of datasets sharing the model.
    pub training_amortized: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub embedding: Matrix,
    pub histogram: DensityHistogram,
    pub estimate: KEstimate,
    pub diagnostics: DensityDiagnostics,
    pub clustering: Option<ClusterResult>,
    pub silhouette: Option<SilhouetteStats>,
    pub correlation: Option<CorrelationMatrix>,
    pub ssd: Option<SsdCurve>,
    pub inflection_tolerance: Option<usize>,
    pub inflection_exact: Option<usize>,
    pub timings: Timings,
    pub warnings: Vec<String>,
}

pub(crate) fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

/// Embedding, histogram and outlier count: the path whose cost the estimator is about.
pub fn density_path(
    model: &DsaModel,
    img: &MultiplexImage,
    bins: usize,
    percentile_floor: f64,
) -> Result<(Matrix, DensityHistogram, KEstimate, Timings)> {
    if img.pixels() == 0 {
        return Err(Error::Data("image has no pixels".into()));
    }
    let (z, t_embed) = timed(|| model.embed(img));
    let z = z?;
    let (hist, t_hist) = timed(|| histogram(&z, bins));
    let hist = hist?;
    let (est, t_out) = timed(|| estimate_k(&hist, percentile_floor));
    let est = est?;
    let timings = Timings {
        embedding: Some(t_embed),
        density_estimation: Some(t_hist),
        outlier_detection: Some(t_out),
        density_path_total: Some(t_embed + t_hist + t_out),
        ..Timings::default()
    };
    Ok((z, hist, est, timings))
}

pub fn analyze(model: &DsaModel, img: &MultiplexImage, settings: &AnalysisSettings) -> Result<Analysis> {
    let (embedding, hist, estimate, mut timings) = density_path(model, img, settings.bins, settings.percentile_floor)?;
    let diagnostics = dense_region_check(&hist);
    let mut warnings = Vec::new();

    let mut clustering = None;
    let mut sil = None;
    let mut correlation = None;
    match estimate.k {
        None => warnings.push("homogeneous embedding: no dense bins, clustering skipped".to_string()),
        Some(k) if k > embedding.nrows() => {
            warnings.push(format!("estimated k = {k} exceeds the pixel count, clustering skipped"));
        }
        Some(k) => {
            let (res, t) = timed(|| kmeans(&embedding, k, &settings.kmeans_options()));
            let res = res?;
            timings.kmeans = Some(t);
            if k >= 2 {
                let (s, t) =
                    timed(|| silhouette(&embedding, &res.labels, settings.silhouette_subsample, settings.seed));
                sil = Some(s?);
                timings.silhouette = Some(t);
            } else {
                warnings.push("single cluster: silhouette undefined".to_string());
            }
            correlation = Some(correlate_maps(&res.labels, k, img, settings.threshold)?);
            clustering = Some(res);
        }
    }

    let (mut ssd, mut inflection_tolerance, mut inflection_exact) = (None, None, None);
    if settings.ssd_sweep {
        let (curve, t) =
            timed(|| par_ssd_sweep(&embedding, settings.k_max, settings.ssd_subsample, &settings.kmeans_options()));
        let curve = curve?;
        timings.ssd_sweep = Some(t);
        let (found, t) = timed(|| -> Result<_> {
            Ok((
                inflection_k(&curve, settings.tolerance, InflectionMode::Tolerance)?,
                inflection_k(&curve, settings.tolerance, InflectionMode::Exact)?,
            ))
        });
        (inflection_tolerance, inflection_exact) = found?;
        timings.inflection = Some(t);
        if !curve.violations.is_empty() {
            warnings.push(format!("SSD curve increases at k = {:?}", curve.violations));
        }
        ssd = Some(curve);
    }

    Ok(Analysis {
        embedding,
        histogram: hist,
        estimate,
        diagnostics,
        clustering,
        silhouette: sil,
        correlation,
        ssd,
        inflection_tolerance,
        inflection_exact,
        timings,
        warnings,
    })
}

/// [`emdens_core::clustering::ssd_sweep`] with the values of `k` spread over
/// the thread pool. Results are identical to the sequential sweep.
pub fn par_ssd_sweep(z: &Matrix, k_max: usize, subsample_size: usize, opts: &KMeansOptions) -> Result<SsdCurve> {
    if k_max < 3 {
        return Err(emdens_core::Error::InvalidParameter(format!("k_max must be at least 3, got {k_max}")).into());
    }
    let sub = sweep_subsample(z, subsample_size, opts.seed);
    let raw = (1..=k_max)
        .into_par_iter()
        .map(|k| kmeans(&sub, k, opts).map(|r| r.total_ssd))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SsdCurve::from_raw(raw, sub.nrows(), opts.seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strided_rows_cover_the_range() {
        assert_eq!(strided_rows(10, 4), vec![0, 2, 5, 7]);
        assert_eq!(strided_rows(3, 5), vec![0, 1, 2]);
        assert!(strided_rows(0, 5).is_empty());
    }

    #[test]
    fn defaults_match_reported_settings() {
        let t = TrainSettings::default();
        assert_eq!(t.layer_sizes, vec![15, 10, 3]);
        assert_eq!((t.alpha, t.beta, t.gamma, t.max_epochs), (1e-4, 100.0, 0.5, 10_000));
        let a = AnalysisSettings::default();
        assert_eq!((a.bins, a.percentile_floor, a.k_max, a.tolerance), (10, 20.0, 30, 0.005));
    }
}

//! Wall-clock comparison of the density path with the SSD sweep on one dataset.

use emdens_core::autoencoder::DsaModel;
use emdens_core::clustering::{inflection_k, InflectionMode};
use emdens_core::data::MultiplexImage;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::pipeline::{density_path, par_ssd_sweep, timed, AnalysisSettings};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub pixels: usize,
    pub channels: usize,
    pub k_max: usize,
    pub ssd_subsample: usize,
    pub embedding: f64,
    pub density_estimation: f64,
    pub outlier_detection: f64,
    pub density_total: f64,
    pub ssd_sweep: f64,
    pub inflection: f64,
    pub ssd_total: f64,
    /// `ssd_total / density_total`.
    pub speedup: f64,
    pub k_density: Option<usize>,
    pub k_inflection: Option<usize>,
    /// Reported separately; not part of either path.
    pub training: Option<f64>,
}

/// Times both estimators. The sweep runs on the embedding produced by the
/// density path, so its time excludes embedding.
pub fn benchmark(model: &DsaModel, img: &MultiplexImage, settings: &AnalysisSettings) -> Result<BenchmarkReport> {
    let (z, _, est, t) = density_path(model, img, settings.bins, settings.percentile_floor)?;
    let (curve, t_sweep) = timed(|| par_ssd_sweep(&z, settings.k_max, settings.ssd_subsample, &settings.kmeans_options()));
    let curve = curve?;
    let (k_inflection, t_infl) = timed(|| inflection_k(&curve, settings.tolerance, InflectionMode::Tolerance));
    let k_inflection = k_inflection?;

    let density_total = t.density_path_total.unwrap_or_default();
    let ssd_total = t_sweep + t_infl;
    Ok(BenchmarkReport {
        pixels: img.pixels(),
        channels: img.channels(),
        k_max: settings.k_max,
        ssd_subsample: curve.subsample_size,
        embedding: t.embedding.unwrap_or_default(),
        density_estimation: t.density_estimation.unwrap_or_default(),
        outlier_detection: t.outlier_detection.unwrap_or_default(),
        density_total,
        ssd_sweep: t_sweep,
        inflection: t_infl,
        ssd_total,
        speedup: ssd_total / density_total.max(f64::MIN_POSITIVE),
        k_density: est.k,
        k_inflection,
        training: None,
    })
}

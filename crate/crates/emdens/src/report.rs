//! Per-dataset report and artifact files.
//!
//! A dataset directory holds `report.json`, `histogram.csv`, `embedding.csv`
//! (with `embedding.meta`) and `embedding.ppm`; after clustering also
//! `clusters.ppm`, `labels.pgm`, `silhouette.csv` and `correlation.csv`; and
//! `ssd.csv` when the sweep ran.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use emdens_core::clustering::{SilhouetteStats, SsdCurve};
use emdens_core::data::MultiplexImage;
use emdens_core::density::{DensityHistogram, KEstimate};
use emdens_core::evaluation::{cluster_map, pseudo_rgb, CorrelationMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{write_atomic, write_matrix, write_pgm, write_ppm};
use crate::pipeline::{Analysis, AnalysisSettings, Timings};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub dataset: String,
    pub height: usize,
    pub width: usize,
    pub pixels: usize,
    pub channels: usize,
    pub bins: usize,
    pub percentile_floor: f64,
    pub k_estimate: Option<usize>,
    pub homogeneous: bool,
    pub fence: Fence,
    pub outlier_bins: Vec<BinCount>,
    pub retained_bins: Vec<BinCount>,
    pub diagnostics: Diagnostics,
    pub clustering: Option<ClusteringSummary>,
    pub ssd_curve: Option<SsdSummary>,
    pub timings: Timings,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fence {
    pub q1: f64,
    pub q3: f64,
    pub threshold: f64,
    /// Absent when there were no outliers to filter.
    pub percentile_cut: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinCount {
    pub bin: Vec<usize>,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub empty_fraction: f64,
    pub occupied_bins: usize,
    pub max_count: u64,
    pub median_count: f64,
    /// Absent when the median bin is empty.
    pub max_median_ratio: Option<f64>,
    pub skewness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringSummary {
    pub k: usize,
    pub total_ssd: f64,
    pub iterations: usize,
    pub restart: usize,
    pub cluster_sizes: Vec<usize>,
    pub silhouette: Option<SilhouetteSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SilhouetteSummary {
    pub median: f64,
    pub mad: f64,
    pub mean: f64,
    pub stderr: f64,
    pub sample_size: usize,
}

impl From<&SilhouetteStats> for SilhouetteSummary {
    fn from(s: &SilhouetteStats) -> Self {
        Self {
            median: s.median,
            mad: s.mad,
            mean: s.mean,
            stderr: s.stderr,
            sample_size: s.sample_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsdSummary {
    pub k_max: usize,
    pub subsample_size: usize,
    pub tolerance: f64,
    pub inflection_tolerance: Option<usize>,
    pub inflection_exact: Option<usize>,
    pub raw: Vec<f64>,
    pub scaled: Vec<f64>,
    pub violations: Vec<usize>,
}

fn bin_counts(hist: &DensityHistogram, bins: &[(usize, u64)]) -> Vec<BinCount> {
    bins.iter()
        .map(|&(flat, count)| BinCount {
            bin: hist.coords(flat),
            count,
        })
        .collect()
}

fn fence(est: &KEstimate) -> Fence {
    Fence {
        q1: est.q1,
        q3: est.q3,
        threshold: est.threshold,
        percentile_cut: est.floor.is_finite().then_some(est.floor),
    }
}

impl Report {
    pub fn new(dataset: &str, img: &MultiplexImage, analysis: &Analysis, settings: &AnalysisSettings) -> Self {
        let d = &analysis.diagnostics;
        let est = &analysis.estimate;
        Self {
            dataset: dataset.to_string(),
            height: img.height(),
            width: img.width(),
            pixels: img.pixels(),
            channels: img.channels(),
            bins: analysis.histogram.bins(),
            percentile_floor: settings.percentile_floor,
            k_estimate: est.k,
            homogeneous: est.homogeneous,
            fence: fence(est),
            outlier_bins: bin_counts(&analysis.histogram, &est.outliers),
            retained_bins: bin_counts(&analysis.histogram, &est.retained),
            diagnostics: Diagnostics {
                empty_fraction: d.empty_fraction,
                occupied_bins: d.occupied_bins,
                max_count: d.max_count,
                median_count: d.median_count,
                max_median_ratio: d.max_median_ratio.is_finite().then_some(d.max_median_ratio),
                skewness: d.skewness,
            },
            clustering: analysis.clustering.as_ref().map(|c| ClusteringSummary {
                k: c.k(),
                total_ssd: c.total_ssd,
                iterations: c.iterations,
                restart: c.restart,
                cluster_sizes: c.cluster_sizes(),
                silhouette: analysis.silhouette.as_ref().map(SilhouetteSummary::from),
            }),
            ssd_curve: analysis.ssd.as_ref().map(|c| SsdSummary {
                k_max: c.k_max(),
                subsample_size: c.subsample_size,
                tolerance: settings.tolerance,
                inflection_tolerance: analysis.inflection_tolerance,
                inflection_exact: analysis.inflection_exact,
                raw: c.raw.clone(),
                scaled: c.scaled.clone(),
                violations: c.violations.clone(),
            }),
            timings: analysis.timings.clone(),
            warnings: analysis.warnings.clone(),
        }
    }

    /// Pretty JSON, keys in declaration order, trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    /// The same report with every timing removed, for byte comparisons.
    pub fn without_timings(&self) -> Self {
        Self {
            timings: Timings::default(),
            ..self.clone()
        }
    }
}

fn axis_names(dims: usize) -> Vec<String> {
    if dims == 3 {
        return ["i", "j", "k"].map(String::from).to_vec();
    }
    (0..dims).map(|d| format!("i{d}")).collect()
}

/// Every bin, empty ones included, one row per bin in flat-index order.
pub fn histogram_csv(hist: &DensityHistogram) -> String {
    let mut out = axis_names(hist.dims()).join(",");
    out.push_str(",count\n");
    for (flat, &count) in hist.counts().iter().enumerate() {
        for c in hist.coords(flat) {
            let _ = write!(out, "{c},");
        }
        let _ = writeln!(out, "{count}");
    }
    out
}

pub fn ssd_csv(curve: &SsdCurve) -> String {
    let mut out = String::from("k,raw,s\n");
    for ((k, raw), s) in curve.ks.iter().zip(&curve.raw).zip(&curve.scaled) {
        let _ = writeln!(out, "{k},{raw},{s}");
    }
    out
}

pub fn silhouette_csv(s: &SilhouetteStats) -> String {
    format!(
        "median,mad,mean,stderr,sample_size\n{},{},{},{},{}\n",
        s.median, s.mad, s.mean, s.stderr, s.sample_size
    )
}

/// `cluster,channel,phi`; undefined entries have an empty `phi`.
pub fn correlation_csv(m: &CorrelationMatrix, channel_names: Option<&[String]>) -> String {
    let mut out = String::from("cluster,channel,phi\n");
    for c in 0..m.clusters {
        for j in 0..m.channels {
            let name = channel_names.map_or_else(|| j.to_string(), |n| n[j].clone());
            let phi = m.get(c, j).map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{c},{name},{phi}");
        }
    }
    out
}

/// Writes every artifact of one analysed dataset into `dir`, report last.
pub fn write_artifacts(
    dir: &Path,
    dataset: &str,
    img: &MultiplexImage,
    analysis: &Analysis,
    settings: &AnalysisSettings,
) -> Result<Report> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (h, w) = (img.height(), img.width());

    let embedding = MultiplexImage::new(h, w, analysis.embedding.clone())?;
    write_matrix(&dir.join("embedding.csv"), &embedding)?;
    if analysis.embedding.ncols() == 3 {
        write_ppm(&dir.join("embedding.ppm"), w, h, &pseudo_rgb(&analysis.embedding, h, w)?)?;
    }
    write_atomic(&dir.join("histogram.csv"), histogram_csv(&analysis.histogram).as_bytes())?;

    if let Some(res) = &analysis.clustering {
        let map = cluster_map(&res.labels, res.k(), h, w)?;
        write_ppm(&dir.join("clusters.ppm"), w, h, &map.rgb)?;
        write_pgm(&dir.join("labels.pgm"), w, h, &map.labels)?;
    }
    if let Some(s) = &analysis.silhouette {
        write_atomic(&dir.join("silhouette.csv"), silhouette_csv(s).as_bytes())?;
    }
    if let Some(m) = &analysis.correlation {
        write_atomic(&dir.join("correlation.csv"), correlation_csv(m, img.channel_names()).as_bytes())?;
    }
    if let Some(curve) = &analysis.ssd {
        write_atomic(&dir.join("ssd.csv"), ssd_csv(curve).as_bytes())?;
    }

    let report = Report::new(dataset, img, analysis, settings);
    write_atomic(&dir.join("report.json"), report.to_json().as_bytes())?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_csv_lists_every_bin() {
        let hist = DensityHistogram::from_counts(2, 3, vec![0, 1, 2, 3, 4, 5, 6, 7]).unwrap();
        let csv = histogram_csv(&hist);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 9);
        assert_eq!(lines[0], "i,j,k,count");
        let total: u64 = lines[1..].iter().map(|l| l.rsplit(',').next().unwrap().parse::<u64>().unwrap()).sum();
        assert_eq!(total, 28);
    }

    #[test]
    fn ssd_csv_rows() {
        let curve = SsdCurve::from_raw(vec![8.0, 4.0, 2.0, 2.0], 10, 0);
        assert_eq!(ssd_csv(&curve), "k,raw,s\n1,8,1\n2,4,0.5\n3,2,0.25\n4,2,0.25\n");
    }
}

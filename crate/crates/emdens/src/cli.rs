//! Command-line interface.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use emdens_core::autoencoder::{DsaModel, TrainingLog};
use emdens_core::clustering::{kmeans, silhouette};
use emdens_core::data::{synth_blobs, BlobSpec, MultiplexImage};
use emdens_core::density::{dense_region_check, estimate_k, histogram};
use emdens_core::evaluation::{cluster_map, pseudo_rgb};
use serde::Serialize;

use crate::batch::{read_manifest, run_batch};
use crate::benchmark::benchmark;
use crate::error::{Error, Result};
use crate::io::{load_matrix, write_atomic, write_labels, write_matrix, write_pgm, write_ppm};
use crate::model_io::{load_model, save_model};
use crate::pipeline::{train, AnalysisSettings, TrainSettings, Trained};
use crate::report::{histogram_csv, silhouette_csv, SilhouetteSummary};

#[derive(Debug, Parser)]
#[command(name = "emdens", version, about = "Sparse-autoencoder embedding and density-based cluster counting for multiplex images")]
pub struct Cli {
    /// Worker threads for batch mode and the SSD sweep.
    #[arg(long, global = true, env = "EMDENS_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic labelled blob dataset.
    Synth(SynthArgs),
    /// Train a stacked sparse autoencoder and save it.
    Train(TrainCmd),
    /// Encode a dataset with a saved model.
    Embed(EmbedArgs),
    /// Estimate the number of clusters from an embedding.
    EstimateK(EstimateArgs),
    /// Run k-means on an embedding.
    Cluster(ClusterArgs),
    /// Embed, estimate k, cluster and report for one or more datasets.
    Pipeline(PipelineArgs),
    /// Time the density estimator against the SSD sweep.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub n_clusters: usize,
    #[arg(long)]
    pub points_per_cluster: usize,
    #[arg(long)]
    pub channels: usize,
    /// Minimum distance between cluster means, in units of the noise sigma.
    #[arg(long, default_value_t = 6.0)]
    pub mean_separation: f64,
    #[arg(long, default_value_t = 1.0)]
    pub noise_sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output matrix (`.csv` or `.f32`); a `.meta` header is written beside it.
    #[arg(long)]
    pub out: PathBuf,
    /// Ground-truth labels, one per line.
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [15usize, 10, 3])]
    pub layer_sizes: Vec<usize>,
    #[arg(long, default_value_t = 1e-4)]
    pub alpha: f64,
    #[arg(long, default_value_t = 100.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.5)]
    pub gamma: f64,
    /// Optimizer iteration cap per stage.
    #[arg(long, default_value_t = 10_000)]
    pub max_epochs: usize,
    /// End-to-end iterations after stacking; 0 disables.
    #[arg(long, default_value_t = 0)]
    pub fine_tune_epochs: usize,
    /// Train on this many evenly spaced pixels.
    #[arg(long)]
    pub train_subsample: Option<usize>,
}

impl TrainArgs {
    fn settings(&self, seed: u64) -> TrainSettings {
        TrainSettings {
            layer_sizes: self.layer_sizes.clone(),
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            max_epochs: self.max_epochs,
            seed,
            fine_tune_epochs: self.fine_tune_epochs,
            train_subsample: self.train_subsample,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct AnalysisArgs {
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
    #[arg(long, default_value_t = 20.0)]
    pub percentile_floor: f64,
    #[arg(long, default_value_t = 5)]
    pub kmeans_restarts: usize,
    #[arg(long, default_value_t = 300)]
    pub kmeans_max_iters: usize,
    #[arg(long, default_value_t = 10_000)]
    pub silhouette_subsample: usize,
    /// Also run the SSD sweep and report its inflection points.
    #[arg(long)]
    pub ssd_sweep: bool,
    #[arg(long, default_value_t = 30)]
    pub k_max: usize,
    #[arg(long, default_value_t = 0.005)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 50_000)]
    pub ssd_subsample: usize,
    /// Channel values above this count as signal in the correlation maps.
    #[arg(long, default_value_t = 0.0)]
    pub threshold: f64,
}

impl AnalysisArgs {
    fn settings(&self, seed: u64) -> AnalysisSettings {
        AnalysisSettings {
            bins: self.bins,
            percentile_floor: self.percentile_floor,
            kmeans_restarts: self.kmeans_restarts,
            kmeans_max_iters: self.kmeans_max_iters,
            silhouette_subsample: self.silhouette_subsample,
            ssd_sweep: self.ssd_sweep,
            k_max: self.k_max,
            tolerance: self.tolerance,
            ssd_subsample: self.ssd_subsample,
            threshold: self.threshold,
            seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainCmd {
    #[arg(long)]
    pub input: PathBuf,
    /// Where to write the model.
    #[arg(long)]
    pub model: PathBuf,
    /// Training log CSV (`stage,iteration,cost`); defaults to the model path with extension `train.csv`.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// Embedding matrix (`.csv` keeps every bit).
    #[arg(long)]
    pub out: PathBuf,
    /// Pseudo-RGB image of a 3-D embedding.
    #[arg(long)]
    pub rgb: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub embedding: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
    #[arg(long, default_value_t = 20.0)]
    pub percentile_floor: f64,
    /// Writes `estimate.json` and `histogram.csv` here.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[arg(long)]
    pub embedding: PathBuf,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub kmeans_restarts: usize,
    #[arg(long, default_value_t = 300)]
    pub kmeans_max_iters: usize,
    #[arg(long, default_value_t = 10_000)]
    pub silhouette_subsample: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Input matrices; may be repeated.
    #[arg(long)]
    pub input: Vec<PathBuf>,
    /// File listing input matrices, one per line.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Saved model, or where to save it with `--train`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Train a model on the first input before analysing.
    #[arg(long)]
    pub train: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub training: TrainArgs,
    #[command(flatten)]
    pub analysis: AnalysisArgs,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Saved model; trained on the input when omitted.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Timing report JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub training: TrainArgs,
    #[command(flatten)]
    pub analysis: AnalysisArgs,
}

fn existing(path: &Path) -> Result<&Path> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::Usage(format!("{}: no such file", path.display())))
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

pub fn training_log_csv(log: &TrainingLog) -> String {
    let mut out = String::from("stage,iteration,cost\n");
    let stages = log.stages.iter().map(|s| (s.stage.to_string(), &s.history));
    let fine = log.fine_tune.iter().map(|s| ("fine_tune".to_string(), &s.history));
    for (stage, history) in stages.chain(fine) {
        for (i, c) in history.iter().enumerate() {
            out.push_str(&format!("{stage},{i},{c}\n"));
        }
    }
    out
}

/// Runs one command. Warnings go to the log; errors carry their exit code.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train_cmd(a),
        Command::Embed(a) => embed(a),
        Command::EstimateK(a) => estimate(a),
        Command::Cluster(a) => cluster(a),
        Command::Pipeline(a) => pipeline(a),
        Command::Benchmark(a) => bench(a),
    }
}

fn synth(a: SynthArgs) -> Result<()> {
    let spec = BlobSpec {
        n_clusters: a.n_clusters,
        points_per_cluster: a.points_per_cluster,
        channels: a.channels,
        mean_separation: a.mean_separation,
        noise_sigma: a.noise_sigma,
        seed: a.seed,
    };
    let (img, labels) = synth_blobs(&spec)?;
    write_matrix(&a.out, &img)?;
    if let Some(p) = &a.labels {
        write_labels(p, &labels)?;
    }
    Ok(())
}

fn train_and_log(img: &MultiplexImage, settings: &TrainSettings) -> Result<Trained> {
    let trained = train(img, settings)?;
    for s in &trained.log.stages {
        log::info!(
            "stage {}: {} -> {}, cost {} -> {} in {} iterations ({:?})",
            s.stage,
            s.inputs,
            s.hidden,
            s.initial_cost,
            s.final_cost,
            s.iterations,
            s.stop
        );
    }
    Ok(trained)
}

fn train_cmd(a: TrainCmd) -> Result<()> {
    let img = load_matrix(existing(&a.input)?)?;
    let trained = train_and_log(&img, &a.train.settings(a.seed))?;
    save_model(&a.model, &trained.model)?;
    let log_path = a.log.unwrap_or_else(|| a.model.with_extension("train.csv"));
    write_atomic(&log_path, training_log_csv(&trained.log).as_bytes())
}

fn embed(a: EmbedArgs) -> Result<()> {
    let model = load_model(existing(&a.model)?)?;
    let img = load_matrix(existing(&a.input)?)?;
    let z = model.embed(&img)?;
    if let Some(p) = &a.rgb {
        write_ppm(p, img.width(), img.height(), &pseudo_rgb(&z, img.height(), img.width())?)?;
    }
    write_matrix(&a.out, &MultiplexImage::new(img.height(), img.width(), z)?)
}

#[derive(Serialize)]
struct EstimateSummary {
    k_estimate: Option<usize>,
    homogeneous: bool,
    q1: f64,
    q3: f64,
    threshold: f64,
    outliers: usize,
    occupied_bins: usize,
}

fn estimate(a: EstimateArgs) -> Result<()> {
    let z = load_matrix(existing(&a.embedding)?)?;
    let hist = histogram(z.data(), a.bins)?;
    let est = estimate_k(&hist, a.percentile_floor)?;
    let summary = EstimateSummary {
        k_estimate: est.k,
        homogeneous: est.homogeneous,
        q1: est.q1,
        q3: est.q3,
        threshold: est.threshold,
        outliers: est.outliers.len(),
        occupied_bins: dense_region_check(&hist).occupied_bins,
    };
    if est.homogeneous {
        log::warn!("homogeneous embedding: no bin exceeds the outlier fence");
    }
    let json = to_json(&summary);
    print!("{json}");
    if let Some(dir) = &a.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_atomic(&dir.join("histogram.csv"), histogram_csv(&hist).as_bytes())?;
        write_atomic(&dir.join("estimate.json"), json.as_bytes())?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ClusterSummary {
    k: usize,
    total_ssd: f64,
    iterations: usize,
    restart: usize,
    cluster_sizes: Vec<usize>,
    silhouette: Option<SilhouetteSummary>,
}

fn cluster(a: ClusterArgs) -> Result<()> {
    let z = load_matrix(existing(&a.embedding)?)?;
    let opts = emdens_core::clustering::KMeansOptions {
        max_iters: a.kmeans_max_iters,
        restarts: a.kmeans_restarts,
        seed: a.seed,
    };
    let res = kmeans(z.data(), a.k, &opts)?;
    let sil = if a.k >= 2 {
        Some(silhouette(z.data(), &res.labels, a.silhouette_subsample, a.seed)?)
    } else {
        None
    };
    let dir = &a.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let map = cluster_map(&res.labels, a.k, z.height(), z.width())?;
    write_ppm(&dir.join("clusters.ppm"), z.width(), z.height(), &map.rgb)?;
    write_pgm(&dir.join("labels.pgm"), z.width(), z.height(), &map.labels)?;
    if let Some(s) = &sil {
        write_atomic(&dir.join("silhouette.csv"), silhouette_csv(s).as_bytes())?;
    }
    let summary = ClusterSummary {
        k: a.k,
        total_ssd: res.total_ssd,
        iterations: res.iterations,
        restart: res.restart,
        cluster_sizes: res.cluster_sizes(),
        silhouette: sil.as_ref().map(SilhouetteSummary::from),
    };
    let json = to_json(&summary);
    print!("{json}");
    write_atomic(&dir.join("cluster.json"), json.as_bytes())
}

fn pipeline(a: PipelineArgs) -> Result<()> {
    let mut inputs = a.input.clone();
    if let Some(m) = &a.manifest {
        inputs.extend(read_manifest(existing(m)?)?);
    }
    if inputs.is_empty() {
        return Err(Error::Usage("no inputs: give --input or --manifest".into()));
    }
    for p in &inputs {
        existing(p)?;
    }

    let (model, training_seconds): (DsaModel, Option<f64>) = if a.train {
        let trained = train_and_log(&load_matrix(&inputs[0])?, &a.training.settings(a.seed))?;
        if let Some(p) = &a.model {
            save_model(p, &trained.model)?;
            write_atomic(&p.with_extension("train.csv"), training_log_csv(&trained.log).as_bytes())?;
        }
        (trained.model, Some(trained.seconds))
    } else {
        let p = a
            .model
            .as_ref()
            .ok_or_else(|| Error::Usage("--model is required unless --train is given".into()))?;
        (load_model(existing(p)?)?, None)
    };

    let results = run_batch(&model, &inputs, &a.out_dir, &a.analysis.settings(a.seed), training_seconds)?;
    let mut first_error = None;
    for (input, r) in inputs.iter().zip(results) {
        match r {
            Ok(report) => println!(
                "{}: k = {}",
                report.dataset,
                report.k_estimate.map_or_else(|| "homogeneous".to_string(), |k| k.to_string())
            ),
            Err(e) => {
                log::error!("{}: {e}", input.display());
                first_error.get_or_insert(e);
            }
        }
    }
    first_error.map_or(Ok(()), Err)
}

fn bench(a: BenchmarkArgs) -> Result<()> {
    let img = load_matrix(existing(&a.input)?)?;
    let (model, training) = match &a.model {
        Some(p) => (load_model(existing(p)?)?, None),
        None => {
            let trained = train_and_log(&img, &a.training.settings(a.seed))?;
            (trained.model, Some(trained.seconds))
        }
    };
    let mut report = benchmark(&model, &img, &a.analysis.settings(a.seed))?;
    report.training = training;
    let json = to_json(&report);
    print!("{json}");
    if let Some(p) = &a.out {
        write_atomic(p, json.as_bytes())?;
    }
    Ok(())
}

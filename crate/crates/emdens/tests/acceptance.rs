//! Acceptance criteria 1 to 10. Prints one line per criterion and exits
//! non-zero when any of them fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use emdens::benchmark::benchmark;
use emdens::io::{encode_pgm, encode_ppm, write_pgm, write_ppm};
use emdens::model_io::{load_model, save_model};
use emdens::pipeline::{analyze, par_ssd_sweep, train, AnalysisSettings, TrainSettings};
use emdens_core::autoencoder::{cost_and_gradient, kl_sparsity, l2_penalty, sigmoid, AePair, NetLayout, SparseAeHyper};
use emdens_core::clustering::{inflection_k, InflectionMode, KMeansOptions};
use emdens_core::data::{synth_blobs, BlobSpec, MultiplexImage};
use emdens_core::density::{estimate_k, histogram, DensityHistogram};
use emdens_core::evaluation::pseudo_rgb;
use emdens_core::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// criterion 1
const GRAD_CONFIGS: usize = 20;
const GRAD_STEP: f64 = 1e-6;
const GRAD_REL_TOL: f64 = 1e-5;
/// Magnitude floor in the relative-error denominator for near-zero components.
const GRAD_REL_FLOOR: f64 = 1e-4;
const GRAD_SECONDS: f64 = 30.0;
// criterion 2
const DECOMP_CASES: usize = 50;
const DECOMP_TOL: f64 = 1e-12;
// criteria 3 and 4
const ORACLE_CASES: usize = 100;
const MAX_EMBEDDING_ROWS: usize = 10_000;
// criterion 5
const GROUPS: [usize; 6] = [3, 4, 5, 6, 7, 8];
const SEEDS_PER_GROUP: u64 = 20;
const POINTS_PER_RUN: usize = 20_000;
const CHANNELS: usize = 19;
const SEPARATION: f64 = 6.0;
const NOISE_SIGMA: f64 = 1.0;
const TRAIN_ROWS: usize = 1_000;
const TRAIN_EPOCHS: usize = 1_000;
const K_WINDOW: usize = 1;
const MIN_HIT_RATE: f64 = 0.8;
const RECOVERY_SECONDS: f64 = 20.0 * 60.0;
// criterion 6
const INFLECTION_SUBSAMPLE: usize = 5_000;
const INFLECTION_TOLERANCE: f64 = 0.005;
const MAX_MEAN_GAP: f64 = 2.0;
// criterion 7
const MIN_SILHOUETTE: f64 = 0.7;
// criterion 8
const BENCH_POINTS: usize = 100_000;
const BENCH_K_MAX: usize = 30;
const MIN_SPEEDUP: f64 = 10.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn blobs(g: usize, ppc: usize, channels: usize, seed: u64) -> (MultiplexImage, Vec<usize>) {
    synth_blobs(&BlobSpec {
        n_clusters: g,
        points_per_cluster: ppc,
        channels,
        mean_separation: SEPARATION,
        noise_sigma: NOISE_SIGMA,
        seed,
    })
    .expect("blob spec is valid")
}

fn random_net(rng: &mut ChaCha8Rng) -> (usize, usize, Vec<f64>, Matrix) {
    let inputs = rng.random_range(1..=5);
    let hidden = rng.random_range(1..=5);
    let n = rng.random_range(2..=10);
    let params_len = 2 * inputs * hidden + inputs + hidden;
    let params = (0..params_len).map(|_| rng.random_range(-1.5..1.5)).collect();
    let x = (0..n * inputs).map(|_| rng.random::<f64>()).collect();
    (inputs, hidden, params, Matrix::from_vec(n, inputs, x).unwrap())
}

fn random_hyper(rng: &mut ChaCha8Rng) -> SparseAeHyper {
    SparseAeHyper {
        alpha: rng.random_range(0.0..1.0),
        beta: [0.0, 0.1, 100.0][rng.random_range(0..3)],
        gamma: rng.random_range(0.05..0.95),
        max_epochs: 1,
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    let mut components = 0;
    for _ in 0..GRAD_CONFIGS {
        let (inputs, hidden, params, x) = random_net(&mut rng);
        let hyper = random_hyper(&mut rng);
        let layout = AePair::from_params(inputs, hidden, &params).unwrap().layout();
        let mut grad = vec![0.0; params.len()];
        cost_and_gradient(&layout, &params, &x, &hyper, Some(&mut grad)).unwrap();
        let mut p = params.clone();
        for (k, &analytic) in grad.iter().enumerate() {
            p[k] = params[k] + GRAD_STEP;
            let fp = cost_and_gradient(&layout, &p, &x, &hyper, None).unwrap().total;
            p[k] = params[k] - GRAD_STEP;
            let fm = cost_and_gradient(&layout, &p, &x, &hyper, None).unwrap().total;
            p[k] = params[k];
            let numeric = (fp - fm) / (2.0 * GRAD_STEP);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_REL_FLOOR);
            worst = worst.max(rel);
            components += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= GRAD_REL_TOL && secs < GRAD_SECONDS,
        format!("{GRAD_CONFIGS} configurations, {components} components, worst relative error {worst:.2e}, {secs:.2} s"),
    )
}

/// Mean hidden activation per neuron, from a forward pass written out here.
fn mean_activation(pair: &AePair, x: &Matrix) -> Vec<f64> {
    let enc = &pair.encoder;
    let mut sums = vec![0.0; enc.outputs];
    for row in x.rows() {
        for (o, s) in sums.iter_mut().enumerate() {
            let mut a = enc.biases[o];
            for (i, v) in row.iter().enumerate() {
                a += enc.weights[o * enc.inputs + i] * v;
            }
            *s += sigmoid(a);
        }
    }
    sums.iter().map(|s| s / x.nrows() as f64).collect()
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    for _ in 0..DECOMP_CASES {
        let (inputs, hidden, params, x) = random_net(&mut rng);
        let hyper = random_hyper(&mut rng);
        let pair = AePair::from_params(inputs, hidden, &params).unwrap();
        let layout: NetLayout = pair.layout();
        let full = cost_and_gradient(&layout, &params, &x, &hyper, None).unwrap().total;
        let plain = SparseAeHyper {
            alpha: 0.0,
            beta: 0.0,
            ..hyper
        };
        let bare = cost_and_gradient(&layout, &params, &x, &plain, None).unwrap().total;
        let omega_theta = l2_penalty(&[pair.encoder.clone(), pair.decoder.clone()]);
        let omega_gamma = kl_sparsity(hyper.gamma, &mean_activation(&pair, &x));
        let gap = ((full - bare) - (hyper.alpha * omega_theta + hyper.beta * omega_gamma)).abs();
        worst = worst.max(gap);
    }
    outcome(worst <= DECOMP_TOL, format!("{DECOMP_CASES} random nets, worst |difference| {worst:.2e}"))
}

fn random_embedding(rng: &mut ChaCha8Rng) -> Matrix {
    let n = rng.random_range(1..=MAX_EMBEDDING_ROWS);
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let mut p = [0.0; 3];
        for v in &mut p {
            *v = match rng.random_range(0..4) {
                // exact bin edges, both ends included
                0 => rng.random_range(0..=10) as f64 / 10.0,
                _ => rng.random::<f64>(),
            };
        }
        rows.push(p);
    }
    Matrix::from_rows(&rows)
}

/// Does coordinate `z` fall in bin `b` of `bins`? The last bin also takes `z = 1`.
fn in_bin(z: f64, b: usize, bins: usize) -> bool {
    let t = z * bins as f64;
    (b as f64 <= t && t < (b + 1) as f64) || (b == bins - 1 && t == bins as f64)
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let bins = 10;
    let mut mismatches = 0;
    let mut points = 0;
    for _ in 0..ORACLE_CASES {
        let z = random_embedding(&mut rng);
        points += z.nrows();
        let hist = histogram(&z, bins).unwrap();
        let mut sum = 0;
        for i in 0..bins {
            for j in 0..bins {
                for k in 0..bins {
                    let count = z
                        .rows()
                        .filter(|p| in_bin(p[0], i, bins) && in_bin(p[1], j, bins) && in_bin(p[2], k, bins))
                        .count() as u64;
                    let flat = hist.flat_index(&[i, j, k]);
                    if hist.counts()[flat] != count || hist.coords(flat) != [i, j, k] {
                        mismatches += 1;
                    }
                    sum += count;
                }
            }
        }
        if sum != z.nrows() as u64 || hist.total() != z.nrows() as u64 {
            mismatches += 1;
        }
    }
    outcome(
        mismatches == 0,
        format!("{ORACLE_CASES} embeddings, {points} points, {mismatches} mismatching bins or totals"),
    )
}

/// Linear interpolation between order statistics of a sorted slice.
fn reference_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

struct ReferenceEstimate {
    outliers: Vec<usize>,
    retained: Vec<usize>,
}

fn reference_estimate(counts: &[u64], floor_pct: f64) -> ReferenceEstimate {
    let mut all: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q1 = reference_quantile(&all, 0.25);
    let q3 = reference_quantile(&all, 0.75);
    let fence = q3 + 1.5 * (q3 - q1);
    let outliers: Vec<usize> = (0..counts.len()).filter(|&b| counts[b] as f64 > fence).collect();
    if outliers.is_empty() {
        return ReferenceEstimate {
            outliers,
            retained: Vec::new(),
        };
    }
    let mut heavy: Vec<f64> = outliers.iter().map(|&b| counts[b] as f64).collect();
    heavy.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let cut = reference_quantile(&heavy, floor_pct / 100.0);
    let retained = outliers.iter().copied().filter(|&b| counts[b] as f64 >= cut).collect();
    ReferenceEstimate { outliers, retained }
}

fn random_counts(rng: &mut ChaCha8Rng, case: usize) -> Vec<u64> {
    let cells = 1000;
    match case % 5 {
        // every bin equal
        0 => vec![rng.random_range(0..50); cells],
        // zero background with a few heavy bins: IQR = 0
        1 => {
            let mut c = vec![0; cells];
            for _ in 0..rng.random_range(1..20) {
                c[rng.random_range(0..cells)] = rng.random_range(1..5000);
            }
            c
        }
        // constant background with heavy bins: IQR = 0, non-zero quartiles
        2 => {
            let base = rng.random_range(1..10);
            let mut c = vec![base; cells];
            for _ in 0..rng.random_range(0..30) {
                c[rng.random_range(0..cells)] = base + rng.random_range(0..3000);
            }
            c
        }
        // heavy-tailed counts
        3 => (0..cells)
            .map(|_| {
                let u: f64 = rng.random();
                (u.powi(8) * 5000.0) as u64
            })
            .collect(),
        _ => (0..cells).map(|_| rng.random_range(0..100)).collect(),
    }
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut mismatches = 0;
    let mut homogeneous = 0;
    for case in 0..ORACLE_CASES {
        let counts = random_counts(&mut rng, case);
        let floor_pct = if case % 7 == 0 { rng.random_range(0.0..=100.0) } else { 20.0 };
        let hist = DensityHistogram::from_counts(10, 3, counts.clone()).unwrap();
        let got = estimate_k(&hist, floor_pct).unwrap();
        let want = reference_estimate(&counts, floor_pct);
        let got_outliers: Vec<usize> = got.outliers.iter().map(|o| o.0).collect();
        let got_retained: Vec<usize> = got.retained.iter().map(|o| o.0).collect();
        let want_k = (!want.outliers.is_empty()).then_some(want.retained.len());
        if got_outliers != want.outliers
            || got_retained != want.retained
            || got.k != want_k
            || got.homogeneous != want.outliers.is_empty()
        {
            mismatches += 1;
        }
        homogeneous += usize::from(got.homogeneous);
    }
    outcome(
        mismatches == 0,
        format!("{ORACLE_CASES} histograms ({homogeneous} homogeneous), {mismatches} disagreements with the reference"),
    )
}

struct Run {
    groups: usize,
    seed: u64,
    k_density: Option<usize>,
    k_inflection: Option<usize>,
    silhouette: Option<f64>,
}

impl Run {
    fn recovered(&self) -> bool {
        self.k_density.is_some_and(|k| k.abs_diff(self.groups) <= K_WINDOW)
    }
}

struct Recovery {
    runs: Vec<Run>,
    pipeline_seconds: f64,
}

fn recovery_runs() -> Recovery {
    let mut runs = Vec::new();
    let mut pipeline_seconds = 0.0;
    for &g in &GROUPS {
        for seed in 0..SEEDS_PER_GROUP {
            let (img, _) = blobs(g, POINTS_PER_RUN / g, CHANNELS, seed);
            let start = Instant::now();
            let trained = train(
                &img,
                &TrainSettings {
                    max_epochs: TRAIN_EPOCHS,
                    train_subsample: Some(TRAIN_ROWS),
                    seed,
                    ..TrainSettings::default()
                },
            )
            .unwrap();
            let settings = AnalysisSettings {
                seed,
                ..AnalysisSettings::default()
            };
            let analysis = analyze(&trained.model, &img, &settings).unwrap();
            pipeline_seconds += start.elapsed().as_secs_f64();

            let opts = KMeansOptions {
                seed,
                ..KMeansOptions::default()
            };
            let curve = par_ssd_sweep(&analysis.embedding, BENCH_K_MAX, INFLECTION_SUBSAMPLE, &opts).unwrap();
            let run = Run {
                groups: g,
                seed,
                k_density: analysis.estimate.k,
                k_inflection: inflection_k(&curve, INFLECTION_TOLERANCE, InflectionMode::Tolerance).unwrap(),
                silhouette: analysis.silhouette.map(|s| s.median),
            };
            eprintln!(
                "  G={g} seed={seed}: k_density={:?} k_inflection={:?} silhouette={:?}",
                run.k_density, run.k_inflection, run.silhouette
            );
            runs.push(run);
        }
    }
    Recovery {
        runs,
        pipeline_seconds,
    }
}

fn criterion_5(rec: &Recovery) -> Outcome {
    let hits = rec.runs.iter().filter(|r| r.recovered()).count();
    let rate = hits as f64 / rec.runs.len() as f64;
    let per_group: Vec<String> = GROUPS
        .iter()
        .map(|&g| {
            let h = rec.runs.iter().filter(|r| r.groups == g && r.recovered()).count();
            format!("G={g}:{h}/{SEEDS_PER_GROUP}")
        })
        .collect();
    let misses: Vec<String> = rec
        .runs
        .iter()
        .filter(|r| !r.recovered())
        .map(|r| format!("G={} seed={} k={:?}", r.groups, r.seed, r.k_density))
        .collect();
    outcome(
        rate >= MIN_HIT_RATE && rec.pipeline_seconds < RECOVERY_SECONDS,
        format!(
            "{hits}/{} within +-{K_WINDOW} ({:.1}%), [{}], pipeline time {:.0} s; misses: [{}]",
            rec.runs.len(),
            100.0 * rate,
            per_group.join(" "),
            rec.pipeline_seconds,
            misses.join(", ")
        ),
    )
}

fn criterion_6(rec: &Recovery) -> Outcome {
    let gaps: Vec<f64> = rec
        .runs
        .iter()
        .filter_map(|r| Some(r.k_density?.abs_diff(r.k_inflection?) as f64))
        .collect();
    let undefined = rec.runs.len() - gaps.len();
    let mean = gaps.iter().sum::<f64>() / gaps.len().max(1) as f64;
    outcome(
        !gaps.is_empty() && mean <= MAX_MEAN_GAP,
        format!(
            "mean |k_density - k_inflection| = {mean:.2} over {} runs ({undefined} without both estimates)",
            gaps.len()
        ),
    )
}

fn criterion_7(rec: &Recovery) -> Outcome {
    let recovered: Vec<&Run> = rec.runs.iter().filter(|r| r.recovered()).collect();
    let low: Vec<String> = recovered
        .iter()
        .filter(|r| r.silhouette.is_none_or(|s| s < MIN_SILHOUETTE))
        .map(|r| format!("G={} seed={} {:?}", r.groups, r.seed, r.silhouette))
        .collect();
    let lowest = recovered
        .iter()
        .filter_map(|r| r.silhouette)
        .fold(f64::INFINITY, f64::min);
    outcome(
        !recovered.is_empty() && low.is_empty(),
        format!(
            "{} recovered runs, lowest median silhouette {lowest:.3}; below {MIN_SILHOUETTE}: [{}]",
            recovered.len(),
            low.join(", ")
        ),
    )
}

fn criterion_8() -> Outcome {
    let (img, _) = blobs(5, BENCH_POINTS / 5, CHANNELS, 808);
    let trained = train(
        &img,
        &TrainSettings {
            max_epochs: TRAIN_EPOCHS,
            train_subsample: Some(TRAIN_ROWS),
            seed: 808,
            ..TrainSettings::default()
        },
    )
    .unwrap();
    let settings = AnalysisSettings {
        k_max: BENCH_K_MAX,
        seed: 808,
        ..AnalysisSettings::default()
    };
    let r = benchmark(&trained.model, &img, &settings).unwrap();
    outcome(
        r.speedup >= MIN_SPEEDUP,
        format!(
            "N={}, density path {:.3} s (embed {:.3}, histogram {:.4}, outliers {:.5}), SSD sweep on {} rows {:.2} s, speedup {:.0}x",
            r.pixels, r.density_total, r.embedding, r.density_estimation, r.outlier_detection, r.ssd_subsample, r.ssd_total, r.speedup
        ),
    )
}

fn transfer_run(dir: &Path, tag: &str, a: &MultiplexImage, b: &MultiplexImage) -> Matrix {
    let trained = train(
        a,
        &TrainSettings {
            max_epochs: 200,
            train_subsample: Some(TRAIN_ROWS),
            seed: 909,
            ..TrainSettings::default()
        },
    )
    .unwrap();
    let path = dir.join(format!("{tag}.emd"));
    save_model(&path, &trained.model).unwrap();
    let loaded = load_model(&path).unwrap();
    let z = loaded.embed(b).unwrap();
    assert_eq!(z, trained.model.embed(b).unwrap());
    z
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let (a, _) = blobs(4, 1_000, CHANNELS, 91);
    let (b, _) = blobs(6, 1_000, CHANNELS, 92);
    let z1 = transfer_run(dir.path(), "first", &a, &b);
    let z2 = transfer_run(dir.path(), "second", &a, &b);
    let identical = z1.as_slice().iter().zip(z2.as_slice()).all(|(x, y)| x.to_bits() == y.to_bits());
    let inside = z1.as_slice().iter().all(|&v| v > 0.0 && v < 1.0);
    let (lo, hi) = z1
        .as_slice()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    outcome(
        identical && inside && z1.nrows() == b.pixels(),
        format!("{} rows, bit-identical: {identical}, range [{lo:e}, {hi}]", z1.nrows()),
    )
}

fn criterion_10() -> Outcome {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let ppm_fixture = std::fs::read(fixtures.join("white_1x1.ppm")).unwrap();
    let pgm_fixture = std::fs::read(fixtures.join("black_2x1.pgm")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_ppm(&dir.path().join("w.ppm"), 1, 1, &[255, 255, 255]).unwrap();
    write_pgm(&dir.path().join("b.pgm"), 2, 1, &[0, 0]).unwrap();
    let files = std::fs::read(dir.path().join("w.ppm")).unwrap() == ppm_fixture
        && std::fs::read(dir.path().join("b.pgm")).unwrap() == pgm_fixture
        && encode_ppm(1, 1, &[255, 255, 255]).unwrap() == ppm_fixture
        && encode_pgm(2, 1, &[0, 0]).unwrap() == pgm_fixture;

    let z = Matrix::from_rows(&[[0.0, 0.0, 0.0], [1.0, 1.0, 1.0], [0.5, 0.5, 0.5]]);
    let rgb = pseudo_rgb(&z, 1, 3).unwrap();
    let pixels = rgb == [0, 0, 0, 255, 255, 255, 128, 128, 128];
    outcome(
        files && pixels,
        format!("netpbm fixtures byte-exact: {files}, pseudo-RGB endpoints and rounding: {pixels}"),
    )
}

fn main() {
    let mut failed = 0;
    let mut report = |n: usize, name: &str, f: &dyn Fn() -> Outcome| {
        let start = Instant::now();
        let o = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        failed += usize::from(!o.pass);
        println!(
            "criterion {n:>2} {name}: {} ({}; {:.1} s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    };

    report(1, "gradient correctness", &criterion_1);
    report(2, "cost decomposition", &criterion_2);
    report(3, "histogram oracle", &criterion_3);
    report(4, "outlier-rule oracle", &criterion_4);
    let rec = recovery_runs();
    report(5, "k recovery", &|| criterion_5(&rec));
    report(6, "estimator agreement", &|| criterion_6(&rec));
    report(7, "silhouette sanity", &|| criterion_7(&rec));
    report(8, "speedup", &criterion_8);
    report(9, "determinism and transfer", &criterion_9);
    report(10, "image outputs", &criterion_10);

    println!("acceptance: {} of 10 criteria passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

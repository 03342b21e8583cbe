use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::network::{flatten, unflatten};
use super::{cost_and_gradient, scg_minimize, AePair, NetLayout, ScgOptions, SparseAeHyper, StopReason};
use crate::data::{MultiplexImage, NormalizationSpec};
use crate::{Error, Matrix, Result};

/// Hidden widths of the three stacked stages.
pub const DEFAULT_LAYER_SIZES: [usize; 3] = [15, 10, 3];

#[derive(Debug, Clone, PartialEq)]
pub struct StackConfig {
    pub layer_sizes: Vec<usize>,
    /// One entry per stage.
    pub hypers: Vec<SparseAeHyper>,
    pub seed: u64,
    /// Iterations of end-to-end training of the composed network after the
    /// layer-wise stages. Zero disables it.
    pub fine_tune_epochs: usize,
    pub scg: ScgOptions,
}

impl StackConfig {
    /// Same hyperparameters for every stage.
    pub fn uniform(layer_sizes: &[usize], hyper: SparseAeHyper, seed: u64) -> Self {
        Self {
            layer_sizes: layer_sizes.to_vec(),
            hypers: vec![hyper; layer_sizes.len()],
            seed,
            fine_tune_epochs: 0,
            scg: ScgOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.is_empty() || self.layer_sizes.contains(&0) {
            return Err(Error::InvalidParameter(format!(
                "layer sizes must be non-empty and positive, got {:?}",
                self.layer_sizes
            )));
        }
        if self.hypers.len() != self.layer_sizes.len() {
            return Err(Error::DimensionMismatch {
                what: "per-stage hyperparameters",
                expected: self.layer_sizes.len(),
                found: self.hypers.len(),
            });
        }
        self.hypers.iter().try_for_each(SparseAeHyper::validate)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageLog {
    pub stage: usize,
    pub inputs: usize,
    pub hidden: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
    pub stop: StopReason,
    /// Cost after every optimizer iteration.
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingLog {
    pub stages: Vec<StageLog>,
    pub fine_tune: Option<StageLog>,
}

/// A trained stack: encoders applied first to last, decoders last to first.
#[derive(Debug, Clone, PartialEq)]
pub struct DsaModel {
    stages: Vec<AePair>,
    hypers: Vec<SparseAeHyper>,
    normalization: NormalizationSpec,
}

impl DsaModel {
    pub fn new(
        stages: Vec<AePair>,
        hypers: Vec<SparseAeHyper>,
        normalization: NormalizationSpec,
    ) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::InvalidParameter("model has no stages".into()));
        }
        if hypers.len() != stages.len() {
            return Err(Error::DimensionMismatch {
                what: "per-stage hyperparameters",
                expected: stages.len(),
                found: hypers.len(),
            });
        }
        for (i, s) in stages.iter().enumerate() {
            let consistent = s.encoder.is_consistent()
                && s.decoder.is_consistent()
                && s.decoder.inputs == s.encoder.outputs
                && s.decoder.outputs == s.encoder.inputs;
            if !consistent {
                return Err(Error::InvalidParameter(format!("stage {i} has inconsistent shapes or non-finite parameters")));
            }
            if i > 0 && stages[i - 1].hidden() != s.inputs() {
                return Err(Error::DimensionMismatch {
                    what: "stage chaining",
                    expected: stages[i - 1].hidden(),
                    found: s.inputs(),
                });
            }
        }
        normalization.validate()?;
        if normalization.channels() != stages[0].inputs() {
            return Err(Error::DimensionMismatch {
                what: "normalization channels",
                expected: stages[0].inputs(),
                found: normalization.channels(),
            });
        }
        Ok(Self {
            stages,
            hypers,
            normalization,
        })
    }

    /// The model a training run starts from: freshly initialized weights, no optimization.
    pub fn initialized(
        inputs: usize,
        normalization: NormalizationSpec,
        config: &StackConfig,
    ) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut stages = Vec::with_capacity(config.layer_sizes.len());
        let mut width = inputs;
        for &h in &config.layer_sizes {
            stages.push(AePair::new(width, h, &mut rng));
            width = h;
        }
        Self::new(stages, config.hypers.clone(), normalization)
    }

    pub fn stages(&self) -> &[AePair] {
        &self.stages
    }

    pub fn hypers(&self) -> &[SparseAeHyper] {
        &self.hypers
    }

    pub fn normalization(&self) -> &NormalizationSpec {
        &self.normalization
    }

    pub fn input_dim(&self) -> usize {
        self.stages[0].inputs()
    }

    pub fn latent_dim(&self) -> usize {
        self.stages[self.stages.len() - 1].hidden()
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        self.stages.iter().map(AePair::hidden).collect()
    }

    /// Maps normalized rows to the bottleneck.
    pub fn encode(&self, x: &Matrix) -> Result<Matrix> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "channels",
                expected: self.input_dim(),
                found: x.ncols(),
            });
        }
        let widest = self.stages.iter().map(AePair::hidden).max().unwrap_or(0);
        let mut out = Matrix::zeros(x.nrows(), self.latent_dim());
        let (mut a, mut b) = (vec![0.0; widest], vec![0.0; widest]);
        for i in 0..x.nrows() {
            let mut input: &[f64] = x.row(i);
            for (s, stage) in self.stages.iter().enumerate() {
                let h = stage.hidden();
                if s == self.stages.len() - 1 {
                    stage.encoder.forward_row(input, out.row_mut(i));
                } else {
                    stage.encoder.forward_row(input, &mut a[..h]);
                    core::mem::swap(&mut a, &mut b);
                    input = &b[..h];
                }
            }
        }
        Ok(out)
    }

    /// Maps bottleneck rows back to normalized channel space.
    pub fn decode(&self, z: &Matrix) -> Result<Matrix> {
        if z.ncols() != self.latent_dim() {
            return Err(Error::DimensionMismatch {
                what: "latent width",
                expected: self.latent_dim(),
                found: z.ncols(),
            });
        }
        let mut x = z.clone();
        for stage in self.stages.iter().rev() {
            x = stage.decoder.forward(&x)?;
        }
        Ok(x)
    }

    /// Normalizes raw image data with the stored spec, then encodes it.
    pub fn embed(&self, img: &MultiplexImage) -> Result<Matrix> {
        self.encode(&self.normalization.apply(img.data())?)
    }
}

/// `(1/N) ||X - X'||_F^2`
pub fn reconstruction_mse(x: &Matrix, reconstructed: &Matrix) -> Result<f64> {
    if x.nrows() != reconstructed.nrows() || x.ncols() != reconstructed.ncols() {
        return Err(Error::DimensionMismatch {
            what: "reconstruction shape",
            expected: x.nrows() * x.ncols(),
            found: reconstructed.nrows() * reconstructed.ncols(),
        });
    }
    if x.nrows() == 0 {
        return Ok(0.0);
    }
    let sse: f64 = x
        .as_slice()
        .iter()
        .zip(reconstructed.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sse / x.nrows() as f64)
}

/// Trains each stage on the encoding produced by the stages before it.
/// `x` must already be normalized to `[0, 1]`; `normalization` is stored in the
/// model for use on unseen data.
pub fn train_stacked(
    x: &Matrix,
    normalization: NormalizationSpec,
    config: &StackConfig,
) -> Result<(DsaModel, TrainingLog)> {
    config.validate()?;
    if x.nrows() < 2 {
        return Err(Error::InvalidParameter(format!(
            "training needs at least 2 rows, got {}",
            x.nrows()
        )));
    }
    let init = DsaModel::initialized(x.ncols(), normalization, config)?;
    let mut log = TrainingLog::default();
    let mut stages = Vec::with_capacity(init.stages.len());
    let mut input = x.clone();

    for (s, (pair, hyper)) in init.stages.iter().zip(&config.hypers).enumerate() {
        let layout = pair.layout();
        let opts = config.scg.clone().with_max_iters(hyper.max_epochs);
        let objective = |w: &[f64], g: &mut [f64]| {
            cost_and_gradient(&layout, w, &input, hyper, Some(g))
                .ok()
                .map(|t| t.total)
        };
        let out = scg_minimize(objective, pair.to_params(), &opts)
            .map_err(|_| Error::Divergence { stage: s })?;
        let trained = AePair::from_params(pair.inputs(), pair.hidden(), &out.params)?;
        log.stages.push(StageLog {
            stage: s,
            inputs: pair.inputs(),
            hidden: pair.hidden(),
            initial_cost: out.initial_cost,
            final_cost: out.cost,
            iterations: out.iterations,
            stop: out.stop,
            history: out.history,
        });
        input = trained.encoder.forward(&input)?;
        stages.push(trained);
    }

    if config.fine_tune_epochs > 0 {
        let (tuned, stage_log) = fine_tune(stages, x, config)?;
        stages = tuned;
        log.fine_tune = Some(stage_log);
    }

    let model = DsaModel::new(stages, config.hypers.clone(), init.normalization)?;
    Ok((model, log))
}

/// End-to-end training of the unrolled network. Weight decay and sparsity use
/// the first stage's coefficients; every encoder output is a sparse layer.
fn fine_tune(stages: Vec<AePair>, x: &Matrix, config: &StackConfig) -> Result<(Vec<AePair>, StageLog)> {
    let depth = stages.len();
    let mut widths = vec![stages[0].inputs()];
    widths.extend(stages.iter().map(AePair::hidden));
    widths.extend(stages.iter().rev().map(AePair::inputs));
    let sparse: Vec<bool> = (0..2 * depth).map(|l| l < depth).collect();
    let layout = NetLayout::new(&widths, &sparse);

    let mut layers: Vec<&super::Dense> = stages.iter().map(|s| &s.encoder).collect();
    layers.extend(stages.iter().rev().map(|s| &s.decoder));
    let params = flatten(&layers);

    let hyper = config.hypers[0];
    let opts = config.scg.clone().with_max_iters(config.fine_tune_epochs);
    let objective = |w: &[f64], g: &mut [f64]| {
        cost_and_gradient(&layout, w, x, &hyper, Some(g)).ok().map(|t| t.total)
    };
    let out = scg_minimize(objective, params, &opts).map_err(|_| Error::Divergence { stage: depth })?;

    let mut dense = unflatten(&layout, &out.params)?;
    let decoders: Vec<_> = dense.split_off(depth).into_iter().rev().collect();
    let tuned = dense
        .into_iter()
        .zip(decoders)
        .map(|(encoder, decoder)| AePair { encoder, decoder })
        .collect();
    let log = StageLog {
        stage: depth,
        inputs: widths[0],
        hidden: widths[depth],
        initial_cost: out.initial_cost,
        final_cost: out.cost,
        iterations: out.iterations,
        stop: out.stop,
        history: out.history,
    };
    Ok((tuned, log))
}

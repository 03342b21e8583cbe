use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{half_sum_squares, kl_term, kl_term_derivative, sigmoid, SparseAeHyper};
use crate::matrix::{axpy, dot};
use crate::{Error, Matrix, Result};

/// Fully connected sigmoid layer; `weights` is `outputs x inputs`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    /// Glorot-uniform weights in `[-r, r]`, `r = sqrt(6 / (inputs + outputs))`, zero biases.
    pub fn xavier<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let r = libm::sqrt(6.0 / (inputs + outputs) as f64);
        let weights = (0..inputs * outputs)
            .map(|_| rng.random_range(-r..=r))
            .collect();
        Self {
            inputs,
            outputs,
            weights,
            biases: vec![0.0; outputs],
        }
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    pub fn is_consistent(&self) -> bool {
        self.weights.len() == self.inputs * self.outputs
            && self.biases.len() == self.outputs
            && self.weights.iter().chain(&self.biases).all(|v| v.is_finite())
    }

    #[inline]
    pub fn forward_row(&self, input: &[f64], out: &mut [f64]) {
        forward_row(&self.weights, &self.biases, self.inputs, input, out);
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.ncols() != self.inputs {
            return Err(Error::DimensionMismatch {
                what: "layer input width",
                expected: self.inputs,
                found: x.ncols(),
            });
        }
        let mut out = Matrix::zeros(x.nrows(), self.outputs);
        for i in 0..x.nrows() {
            self.forward_row(x.row(i), out.row_mut(i));
        }
        Ok(out)
    }
}

#[inline]
fn forward_row(weights: &[f64], biases: &[f64], inputs: usize, input: &[f64], out: &mut [f64]) {
    for (o, slot) in out.iter_mut().enumerate() {
        let w = &weights[o * inputs..(o + 1) * inputs];
        *slot = sigmoid(biases[o] + dot(w, input));
    }
}

/// One autoencoder stage: `inputs -> hidden -> inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct AePair {
    pub encoder: Dense,
    pub decoder: Dense,
}

impl AePair {
    pub fn new<R: Rng + ?Sized>(inputs: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            encoder: Dense::xavier(inputs, hidden, rng),
            decoder: Dense::xavier(hidden, inputs, rng),
        }
    }

    pub fn inputs(&self) -> usize {
        self.encoder.inputs
    }

    pub fn hidden(&self) -> usize {
        self.encoder.outputs
    }

    pub fn layout(&self) -> NetLayout {
        NetLayout::new(&[self.inputs(), self.hidden(), self.inputs()], &[true, false])
    }

    pub fn to_params(&self) -> Vec<f64> {
        flatten(&[&self.encoder, &self.decoder])
    }

    pub fn from_params(inputs: usize, hidden: usize, params: &[f64]) -> Result<Self> {
        let mut layers = unflatten(
            &NetLayout::new(&[inputs, hidden, inputs], &[true, false]),
            params,
        )?;
        let decoder = layers.pop().expect("two layers");
        let encoder = layers.pop().expect("two layers");
        Ok(Self { encoder, decoder })
    }
}

/// Shape of a feed-forward sigmoid network over a flat parameter vector laid
/// out as `[W0, b0, W1, b1, ...]`. `sparse[l]` marks layers whose output mean
/// activation is pulled towards the sparsity target.
#[derive(Debug, Clone, PartialEq)]
pub struct NetLayout {
    shapes: Vec<(usize, usize)>,
    sparse: Vec<bool>,
    offsets: Vec<usize>,
}

impl NetLayout {
    /// `widths` lists the input width followed by each layer's output width.
    pub fn new(widths: &[usize], sparse: &[bool]) -> Self {
        assert!(widths.len() >= 2, "a network needs at least one layer");
        assert_eq!(sparse.len(), widths.len() - 1);
        let shapes: Vec<(usize, usize)> = widths.windows(2).map(|w| (w[0], w[1])).collect();
        let mut offsets = Vec::with_capacity(shapes.len() + 1);
        let mut acc = 0;
        for &(i, o) in &shapes {
            offsets.push(acc);
            acc += i * o + o;
        }
        offsets.push(acc);
        Self {
            shapes,
            sparse: sparse.to_vec(),
            offsets,
        }
    }

    pub fn num_layers(&self) -> usize {
        self.shapes.len()
    }

    pub fn num_params(&self) -> usize {
        *self.offsets.last().expect("non-empty")
    }

    pub fn input_width(&self) -> usize {
        self.shapes[0].0
    }

    pub fn output_width(&self) -> usize {
        self.shapes[self.shapes.len() - 1].1
    }

    fn weight_range(&self, l: usize) -> core::ops::Range<usize> {
        let (i, o) = self.shapes[l];
        self.offsets[l]..self.offsets[l] + i * o
    }

    fn bias_range(&self, l: usize) -> core::ops::Range<usize> {
        let (i, o) = self.shapes[l];
        self.offsets[l] + i * o..self.offsets[l + 1]
    }
}

pub(crate) fn flatten(layers: &[&Dense]) -> Vec<f64> {
    let mut out = Vec::with_capacity(layers.iter().map(|l| l.num_params()).sum());
    for l in layers {
        out.extend_from_slice(&l.weights);
        out.extend_from_slice(&l.biases);
    }
    out
}

pub(crate) fn unflatten(layout: &NetLayout, params: &[f64]) -> Result<Vec<Dense>> {
    if params.len() != layout.num_params() {
        return Err(Error::DimensionMismatch {
            what: "parameter vector",
            expected: layout.num_params(),
            found: params.len(),
        });
    }
    Ok((0..layout.num_layers())
        .map(|l| {
            let (inputs, outputs) = layout.shapes[l];
            Dense {
                inputs,
                outputs,
                weights: params[layout.weight_range(l)].to_vec(),
                biases: params[layout.bias_range(l)].to_vec(),
            }
        })
        .collect())
}

/// Terms of the regularized reconstruction cost, all from one forward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostTerms {
    /// `(1/N) ||X - X'||_F^2`
    pub reconstruction: f64,
    /// Half sum of squared weights.
    pub weight_penalty: f64,
    /// Summed KL divergence of the sparse layers.
    pub sparsity_penalty: f64,
    pub total: f64,
}

/// Evaluates the autoencoder cost of the network described by `layout` and
/// `params` on inputs `x` (which are also the reconstruction targets) and,
/// when `grad` is given, writes the analytic gradient into it.
///
/// Returns [`Error::NonFiniteObjective`] when the cost is not finite.
pub fn cost_and_gradient(
    layout: &NetLayout,
    params: &[f64],
    x: &Matrix,
    hyper: &SparseAeHyper,
    grad: Option<&mut [f64]>,
) -> Result<CostTerms> {
    if params.len() != layout.num_params() {
        return Err(Error::DimensionMismatch {
            what: "parameter vector",
            expected: layout.num_params(),
            found: params.len(),
        });
    }
    if x.ncols() != layout.input_width() || x.ncols() != layout.output_width() {
        return Err(Error::DimensionMismatch {
            what: "autoencoder input width",
            expected: layout.input_width(),
            found: x.ncols(),
        });
    }
    let n = x.nrows();
    if n == 0 {
        return Err(Error::InvalidParameter("empty training batch".into()));
    }
    let nf = n as f64;
    let layers = layout.num_layers();

    // forward pass, keeping every activation
    let mut acts: Vec<Vec<f64>> = Vec::with_capacity(layers);
    for l in 0..layers {
        let (inputs, outputs) = layout.shapes[l];
        let w = &params[layout.weight_range(l)];
        let b = &params[layout.bias_range(l)];
        let mut a = vec![0.0; n * outputs];
        {
            let prev: &[f64] = if l == 0 { x.as_slice() } else { &acts[l - 1] };
            for i in 0..n {
                forward_row(
                    w,
                    b,
                    inputs,
                    &prev[i * inputs..(i + 1) * inputs],
                    &mut a[i * outputs..(i + 1) * outputs],
                );
            }
        }
        acts.push(a);
    }

    let output = &acts[layers - 1];
    let reconstruction = output
        .iter()
        .zip(x.as_slice())
        .map(|(a, t)| (a - t) * (a - t))
        .sum::<f64>()
        / nf;

    let weight_penalty: f64 = (0..layers)
        .map(|l| half_sum_squares(&params[layout.weight_range(l)]))
        .sum();

    let mut mean_acts: Vec<Option<Vec<f64>>> = vec![None; layers];
    let mut sparsity_penalty = 0.0;
    for l in 0..layers {
        if !layout.sparse[l] {
            continue;
        }
        let width = layout.shapes[l].1;
        let mut means = vec![0.0; width];
        for row in acts[l].chunks_exact(width) {
            axpy(1.0, row, &mut means);
        }
        for m in &mut means {
            *m /= nf;
        }
        sparsity_penalty += means.iter().map(|&g| kl_term(hyper.gamma, g)).sum::<f64>();
        mean_acts[l] = Some(means);
    }

    let total = reconstruction + hyper.alpha * weight_penalty + hyper.beta * sparsity_penalty;
    let terms = CostTerms {
        reconstruction,
        weight_penalty,
        sparsity_penalty,
        total,
    };
    if !total.is_finite() {
        return Err(Error::NonFiniteObjective);
    }

    let Some(grad) = grad else {
        return Ok(terms);
    };
    assert_eq!(grad.len(), params.len(), "gradient buffer length");
    grad.fill(0.0);

    // dF/dA for the output layer
    let mut d_act: Vec<f64> = output
        .iter()
        .zip(x.as_slice())
        .map(|(a, t)| 2.0 * (a - t) / nf)
        .collect();

    for l in (0..layers).rev() {
        let (inputs, outputs) = layout.shapes[l];
        if let Some(means) = &mean_acts[l] {
            let extra: Vec<f64> = means
                .iter()
                .map(|&g| hyper.beta * kl_term_derivative(hyper.gamma, g) / nf)
                .collect();
            for row in d_act.chunks_exact_mut(outputs) {
                axpy(1.0, &extra, row);
            }
        }
        // through the sigmoid: delta = dA * a (1 - a)
        let delta: Vec<f64> = d_act
            .iter()
            .zip(&acts[l])
            .map(|(d, a)| d * a * (1.0 - a))
            .collect();

        let prev: &[f64] = if l == 0 { x.as_slice() } else { &acts[l - 1] };
        let w = &params[layout.weight_range(l)];
        let (gw_start, gb_range) = (layout.weight_range(l).start, layout.bias_range(l));
        {
            let gw = &mut grad[gw_start..gw_start + inputs * outputs];
            for i in 0..n {
                let input = &prev[i * inputs..(i + 1) * inputs];
                let d = &delta[i * outputs..(i + 1) * outputs];
                for (o, &dv) in d.iter().enumerate() {
                    if dv != 0.0 {
                        axpy(dv, input, &mut gw[o * inputs..(o + 1) * inputs]);
                    }
                }
            }
            axpy(hyper.alpha, w, gw);
        }
        {
            let gb = &mut grad[gb_range];
            for d in delta.chunks_exact(outputs) {
                axpy(1.0, d, gb);
            }
        }

        if l > 0 {
            let mut next = vec![0.0; n * inputs];
            for i in 0..n {
                let d = &delta[i * outputs..(i + 1) * outputs];
                let out = &mut next[i * inputs..(i + 1) * inputs];
                for (o, &dv) in d.iter().enumerate() {
                    if dv != 0.0 {
                        axpy(dv, &w[o * inputs..(o + 1) * inputs], out);
                    }
                }
            }
            d_act = next;
        }
    }
    Ok(terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_case(rng: &mut ChaCha8Rng, widths: &[usize], n: usize) -> (NetLayout, Vec<f64>, Matrix) {
        let sparse: Vec<bool> = (0..widths.len() - 1).map(|l| l + 1 < widths.len() - 1 || widths.len() == 2).collect();
        let layout = NetLayout::new(widths, &sparse);
        let params: Vec<f64> = (0..layout.num_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let data: Vec<f64> = (0..n * widths[0]).map(|_| rng.random::<f64>()).collect();
        (layout, params, Matrix::from_vec(n, widths[0], data).unwrap())
    }

    /// Central differences with step `h`, independent of the backward pass.
    fn numeric_gradient(layout: &NetLayout, params: &[f64], x: &Matrix, hyper: &SparseAeHyper, h: f64) -> Vec<f64> {
        let mut p = params.to_vec();
        (0..params.len())
            .map(|k| {
                let orig = p[k];
                p[k] = orig + h;
                let fp = cost_and_gradient(layout, &p, x, hyper, None).unwrap().total;
                p[k] = orig - h;
                let fm = cost_and_gradient(layout, &p, x, hyper, None).unwrap().total;
                p[k] = orig;
                (fp - fm) / (2.0 * h)
            })
            .collect()
    }

    fn assert_gradient_matches(layout: &NetLayout, params: &[f64], x: &Matrix, hyper: &SparseAeHyper) {
        let mut g = vec![0.0; params.len()];
        cost_and_gradient(layout, params, x, hyper, Some(&mut g)).unwrap();
        let num = numeric_gradient(layout, params, x, hyper, 1e-6);
        for (k, (a, b)) in g.iter().zip(&num).enumerate() {
            let rel = (a - b).abs() / a.abs().max(b.abs()).max(1e-4);
            assert!(rel <= 1e-5, "component {k}: analytic {a} numeric {b} rel {rel}");
        }
    }

    #[test]
    fn gradient_single_stage() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (layout, params, x) = random_case(&mut rng, &[3, 2, 3], 5);
        for hyper in [
            SparseAeHyper { alpha: 0.0, beta: 0.0, gamma: 0.5, max_epochs: 1 },
            SparseAeHyper { alpha: 0.3, beta: 0.1, gamma: 0.2, max_epochs: 1 },
            SparseAeHyper { alpha: 1e-4, beta: 100.0, gamma: 0.5, max_epochs: 1 },
        ] {
            assert_gradient_matches(&layout, &params, &x, &hyper);
        }
    }

    #[test]
    fn gradient_deep_network() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (layout, params, x) = random_case(&mut rng, &[4, 3, 2, 3, 4], 7);
        let hyper = SparseAeHyper { alpha: 0.05, beta: 0.7, gamma: 0.3, max_epochs: 1 };
        assert_gradient_matches(&layout, &params, &x, &hyper);
    }

    #[test]
    fn regularizers_vanish_without_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (layout, params, x) = random_case(&mut rng, &[3, 2, 3], 6);
        let hyper = SparseAeHyper { alpha: 0.0, beta: 0.0, gamma: 0.5, max_epochs: 1 };
        let t = cost_and_gradient(&layout, &params, &x, &hyper, None).unwrap();
        assert_eq!(t.total, t.reconstruction);
    }

    #[test]
    fn params_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pair = AePair::new(4, 3, &mut rng);
        let back = AePair::from_params(4, 3, &pair.to_params()).unwrap();
        assert_eq!(pair, back);
        assert!(AePair::from_params(4, 3, &[0.0; 5]).is_err());
    }

    #[test]
    fn xavier_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let d = Dense::xavier(10, 5, &mut rng);
        let r = libm::sqrt(6.0 / 15.0);
        assert!(d.weights.iter().all(|w| w.abs() <= r));
        assert!(d.biases.iter().all(|&b| b == 0.0));
    }
}

//! Deep sparse autoencoder built from sigmoid layers.
//!
//! Each stage is a single-hidden-layer autoencoder trained on the encoded
//! output of the previous stage. The per-stage cost is
//!
//! ```text
//! F = (1/N) ||X - X'||_F^2  +  alpha * 1/2 sum(W^2)  +  beta * sum_j KL(gamma || gamma_hat_j)
//! ```
//!
//! where `gamma_hat_j` is the mean activation of hidden neuron `j` over the
//! whole batch. Weights are fitted with scaled conjugate gradients.

mod network;
mod scg;
mod stack;

use alloc::format;

pub use network::{cost_and_gradient, AePair, CostTerms, Dense, NetLayout};
pub use scg::{scg_minimize, ScgOptions, ScgOutcome, StopReason};
pub use stack::{
    reconstruction_mse, train_stacked, DsaModel, StackConfig, StageLog, TrainingLog,
    DEFAULT_LAYER_SIZES,
};

use crate::{Error, Result};

/// Clamp applied to mean activations before taking logarithms.
pub const KL_EPSILON: f64 = 1e-10;

/// Regularization coefficients and iteration cap for one stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparseAeHyper {
    /// Weight-decay coefficient.
    pub alpha: f64,
    /// Sparsity coefficient.
    pub beta: f64,
    /// Target mean activation of each hidden neuron.
    pub gamma: f64,
    /// Iteration cap for the optimizer.
    pub max_epochs: usize,
}

impl Default for SparseAeHyper {
    fn default() -> Self {
        Self {
            alpha: 1e-4,
            beta: 100.0,
            gamma: 0.5,
            max_epochs: 10_000,
        }
    }
}

impl SparseAeHyper {
    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha >= 0.0
            && self.alpha.is_finite()
            && self.beta >= 0.0
            && self.beta.is_finite()
            && self.gamma > 0.0
            && self.gamma < 1.0
            && self.max_epochs >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "hyperparameters out of range: {self:?}"
            )))
        }
    }
}

/// Logistic function `1 / (1 + e^-x)`.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

pub fn sigmoid_in_place(values: &mut [f64]) {
    for v in values {
        *v = sigmoid(*v);
    }
}

/// Half the sum of squared weights over all layers. Biases are not penalized.
pub fn l2_penalty(layers: &[Dense]) -> f64 {
    layers.iter().map(|l| half_sum_squares(&l.weights)).sum()
}

pub(crate) fn half_sum_squares(w: &[f64]) -> f64 {
    0.5 * w.iter().map(|v| v * v).sum::<f64>()
}

/// Summed Bernoulli KL divergence between the target activation `gamma` and
/// each measured mean activation.
pub fn kl_sparsity(gamma: f64, gamma_hat: &[f64]) -> f64 {
    gamma_hat.iter().map(|&g| kl_term(gamma, g)).sum()
}

#[inline]
pub(crate) fn kl_term(gamma: f64, gamma_hat: f64) -> f64 {
    let g = gamma_hat.clamp(KL_EPSILON, 1.0 - KL_EPSILON);
    gamma * libm::log(gamma / g) + (1.0 - gamma) * libm::log((1.0 - gamma) / (1.0 - g))
}

/// Derivative of [`kl_term`] with respect to `gamma_hat`; zero where the clamp is active.
#[inline]
pub(crate) fn kl_term_derivative(gamma: f64, gamma_hat: f64) -> f64 {
    if gamma_hat < KL_EPSILON || gamma_hat > 1.0 - KL_EPSILON {
        return 0.0;
    }
    -gamma / gamma_hat + (1.0 - gamma) / (1.0 - gamma_hat)
}

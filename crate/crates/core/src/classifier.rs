//! Classifier over the masked statement matrix and the cross-entropy form of
//! the mutual-information lower bound.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Mlp, MlpCache, Params};
use crate::rng::{self, stream, Rng};
use crate::selector::flatten;

pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierParams {
    pub network: Mlp,
    pub keep_prob: f64,
}

#[derive(Debug, Clone)]
pub struct ClassifierCache {
    mlp: MlpCache,
}

pub fn softmax(logits: &Array1<f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let e = logits.mapv(|v| (v - max).exp());
    let z = e.sum();
    e / z
}

impl ClassifierParams {
    pub fn init(max_statements: usize, dim: usize, widths: &[usize], seed: u64) -> Self {
        let mut r = rng::rng(seed, &[stream::INIT_CLASSIFIER]);
        ClassifierParams {
            network: Mlp::new(max_statements * dim, widths, 2, &mut r),
            keep_prob: crate::selector::DEFAULT_KEEP_PROB,
        }
    }

    pub fn zeros_like(&self) -> Self {
        ClassifierParams { network: self.network.zeros_like(), keep_prob: self.keep_prob }
    }

    /// `(q0, q1)` for the masked matrix.
    pub fn predict(&self, masked: &Array2<f64>, training: bool, seed: u64) -> Result<[f64; 2]> {
        let mut r = rng::rng(seed, &[stream::CLASSIFIER_DROPOUT]);
        let (q, _) = self.forward(masked, training.then_some(&mut r))?;
        Ok([q[0], q[1]])
    }

    pub fn forward(&self, masked: &Array2<f64>, dropout: Option<&mut Rng>) -> Result<(Array1<f64>, ClassifierCache)> {
        if masked.len() != self.network.input_dim() {
            return Err(Error::shape(format!(
                "classifier expects {} inputs, got {}",
                self.network.input_dim(),
                masked.len()
            )));
        }
        let x = flatten(masked);
        let (logits, mlp) = self.network.forward(x.view(), dropout.map(|r| (self.keep_prob, r)));
        Ok((softmax(&logits), ClassifierCache { mlp }))
    }

    /// Backpropagates a gradient on the two logits; returns the gradient with
    /// respect to the masked matrix.
    pub fn backward(
        &self,
        shape: (usize, usize),
        cache: &ClassifierCache,
        d_logits: &Array1<f64>,
        grad: &mut ClassifierParams,
    ) -> Array2<f64> {
        self.network
            .backward(&cache.mlp, d_logits, &mut grad.network)
            .into_shape_with_order(shape)
            .expect("flattened masked matrix")
    }
}

impl Params for ClassifierParams {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        self.network.tensors()
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        self.network.tensors_mut()
    }
}

/// Mean negative log-probability of the true label. Minimizing it maximizes
/// the variational lower bound on the mutual information between the masked
/// function and its label (up to a constant).
pub fn mi_surrogate_loss(predictions: &[[f64; 2]], labels: &[u8]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::shape(format!("{} predictions for {} labels", predictions.len(), labels.len())));
    }
    if predictions.is_empty() {
        return Err(Error::data("empty batch"));
    }
    let total: f64 = predictions.iter().zip(labels).map(|(q, &y)| -q[y as usize].max(LOG_CLAMP).ln()).sum();
    Ok(total / predictions.len() as f64)
}

/// Gradient of one sample's `-ln q_y` with respect to the logits, `q - onehot(y)`.
/// Zero when the clamp is active.
pub fn cross_entropy_logit_grad(q: &Array1<f64>, label: u8) -> Array1<f64> {
    if q[label as usize] < LOG_CLAMP {
        return Array1::zeros(q.len());
    }
    let mut g = q.clone();
    g[label as usize] -= 1.0;
    g
}

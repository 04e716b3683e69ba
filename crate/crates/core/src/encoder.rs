//! Statement encoder: token embedding, dropout, a same-padded 1-D convolution
//! along the token axis and a max over tokens, giving one vector per statement.

use ndarray::{s, Array1, Array2, Array3};
use rand::distributions::{Distribution, Uniform};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::corpus::TokenizedFunction;
use crate::error::{Error, Result};
use crate::nn::{glorot_bound, slice2, slice2_mut, uniform_array2, Params};
use crate::rng::{self, stream, Rng};

pub const DEFAULT_DIM: usize = 150;
pub const DEFAULT_KERNEL: usize = 3;
pub const DEFAULT_DROPOUT: f64 = 0.2;
const EMBEDDING_BOUND: f64 = 0.05;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderVariant {
    /// Convolution followed by max-pooling over tokens.
    #[default]
    ConvMaxPool,
    /// Max-pooling over the raw token embeddings.
    MaxPool,
}

impl std::fmt::Display for EncoderVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EncoderVariant::ConvMaxPool => "conv_max_pool",
            EncoderVariant::MaxPool => "max_pool",
        })
    }
}

impl std::str::FromStr for EncoderVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conv_max_pool" => Ok(EncoderVariant::ConvMaxPool),
            "max_pool" => Ok(EncoderVariant::MaxPool),
            other => Err(Error::config(format!("unknown encoder {other:?} (expected conv_max_pool or max_pool)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    /// `|V| x d`
    pub embedding: Array2<f64>,
    /// `(kernel, d, d_out)`; empty for [`EncoderVariant::MaxPool`].
    pub conv_kernel: Array3<f64>,
    pub conv_bias: Array1<f64>,
    pub dropout_rate: f64,
    pub variant: EncoderVariant,
}

/// The `L x d` statement matrix of one function. Padding rows are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct StatementMatrix {
    pub values: Array2<f64>,
    pub statement_mask: Vec<u8>,
}

impl StatementMatrix {
    pub fn new(values: Array2<f64>, statement_mask: Vec<u8>) -> Result<Self> {
        if values.nrows() != statement_mask.len() {
            return Err(Error::shape(format!(
                "{} rows but a mask of length {}",
                values.nrows(),
                statement_mask.len()
            )));
        }
        Ok(StatementMatrix { values, statement_mask })
    }

    pub fn n_statements(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn n_real(&self) -> usize {
        self.statement_mask.iter().filter(|&&m| m == 1).count()
    }
}

/// Saved activations for [`EncoderParams::backward`].
#[derive(Debug, Clone)]
pub struct EncoderCache {
    n_real: usize,
    // post-dropout embeddings, (n_real * T) x d
    inputs: Array2<f64>,
    dropout: Option<Array2<f64>>,
    // token position that won the max, per (statement, channel)
    argmax: Array2<usize>,
}

impl EncoderParams {
    /// Embeddings ~ U(-0.05, 0.05); convolution weights ~ U(-b, b) with
    /// `b = sqrt(6 / (fan_in + fan_out))`, `fan = kernel * channels`.
    pub fn init(vocab_size: usize, dim: usize, kernel: usize, variant: EncoderVariant, seed: u64) -> Result<Self> {
        if vocab_size < 2 {
            return Err(Error::config("vocabulary must hold at least the two reserved tokens"));
        }
        if dim == 0 {
            return Err(Error::config("embedding dimension must be positive"));
        }
        if variant == EncoderVariant::ConvMaxPool && kernel.is_multiple_of(2) {
            return Err(Error::config(format!("convolution kernel must be odd, got {kernel}")));
        }
        let mut r = rng::rng(seed, &[stream::INIT_ENCODER]);
        let embedding = uniform_array2(vocab_size, dim, EMBEDDING_BOUND, &mut r);
        let (conv_kernel, conv_bias) = match variant {
            EncoderVariant::ConvMaxPool => {
                let bound = glorot_bound(kernel * dim, kernel * dim);
                let dist = Uniform::new_inclusive(-bound, bound);
                (Array3::from_shape_simple_fn((kernel, dim, dim), || dist.sample(&mut r)), Array1::zeros(dim))
            }
            EncoderVariant::MaxPool => (Array3::zeros((0, 0, 0)), Array1::zeros(0)),
        };
        Ok(EncoderParams { embedding, conv_kernel, conv_bias, dropout_rate: DEFAULT_DROPOUT, variant })
    }

    pub fn zeros_like(&self) -> Self {
        EncoderParams {
            embedding: Array2::zeros(self.embedding.raw_dim()),
            conv_kernel: Array3::zeros(self.conv_kernel.raw_dim()),
            conv_bias: Array1::zeros(self.conv_bias.raw_dim()),
            dropout_rate: self.dropout_rate,
            variant: self.variant,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.nrows()
    }

    pub fn embed_dim(&self) -> usize {
        self.embedding.ncols()
    }

    /// Width of each statement vector.
    pub fn output_dim(&self) -> usize {
        match self.variant {
            EncoderVariant::ConvMaxPool => self.conv_kernel.dim().2,
            EncoderVariant::MaxPool => self.embed_dim(),
        }
    }

    /// Encodes `tf`. Dropout is applied when `training` is set, with masks
    /// drawn from `seed`.
    pub fn embed_tokens(&self, tf: &TokenizedFunction, training: bool, seed: u64) -> Result<StatementMatrix> {
        let mut r = rng::rng(seed, &[stream::ENCODER_DROPOUT]);
        Ok(self.forward(tf, training.then_some(&mut r))?.0)
    }

    pub fn forward(&self, tf: &TokenizedFunction, dropout: Option<&mut Rng>) -> Result<(StatementMatrix, EncoderCache)> {
        let vocab = self.vocab_size();
        if let Some(&bad) = tf.tokens.iter().find(|&&t| t as usize >= vocab) {
            return Err(Error::data(format!("token index {bad} out of range for vocabulary of {vocab}")));
        }
        let (l, t) = tf.tokens.dim();
        let d = self.embed_dim();
        let n_real = tf.n_real();

        let mut inputs = Array2::zeros((n_real * t, d));
        for (row, &tok) in inputs.rows_mut().into_iter().zip(tf.tokens.slice(s![..n_real, ..]).iter()) {
            let mut row = row;
            row.assign(&self.embedding.row(tok as usize));
        }
        let dropout = dropout.map(|r| {
            let keep = 1.0 - self.dropout_rate;
            let m = Array2::from_shape_simple_fn(inputs.raw_dim(), || if r.gen::<f64>() < keep { 1.0 / keep } else { 0.0 });
            inputs *= &m;
            m
        });

        let out_dim = self.output_dim();
        let mut values = Array2::zeros((l, out_dim));
        let mut argmax = Array2::zeros((n_real, out_dim));
        let activations = match self.variant {
            EncoderVariant::ConvMaxPool => self.convolve(&inputs, t),
            EncoderVariant::MaxPool => inputs.clone(),
        };
        for i in 0..n_real {
            let block = activations.slice(s![i * t..(i + 1) * t, ..]);
            for o in 0..out_dim {
                let (best_t, best) = block
                    .column(o)
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc });
                values[[i, o]] = best;
                argmax[[i, o]] = best_t;
            }
        }
        Ok((
            StatementMatrix { values, statement_mask: tf.statement_mask.clone() },
            EncoderCache { n_real, inputs, dropout, argmax },
        ))
    }

    fn half_width(&self) -> usize {
        (self.conv_kernel.dim().0 - 1) / 2
    }

    // im2col then one matrix product; rows are (statement, token) pairs
    fn convolve(&self, inputs: &Array2<f64>, t: usize) -> Array2<f64> {
        let (kernel, d, out) = self.conv_kernel.dim();
        let half = self.half_width();
        let rows = inputs.nrows();
        let mut cols = Array2::zeros((rows, kernel * d));
        for r in 0..rows {
            let (stmt, pos) = (r / t, r % t);
            for k in 0..kernel {
                let src = pos as isize + k as isize - half as isize;
                if src >= 0 && (src as usize) < t {
                    cols.slice_mut(s![r, k * d..(k + 1) * d]).assign(&inputs.row(stmt * t + src as usize));
                }
            }
        }
        let w = self.conv_kernel.view().into_shape_with_order((kernel * d, out)).expect("standard layout");
        cols.dot(&w) + &self.conv_bias
    }

    /// Accumulates gradients of `d_values` (shape `L x d_out`) into `grad`.
    pub fn backward(&self, tf: &TokenizedFunction, cache: &EncoderCache, d_values: &Array2<f64>, grad: &mut EncoderParams) {
        let t = tf.max_tokens();
        let d = self.embed_dim();
        let mut d_inputs = Array2::<f64>::zeros(cache.inputs.raw_dim());
        match self.variant {
            EncoderVariant::ConvMaxPool => {
                let (kernel, _, out) = self.conv_kernel.dim();
                let half = self.half_width() as isize;
                for i in 0..cache.n_real {
                    for o in 0..out {
                        let g = d_values[[i, o]];
                        if g == 0.0 {
                            continue;
                        }
                        grad.conv_bias[o] += g;
                        let pos = cache.argmax[[i, o]] as isize;
                        for k in 0..kernel {
                            let src = pos + k as isize - half;
                            if src < 0 || src as usize >= t {
                                continue;
                            }
                            let row = i * t + src as usize;
                            for c in 0..d {
                                grad.conv_kernel[[k, c, o]] += g * cache.inputs[[row, c]];
                                d_inputs[[row, c]] += g * self.conv_kernel[[k, c, o]];
                            }
                        }
                    }
                }
            }
            EncoderVariant::MaxPool => {
                for i in 0..cache.n_real {
                    for c in 0..d {
                        d_inputs[[i * t + cache.argmax[[i, c]], c]] += d_values[[i, c]];
                    }
                }
            }
        }
        if let Some(m) = &cache.dropout {
            d_inputs *= m;
        }
        for (row, &tok) in d_inputs.rows().into_iter().zip(tf.tokens.slice(s![..cache.n_real, ..]).iter()) {
            let mut dst = grad.embedding.row_mut(tok as usize);
            dst += &row;
        }
    }
}

impl Params for EncoderParams {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        vec![
            ("embedding".into(), slice2(&self.embedding)),
            ("conv_kernel".into(), self.conv_kernel.as_slice().expect("standard layout")),
            ("conv_bias".into(), self.conv_bias.as_slice().expect("standard layout")),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        vec![
            ("embedding".into(), slice2_mut(&mut self.embedding)),
            ("conv_kernel".into(), self.conv_kernel.as_slice_mut().expect("standard layout")),
            ("conv_bias".into(), self.conv_bias.as_slice_mut().expect("standard layout")),
        ]
    }
}

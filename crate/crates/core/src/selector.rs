//! The statement selection process: per-statement relevance probabilities,
//! relaxed Bernoulli gates, the masked statement matrix and top-K extraction.

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::encoder::StatementMatrix;
use crate::error::{Error, Result};
use crate::nn::{sigmoid, Mlp, MlpCache, Params};
use crate::rng::{self, stream, Rng};

pub const DEFAULT_TEMPERATURE: f64 = 0.5;
pub const DEFAULT_KEEP_PROB: f64 = 0.8;
/// Probabilities are confined to `[PROB_CLAMP, 1 - PROB_CLAMP]`.
pub const PROB_CLAMP: f64 = 1e-7;

/// Feed-forward network from the flattened `L x d` statement matrix to `L`
/// sigmoid outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectorParams {
    pub network: Mlp,
    pub keep_prob: f64,
}

#[derive(Debug, Clone)]
pub struct SelectorCache {
    mlp: MlpCache,
    // sigmoid outputs before clamping and masking
    raw: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub probs: Array1<f64>,
    pub gates: Array1<f64>,
    pub masked: Array2<f64>,
    pub topk: Vec<usize>,
}

impl SelectorParams {
    pub fn init(max_statements: usize, dim: usize, widths: &[usize], seed: u64) -> Self {
        let mut r = rng::rng(seed, &[stream::INIT_SELECTOR]);
        SelectorParams {
            network: Mlp::new(max_statements * dim, widths, max_statements, &mut r),
            keep_prob: DEFAULT_KEEP_PROB,
        }
    }

    pub fn zeros_like(&self) -> Self {
        SelectorParams { network: self.network.zeros_like(), keep_prob: self.keep_prob }
    }

    pub fn max_statements(&self) -> usize {
        self.network.output_dim()
    }

    /// Selection probabilities; padding statements get exactly 0.
    pub fn compute_probabilities(&self, f: &StatementMatrix, training: bool, seed: u64) -> Result<Array1<f64>> {
        let mut r = rng::rng(seed, &[stream::SELECTOR_DROPOUT]);
        Ok(self.forward(f, training.then_some(&mut r))?.0)
    }

    pub fn forward(&self, f: &StatementMatrix, dropout: Option<&mut Rng>) -> Result<(Array1<f64>, SelectorCache)> {
        if f.values.len() != self.network.input_dim() {
            return Err(Error::shape(format!(
                "selector expects {} inputs, statement matrix has {}",
                self.network.input_dim(),
                f.values.len()
            )));
        }
        let x = flatten(&f.values);
        let (logits, mlp) = self.network.forward(x.view(), dropout.map(|r| (self.keep_prob, r)));
        let raw = logits.mapv(sigmoid);
        let probs = Array1::from_shape_fn(raw.len(), |i| {
            if f.statement_mask[i] == 1 {
                raw[i].clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
            } else {
                0.0
            }
        });
        Ok((probs, SelectorCache { mlp, raw }))
    }

    /// Backpropagates `d_probs`; returns the gradient with respect to the
    /// statement matrix (`L x d`).
    pub fn backward(
        &self,
        f: &StatementMatrix,
        cache: &SelectorCache,
        d_probs: &Array1<f64>,
        grad: &mut SelectorParams,
    ) -> Array2<f64> {
        let d_logits = Array1::from_shape_fn(d_probs.len(), |i| {
            let s = cache.raw[i];
            let clamped = !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&s);
            if f.statement_mask[i] == 1 && !clamped {
                d_probs[i] * s * (1.0 - s)
            } else {
                0.0
            }
        });
        let dx = self.network.backward(&cache.mlp, &d_logits, &mut grad.network);
        dx.into_shape_with_order(f.values.raw_dim()).expect("flattened statement matrix")
    }

    /// Full selection pass with sampled relaxed gates, as used in training.
    pub fn select(&self, f: &StatementMatrix, k: usize, temperature: f64, seed: u64) -> Result<SelectionResult> {
        let probs = self.compute_probabilities(f, true, seed)?;
        let gates = sample_gates(&probs, temperature, seed)?;
        let masked = mask_function(&f.values, &gates)?;
        let topk = top_k(&probs, k, &f.statement_mask);
        Ok(SelectionResult { probs, gates, masked, topk })
    }
}

impl Params for SelectorParams {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        self.network.tensors()
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        self.network.tensors_mut()
    }
}

pub(crate) fn flatten(values: &Array2<f64>) -> Array1<f64> {
    Array1::from_iter(values.iter().copied())
}

/// A standard Gumbel draw, `-ln(-ln u)` with `u` strictly inside (0, 1).
pub fn gumbel(rng: &mut Rng) -> f64 {
    let u = ((rng.gen::<u64>() >> 11) as f64 + 0.5) / (1u64 << 53) as f64;
    -(-u.ln()).ln()
}

/// Two independent Gumbel vectors `(a, b)` of length `len`.
pub fn gumbel_noise(len: usize, rng: &mut Rng) -> (Array1<f64>, Array1<f64>) {
    let mut a = Array1::zeros(len);
    let mut b = Array1::zeros(len);
    for i in 0..len {
        a[i] = gumbel(rng);
        b[i] = gumbel(rng);
    }
    (a, b)
}

/// Relaxed Bernoulli sample for one statement:
/// `exp((ln p + a)/nu) / (exp((ln p + a)/nu) + exp((ln(1-p) + b)/nu))`,
/// evaluated as a sigmoid of the log-odds.
pub fn relaxed_gate(p: f64, a: f64, b: f64, temperature: f64) -> f64 {
    sigmoid(((p.ln() - (1.0 - p).ln()) + (a - b)) / temperature)
}

/// `dz/dp` of [`relaxed_gate`] given its output `z`.
pub fn relaxed_gate_derivative(p: f64, z: f64, temperature: f64) -> f64 {
    z * (1.0 - z) / (temperature * p * (1.0 - p))
}

/// Gates from precomputed noise. Positions with `p == 0` (padding) get 0.
pub fn gates_from_noise(p: &Array1<f64>, a: &Array1<f64>, b: &Array1<f64>, temperature: f64) -> Result<Array1<f64>> {
    if !(temperature > 0.0) {
        return Err(Error::config(format!("gate temperature must be positive, got {temperature}")));
    }
    Ok(Array1::from_shape_fn(p.len(), |i| {
        if p[i] > 0.0 {
            relaxed_gate(p[i], a[i], b[i], temperature)
        } else {
            0.0
        }
    }))
}

/// Samples relaxed gates, deterministically for a given `noise_seed`.
pub fn sample_gates(p: &Array1<f64>, temperature: f64, noise_seed: u64) -> Result<Array1<f64>> {
    let (a, b) = gumbel_noise(p.len(), &mut rng::rng(noise_seed, &[stream::GUMBEL]));
    gates_from_noise(p, &a, &b, temperature)
}

/// Row `i` of the result is `z[i] * f.row(i)`.
pub fn mask_function(f: &Array2<f64>, z: &Array1<f64>) -> Result<Array2<f64>> {
    if f.nrows() != z.len() {
        return Err(Error::shape(format!("{} statements but {} gates", f.nrows(), z.len())));
    }
    Ok(f * &z.view().insert_axis(ndarray::Axis(1)))
}

/// Indices of the `k` most probable real statements, in statement order.
/// Ties go to the lower index.
pub fn top_k(p: &Array1<f64>, k: usize, statement_mask: &[u8]) -> Vec<usize> {
    let mut out = ranking(p.view(), statement_mask);
    out.truncate(k);
    out.sort_unstable();
    out
}

/// Real statements ordered by descending probability, ties by lower index.
pub fn ranking(p: ArrayView1<f64>, statement_mask: &[u8]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..p.len()).filter(|&i| statement_mask.get(i) == Some(&1)).collect();
    idx.sort_by(|&x, &y| p[y].total_cmp(&p[x]).then(x.cmp(&y)));
    idx
}

/// Hard evaluation gates: 1 on the top-K statements, 0 elsewhere.
pub fn eval_gate(p: &Array1<f64>, k: usize, statement_mask: &[u8]) -> Array1<f64> {
    let mut z = Array1::zeros(p.len());
    for i in top_k(p, k, statement_mask) {
        z[i] = 1.0;
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Dense;
    use approx::assert_relative_eq;
    use ndarray::array;
    use proptest::prelude::*;

    fn matrix(values: Array2<f64>, n_real: usize) -> StatementMatrix {
        let mut mask = vec![0; values.nrows()];
        mask[..n_real].fill(1);
        StatementMatrix::new(values, mask).unwrap()
    }

    #[test]
    fn zero_network_gives_one_half() {
        let mut s = SelectorParams::init(4, 2, &[3, 3, 3], 0);
        s.network = s.network.zeros_like();
        let f = matrix(Array2::ones((4, 2)), 3);
        let p = s.compute_probabilities(&f, false, 0).unwrap();
        assert_eq!(p, array![0.5, 0.5, 0.5, 0.0]);
    }

    #[test]
    fn output_length_is_l() {
        let s = SelectorParams::init(100, 3, &[4, 4, 4], 0);
        let f = matrix(Array2::zeros((100, 3)), 100);
        assert_eq!(s.compute_probabilities(&f, true, 1).unwrap().len(), 100);
    }

    #[test]
    fn hand_forward_pass() {
        // two statements of width 1, one hidden unit: h = relu(x0 - x1 + 0.5)
        // logits = (2h, -h)
        let s = SelectorParams {
            network: Mlp {
                layers: vec![
                    Dense { weight: array![[1.0, -1.0]], bias: array![0.5] },
                    Dense { weight: array![[2.0], [-1.0]], bias: array![0.0, 0.0] },
                ],
            },
            keep_prob: 0.8,
        };
        let f = matrix(array![[1.0], [0.25]], 2);
        let p = s.compute_probabilities(&f, false, 0).unwrap();
        // h = 1.25 -> logits (2.5, -1.25)
        assert_relative_eq!(p[0], 1.0 / (1.0 + (-2.5f64).exp()), epsilon = 1e-12);
        assert_relative_eq!(p[1], 1.0 / (1.0 + 1.25f64.exp()), epsilon = 1e-12);
    }

    #[test]
    fn symmetric_noise_gives_one_half() {
        assert_eq!(relaxed_gate(0.5, 0.3, 0.3, 0.5), 0.5);
        assert_eq!(relaxed_gate(0.5, -1.2, -1.2, 2.0), 0.5);
    }

    #[test]
    fn relaxation_worked_value() {
        let direct = {
            let num = ((0.8f64.ln() + 0.3) / 0.5).exp();
            num / (num + ((0.2f64.ln() - 0.1) / 0.5).exp())
        };
        let z = relaxed_gate(0.8, 0.3, -0.1, 0.5);
        assert_relative_eq!(z, direct, epsilon = 1e-12);
        assert!((z - 0.9727).abs() < 1e-4, "{z}");
    }

    #[test]
    fn low_temperature_hardens() {
        for (p, a, b) in [(0.3, 0.1, 0.4), (0.6, -0.2, 0.5), (0.9, 0.0, 0.0), (0.05, 1.5, -0.3)] {
            let z = relaxed_gate(p, a, b, 1e-6);
            assert!(!(1e-6..=1.0 - 1e-6).contains(&z), "{z}");
        }
    }

    #[test]
    fn non_positive_temperature_is_rejected() {
        let p = array![0.5];
        assert!(sample_gates(&p, 0.0, 1).is_err());
        assert!(sample_gates(&p, -1.0, 1).is_err());
    }

    #[test]
    fn sampling_is_seeded_and_padding_is_closed() {
        let p = array![0.3, 0.9, 0.0];
        let z1 = sample_gates(&p, 0.5, 4).unwrap();
        assert_eq!(z1, sample_gates(&p, 0.5, 4).unwrap());
        assert_ne!(z1, sample_gates(&p, 0.5, 5).unwrap());
        assert_eq!(z1[2], 0.0);
    }

    #[test]
    fn gate_derivative_matches_finite_difference() {
        for &(p, a, b) in &[(0.3, 0.2, -0.4), (0.8, 0.3, -0.1), (0.55, -1.0, 0.7)] {
            let h = 1e-7;
            let fd = (relaxed_gate(p + h, a, b, 0.5) - relaxed_gate(p - h, a, b, 0.5)) / (2.0 * h);
            let z = relaxed_gate(p, a, b, 0.5);
            assert_relative_eq!(relaxed_gate_derivative(p, z, 0.5), fd, max_relative = 1e-6);
        }
    }

    #[test]
    fn masking_examples() {
        let f = array![[2.0, 4.0], [1.0, 3.0]];
        assert_eq!(mask_function(&f, &array![1.0, 1.0]).unwrap(), f);
        assert_eq!(mask_function(&f, &array![0.0, 0.0]).unwrap(), Array2::<f64>::zeros((2, 2)));
        assert_eq!(mask_function(&f, &array![0.5, 1.0]).unwrap(), array![[1.0, 2.0], [1.0, 3.0]]);
        assert!(mask_function(&f, &array![1.0]).is_err());
    }

    #[test]
    fn top_k_examples() {
        assert_eq!(top_k(&array![0.9, 0.1, 0.8, 0.7], 2, &[1, 1, 1, 1]), vec![0, 2]);
        assert_eq!(top_k(&array![0.5, 0.5, 0.2], 1, &[1, 1, 1]), vec![0]);
        assert_eq!(top_k(&array![0.2, 0.3, 0.1, 0.0, 0.0], 10, &[1, 1, 1, 0, 0]), vec![0, 1, 2]);
    }

    #[test]
    fn eval_gate_examples() {
        assert_eq!(eval_gate(&array![0.9, 0.1, 0.8, 0.7], 2, &[1, 1, 1, 1]), array![1.0, 0.0, 1.0, 0.0]);
        assert_eq!(eval_gate(&array![0.2, 0.6, 0.0], 5, &[1, 1, 0]), array![1.0, 1.0, 0.0]);
        assert_eq!(eval_gate(&array![0.0, 0.0], 2, &[0, 0]), array![0.0, 0.0]);
    }

    #[test]
    fn selector_gradient_matches_finite_differences() {
        let s = SelectorParams::init(3, 2, &[4, 4, 4], 8);
        let f = matrix(array![[0.3, -0.2], [0.7, 0.1], [0.0, 0.0]], 2);
        let w = array![0.4, -1.1, 2.0];
        let loss = |q: &SelectorParams, f: &StatementMatrix| {
            let mut r = rng::rng(1, &[]);
            q.forward(f, Some(&mut r)).unwrap().0.dot(&w)
        };
        let mut r = rng::rng(1, &[]);
        let (_, cache) = s.forward(&f, Some(&mut r)).unwrap();
        let mut grad = s.zeros_like();
        let df = s.backward(&f, &cache, &w, &mut grad);
        let h = 1e-6;
        let analytic: Vec<f64> = grad.tensors().iter().flat_map(|(_, t)| t.to_vec()).collect();
        let mut probe = s.clone();
        for (k, &a) in analytic.iter().enumerate() {
            probe.nudge(k, h);
            let up = loss(&probe, &f);
            probe.nudge(k, -2.0 * h);
            let down = loss(&probe, &f);
            probe.nudge(k, h);
            assert_relative_eq!((up - down) / (2.0 * h), a, epsilon = 1e-6);
        }
        for i in 0..2 {
            for j in 0..2 {
                let mut fp = f.clone();
                fp.values[[i, j]] += h;
                let mut fm = f.clone();
                fm.values[[i, j]] -= h;
                assert_relative_eq!((loss(&s, &fp) - loss(&s, &fm)) / (2.0 * h), df[[i, j]], epsilon = 1e-6);
            }
        }
    }

    proptest! {
        #[test]
        fn gate_is_increasing_in_p(p1 in 0.001f64..0.998, dp in 0.0005f64..0.3, a in -3.0f64..3.0, b in -3.0f64..3.0, nu in 0.2f64..2.0) {
            let p2 = (p1 + dp).min(0.999);
            prop_assume!(p2 > p1);
            prop_assert!(relaxed_gate(p2, a, b, nu) > relaxed_gate(p1, a, b, nu));
        }

        #[test]
        fn top_k_invariant_under_monotone_maps(p in proptest::collection::vec(0.0f64..1.0, 1..20), k in 1usize..8) {
            let mask = vec![1u8; p.len()];
            let p = Array1::from(p);
            let base = top_k(&p, k, &mask);
            prop_assert_eq!(&base, &top_k(&p.mapv(|v| 3.0 * v - 1.0), k, &mask));
            prop_assert_eq!(&base, &top_k(&p.mapv(|v| v.powi(3)), k, &mask));
            prop_assert!(base.windows(2).all(|w| w[0] < w[1]));
        }

        #[test]
        fn masking_is_linear(
            f in proptest::collection::vec(-5.0f64..5.0, 6),
            g in proptest::collection::vec(-5.0f64..5.0, 6),
            z in proptest::collection::vec(0.0f64..1.0, 3),
            y in proptest::collection::vec(0.0f64..1.0, 3),
            c in -2.0f64..2.0,
        ) {
            let f = Array2::from_shape_vec((3, 2), f).unwrap();
            let g = Array2::from_shape_vec((3, 2), g).unwrap();
            let (z, y) = (Array1::from(z), Array1::from(y));
            let lhs = mask_function(&(&f + &(&g * c)), &z).unwrap();
            let rhs = mask_function(&f, &z).unwrap() + mask_function(&g, &z).unwrap() * c;
            prop_assert!((lhs - rhs).iter().all(|d| d.abs() < 1e-9));
            let lhs = mask_function(&f, &(&z + &(&y * c))).unwrap();
            let rhs = mask_function(&f, &z).unwrap() + mask_function(&f, &y).unwrap() * c;
            prop_assert!((lhs - rhs).iter().all(|d| d.abs() < 1e-9));
        }
    }
}

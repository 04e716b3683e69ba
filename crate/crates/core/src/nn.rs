//! Small dense-network toolkit with hand-written backward passes, plus the
//! Adam optimizer and global-norm gradient clipping.

use ndarray::{Array1, Array2, ArrayView1, Zip};
use rand::distributions::{Distribution, Uniform};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;

/// Uniform bound `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

pub fn uniform_array2(rows: usize, cols: usize, bound: f64, rng: &mut Rng) -> Array2<f64> {
    let dist = Uniform::new_inclusive(-bound, bound);
    Array2::from_shape_simple_fn((rows, cols), || dist.sample(rng))
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverted-dropout multipliers: `1/keep` with probability `keep`, else 0.
pub fn dropout_mask(len: usize, keep: f64, rng: &mut Rng) -> Array1<f64> {
    Array1::from_shape_simple_fn(len, || if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
}

/// Fully connected layer, `y = W x + b` with `W` stored as `out x in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn new(input: usize, output: usize, rng: &mut Rng) -> Self {
        Dense {
            weight: uniform_array2(output, input, glorot_bound(input, output), rng),
            bias: Array1::zeros(output),
        }
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Dense { weight: Array2::zeros((output, input)), bias: Array1::zeros(output) }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn forward(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.weight.dot(&x) + &self.bias
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    fn backward(&self, x: ArrayView1<f64>, dy: &Array1<f64>, grad: &mut Dense) -> Array1<f64> {
        Zip::from(grad.weight.rows_mut()).and(dy).for_each(|mut row, &d| {
            if d != 0.0 {
                row.scaled_add(d, &x);
            }
        });
        grad.bias += dy;
        self.weight.t().dot(dy)
    }
}

/// ReLU network: hidden layers with ReLU and dropout, then a linear output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Values saved by [`Mlp::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    inputs: Vec<Array1<f64>>,
    // d(hidden output)/d(pre-activation): ReLU derivative times dropout multiplier
    gates: Vec<Array1<f64>>,
}

impl Mlp {
    /// `widths` lists the hidden layer sizes.
    pub fn new(input: usize, widths: &[usize], output: usize, rng: &mut Rng) -> Self {
        let mut layers = Vec::with_capacity(widths.len() + 1);
        let mut fan_in = input;
        for &w in widths.iter().chain(std::iter::once(&output)) {
            layers.push(Dense::new(fan_in, w, rng));
            fan_in = w;
        }
        Mlp { layers }
    }

    pub fn zeros_like(&self) -> Self {
        Mlp { layers: self.layers.iter().map(|l| Dense::zeros(l.input_dim(), l.output_dim())).collect() }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Dense::output_dim)
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1].iter().map(Dense::output_dim).collect()
    }

    /// Runs the network. With `dropout = Some((keep, rng))` every hidden
    /// activation is kept with probability `keep` and rescaled by `1/keep`.
    pub fn forward(&self, x: ArrayView1<f64>, mut dropout: Option<(f64, &mut Rng)>) -> (Array1<f64>, MlpCache) {
        let n_hidden = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut gates = Vec::with_capacity(n_hidden);
        let mut a = x.to_owned();
        for layer in &self.layers[..n_hidden] {
            let pre = layer.forward(a.view());
            let mut gate = pre.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
            if let Some((keep, rng)) = dropout.as_mut() {
                gate *= &dropout_mask(gate.len(), *keep, rng);
            }
            inputs.push(a);
            a = pre * &gate;
            gates.push(gate);
        }
        let out = self.layers[n_hidden].forward(a.view());
        inputs.push(a);
        (out, MlpCache { inputs, gates })
    }

    /// Backpropagates `dout`, accumulating into `grad`; returns `dL/dx`.
    pub fn backward(&self, cache: &MlpCache, dout: &Array1<f64>, grad: &mut Mlp) -> Array1<f64> {
        let n_hidden = self.layers.len() - 1;
        let mut d = self.layers[n_hidden].backward(cache.inputs[n_hidden].view(), dout, &mut grad.layers[n_hidden]);
        for l in (0..n_hidden).rev() {
            d *= &cache.gates[l];
            d = self.layers[l].backward(cache.inputs[l].view(), &d, &mut grad.layers[l]);
        }
        d
    }
}

/// Uniform access to every parameter tensor as a flat slice.
pub trait Params {
    fn tensors(&self) -> Vec<(String, &[f64])>;
    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    fn global_norm(&self) -> f64 {
        self.tensors().iter().flat_map(|(_, t)| t.iter()).map(|v| v * v).sum::<f64>().sqrt()
    }

    fn scale(&mut self, factor: f64) {
        for (_, t) in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// `self += factor * other`; tensors must line up.
    fn add_scaled(&mut self, factor: f64, other: &Self)
    where
        Self: Sized,
    {
        for ((_, dst), (_, src)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            dst.iter_mut().zip(src).for_each(|(d, s)| *d += factor * s);
        }
    }

    /// Adds `delta` to the `k`-th scalar in flat tensor order.
    fn nudge(&mut self, k: usize, delta: f64) {
        let mut seen = 0;
        for (_, t) in self.tensors_mut() {
            if k < seen + t.len() {
                t[k - seen] += delta;
                return;
            }
            seen += t.len();
        }
        panic!("parameter index {k} out of range");
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }
}

pub(crate) fn slice2(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("parameters are kept in standard layout")
}

pub(crate) fn slice2_mut(a: &mut Array2<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("parameters are kept in standard layout")
}

impl Params for Mlp {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                [
                    (format!("layer{i}.weight"), slice2(&l.weight)),
                    (format!("layer{i}.bias"), l.bias.as_slice().unwrap()),
                ]
            })
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        self.layers
            .iter_mut()
            .enumerate()
            .flat_map(|(i, l)| {
                [
                    (format!("layer{i}.weight"), slice2_mut(&mut l.weight)),
                    (format!("layer{i}.bias"), l.bias.as_slice_mut().unwrap()),
                ]
            })
            .collect()
    }
}

/// Rescales `grad` in place so its global norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm<P: Params>(grad: &mut P, max_norm: f64) -> f64 {
    let norm = grad.global_norm();
    if norm > max_norm && norm > 0.0 {
        grad.scale(max_norm / norm);
    }
    norm
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        AdamConfig { learning_rate, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// First and second moment estimates, one flat buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new<P: Params>(params: &P) -> Self {
        let shapes: Vec<usize> = params.tensors().iter().map(|(_, t)| t.len()).collect();
        AdamState {
            step: 0,
            first: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// One bias-corrected Adam update of `params` with gradient `grad`.
    pub fn update<P: Params>(&mut self, cfg: &AdamConfig, params: &mut P, grad: &P) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        let grads = grad.tensors();
        for (k, (_, p)) in params.tensors_mut().into_iter().enumerate() {
            let g = grads[k].1;
            let (m, v) = (&mut self.first[k], &mut self.second[k]);
            for i in 0..p.len() {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use approx::assert_relative_eq;
    use ndarray::array;

    #[test]
    fn glorot_init_within_bound() {
        let mut r = rng::rng(1, &[]);
        let d = Dense::new(30, 20, &mut r);
        let b = glorot_bound(30, 20);
        assert!(d.weight.iter().all(|w| w.abs() <= b));
        assert!(d.bias.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert_relative_eq!(sigmoid(2.0) + sigmoid(-2.0), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn mlp_gradient_matches_finite_differences() {
        let mut r = rng::rng(2, &[]);
        let mlp = Mlp::new(4, &[5, 3], 2, &mut r);
        let x = array![0.3, -0.7, 1.1, 0.2];
        let w = array![0.6, -1.3];
        let loss = |m: &Mlp, x: &Array1<f64>| m.forward(x.view(), None).0.dot(&w);

        let (_, cache) = mlp.forward(x.view(), None);
        let mut grad = mlp.zeros_like();
        let dx = mlp.backward(&cache, &w, &mut grad);

        let h = 1e-6;
        let analytic: Vec<f64> = grad.tensors().iter().flat_map(|(_, t)| t.to_vec()).collect();
        let mut probe = mlp.clone();
        for (k, &a) in analytic.iter().enumerate() {
            probe.nudge(k, h);
            let up = loss(&probe, &x);
            probe.nudge(k, -2.0 * h);
            let down = loss(&probe, &x);
            probe.nudge(k, h);
            assert_relative_eq!((up - down) / (2.0 * h), a, epsilon = 1e-6);
        }
        for i in 0..4 {
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            assert_relative_eq!((loss(&mlp, &xp) - loss(&mlp, &xm)) / (2.0 * h), dx[i], epsilon = 1e-6);
        }
    }

    #[test]
    fn dropout_zeroes_or_rescales() {
        let mut r = rng::rng(3, &[]);
        let m = dropout_mask(10_000, 0.8, &mut r);
        assert!(m.iter().all(|&v| v == 0.0 || (v - 1.25).abs() < 1e-12));
        let kept = m.iter().filter(|&&v| v > 0.0).count() as f64 / 10_000.0;
        assert!((kept - 0.8).abs() < 0.02);
    }

    #[test]
    fn clipping_rescales_to_the_limit() {
        let mut g = Mlp { layers: vec![Dense { weight: array![[60.0, 80.0]], bias: array![0.0] }] };
        let norm = clip_global_norm(&mut g, 5.0);
        assert_eq!(norm, 100.0);
        assert_relative_eq!(g.layers[0].weight[[0, 0]], 3.0, epsilon = 1e-12);
        assert_relative_eq!(g.layers[0].weight[[0, 1]], 4.0, epsilon = 1e-12);
        assert_relative_eq!(g.global_norm(), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn adam_zero_gradient_leaves_parameters() {
        let mut r = rng::rng(4, &[]);
        let mut p = Mlp::new(3, &[2], 1, &mut r);
        let before = p.clone();
        let g = p.zeros_like();
        let mut st = AdamState::new(&p);
        st.update(&AdamConfig::with_learning_rate(1e-3), &mut p, &g);
        assert_eq!(p, before);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut p = Mlp { layers: vec![Dense { weight: array![[1.0, 1.0]], bias: array![0.0] }] };
        let g = Mlp { layers: vec![Dense { weight: array![[0.5, -2.0]], bias: array![0.0] }] };
        let mut st = AdamState::new(&p);
        st.update(&AdamConfig::with_learning_rate(0.01), &mut p, &g);
        assert_relative_eq!(p.layers[0].weight[[0, 0]], 0.99, epsilon = 1e-6);
        assert_relative_eq!(p.layers[0].weight[[0, 1]], 1.01, epsilon = 1e-6);
    }
}

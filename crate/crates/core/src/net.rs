//! Fully connected ReLU network used as the generator body.
//!
//! Hidden layers apply ReLU, the output layer is linear, so the network is a
//! piecewise-linear map with finitely many linear regions. Saturating
//! activations are not representable: [`Activation`] has a single variant
//! and deserializing anything else fails.
//!
//! Weights are stored `out × in` row-major. The batch kernels are written as
//! row-wise `axpy` updates so the inner loops vectorize without reassociating
//! floating-point sums, which keeps results bit-reproducible.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::SampleMatrix;
use crate::rng::Rng;
use rand::Rng as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetSpec {
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
    pub output_dim: usize,
    #[serde(default)]
    pub hidden_activation: Activation,
}

impl NetSpec {
    pub fn new(input_dim: usize, hidden_widths: Vec<usize>, output_dim: usize) -> Result<Self> {
        let spec = Self { input_dim, hidden_widths, output_dim, hidden_activation: Activation::Relu };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::argument("network input and output dims must be >= 1"));
        }
        if self.hidden_widths.is_empty() {
            return Err(Error::argument("network needs at least one hidden layer"));
        }
        if self.hidden_widths.contains(&0) {
            return Err(Error::argument("hidden widths must be >= 1"));
        }
        Ok(())
    }

    /// `(in, out)` for every linear layer, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_widths.len() + 1);
        let mut prev = self.input_dim;
        for &w in &self.hidden_widths {
            dims.push((prev, w));
            prev = w;
        }
        dims.push((prev, self.output_dim));
        dims
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    /// `out_dim × in_dim`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self { in_dim, out_dim, weights: vec![0.0; in_dim * out_dim], bias: vec![0.0; out_dim] }
    }

    /// `x · Wᵀ + b` for every row of `x` (`rows × in_dim`).
    fn apply(&self, x: &[f64], rows: usize) -> Vec<f64> {
        let wt = transpose(&self.weights, self.out_dim, self.in_dim);
        let mut out = Vec::with_capacity(rows * self.out_dim);
        for r in 0..rows {
            let xr = &x[r * self.in_dim..(r + 1) * self.in_dim];
            let start = out.len();
            out.extend_from_slice(&self.bias);
            let o = &mut out[start..];
            for (k, &xv) in xr.iter().enumerate() {
                let col = &wt[k * self.out_dim..(k + 1) * self.out_dim];
                for (ov, &w) in o.iter_mut().zip(col) {
                    *ov += xv * w;
                }
            }
        }
        out
    }
}

fn transpose(w: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut t = vec![0.0; w.len()];
    for i in 0..rows {
        for j in 0..cols {
            t[j * rows + i] = w[i * cols + j];
        }
    }
    t
}

/// Weights and biases of every layer, input to output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetParams {
    pub layers: Vec<Layer>,
}

/// Layer inputs and pre-activations kept from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    rows: usize,
    /// `inputs[l]` is the input to layer `l` (post-ReLU for l > 0).
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of hidden layers.
    pre: Vec<Vec<f64>>,
    output: SampleMatrix,
}

impl ForwardCache {
    pub fn output(&self) -> &SampleMatrix {
        &self.output
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
}

impl NetParams {
    /// Fan-in uniform initialization: `W ~ U(−b, b)` with `b = sqrt(6 / fan_in)`,
    /// zero biases.
    pub fn init(spec: &NetSpec, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .layer_dims()
            .into_iter()
            .map(|(i, o)| {
                let bound = (6.0 / i as f64).sqrt();
                let mut l = Layer::zeros(i, o);
                for w in &mut l.weights {
                    *w = rng.random_range(-bound..bound);
                }
                l
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn zeros(spec: &NetSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self { layers: spec.layer_dims().into_iter().map(|(i, o)| Layer::zeros(i, o)).collect() })
    }

    pub fn zeros_like(&self) -> Self {
        Self { layers: self.layers.iter().map(|l| Layer::zeros(l.in_dim, l.out_dim)).collect() }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    /// True when the layer shapes agree with `spec`.
    pub fn matches(&self, spec: &NetSpec) -> bool {
        let dims = spec.layer_dims();
        dims.len() == self.layers.len()
            && dims
                .iter()
                .zip(&self.layers)
                .all(|(&(i, o), l)| l.in_dim == i && l.out_dim == o && l.weights.len() == i * o && l.bias.len() == o)
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// All parameters in layer order, weights (row-major) before biases.
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.iter().copied().collect()
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }

    fn check_input(&self, z: &SampleMatrix) -> Result<()> {
        if z.ncols() != self.input_dim() {
            return Err(Error::argument(format!(
                "network expects {} input columns, got {}",
                self.input_dim(),
                z.ncols()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, z: &SampleMatrix) -> Result<SampleMatrix> {
        Ok(self.forward_cached(z)?.output)
    }

    pub fn forward_cached(&self, z: &SampleMatrix) -> Result<ForwardCache> {
        self.check_input(z)?;
        let rows = z.nrows();
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(last);
        let mut x = z.as_slice().to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let h = layer.apply(&x, rows);
            inputs.push(x);
            if l == last {
                x = h;
            } else {
                x = h.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
                pre.push(h);
            }
        }
        let output = SampleMatrix::from_raw(rows, self.output_dim(), x);
        Ok(ForwardCache { rows, inputs, pre, output })
    }

    /// Gradient of `Σ_i ⟨upstream_i, f(z_i)⟩` with respect to every weight
    /// and bias. The ReLU derivative at exactly 0 is taken as 0.
    pub fn backward(&self, cache: &ForwardCache, upstream: &SampleMatrix) -> Result<NetParams> {
        if upstream.nrows() != cache.rows || upstream.ncols() != self.output_dim() {
            return Err(Error::argument(format!(
                "upstream gradient is {}x{}, expected {}x{}",
                upstream.nrows(),
                upstream.ncols(),
                cache.rows,
                self.output_dim()
            )));
        }
        let rows = cache.rows;
        let mut grads = self.zeros_like();
        let mut delta = upstream.as_slice().to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let (ni, no) = (layer.in_dim, layer.out_dim);
            let input = &cache.inputs[l];
            let g = &mut grads.layers[l];
            for r in 0..rows {
                let dr = &delta[r * no..(r + 1) * no];
                let xr = &input[r * ni..(r + 1) * ni];
                for (o, &d) in dr.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    g.bias[o] += d;
                    let gw = &mut g.weights[o * ni..(o + 1) * ni];
                    for (w, &x) in gw.iter_mut().zip(xr) {
                        *w += d * x;
                    }
                }
            }
            if l == 0 {
                break;
            }
            let mut next = vec![0.0; rows * ni];
            for r in 0..rows {
                let dr = &delta[r * no..(r + 1) * no];
                let nr = &mut next[r * ni..(r + 1) * ni];
                for (o, &d) in dr.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let wr = &layer.weights[o * ni..(o + 1) * ni];
                    for (n, &w) in nr.iter_mut().zip(wr) {
                        *n += d * w;
                    }
                }
            }
            // through the ReLU feeding this layer
            for (n, &p) in next.iter_mut().zip(&cache.pre[l - 1]) {
                if p <= 0.0 {
                    *n = 0.0;
                }
            }
            delta = next;
        }
        Ok(grads)
    }

    /// Forward on `z` followed by [`NetParams::backward`].
    pub fn backward_from_input(&self, z: &SampleMatrix, upstream: &SampleMatrix) -> Result<NetParams> {
        let cache = self.forward_cached(z)?;
        self.backward(&cache, upstream)
    }

    /// Upper bound on the Lipschitz constant of the network with respect to
    /// the Euclidean norm: the product of per-layer spectral-norm bounds
    /// (ReLU is 1-Lipschitz).
    pub fn lipschitz_upper_bound(&self) -> f64 {
        self.layers.iter().map(|l| spectral_norm_upper_bound(&l.weights, l.out_dim, l.in_dim)).product()
    }
}

/// Rigorous upper bound on the largest singular value of an `rows × cols`
/// matrix.
///
/// With `A = WᵀW`, `λ_max(A)^k = λ_max(A^k) ≤ ‖A^k‖_F` for every `k`, and the
/// bound tightens as `k` grows (overestimation at most `rank^(1/2k)`). `A` is
/// squared six times, `k = 64`, renormalizing each step to avoid overflow.
pub fn spectral_norm_upper_bound(w: &[f64], rows: usize, cols: usize) -> f64 {
    let mut a = vec![0.0; cols * cols];
    for i in 0..cols {
        for j in 0..cols {
            a[i * cols + j] = (0..rows).map(|r| w[r * cols + i] * w[r * cols + j]).sum();
        }
    }
    let frob = |m: &[f64]| m.iter().map(|v| v * v).sum::<f64>().sqrt();
    // λ_max(A) ≤ (‖(A/s)^k‖_F)^(1/k) · s  with the scale tracked in log space
    let mut log_scale = 0.0f64;
    let mut power = 1.0f64;
    for _ in 0..6 {
        let f = frob(&a);
        if f == 0.0 {
            return 0.0;
        }
        for v in &mut a {
            *v /= f;
        }
        log_scale += f.ln() / power;
        let mut sq = vec![0.0; cols * cols];
        for i in 0..cols {
            for k in 0..cols {
                let aik = a[i * cols + k];
                if aik == 0.0 {
                    continue;
                }
                for j in 0..cols {
                    sq[i * cols + j] += aik * a[k * cols + j];
                }
            }
        }
        a = sq;
        power *= 2.0;
    }
    let f = frob(&a);
    if f == 0.0 {
        return 0.0;
    }
    let log_lambda = log_scale + f.ln() / power;
    // rounding in the squarings is far below this margin
    (0.5 * log_lambda).exp() * (1.0 + 1e-9)
}

/// Adam optimizer state; moments are stored flat in [`NetParams::iter`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(num_params: usize) -> Self {
        Self { m: vec![0.0; num_params], v: vec![0.0; num_params], step: 0, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }

    pub fn for_params(params: &NetParams) -> Self {
        Self::new(params.num_params())
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(params: &mut NetParams, grads: &NetParams, state: &mut AdamState, lr: f64) -> Result<()> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::argument(format!("learning rate must be positive, got {lr}")));
    }
    let n = params.num_params();
    if grads.num_params() != n || state.m.len() != n || state.v.len() != n {
        return Err(Error::argument("parameter, gradient and optimizer shapes differ"));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    for (((p, &g), m), v) in params.iter_mut().zip(grads.iter()).zip(&mut state.m).zip(&mut state.v) {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

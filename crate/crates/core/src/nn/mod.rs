//! Dense multilayer perceptrons with hand-written reverse mode.
//!
//! Parameters live in one flat vector. For each layer, in order, the weight
//! matrix is stored row-major as `out x in` and is followed by the `out`
//! biases. Hidden layers apply the activation; the output layer is linear.

mod adam;
pub mod gradcheck;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::math;

pub use adam::{AdamConfig, OptimState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => math::tanh(x),
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }

    fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Tanh),
            _ => None,
        }
    }
}

/// Weight initialisation. Biases always start at zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitScheme {
    /// Scaled orthogonal weights (Gram-Schmidt on a Gaussian matrix).
    Orthogonal { hidden_gain: f64, output_gain: f64 },
    Zeros,
}

impl InitScheme {
    /// Gain sqrt(2) for ReLU hidden layers, 1 for tanh.
    pub fn orthogonal(activation: Activation, output_gain: f64) -> Self {
        let hidden_gain = match activation {
            Activation::Relu => core::f64::consts::SQRT_2,
            Activation::Tanh => 1.0,
        };
        InitScheme::Orthogonal { hidden_gain, output_gain }
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum NnError {
    #[error("input has length {got}, network expects {expected}")]
    InputDim { expected: usize, got: usize },
    #[error("output gradient has length {got}, network produces {expected}")]
    OutputDim { expected: usize, got: usize },
    #[error("parameter vector has length {got}, layout needs {expected}")]
    ParamCount { expected: usize, got: usize },
    #[error("invalid layer sizes: {0}")]
    Layers(String),
    #[error("non-finite gradient at index {index}")]
    NonFiniteGradient { index: usize },
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
}

/// Per-layer outputs from a forward pass, needed for backprop.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// `acts[0]` is the input, `acts[l + 1]` the output of layer `l`.
    acts: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("cache holds the input at least")
    }
}

/// Number of parameters for the given layer sizes.
pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

fn check_sizes(sizes: &[usize]) -> Result<(), NnError> {
    if sizes.len() < 2 {
        return Err(NnError::Layers(format!("need at least two sizes, got {}", sizes.len())));
    }
    if sizes.contains(&0) {
        return Err(NnError::Layers("layer sizes must be positive".into()));
    }
    Ok(())
}

/// Fills `w` (rows x cols, row-major) with an orthogonal matrix times `gain`.
fn orthogonal_fill<R: Rng + ?Sized>(w: &mut [f64], rows: usize, cols: usize, gain: f64, rng: &mut R) {
    // Orthonormalise the shorter dimension's vectors.
    let (count, len) = if rows <= cols { (rows, cols) } else { (cols, rows) };
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v: Vec<f64> = (0..len).map(|_| math::normal(rng)).collect();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= dot * y;
            }
        }
        let norm = math::sqrt(v.iter().map(|x| x * x).sum());
        if norm < 1e-8 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        basis.push(v);
    }
    for r in 0..rows {
        for c in 0..cols {
            w[r * cols + c] = gain * if rows <= cols { basis[r][c] } else { basis[c][r] };
        }
    }
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        activation: Activation,
        init: InitScheme,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        check_sizes(sizes)?;
        let mut net =
            Self { sizes: sizes.to_vec(), activation, params: vec![0.0; param_count(sizes)] };
        if let InitScheme::Orthogonal { hidden_gain, output_gain } = init {
            let n_layers = net.n_layers();
            let mut offset = 0;
            for l in 0..n_layers {
                let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
                let gain = if l + 1 == n_layers { output_gain } else { hidden_gain };
                orthogonal_fill(
                    &mut net.params[offset..offset + fan_in * fan_out],
                    fan_out,
                    fan_in,
                    gain,
                    rng,
                );
                offset += fan_in * fan_out + fan_out;
            }
        }
        Ok(net)
    }

    pub fn from_params(
        sizes: &[usize],
        activation: Activation,
        params: Vec<f64>,
    ) -> Result<Self, NnError> {
        check_sizes(sizes)?;
        let expected = param_count(sizes);
        if params.len() != expected {
            return Err(NnError::ParamCount { expected, got: params.len() });
        }
        Ok(Self { sizes: sizes.to_vec(), activation, params })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Parameter index range of layer `l` (weights and biases).
    pub fn layer_range(&self, l: usize) -> core::ops::Range<usize> {
        let start = param_count(&self.sizes[..=l]);
        start..start + self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1]
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        self.check_input(input)?;
        let mut x = input.to_vec();
        let mut offset = 0;
        for l in 0..self.n_layers() {
            x = self.layer(l, offset, &x);
            offset += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        Ok(x)
    }

    pub fn forward_cached(&self, input: &[f64]) -> Result<ForwardCache, NnError> {
        self.check_input(input)?;
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(input.to_vec());
        let mut offset = 0;
        for l in 0..self.n_layers() {
            let y = self.layer(l, offset, &acts[l]);
            acts.push(y);
            offset += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        Ok(ForwardCache { acts })
    }

    fn check_input(&self, input: &[f64]) -> Result<(), NnError> {
        if input.len() != self.sizes[0] {
            return Err(NnError::InputDim { expected: self.sizes[0], got: input.len() });
        }
        Ok(())
    }

    fn layer(&self, l: usize, offset: usize, x: &[f64]) -> Vec<f64> {
        let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
        let w = &self.params[offset..offset + fan_in * fan_out];
        let b = &self.params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
        let hidden = l + 1 < self.n_layers();
        (0..fan_out)
            .map(|o| {
                let row = &w[o * fan_in..(o + 1) * fan_in];
                let z = b[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                if hidden {
                    self.activation.apply(z)
                } else {
                    z
                }
            })
            .collect()
    }

    /// Gradient of `<output, output_grad>` with respect to the parameters.
    pub fn backward(&self, input: &[f64], output_grad: &[f64]) -> Result<Vec<f64>, NnError> {
        let cache = self.forward_cached(input)?;
        let mut grads = vec![0.0; self.params.len()];
        self.backward_into(&cache, output_grad, &mut grads)?;
        Ok(grads)
    }

    /// Accumulates the parameter gradient into `grads` and returns the
    /// gradient with respect to the input.
    pub fn backward_into(
        &self,
        cache: &ForwardCache,
        output_grad: &[f64],
        grads: &mut [f64],
    ) -> Result<Vec<f64>, NnError> {
        if output_grad.len() != self.output_dim() {
            return Err(NnError::OutputDim { expected: self.output_dim(), got: output_grad.len() });
        }
        if grads.len() != self.params.len() {
            return Err(NnError::ParamCount { expected: self.params.len(), got: grads.len() });
        }
        let n_layers = self.n_layers();
        let mut delta = output_grad.to_vec();
        let mut end = self.params.len();
        for l in (0..n_layers).rev() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            if l + 1 < n_layers {
                for (d, &y) in delta.iter_mut().zip(&cache.acts[l + 1]) {
                    *d *= self.activation.derivative_from_output(y);
                }
            }
            let b_start = end - fan_out;
            let w_start = b_start - fan_in * fan_out;
            let x = &cache.acts[l];
            let w = &self.params[w_start..b_start];
            let mut prev = vec![0.0; fan_in];
            for o in 0..fan_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                grads[b_start + o] += d;
                let g_row = &mut grads[w_start + o * fan_in..w_start + (o + 1) * fan_in];
                for (g, &xi) in g_row.iter_mut().zip(x) {
                    *g += d * xi;
                }
                let w_row = &w[o * fan_in..(o + 1) * fan_in];
                for (p, &wi) in prev.iter_mut().zip(w_row) {
                    *p += d * wi;
                }
            }
            delta = prev;
            end = w_start;
        }
        Ok(delta)
    }

    /// Serialises to the checkpoint byte layout:
    ///
    /// ```text
    /// magic   b"PSNN"
    /// u16 LE  format version (1)
    /// u8      activation (0 relu, 1 tanh)
    /// u8      reserved (0)
    /// u32 LE  number of layer sizes k
    /// k x u32 LE layer sizes
    /// u64 LE  parameter count n
    /// n x f64 LE parameters
    /// ```
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + 4 * self.sizes.len() + 8 * self.params.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.push(self.activation.code());
        out.push(0);
        out.extend_from_slice(&(self.sizes.len() as u32).to_le_bytes());
        for &s in &self.sizes {
            out.extend_from_slice(&(s as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NnError> {
        let bad = |m: &str| NnError::Checkpoint(m.into());
        let mut cur = bytes;
        let mut take = |n: usize| -> Result<&[u8], NnError> {
            if cur.len() < n {
                return Err(bad("truncated"));
            }
            let (head, tail) = cur.split_at(n);
            cur = tail;
            Ok(head)
        };
        if take(4)? != CHECKPOINT_MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u16::from_le_bytes(take(2)?.try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(NnError::Checkpoint(format!("unsupported version {version}")));
        }
        let activation = Activation::from_code(take(1)?[0]).ok_or_else(|| bad("bad activation"))?;
        take(1)?;
        let k = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        if k > 1024 {
            return Err(bad("too many layers"));
        }
        let mut sizes = Vec::with_capacity(k);
        for _ in 0..k {
            sizes.push(u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize);
        }
        let n = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        check_sizes(&sizes)?;
        if n != param_count(&sizes) {
            return Err(NnError::ParamCount { expected: param_count(&sizes), got: n });
        }
        let raw = take(n.checked_mul(8).ok_or_else(|| bad("overflow"))?)?;
        let params = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        if !cur.is_empty() {
            return Err(bad("trailing bytes"));
        }
        Self::from_params(&sizes, activation, params)
    }
}

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"PSNN";
pub const CHECKPOINT_VERSION: u16 = 1;

/// Scales `grads` in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [&mut [f64]], max_norm: f64) -> f64 {
    let norm = math::sqrt(grads.iter().flat_map(|g| g.iter()).map(|x| x * x).sum());
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            g.iter_mut().for_each(|x| *x *= scale);
        }
    }
    norm
}

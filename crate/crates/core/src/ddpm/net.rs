use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ica::row_major;
use crate::rng;

/// Number of sinusoidal time features appended to the data input.
pub const TIME_FEATURES: usize = 8;

/// `[sin(π 2^k s), cos(π 2^k s)]` for `k = 0..4` with `s = t / T`.
pub fn time_embedding(t: usize, steps: usize) -> [f64; TIME_FEATURES] {
    let s = t as f64 / steps as f64;
    let mut out = [0.0; TIME_FEATURES];
    for k in 0..TIME_FEATURES / 2 {
        let w = PI * (1u32 << k) as f64 * s;
        out[2 * k] = w.sin();
        out[2 * k + 1] = w.cos();
    }
    out
}

/// Hidden widths for the named network configurations (16, 32, 64, 128).
pub fn table_widths(width: usize) -> Option<[usize; 3]> {
    match width {
        16 | 32 | 64 | 128 => Some([width, 2 * width, 4 * width]),
        _ => None,
    }
}

/// Affine layer `y = x W + b`; `weights` is `inputs × outputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    #[serde(with = "row_major")]
    pub weights: DMatrix<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn apply(&self, input: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = input * &self.weights;
        for (j, b) in self.bias.iter().enumerate() {
            out.column_mut(j).add_scalar_mut(*b);
        }
        out
    }
}

/// Noise predictor `ε_θ(x, t)`: `[x ; embed(t/T)]` through three rectified
/// hidden layers and a linear output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsNet {
    pub data_dim: usize,
    pub time_features: usize,
    pub widths: [usize; 3],
    pub layers: Vec<Dense>,
}

/// Gradients with the same layout as [`EpsNet::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(&l.bias);
        }
        out
    }
}

impl EpsNet {
    fn shapes(data_dim: usize, widths: [usize; 3]) -> [(usize, usize); 4] {
        [
            (data_dim + TIME_FEATURES, widths[0]),
            (widths[0], widths[1]),
            (widths[1], widths[2]),
            (widths[2], data_dim),
        ]
    }

    pub fn zeros(data_dim: usize, widths: [usize; 3]) -> Self {
        let layers = Self::shapes(data_dim, widths)
            .iter()
            .map(|&(i, o)| Dense {
                weights: DMatrix::zeros(i, o),
                bias: vec![0.0; o],
            })
            .collect();
        Self {
            data_dim,
            time_features: TIME_FEATURES,
            widths,
            layers,
        }
    }

    /// Weights uniform in `±√(6 / (fan_in + fan_out))`, biases zero.
    pub fn init(data_dim: usize, widths: [usize; 3], seed: u64) -> Result<Self> {
        if data_dim == 0 || widths.contains(&0) {
            return Err(Error::InvalidConfig("network dimensions must be positive".into()));
        }
        let mut rng = rng::stream(seed, "epsnet-init");
        let mut net = Self::zeros(data_dim, widths);
        for layer in &mut net.layers {
            let (fan_in, fan_out) = layer.weights.shape();
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            // fill in row-major order so the draw sequence matches the serialized layout
            for i in 0..fan_in {
                for j in 0..fan_out {
                    layer.weights[(i, j)] = limit * (2.0 * rng::uniform_open(&mut rng) - 1.0);
                }
            }
        }
        Ok(net)
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Parameters flattened layer by layer: weights (column-major) then bias.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                expected: self.num_params(),
                found: flat.len(),
            });
        }
        let mut rest = flat;
        for l in &mut self.layers {
            let (w, tail) = rest.split_at(l.weights.len());
            l.weights.as_mut_slice().copy_from_slice(w);
            let (b, tail) = tail.split_at(l.bias.len());
            l.bias.copy_from_slice(b);
            rest = tail;
        }
        Ok(())
    }

    pub(crate) fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for l in &mut self.layers {
            out.push(l.weights.as_mut_slice());
            out.push(l.bias.as_mut_slice());
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    /// Builds the `B × (d + 8)` network input from data rows and per-row steps.
    pub fn input(&self, x: &DMatrix<f64>, t: &[usize], steps: usize) -> DMatrix<f64> {
        let (b, d) = x.shape();
        let mut input = DMatrix::zeros(b, d + TIME_FEATURES);
        input.columns_mut(0, d).copy_from(x);
        for (r, &ti) in t.iter().enumerate() {
            let emb = time_embedding(ti, steps);
            for (k, e) in emb.iter().enumerate() {
                input[(r, d + k)] = *e;
            }
        }
        input
    }

    /// Forward pass on a prepared input matrix.
    pub fn forward_input(&self, input: &DMatrix<f64>) -> DMatrix<f64> {
        let last = self.layers.len() - 1;
        let mut h = input.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.apply(&h);
            if i < last {
                h.apply(|v| *v = v.max(0.0));
            }
        }
        h
    }

    /// Predicted noise for a batch of rows, all at step `t`.
    pub fn forward_batch(&self, x: &DMatrix<f64>, t: usize, steps: usize) -> DMatrix<f64> {
        let ts = vec![t; x.nrows()];
        self.forward_input(&self.input(x, &ts, steps))
    }

    pub fn forward(&self, x: &[f64], t: usize, steps: usize) -> Result<Vec<f64>> {
        if x.len() != self.data_dim {
            return Err(Error::DimensionMismatch {
                expected: self.data_dim,
                found: x.len(),
            });
        }
        if t == 0 || t > steps {
            return Err(Error::InvalidArgument(format!("step {t} outside 1..={steps}")));
        }
        let m = DMatrix::from_row_slice(1, x.len(), x);
        Ok(self.forward_batch(&m, t, steps).as_slice().to_vec())
    }

    /// Mean squared error against `target` over all batch entries, with
    /// gradients by backpropagation.
    pub fn mse_and_grad(&self, input: &DMatrix<f64>, target: &DMatrix<f64>) -> (f64, Gradients) {
        let last = self.layers.len() - 1;
        // activations[i] is the input to layer i
        let mut activations = Vec::with_capacity(self.layers.len());
        let mut h = input.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = layer.apply(&h);
            if i < last {
                z.apply(|v| *v = v.max(0.0));
            }
            activations.push(h);
            h = z;
        }
        let count = target.len() as f64;
        let mut delta = h - target;
        let loss = delta.norm_squared() / count;
        delta *= 2.0 / count;

        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let a = &activations[i];
            let weights = a.tr_mul(&delta);
            let bias = delta.row_sum().iter().copied().collect();
            grads.push(Dense { weights, bias });
            if i > 0 {
                let mut back = &delta * self.layers[i].weights.transpose();
                // a is post-ReLU for i > 0, so a > 0 marks the active units
                back.zip_apply(a, |g, act| {
                    if act <= 0.0 {
                        *g = 0.0;
                    }
                });
                delta = back;
            }
        }
        grads.reverse();
        (loss, Gradients { layers: grads })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let net: Self = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        let shapes = Self::shapes(net.data_dim, net.widths);
        let ok = net.time_features == TIME_FEATURES
            && net.layers.len() == shapes.len()
            && net
                .layers
                .iter()
                .zip(shapes)
                .all(|(l, s)| l.weights.shape() == s && l.bias.len() == s.1);
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "{}: layer shapes do not match widths {:?}",
                path.display(),
                net.widths
            )));
        }
        Ok(net)
    }
}

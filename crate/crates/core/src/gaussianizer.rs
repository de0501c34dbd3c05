//! Iterative Gaussianization: `K` layers of ICA followed by per-component
//! marginal Gaussianization, with the exact layer-by-layer inverse.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::evalkit::{ks_statistic, max_abs_offdiag_corr};
use crate::ica::{fit_ica, IcaConfig, IcaModel};
use crate::marginal::{degaussianize_1d, fit_marginal, gaussianize_1d, MarginalConfig, MarginalMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaussianizerConfig {
    pub iterations: usize,
    pub ica: IcaConfig,
    pub marginal: MarginalConfig,
}

impl Default for GaussianizerConfig {
    fn default() -> Self {
        Self {
            iterations: 5,
            ica: IcaConfig::default(),
            marginal: MarginalConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub ica: IcaModel,
    pub marginals: Vec<MarginalMap>,
}

impl Layer {
    pub fn forward_row(&self, x: &[f64], out: &mut [f64]) {
        self.ica.forward_row(x, out);
        for (v, map) in out.iter_mut().zip(&self.marginals) {
            *v = gaussianize_1d(map, *v);
        }
    }

    pub fn inverse_row(&self, y: &[f64], out: &mut [f64]) {
        let z: Vec<f64> = y
            .iter()
            .zip(&self.marginals)
            .map(|(v, map)| degaussianize_1d(map, *v))
            .collect();
        self.ica.inverse_row(&z, out);
    }
}

/// Normality and independence of one layer's output on the training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDiagnostics {
    /// KS distance to N(0, 1), per dimension.
    pub ks: Vec<f64>,
    pub max_offdiag_corr: f64,
    pub ica_converged: bool,
    pub ica_iterations: usize,
}

impl LayerDiagnostics {
    pub fn max_ks(&self) -> f64 {
        self.ks.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub layers: Vec<LayerDiagnostics>,
}

impl Diagnostics {
    /// Largest per-dimension KS statistic after each layer.
    pub fn ks_curve(&self) -> Vec<f64> {
        self.layers.iter().map(LayerDiagnostics::max_ks).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianizerStack {
    pub dim: usize,
    pub iterations: usize,
    pub layers: Vec<Layer>,
    pub diagnostics: Diagnostics,
}

impl GaussianizerStack {
    /// A stack with no layers; forward and inverse are the identity.
    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            iterations: 0,
            layers: Vec::new(),
            diagnostics: Diagnostics::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.layers.len() != self.iterations {
            return Err(Error::InvalidArgument(format!(
                "stack declares {} iterations but holds {} layers",
                self.iterations,
                self.layers.len()
            )));
        }
        for (k, layer) in self.layers.iter().enumerate() {
            let check = || -> Result<()> {
                layer.ica.validate()?;
                if layer.ica.dim != self.dim {
                    return Err(Error::DimensionMismatch {
                        expected: self.dim,
                        found: layer.ica.dim,
                    });
                }
                if layer.marginals.len() != self.dim {
                    return Err(Error::DimensionMismatch {
                        expected: self.dim,
                        found: layer.marginals.len(),
                    });
                }
                Ok(())
            };
            check().map_err(|e| e.in_layer(k + 1))?;
        }
        Ok(())
    }

    pub fn forward_row(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        let mut next = vec![0.0; self.dim];
        for layer in &self.layers {
            layer.forward_row(&cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }

    pub fn inverse_row(&self, y: &[f64]) -> Vec<f64> {
        let mut cur = y.to_vec();
        let mut next = vec![0.0; self.dim];
        for layer in self.layers.iter().rev() {
            layer.inverse_row(&cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        cur
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
        let stack: Self = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        stack.validate()?;
        Ok(stack)
    }
}

fn map_rows(data: &Dataset, dim: usize, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<Dataset> {
    data.check_dim(dim)?;
    let mut points = Vec::with_capacity(data.rows() * dim);
    for row in data.iter_rows() {
        points.extend(f(row));
    }
    Dataset::new(data.rows(), dim, points)
}

fn apply_layer(layer: &Layer, data: &Dataset) -> Result<Dataset> {
    let d = data.dim();
    let mut points = vec![0.0; data.rows() * d];
    for (row, out) in data.iter_rows().zip(points.chunks_exact_mut(d)) {
        layer.forward_row(row, out);
    }
    Dataset::new(data.rows(), d, points)
}

/// Fits `config.iterations` layers. Each layer's ICA and marginal maps are
/// fit on the output of the previous layer. Returns the stack and the fully
/// transformed training data.
pub fn fit_gaussianizer(
    data: &Dataset,
    config: &GaussianizerConfig,
) -> Result<(GaussianizerStack, Dataset)> {
    if config.iterations == 0 {
        return Err(Error::InvalidConfig("gaussianizer needs at least one iteration".into()));
    }
    let d = data.dim();
    let mut current = data.clone();
    let mut layers = Vec::with_capacity(config.iterations);
    let mut diagnostics = Diagnostics::default();
    for k in 1..=config.iterations {
        let (layer, out, diag) = fit_layer(&current, config, k).map_err(|e| e.in_layer(k))?;
        layers.push(layer);
        diagnostics.layers.push(diag);
        current = out;
    }
    let stack = GaussianizerStack {
        dim: d,
        iterations: config.iterations,
        layers,
        diagnostics,
    };
    Ok((stack, current))
}

fn fit_layer(
    data: &Dataset,
    config: &GaussianizerConfig,
    k: usize,
) -> Result<(Layer, Dataset, LayerDiagnostics)> {
    let ica_cfg = IcaConfig {
        seed: config.ica.seed.wrapping_add(k as u64 - 1),
        ..config.ica
    };
    let ica = fit_ica(data, &ica_cfg)?;
    let comps = crate::ica::ica_forward(&ica, data)?;
    let marginals = (0..data.dim())
        .map(|j| fit_marginal(&comps.column(j), &config.marginal))
        .collect::<Result<Vec<_>>>()?;
    let layer = Layer { ica, marginals };
    let out = apply_layer(&layer, data)?;
    let ks = (0..out.dim())
        .map(|j| ks_statistic(&out.column(j)))
        .collect::<Result<Vec<_>>>()?;
    let max_offdiag_corr = if out.dim() >= 2 {
        max_abs_offdiag_corr(&out)?
    } else {
        0.0
    };
    let diag = LayerDiagnostics {
        ks,
        max_offdiag_corr,
        ica_converged: layer.ica.converged,
        ica_iterations: layer.ica.iterations,
    };
    Ok((layer, out, diag))
}

/// Applies every layer in order: ICA, then `G⁻¹∘F` per component.
pub fn gaussianizer_forward(stack: &GaussianizerStack, data: &Dataset) -> Result<Dataset> {
    let d = stack.dim;
    data.check_dim(d)?;
    let mut current = data.clone();
    for layer in &stack.layers {
        current = apply_layer(layer, &current)?;
    }
    Ok(current)
}

/// Undoes the layers from last to first: `F⁻¹∘G` per component, then inverse ICA.
pub fn gaussianizer_inverse(stack: &GaussianizerStack, data: &Dataset) -> Result<Dataset> {
    map_rows(data, stack.dim, |row| stack.inverse_row(row))
}

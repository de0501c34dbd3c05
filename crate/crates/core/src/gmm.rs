//! Gaussian mixture ground truth: sampling and exact log-densities.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawSpec {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    covariances: Vec<Vec<Vec<f64>>>,
}

/// Mixture weights, means and covariances. Validated on construction, so a
/// `GmmSpec` value always has positive weights summing to one and
/// positive-definite covariances of matching dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct GmmSpec {
    weights: Vec<f64>,
    means: Vec<DVector<f64>>,
    covariances: Vec<DMatrix<f64>>,
    // lower Cholesky factors, one per component
    factors: Vec<DMatrix<f64>>,
    // log π_k − ½ d log 2π − log|L_k|
    log_norms: Vec<f64>,
}

impl GmmSpec {
    pub fn new(
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        covariances: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(Error::InvalidSpec("mixture has no components".into()));
        }
        if means.len() != k || covariances.len() != k {
            return Err(Error::InvalidSpec(format!(
                "{k} weights but {} means and {} covariances",
                means.len(),
                covariances.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidSpec(format!("weight {w} is not positive")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidSpec(format!("weights sum to {total}, not 1")));
        }
        let d = means[0].len();
        if d == 0 {
            return Err(Error::InvalidSpec("zero-dimensional means".into()));
        }

        let mut mean_vecs = Vec::with_capacity(k);
        let mut cov_mats = Vec::with_capacity(k);
        let mut factors = Vec::with_capacity(k);
        let mut log_norms = Vec::with_capacity(k);
        for (c, ((w, mu), cov)) in weights.iter().zip(&means).zip(&covariances).enumerate() {
            if mu.len() != d || mu.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidSpec(format!(
                    "mean {c} must have {d} finite entries"
                )));
            }
            if cov.len() != d || cov.iter().any(|r| r.len() != d) {
                return Err(Error::InvalidSpec(format!("covariance {c} is not {d}×{d}")));
            }
            let m = DMatrix::from_fn(d, d, |i, j| cov[i][j]);
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidSpec(format!("covariance {c} is not finite")));
            }
            let scale = m.amax().max(1.0);
            for i in 0..d {
                for j in 0..i {
                    if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                        return Err(Error::InvalidSpec(format!(
                            "covariance {c} is not symmetric"
                        )));
                    }
                }
            }
            let chol = Cholesky::<f64, Dyn>::new(m.clone()).ok_or_else(|| {
                Error::InvalidSpec(format!("covariance {c} is not positive definite"))
            })?;
            let l = chol.l();
            let log_det_half: f64 = l.diagonal().iter().map(|v| v.ln()).sum();
            log_norms.push(w.ln() - 0.5 * d as f64 * (2.0 * PI).ln() - log_det_half);
            factors.push(l);
            mean_vecs.push(DVector::from_column_slice(mu));
            cov_mats.push(m);
        }

        Ok(Self {
            weights,
            means: mean_vecs,
            covariances: cov_mats,
            factors,
            log_norms,
        })
    }

    /// Four equally weighted isotropic clusters at (±3, ±3) with covariance 0.3·I.
    pub fn default_2d() -> Self {
        let means = vec![
            vec![-3.0, -3.0],
            vec![-3.0, 3.0],
            vec![3.0, -3.0],
            vec![3.0, 3.0],
        ];
        let cov = vec![vec![0.3, 0.0], vec![0.0, 0.3]];
        Self::new(vec![0.25; 4], means, vec![cov; 4]).expect("default spec is valid")
    }

    /// A single `N(mean, σ²·I)` component.
    pub fn isotropic(mean: &[f64], variance: f64) -> Result<Self> {
        let d = mean.len();
        let cov = (0..d)
            .map(|i| (0..d).map(|j| if i == j { variance } else { 0.0 }).collect())
            .collect();
        Self::new(vec![1.0], vec![mean.to_vec()], vec![cov])
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean(&self, k: usize) -> &[f64] {
        self.means[k].as_slice()
    }

    pub fn covariance(&self, k: usize) -> &DMatrix<f64> {
        &self.covariances[k]
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| match e.classify() {
            // try_from failures surface as data errors; keep them as spec errors
            serde_json::error::Category::Data => {
                Error::InvalidSpec(format!("{}: {e}", path.display()))
            }
            _ => Error::json(path, e),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    fn component_log_density(&self, k: usize, x: &[f64]) -> f64 {
        let d = self.dim();
        let l = &self.factors[k];
        let mu = &self.means[k];
        // forward substitution for L y = x − μ
        let mut y = vec![0.0; d];
        let mut quad = 0.0;
        for i in 0..d {
            let mut acc = x[i] - mu[i];
            for j in 0..i {
                acc -= l[(i, j)] * y[j];
            }
            y[i] = acc / l[(i, i)];
            quad += y[i] * y[i];
        }
        self.log_norms[k] - 0.5 * quad
    }
}

impl TryFrom<RawSpec> for GmmSpec {
    type Error = Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        GmmSpec::new(raw.weights, raw.means, raw.covariances)
    }
}

impl From<GmmSpec> for RawSpec {
    fn from(spec: GmmSpec) -> Self {
        let d = spec.dim();
        RawSpec {
            weights: spec.weights,
            means: spec.means.iter().map(|m| m.as_slice().to_vec()).collect(),
            covariances: spec
                .covariances
                .iter()
                .map(|c| (0..d).map(|i| c.row(i).iter().copied().collect()).collect())
                .collect(),
        }
    }
}

/// Draws `n` rows: a component index from the weights, then `μ + L z` with
/// `z` standard normal.
pub fn sample_gmm(spec: &GmmSpec, n: usize, seed: u64) -> Dataset {
    let mut rng = rng::stream(seed, "gmm-sample");
    sample_with(spec, n, &mut rng).with_seed(seed)
}

fn sample_with(spec: &GmmSpec, n: usize, rng: &mut rng::Rng) -> Dataset {
    let d = spec.dim();
    let mut points = Vec::with_capacity(n * d);
    let mut z = vec![0.0; d];
    for _ in 0..n {
        let u = rng::uniform_open(rng);
        let mut acc = 0.0;
        let mut k = spec.components() - 1;
        for (i, w) in spec.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                k = i;
                break;
            }
        }
        rng::fill_std_normal(rng, &mut z);
        let l = &spec.factors[k];
        let mu = &spec.means[k];
        for i in 0..d {
            let mut v = mu[i];
            for j in 0..=i {
                v += l[(i, j)] * z[j];
            }
            points.push(v);
        }
    }
    Dataset::new(n, d, points).expect("finite by construction")
}

/// `log Σ_k π_k N(x | μ_k, Σ_k)`, evaluated with log-sum-exp.
pub fn gmm_log_density(spec: &GmmSpec, x: &[f64]) -> Result<f64> {
    if x.len() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            found: x.len(),
        });
    }
    Ok(log_density_unchecked(spec, x))
}

fn log_density_unchecked(spec: &GmmSpec, x: &[f64]) -> f64 {
    let k = spec.components();
    if k == 1 {
        return spec.component_log_density(0, x);
    }
    let terms: Vec<f64> = (0..k).map(|c| spec.component_log_density(c, x)).collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    max + sum.ln()
}

pub fn average_log_likelihood(spec: &GmmSpec, samples: &Dataset) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    samples.check_dim(spec.dim())?;
    let total: f64 = samples
        .iter_rows()
        .map(|row| log_density_unchecked(spec, row))
        .sum();
    Ok(total / samples.rows() as f64)
}

/// Average log-likelihood of `n` fresh draws from the mixture itself. Uses a
/// stream separate from [`sample_gmm`], so it never reuses training draws.
pub fn reference_log_likelihood(spec: &GmmSpec, n: usize, seed: u64) -> Result<f64> {
    if n < 1000 {
        return Err(Error::InvalidArgument(format!(
            "reference needs at least 1000 samples, got {n}"
        )));
    }
    let mut rng = rng::stream(seed, "gmm-reference");
    let samples = sample_with(spec, n, &mut rng);
    average_log_likelihood(spec, &samples)
}

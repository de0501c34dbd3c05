//! Square, invertible ICA layer: center, whiten, then rotate onto maximally
//! non-Gaussian axes found by symmetric FastICA.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nonlinearity {
    /// `g(u) = tanh(u)`
    Logcosh,
    /// `g(u) = u³`
    Cube,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcaConfig {
    pub max_iterations: usize,
    /// Stop once every unmixing row moves by less than this (`1 − |⟨w, w'⟩|`).
    pub tolerance: f64,
    pub nonlinearity: Nonlinearity,
    pub seed: u64,
}

impl Default for IcaConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            tolerance: 1e-6,
            nonlinearity: Nonlinearity::Logcosh,
            seed: 0,
        }
    }
}

impl IcaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("ica max_iterations must be ≥ 1".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidConfig("ica tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// `z = R W (x − c)` and its inverse `x = W⁻¹ Rᵀ z + c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcaModel {
    pub dim: usize,
    pub center: Vec<f64>,
    #[serde(with = "row_major")]
    pub whiten: DMatrix<f64>,
    #[serde(with = "row_major")]
    pub dewhiten: DMatrix<f64>,
    #[serde(with = "row_major")]
    pub rotation: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl IcaModel {
    /// The identity map in `dim` dimensions.
    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            center: vec![0.0; dim],
            whiten: DMatrix::identity(dim, dim),
            dewhiten: DMatrix::identity(dim, dim),
            rotation: DMatrix::identity(dim, dim),
            converged: true,
            iterations: 0,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let d = self.dim;
        let shapes_ok = self.center.len() == d
            && [&self.whiten, &self.dewhiten, &self.rotation]
                .iter()
                .all(|m| m.nrows() == d && m.ncols() == d);
        if !shapes_ok {
            return Err(Error::InvalidArgument(format!(
                "ica model matrices do not match dim {d}"
            )));
        }
        Ok(())
    }

    pub fn forward_row(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        let mut centered = vec![0.0; d];
        for i in 0..d {
            centered[i] = x[i] - self.center[i];
        }
        let white = mat_vec(&self.whiten, &centered);
        out.copy_from_slice(&mat_vec(&self.rotation, &white));
    }

    pub fn inverse_row(&self, z: &[f64], out: &mut [f64]) {
        let d = self.dim;
        // Rᵀ z
        let white: Vec<f64> = (0..d)
            .map(|j| (0..d).map(|i| self.rotation[(i, j)] * z[i]).sum())
            .collect();
        let x = mat_vec(&self.dewhiten, &white);
        for ((o, xi), c) in out.iter_mut().zip(&x).zip(&self.center) {
            *o = xi + c;
        }
    }
}

fn mat_vec(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)] * v[j]).sum())
        .collect()
}

fn map_rows(data: &Dataset, dim: usize, f: impl Fn(&[f64], &mut [f64])) -> Result<Dataset> {
    data.check_dim(dim)?;
    let mut points = vec![0.0; data.rows() * dim];
    for (row, out) in data.iter_rows().zip(points.chunks_exact_mut(dim.max(1))) {
        f(row, out);
    }
    Dataset::new(data.rows(), dim, points)
}

pub fn ica_forward(model: &IcaModel, data: &Dataset) -> Result<Dataset> {
    map_rows(data, model.dim, |x, out| model.forward_row(x, out))
}

pub fn ica_inverse(model: &IcaModel, comps: &Dataset) -> Result<Dataset> {
    map_rows(comps, model.dim, |z, out| model.inverse_row(z, out))
}

pub fn fit_ica(data: &Dataset, config: &IcaConfig) -> Result<IcaModel> {
    config.validate()?;
    let (n, d) = (data.rows(), data.dim());
    if d == 0 {
        return Err(Error::InvalidArgument("zero-dimensional data".into()));
    }
    if n < 10 * d {
        return Err(Error::InvalidArgument(format!(
            "ica needs at least {} rows for {d} dimensions, got {n}",
            10 * d
        )));
    }

    let center = data.column_means();
    let cov = data.covariance();
    let eig = SymmetricEigen::new(cov);
    let max_ev = eig.eigenvalues.max();
    let min_ev = eig.eigenvalues.min();
    if !(max_ev > 0.0) || min_ev < 1e-10 * max_ev {
        return Err(Error::RankDeficient {
            ratio: min_ev / max_ev,
        });
    }
    let e = &eig.eigenvectors;
    let whiten = DMatrix::from_fn(d, d, |i, j| e[(j, i)] / eig.eigenvalues[i].sqrt());
    let dewhiten = DMatrix::from_fn(d, d, |i, j| e[(i, j)] * eig.eigenvalues[j].sqrt());

    // whitened data, column-major d × n for cheap per-component projections
    let mut white = DMatrix::zeros(d, n);
    for (c, row) in data.iter_rows().enumerate() {
        for i in 0..d {
            let mut acc = 0.0;
            for j in 0..d {
                acc += whiten[(i, j)] * (row[j] - center[j]);
            }
            white[(i, c)] = acc;
        }
    }

    let mut rng = rng::stream(config.seed, "fastica-init");
    let mut init = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            init[(i, j)] = rng::std_normal(&mut rng);
        }
    }
    let (mut rotation, converged, iterations) = fastica_symmetric(&white, init, config);
    canonical_signs(&mut rotation);

    Ok(IcaModel {
        dim: d,
        center,
        whiten,
        dewhiten,
        rotation,
        converged,
        iterations,
    })
}

/// Fixed-point iteration `w ← E[x g(wᵀx)] − E[g'(wᵀx)] w` for all rows at
/// once, each followed by symmetric decorrelation.
fn fastica_symmetric(
    white: &DMatrix<f64>,
    init: DMatrix<f64>,
    config: &IcaConfig,
) -> (DMatrix<f64>, bool, usize) {
    let (d, n) = (white.nrows(), white.ncols());
    let mut w = symmetric_decorrelation(&init);
    for iter in 1..=config.max_iterations {
        let proj = &w * white; // d × n
        let mut next = DMatrix::zeros(d, d);
        for i in 0..d {
            let mut mean_dg = 0.0;
            for c in 0..n {
                let (g, dg) = contrast(config.nonlinearity, proj[(i, c)]);
                mean_dg += dg;
                for j in 0..d {
                    next[(i, j)] += white[(j, c)] * g;
                }
            }
            mean_dg /= n as f64;
            for j in 0..d {
                next[(i, j)] = next[(i, j)] / n as f64 - mean_dg * w[(i, j)];
            }
        }
        let next = symmetric_decorrelation(&next);
        let change = (0..d)
            .map(|i| 1.0 - next.row(i).dot(&w.row(i)).abs())
            .fold(0.0, f64::max);
        w = next;
        if change < config.tolerance {
            return (w, true, iter);
        }
    }
    (w, false, config.max_iterations)
}

fn contrast(nl: Nonlinearity, u: f64) -> (f64, f64) {
    match nl {
        Nonlinearity::Logcosh => {
            let t = u.tanh();
            (t, 1.0 - t * t)
        }
        Nonlinearity::Cube => (u * u * u, 3.0 * u * u),
    }
}

/// `(W Wᵀ)^{-1/2} W`, the closest orthonormal matrix to `W`.
pub(crate) fn symmetric_decorrelation(w: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(w * w.transpose());
    let e = &eig.eigenvectors;
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt()));
    e * inv_sqrt * e.transpose() * w
}

/// Flips each row so its largest-magnitude entry is positive.
fn canonical_signs(w: &mut DMatrix<f64>) {
    for i in 0..w.nrows() {
        let mut pivot = 0.0f64;
        for j in 0..w.ncols() {
            if w[(i, j)].abs() > pivot.abs() {
                pivot = w[(i, j)];
            }
        }
        if pivot < 0.0 {
            w.row_mut(i).neg_mut();
        }
    }
}

/// Serializes a matrix as nested row arrays.
pub(crate) mod row_major {
    use nalgebra::DMatrix;
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = (0..m.nrows())
            .map(|i| m.row(i).iter().copied().collect())
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(D::Error::custom("ragged matrix rows"));
        }
        Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
    }
}

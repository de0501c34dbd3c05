//! One-dimensional Gaussianization of a single component.
//!
//! A [`MarginalMap`] stores the CDF of a Gaussian-kernel density estimate on
//! a fixed grid. Evaluation and inversion share the same piecewise-linear
//! interpolant, so `F⁻¹(F(z))` is exact up to rounding wherever the grid CDF
//! is strictly increasing. CDF values are clipped to `[1/(n+1), n/(n+1)]`,
//! which keeps `G⁻¹(F(z))` finite and bounds Gaussianized values to roughly
//! `±G⁻¹(n/(n+1))`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal;

/// Kernel bandwidth selection.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    #[default]
    /// `1.06 σ̂ n^(-1/5)`.
    Silverman,
    /// Silverman's bandwidth multiplied by a factor.
    Scaled(f64),
    Fixed(f64),
}


#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MarginalConfig {
    pub bandwidth: Bandwidth,
    pub grid_size: usize,
}

impl Default for MarginalConfig {
    fn default() -> Self {
        Self {
            bandwidth: Bandwidth::Silverman,
            grid_size: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMap", into = "RawMap")]
pub struct MarginalMap {
    grid: Vec<f64>,
    cdf: Vec<f64>,
    bandwidth: f64,
    clamp_lo: f64,
    clamp_hi: f64,
}

#[derive(Serialize, Deserialize)]
struct RawMap {
    grid: Vec<f64>,
    cdf: Vec<f64>,
    bandwidth: f64,
    clamp: [f64; 2],
}

impl TryFrom<RawMap> for MarginalMap {
    type Error = Error;

    fn try_from(raw: RawMap) -> Result<Self> {
        let map = MarginalMap {
            grid: raw.grid,
            cdf: raw.cdf,
            bandwidth: raw.bandwidth,
            clamp_lo: raw.clamp[0],
            clamp_hi: raw.clamp[1],
        };
        map.validate()?;
        Ok(map)
    }
}

impl From<MarginalMap> for RawMap {
    fn from(m: MarginalMap) -> Self {
        RawMap {
            grid: m.grid,
            cdf: m.cdf,
            bandwidth: m.bandwidth,
            clamp: [m.clamp_lo, m.clamp_hi],
        }
    }
}

impl MarginalMap {
    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(format!("marginal map: {msg}")));
        if self.grid.len() < 2 || self.grid.len() != self.cdf.len() {
            return bad("grid and cdf must have equal length ≥ 2");
        }
        if self.grid.windows(2).any(|w| !(w[0] < w[1])) {
            return bad("grid is not strictly increasing");
        }
        if self.cdf.windows(2).any(|w| w[1] < w[0]) || self.cdf.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return bad("cdf is not a non-decreasing sequence in [0, 1]");
        }
        if !(self.bandwidth > 0.0) {
            return bad("bandwidth must be positive");
        }
        if !(0.0 < self.clamp_lo && self.clamp_lo < self.clamp_hi && self.clamp_hi < 1.0) {
            return bad("clamp bounds must satisfy 0 < lo < hi < 1");
        }
        Ok(())
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn cdf_values(&self) -> &[f64] {
        &self.cdf
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn clamp(&self) -> (f64, f64) {
        (self.clamp_lo, self.clamp_hi)
    }

    /// Largest gap between neighbouring grid points.
    pub fn grid_spacing(&self) -> f64 {
        self.grid
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }
}

fn kernel(u: f64) -> f64 {
    (-0.5 * u * u).exp() / (2.0 * PI).sqrt()
}

/// Gaussian-kernel density estimate `(1/nh) Σ_j K((z − z_j)/h)`.
pub fn kde_pdf(samples: &[f64], h: f64, z: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("bandwidth {h} must be positive")));
    }
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let sum: f64 = samples.iter().map(|s| kernel((z - s) / h)).sum();
    Ok(sum / (samples.len() as f64 * h))
}

pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    1.06 * var.sqrt() * n.powf(-0.2)
}

fn resolve_bandwidth(samples: &[f64], bw: Bandwidth) -> Result<f64> {
    let h = match bw {
        Bandwidth::Silverman => silverman_bandwidth(samples),
        Bandwidth::Scaled(f) => f * silverman_bandwidth(samples),
        Bandwidth::Fixed(h) => h,
    };
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("bandwidth {h} must be positive")));
    }
    Ok(h)
}

// Kernel contributions beyond this many bandwidths are below 1e-17 and skipped.
const KERNEL_CUTOFF: f64 = 9.0;

/// KDE evaluated on an increasing grid, summing only samples within the
/// kernel cutoff of each grid point.
fn kde_on_grid(sorted: &[f64], h: f64, grid: &[f64]) -> Vec<f64> {
    let norm = 1.0 / (sorted.len() as f64 * h);
    let reach = KERNEL_CUTOFF * h;
    let mut lo = 0;
    let mut hi = 0;
    grid.iter()
        .map(|&z| {
            while lo < sorted.len() && sorted[lo] < z - reach {
                lo += 1;
            }
            while hi < sorted.len() && sorted[hi] <= z + reach {
                hi += 1;
            }
            sorted[lo..hi].iter().map(|s| kernel((z - s) / h)).sum::<f64>() * norm
        })
        .collect()
}

/// Fits the grid CDF of a KDE: `m` points spanning `[min − 4h, max + 4h]`,
/// trapezoidal integration, normalized to end at one.
pub fn fit_marginal(samples: &[f64], config: &MarginalConfig) -> Result<MarginalMap> {
    let n = samples.len();
    if n < 10 {
        return Err(Error::InvalidArgument(format!(
            "marginal fit needs at least 10 samples, got {n}"
        )));
    }
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument("non-finite sample".into()));
    }
    if config.grid_size < 2 {
        return Err(Error::InvalidConfig("grid_size must be at least 2".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (min, max) = (sorted[0], sorted[n - 1]);
    if min == max {
        return Err(Error::ZeroVariance);
    }
    let h = resolve_bandwidth(samples, config.bandwidth)?;

    let m = config.grid_size;
    let (lo, hi) = (min - 4.0 * h, max + 4.0 * h);
    let step = (hi - lo) / (m - 1) as f64;
    let grid: Vec<f64> = (0..m)
        .map(|i| if i == m - 1 { hi } else { lo + step * i as f64 })
        .collect();
    let pdf = kde_on_grid(&sorted, h, &grid);

    let mut cdf = Vec::with_capacity(m);
    let mut acc = 0.0;
    cdf.push(0.0);
    for i in 1..m {
        acc += 0.5 * (pdf[i] + pdf[i - 1]) * (grid[i] - grid[i - 1]);
        cdf.push(acc);
    }
    cdf.iter_mut().for_each(|c| *c /= acc);
    cdf[m - 1] = 1.0;

    let nf = n as f64;
    Ok(MarginalMap {
        grid,
        cdf,
        bandwidth: h,
        clamp_lo: 1.0 / (nf + 1.0),
        clamp_hi: nf / (nf + 1.0),
    })
}

/// `F(z)`: linear interpolation of the grid CDF, clipped to the clamp range.
pub fn marginal_cdf(map: &MarginalMap, z: f64) -> f64 {
    let g = &map.grid;
    let u = if z <= g[0] {
        map.clamp_lo
    } else if z >= g[g.len() - 1] {
        map.clamp_hi
    } else {
        // first knot strictly greater than z; 1 ≤ k ≤ m−1 here
        let k = g.partition_point(|&x| x <= z);
        let (z0, z1) = (g[k - 1], g[k]);
        let (c0, c1) = (map.cdf[k - 1], map.cdf[k]);
        c0 + (z - z0) / (z1 - z0) * (c1 - c0)
    };
    u.clamp(map.clamp_lo, map.clamp_hi)
}

/// `F⁻¹(u)`. `u` must lie in (0, 1); it is clipped to the clamp range first.
pub fn marginal_inverse_cdf(map: &MarginalMap, u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "probability {u} is outside (0, 1)"
        )));
    }
    Ok(inverse_clamped(map, u))
}

fn inverse_clamped(map: &MarginalMap, u: f64) -> f64 {
    let u = u.clamp(map.clamp_lo, map.clamp_hi);
    let c = &map.cdf;
    // first knot with F ≥ u
    let k = c.partition_point(|&x| x < u);
    if k == 0 {
        return map.grid[0];
    }
    if k == c.len() {
        return map.grid[c.len() - 1];
    }
    let (c0, c1) = (c[k - 1], c[k]);
    let (z0, z1) = (map.grid[k - 1], map.grid[k]);
    // c0 < u ≤ c1, so the segment has positive rise
    z0 + (u - c0) / (c1 - c0) * (z1 - z0)
}

/// `G⁻¹(F(z))`.
pub fn gaussianize_1d(map: &MarginalMap, z: f64) -> f64 {
    normal::inverse_cdf_open(marginal_cdf(map, z))
}

/// `F⁻¹(G(y))`. Values whose normal CDF falls outside the clamp range map to
/// the ends of the representable range instead of extrapolating.
pub fn degaussianize_1d(map: &MarginalMap, y: f64) -> f64 {
    inverse_clamped(map, normal::cdf(y))
}

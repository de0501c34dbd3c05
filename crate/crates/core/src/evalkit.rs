//! Evaluation metrics: log-likelihood curves over reverse steps, KS
//! normality distances and correlation diagnostics.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::ddpm::Snapshot;
use crate::error::{Error, Result};
use crate::gaussianizer::{gaussianizer_forward, gaussianizer_inverse, GaussianizerStack};
use crate::gmm::{average_log_likelihood, GmmSpec};
use crate::normal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pipeline {
    Baseline,
    Gaussianized,
}

impl Pipeline {
    pub const ALL: [Pipeline; 2] = [Pipeline::Baseline, Pipeline::Gaussianized];

    pub fn as_str(self) -> &'static str {
        match self {
            Pipeline::Baseline => "baseline",
            Pipeline::Gaussianized => "gaussianized",
        }
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Pipeline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Pipeline::Baseline),
            "gaussianized" => Ok(Pipeline::Gaussianized),
            other => Err(Error::InvalidArgument(format!(
                "unknown pipeline {other:?} (expected baseline or gaussianized)"
            ))),
        }
    }
}

/// Average log-likelihood per recorded reverse step, with the reference
/// value of true samples alongside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlCurve {
    pub steps: Vec<usize>,
    pub values: Vec<f64>,
    pub reference: f64,
    pub pipeline: Pipeline,
    pub width: usize,
}

impl LlCurve {
    pub fn at(&self, step: usize) -> Option<f64> {
        self.steps
            .iter()
            .position(|&s| s == step)
            .map(|i| self.values[i])
    }

    /// CSV with header `step,ll,reference,pipeline,width`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,ll,reference,pipeline,width\n");
        for (s, v) in self.steps.iter().zip(&self.values) {
            out.push_str(&format!(
                "{s},{v:?},{:?},{},{}\n",
                self.reference, self.pipeline, self.width
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |line: usize, what: &str| {
            Error::InvalidArgument(format!("ll curve csv line {line}: {what}"))
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "step,ll,reference,pipeline,width")) => {}
            _ => return Err(bad(1, "missing header")),
        }
        let mut curve: Option<LlCurve> = None;
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(bad(i + 1, "expected 5 fields"));
            }
            let step: usize = f[0].parse().map_err(|_| bad(i + 1, "step"))?;
            let ll: f64 = f[1].parse().map_err(|_| bad(i + 1, "ll"))?;
            let reference: f64 = f[2].parse().map_err(|_| bad(i + 1, "reference"))?;
            let pipeline: Pipeline = f[3].parse()?;
            let width: usize = f[4].parse().map_err(|_| bad(i + 1, "width"))?;
            let c = curve.get_or_insert_with(|| LlCurve {
                steps: Vec::new(),
                values: Vec::new(),
                reference,
                pipeline,
                width,
            });
            c.steps.push(step);
            c.values.push(ll);
        }
        curve.ok_or_else(|| bad(2, "no rows"))
    }
}

/// Scores each snapshot against the true mixture. For the gaussianized
/// pipeline the snapshot is first mapped back to data space through the
/// inverse stack.
pub fn ll_vs_step(
    spec: &GmmSpec,
    snapshots: &[Snapshot],
    inverse_map: Option<&GaussianizerStack>,
    pipeline: Pipeline,
    width: usize,
    reference: f64,
) -> Result<LlCurve> {
    if pipeline == Pipeline::Gaussianized && inverse_map.is_none() {
        return Err(Error::InvalidArgument(
            "gaussianized pipeline requires the fitted stack to score samples".into(),
        ));
    }
    let mut steps = Vec::with_capacity(snapshots.len());
    let mut values = Vec::with_capacity(snapshots.len());
    for snap in snapshots {
        let ll = match inverse_map {
            Some(stack) => {
                average_log_likelihood(spec, &gaussianizer_inverse(stack, &snap.points)?)?
            }
            None => average_log_likelihood(spec, &snap.points)?,
        };
        steps.push(snap.step);
        values.push(ll);
    }
    Ok(LlCurve {
        steps,
        values,
        reference,
        pipeline,
        width,
    })
}

/// Kolmogorov–Smirnov distance between the empirical CDF of `samples` and
/// the standard normal CDF.
pub fn ks_statistic(samples: &[f64]) -> Result<f64> {
    let n = samples.len();
    if n < 10 {
        return Err(Error::InvalidArgument(format!(
            "ks statistic needs at least 10 samples, got {n}"
        )));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let nf = n as f64;
    let mut d: f64 = 0.0;
    for (i, x) in sorted.iter().enumerate() {
        let f = normal::cdf(*x);
        d = d.max((i + 1) as f64 / nf - f).max(f - i as f64 / nf);
    }
    Ok(d)
}

/// Largest absolute off-diagonal entry of the sample correlation matrix.
pub fn max_abs_offdiag_corr(data: &Dataset) -> Result<f64> {
    let (n, d) = (data.rows(), data.dim());
    if n < 10 || d < 2 {
        return Err(Error::InvalidArgument(format!(
            "correlation needs n ≥ 10 and d ≥ 2, got n = {n}, d = {d}"
        )));
    }
    let cov = data.covariance();
    if (0..d).any(|i| !(cov[(i, i)] > 0.0)) {
        return Err(Error::ZeroVariance);
    }
    let mut worst: f64 = 0.0;
    for i in 0..d {
        for j in (i + 1)..d {
            let r = cov[(i, j)] / (cov[(i, i)] * cov[(j, j)]).sqrt();
            worst = worst.max(r.abs().min(1.0));
        }
    }
    Ok(worst)
}

/// Rows whose every coordinate lies inside the central `coverage` quantile
/// range of its column.
pub fn central_rows(data: &Dataset, coverage: f64) -> Result<Dataset> {
    if !(coverage > 0.0 && coverage <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "coverage must lie in (0, 1], got {coverage}"
        )));
    }
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let tail = (1.0 - coverage) / 2.0;
    let bounds: Vec<(f64, f64)> = (0..data.dim())
        .map(|j| {
            let mut col = data.column(j);
            col.sort_by(f64::total_cmp);
            (quantile(&col, tail), quantile(&col, 1.0 - tail))
        })
        .collect();
    let kept: Vec<&[f64]> = data
        .iter_rows()
        .filter(|row| row.iter().zip(&bounds).all(|(v, (lo, hi))| v >= lo && v <= hi))
        .collect();
    if kept.is_empty() {
        return Ok(Dataset::empty(data.dim()));
    }
    Dataset::from_rows(&kept)
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

/// Reconstruction error of `inverse(forward(x))` on held-out data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTrip {
    pub rows_used: usize,
    pub max_abs_error: f64,
    /// Per-dimension mean squared error.
    pub mse: Vec<f64>,
    /// Per-dimension variance of the full held-out set.
    pub variance: Vec<f64>,
}

impl RoundTrip {
    /// Largest per-dimension `mse / variance`.
    pub fn max_relative_mse(&self) -> f64 {
        self.mse
            .iter()
            .zip(&self.variance)
            .map(|(m, v)| m / v)
            .fold(0.0, f64::max)
    }
}

/// Round-trip error restricted to the central `coverage` quantile box.
pub fn round_trip_error(
    stack: &GaussianizerStack,
    heldout: &Dataset,
    coverage: f64,
) -> Result<RoundTrip> {
    heldout.check_dim(stack.dim)?;
    let central = central_rows(heldout, coverage)?;
    let back = gaussianizer_inverse(stack, &gaussianizer_forward(stack, &central)?)?;
    let d = heldout.dim();
    let mut mse = vec![0.0; d];
    let mut max_abs_error: f64 = 0.0;
    for (a, b) in central.iter_rows().zip(back.iter_rows()) {
        for j in 0..d {
            let e = a[j] - b[j];
            mse[j] += e * e;
            max_abs_error = max_abs_error.max(e.abs());
        }
    }
    let used = central.rows().max(1) as f64;
    mse.iter_mut().for_each(|m| *m /= used);
    let cov = heldout.covariance();
    Ok(RoundTrip {
        rows_used: central.rows(),
        max_abs_error,
        mse,
        variance: (0..d).map(|j| cov[(j, j)]).collect(),
    })
}

/// Mean of the last `fraction` of a loss curve (at least one entry).
pub fn final_window_mean(losses: &[f64], fraction: f64) -> f64 {
    let n = losses.len();
    if n == 0 {
        return f64::NAN;
    }
    let w = ((n as f64 * fraction).round() as usize).clamp(1, n);
    losses[n - w..].iter().sum::<f64>() / w as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn central_rows_drops_tails() {
        let rows: Vec<[f64; 2]> = (0..1000).map(|i| [i as f64, (999 - i) as f64]).collect();
        let ds = Dataset::from_rows(&rows).unwrap();
        let kept = central_rows(&ds, 0.9).unwrap();
        assert_eq!(kept.rows(), 900);
        assert!(kept.iter_rows().all(|r| r[0] >= 49.95 && r[0] <= 949.05));
        assert_eq!(central_rows(&ds, 1.0).unwrap().rows(), 1000);
    }

    #[test]
    fn ks_point_mass() {
        assert_eq!(ks_statistic(&[0.0; 20]).unwrap(), 0.5);
        assert!(ks_statistic(&[0.0; 9]).is_err());
    }

    #[test]
    fn corr_duplicate_column() {
        let rows: Vec<[f64; 3]> = (0..50)
            .map(|i| {
                let x = (i as f64 * 0.37).sin();
                [x, x, (i as f64 * 1.3).cos()]
            })
            .collect();
        let ds = Dataset::from_rows(&rows).unwrap();
        assert!((max_abs_offdiag_corr(&ds).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn corr_zero_variance() {
        let rows: Vec<[f64; 2]> = (0..20).map(|i| [i as f64, 1.0]).collect();
        let ds = Dataset::from_rows(&rows).unwrap();
        assert!(matches!(max_abs_offdiag_corr(&ds), Err(Error::ZeroVariance)));
    }

    #[test]
    fn pipeline_parse() {
        assert_eq!("baseline".parse::<Pipeline>().unwrap(), Pipeline::Baseline);
        assert!("raw".parse::<Pipeline>().is_err());
    }

    #[test]
    fn window_mean() {
        let l: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert_eq!(final_window_mean(&l, 0.1), 94.5);
    }

    #[test]
    fn curve_csv_round_trip() {
        let c = LlCurve {
            steps: vec![0, 10],
            values: vec![-10.5, -3.25],
            reference: -3.0,
            pipeline: Pipeline::Gaussianized,
            width: 16,
        };
        let text = c.to_csv();
        assert!(text.starts_with("step,ll,reference,pipeline,width\n0,-10.5,-3.0,gaussianized,16\n"));
        assert_eq!(LlCurve::from_csv(&text).unwrap(), c);
    }
}

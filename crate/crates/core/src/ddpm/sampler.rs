use nalgebra::DMatrix;

use super::net::EpsNet;
use super::schedule::DiffusionSchedule;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng;

/// Anything that predicts the noise in `x_t`.
pub trait NoisePredictor {
    fn dim(&self) -> usize;
    /// `x` holds one sample per row; all rows share step `t`.
    fn predict(&self, x: &DMatrix<f64>, t: usize, sched: &DiffusionSchedule) -> DMatrix<f64>;
}

impl NoisePredictor for EpsNet {
    fn dim(&self) -> usize {
        self.data_dim
    }

    fn predict(&self, x: &DMatrix<f64>, t: usize, sched: &DiffusionSchedule) -> DMatrix<f64> {
        self.forward_batch(x, t, sched.steps)
    }
}

/// The exact posterior-mean noise predictor for `N(μ, σ² I)` data:
/// `ε*(x_t, t) = √(1−ᾱ_t) (x_t − √ᾱ_t μ) / (ᾱ_t σ² + 1 − ᾱ_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianOracle {
    pub mean: Vec<f64>,
    pub variance: f64,
}

impl NoisePredictor for GaussianOracle {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn predict(&self, x: &DMatrix<f64>, t: usize, sched: &DiffusionSchedule) -> DMatrix<f64> {
        let ab = sched.alpha_bar(t);
        let gain = (1.0 - ab).sqrt() / (ab * self.variance + 1.0 - ab);
        let shift = ab.sqrt();
        DMatrix::from_fn(x.nrows(), x.ncols(), |r, c| {
            gain * (x[(r, c)] - shift * self.mean[c])
        })
    }
}

/// `μ_θ = (x_t − β_t / √(1−ᾱ_t) · ε̂) / √α_t`.
pub fn posterior_mean(
    x_t: &DMatrix<f64>,
    eps_hat: &DMatrix<f64>,
    t: usize,
    sched: &DiffusionSchedule,
) -> DMatrix<f64> {
    let coef = sched.beta(t) / (1.0 - sched.alpha_bar(t)).sqrt();
    let scale = 1.0 / sched.alpha(t).sqrt();
    x_t.zip_map(eps_hat, |x, e| scale * (x - coef * e))
}

/// One ancestral step `x_t → x_{t−1}`. Adds `√β̃_t · noise` when `t > 1`;
/// with `noise = None` the posterior mean is returned.
pub fn reverse_step(
    predictor: &impl NoisePredictor,
    x_t: &DMatrix<f64>,
    t: usize,
    sched: &DiffusionSchedule,
    noise: Option<&DMatrix<f64>>,
) -> Result<DMatrix<f64>> {
    sched.check_step(t)?;
    if x_t.ncols() != predictor.dim() {
        return Err(Error::DimensionMismatch {
            expected: predictor.dim(),
            found: x_t.ncols(),
        });
    }
    let eps_hat = predictor.predict(x_t, t, sched);
    let mut mean = posterior_mean(x_t, &eps_hat, t, sched);
    if let (Some(z), true) = (noise, t > 1) {
        if z.shape() != mean.shape() {
            return Err(Error::InvalidArgument("noise shape does not match x_t".into()));
        }
        let sigma = sched.posterior_var(t).sqrt();
        mean.zip_apply(z, |m, zi| *m += sigma * zi);
    }
    Ok(mean)
}

/// Sample matrix after `step` reverse steps (0 is the initial noise).
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub points: Dataset,
}

/// Draws `x_T ~ N(0, I)` and runs the reverse chain for `t = T..1`,
/// recording the batch after each requested number of steps.
pub fn sample(
    predictor: &impl NoisePredictor,
    sched: &DiffusionSchedule,
    n: usize,
    seed: u64,
    record_at: &[usize],
) -> Result<Vec<Snapshot>> {
    let steps = sched.steps;
    if let Some(bad) = record_at.iter().find(|&&s| s > steps) {
        return Err(Error::InvalidArgument(format!(
            "snapshot step {bad} outside 0..={steps}"
        )));
    }
    let mut wanted = record_at.to_vec();
    wanted.sort_unstable();
    wanted.dedup();

    let d = predictor.dim();
    let mut rng = rng::stream(seed, "ddpm-sample");
    let normals = |rng: &mut rng::Rng| {
        let mut m = DMatrix::zeros(n, d);
        for r in 0..n {
            for c in 0..d {
                m[(r, c)] = rng::std_normal(rng);
            }
        }
        m
    };
    let mut x = normals(&mut rng);
    let mut out = Vec::with_capacity(wanted.len());
    let mut pending = wanted.into_iter().peekable();
    for taken in 0..=steps {
        if pending.peek() == Some(&taken) {
            out.push(Snapshot {
                step: taken,
                points: Dataset::from_matrix(&x)?,
            });
            pending.next();
        }
        if pending.peek().is_none() {
            break;
        }
        // a later snapshot is still pending, so taken < steps here
        let t = steps - taken;
        let z = if t > 1 { Some(normals(&mut rng)) } else { None };
        x = reverse_step(predictor, &x, t, sched, z.as_ref())?;
    }
    Ok(out)
}

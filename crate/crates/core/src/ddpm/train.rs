use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::net::{EpsNet, Gradients};
use super::schedule::DiffusionSchedule;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_stability: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 20_000,
            batch_size: 128,
            learning_rate: 1e-3,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps_stability: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidConfig("moment decay rates must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Adaptive moment estimation over a flat view of the network parameters.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(num_params: usize, cfg: &TrainConfig) -> Self {
        Self {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps_stability,
            step: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
        }
    }

    pub fn update(&mut self, net: &mut EpsNet, grads: &Gradients) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let step_size = self.lr / c1;
        let grad_slices = grads
            .layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()]);
        let mut offset = 0;
        for (params, g) in net.param_slices_mut().into_iter().zip(grad_slices) {
            let m = &mut self.m[offset..offset + params.len()];
            let v = &mut self.v[offset..offset + params.len()];
            for i in 0..params.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                params[i] -= step_size * m[i] / ((v[i] / c2).sqrt() + self.eps);
            }
            offset += params.len();
        }
    }
}

/// Builds `x_t` rows and the network input for clean rows `x0`, per-row steps
/// `t` and noise `eps`.
fn noisy_input(
    net: &EpsNet,
    x0: &DMatrix<f64>,
    t: &[usize],
    eps: &DMatrix<f64>,
    sched: &DiffusionSchedule,
) -> DMatrix<f64> {
    let mut xt = x0.clone();
    for (r, &ti) in t.iter().enumerate() {
        let ab = sched.alpha_bar(ti);
        let (s, n) = (ab.sqrt(), (1.0 - ab).sqrt());
        for c in 0..x0.ncols() {
            xt[(r, c)] = s * x0[(r, c)] + n * eps[(r, c)];
        }
    }
    net.input(&xt, t, sched.steps)
}

/// `mean ‖ε − ε_θ(x_t, t)‖²` over the batch and dimensions, for fixed
/// steps and noise.
pub fn batch_loss(
    net: &EpsNet,
    x0: &DMatrix<f64>,
    t: &[usize],
    eps: &DMatrix<f64>,
    sched: &DiffusionSchedule,
) -> f64 {
    let pred = net.forward_input(&noisy_input(net, x0, t, eps, sched));
    (pred - eps).norm_squared() / eps.len() as f64
}

pub fn batch_loss_and_grad(
    net: &EpsNet,
    x0: &DMatrix<f64>,
    t: &[usize],
    eps: &DMatrix<f64>,
    sched: &DiffusionSchedule,
) -> (f64, Gradients) {
    net.mse_and_grad(&noisy_input(net, x0, t, eps, sched), eps)
}

/// One optimizer step: draws a uniform step and standard normal noise per
/// row, computes the simple loss and its gradient, and applies Adam.
pub fn train_step(
    net: &mut EpsNet,
    opt: &mut Adam,
    batch: &Dataset,
    sched: &DiffusionSchedule,
    rng: &mut Rng,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    batch.check_dim(net.data_dim)?;
    let x0 = batch.to_matrix();
    let (loss, grads) = sampled_loss_and_grad(net, &x0, sched, rng);
    if !loss.is_finite() {
        return Err(Error::Divergence { iteration: 0, loss });
    }
    opt.update(net, &grads);
    Ok(loss)
}

fn sampled_loss_and_grad(
    net: &EpsNet,
    x0: &DMatrix<f64>,
    sched: &DiffusionSchedule,
    rng: &mut Rng,
) -> (f64, Gradients) {
    let (b, d) = x0.shape();
    let t: Vec<usize> = (0..b).map(|_| rng::index(rng, sched.steps) + 1).collect();
    let mut eps = DMatrix::zeros(b, d);
    // row-major fill keeps the draw order independent of the matrix layout
    for r in 0..b {
        for c in 0..d {
            eps[(r, c)] = rng::std_normal(rng);
        }
    }
    batch_loss_and_grad(net, x0, &t, &eps, sched)
}

/// Runs `cfg.iterations` steps on minibatches drawn with replacement and
/// returns the trained network and the per-step loss.
pub fn train(
    mut net: EpsNet,
    data: &Dataset,
    sched: &DiffusionSchedule,
    cfg: &TrainConfig,
) -> Result<(EpsNet, Vec<f64>)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    data.check_dim(net.data_dim)?;
    let mut rng = rng::stream(cfg.seed, "ddpm-train");
    let mut opt = Adam::new(net.num_params(), cfg);
    let d = data.dim();
    let mut losses = Vec::with_capacity(cfg.iterations);
    let mut x0 = DMatrix::zeros(cfg.batch_size, d);
    for iteration in 0..cfg.iterations {
        for r in 0..cfg.batch_size {
            let row = data.row(rng::index(&mut rng, data.rows()));
            for c in 0..d {
                x0[(r, c)] = row[c];
            }
        }
        let (loss, grads) = sampled_loss_and_grad(&net, &x0, sched, &mut rng);
        if !loss.is_finite() {
            return Err(Error::Divergence { iteration, loss });
        }
        opt.update(&mut net, &grads);
        losses.push(loss);
    }
    if !net.is_finite() {
        return Err(Error::Divergence {
            iteration: cfg.iterations,
            loss: f64::NAN,
        });
    }
    Ok((net, losses))
}

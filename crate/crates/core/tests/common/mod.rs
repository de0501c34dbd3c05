#![allow(dead_code)]

use gaussprep::ddpm::{batch_loss, batch_loss_and_grad, make_schedule, EpsNet};
use gaussprep::rng::{self, std_normal};
use nalgebra::DMatrix;

/// Worst relative error between backpropagated and central-difference
/// gradients over `coords` random parameters of a freshly initialized net.
pub fn gradient_check(widths: [usize; 3], seed: u64, coords: usize) -> f64 {
    let sched = make_schedule(100, 1e-4, 0.02).unwrap();
    let mut net = EpsNet::init(2, widths, seed).unwrap();
    let mut r = rng::stream(seed, "gradient-check");
    // random biases so units sit away from the ReLU kink
    let mut flat = net.flat_params();
    for p in flat.iter_mut() {
        *p += 0.1 * std_normal(&mut r);
    }
    net.set_flat_params(&flat).unwrap();

    let b = 8;
    let x0 = DMatrix::from_fn(b, 2, |_, _| 2.0 * std_normal(&mut r));
    let eps = DMatrix::from_fn(b, 2, |_, _| std_normal(&mut r));
    let t: Vec<usize> = (0..b).map(|_| rng::index(&mut r, 100) + 1).collect();

    let (_, grads) = batch_loss_and_grad(&net, &x0, &t, &eps, &sched);
    let analytic = grads.flat();
    assert_eq!(analytic.len(), flat.len());

    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..coords {
        let i = rng::index(&mut r, flat.len());
        let mut probe = flat.clone();
        probe[i] = flat[i] + h;
        net.set_flat_params(&probe).unwrap();
        let up = batch_loss(&net, &x0, &t, &eps, &sched);
        probe[i] = flat[i] - h;
        net.set_flat_params(&probe).unwrap();
        let down = batch_loss(&net, &x0, &t, &eps, &sched);
        let numeric = (up - down) / (2.0 * h);
        let scale = analytic[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic[i] - numeric).abs() / scale);
    }
    net.set_flat_params(&flat).unwrap();
    worst
}

pub fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    (m, values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0))
}

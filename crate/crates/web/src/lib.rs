//! WebAssembly bindings for the browser demo. Every export returns a
//! self-contained SVG document.

use gaussprep::ddpm::EpsNet;
use gaussprep::evalkit::{final_window_mean, ks_statistic, LlCurve};
use gaussprep::experiment::{
    fit_transform_data, generate_data, hidden_widths, reference_ll, sample_and_score,
    train_network, ExperimentConfig,
};
use gaussprep::gaussianizer::{fit_gaussianizer, gaussianizer_inverse, GaussianizerConfig};
use gaussprep::gmm::sample_gmm;
use gaussprep::marginal::{fit_marginal, gaussianize_1d, kde_pdf, Bandwidth, MarginalConfig};
use gaussprep::plot::{self, Chart, Series};
use gaussprep::{normal, Dataset, Error, GmmSpec, Pipeline, Result};
use wasm_bindgen::prelude::*;

fn check(ok: bool, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidArgument(what.to_string()))
    }
}

fn bounds(values: &[f64]) -> (f64, f64) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Histogram as a step outline with density on the y axis.
fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<(f64, f64)> {
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        if v >= lo && v < hi {
            counts[((v - lo) / width) as usize] += 1;
        }
    }
    let scale = 1.0 / (values.len() as f64 * width);
    let mut out = vec![(lo, 0.0)];
    for (i, c) in counts.iter().enumerate() {
        let h = *c as f64 * scale;
        out.push((lo + i as f64 * width, h));
        out.push((lo + (i + 1) as f64 * width, h));
    }
    out.push((hi, 0.0));
    out
}

fn scatter(data: &Dataset, limit: usize) -> Vec<(f64, f64)> {
    data.iter_rows().take(limit).map(|r| (r[0], r[1])).collect()
}

/// One-dimensional Gaussianization of a two-mode sample with modes at
/// `±separation`, each with standard deviation 0.5.
pub fn marginal_demo(separation: f64, n: usize, bandwidth_scale: f64, seed: u64) -> Result<String> {
    check((0.0..=10.0).contains(&separation), "separation must lie in [0, 10]")?;
    check((100..=50_000).contains(&n), "sample size must lie in [100, 50000]")?;
    check(bandwidth_scale > 0.0 && bandwidth_scale <= 10.0, "bandwidth scale must lie in (0, 10]")?;
    let cov = vec![vec![vec![0.25]]; 2];
    let spec = GmmSpec::new(vec![0.5, 0.5], vec![vec![-separation], vec![separation]], cov)?;
    let data = sample_gmm(&spec, n, seed).column(0);
    let cfg = MarginalConfig { bandwidth: Bandwidth::Scaled(bandwidth_scale), ..Default::default() };
    let map = fit_marginal(&data, &cfg)?;
    let out: Vec<f64> = data.iter().map(|&z| gaussianize_1d(&map, z)).collect();
    let ks_in = ks_statistic(&data)?;
    let ks_out = ks_statistic(&out)?;

    let (lo, hi) = bounds(&data);
    let pad = 0.1 * (hi - lo).max(1e-6);
    let (lo, hi) = (lo - pad, hi + pad);
    let xs: Vec<f64> = (0..=200).map(|i| lo + (hi - lo) * i as f64 / 200.0).collect();
    let kde = xs
        .iter()
        .map(|&x| Ok((x, kde_pdf(&data, map.bandwidth(), x)?)))
        .collect::<Result<Vec<_>>>()?;
    let input = Chart::new(format!("input sample (KS vs N(0,1) {ks_in:.3})"))
        .labels("z", "density")
        .with(Series::line("histogram", plot::ORANGE, histogram(&data, lo, hi, 60)))
        .with(Series::line(format!("KDE, h = {:.3}", map.bandwidth()), plot::BLUE, kde));
    let transform = Chart::new("fitted map z ↦ Φ⁻¹(F(z))")
        .labels("z", "output")
        .with(Series::line("map", plot::BLUE, xs.iter().map(|&x| (x, gaussianize_1d(&map, x))).collect()))
        .without_legend();
    let normal_pdf = (0..=200).map(|i| {
        let y = -4.0 + 8.0 * i as f64 / 200.0;
        (y, normal::pdf(y))
    });
    let output = Chart::new(format!("output (KS vs N(0,1) {ks_out:.3})"))
        .labels("output", "density")
        .with(Series::line("histogram", plot::ORANGE, histogram(&out, -4.0, 4.0, 60)))
        .with(Series::line("N(0,1)", plot::RED, normal_pdf.collect()))
        .x_range(-4.0, 4.0);
    Ok(plot::grid_svg("Marginal Gaussianization", &[input, transform, output], 3, 340.0, 300.0))
}

/// Iterative Gaussianization of the default four-cluster mixture with
/// `layers` rotation-plus-marginal layers.
pub fn stack_demo(layers: usize, n: usize, seed: u64) -> Result<String> {
    check((1..=12).contains(&layers), "layers must lie in [1, 12]")?;
    check((200..=20_000).contains(&n), "sample size must lie in [200, 20000]")?;
    let spec = GmmSpec::default_2d();
    let data = sample_gmm(&spec, n, seed);
    let cfg = GaussianizerConfig { iterations: layers, ..Default::default() };
    let (stack, z) = fit_gaussianizer(&data, &cfg)?;
    let noise = sample_gmm(&GmmSpec::isotropic(&[0.0, 0.0], 1.0)?, n, seed ^ 0x5eed);
    let pushed = gaussianizer_inverse(&stack, &noise)?;
    let limit = 3_000;

    let input = Chart::new("training data")
        .with(Series::scatter("data", plot::ORANGE, scatter(&data, limit)))
        .without_legend();
    let ks = [ks_statistic(&z.column(0))?, ks_statistic(&z.column(1))?];
    let output = Chart::new(format!("after {layers} layer(s): KS {:.3} / {:.3}", ks[0], ks[1]))
        .with(Series::scatter("transformed", plot::BLUE, scatter(&z, limit)))
        .x_range(-4.5, 4.5)
        .y_range(-4.5, 4.5)
        .without_legend();
    let generated = Chart::new("inverse map applied to fresh N(0, I) noise")
        .with(Series::scatter("training", plot::ORANGE, scatter(&data, limit)))
        .with(Series::scatter("generated", plot::BLUE, scatter(&pushed, limit)));
    let curve: Vec<(f64, f64)> = stack
        .diagnostics
        .ks_curve()
        .iter()
        .enumerate()
        .map(|(i, k)| ((i + 1) as f64, *k))
        .collect();
    let ks_chart = Chart::new("max KS after each layer")
        .labels("layer", "KS")
        .with(Series::line("max KS", plot::BLUE, curve))
        .x_range(0.5, layers as f64 + 0.5)
        .without_legend();
    Ok(plot::grid_svg(
        "Iterative Gaussianization",
        &[input, output, generated, ks_chart],
        2,
        380.0,
        330.0,
    ))
}

/// Trains the baseline and gaussianized diffusion models at one width on a
/// small sample and plots log-likelihood by reverse step and training loss.
pub fn diffusion_demo(width: usize, iterations: usize, seed: u64) -> Result<String> {
    check([16, 32, 64, 128].contains(&width), "width must be 16, 32, 64 or 128")?;
    check((50..=5_000).contains(&iterations), "iterations must lie in [50, 5000]")?;
    let mut cfg = ExperimentConfig {
        seed,
        n_train: 4_000,
        n_heldout: 500,
        widths: vec![width],
        n_generated: 1_000,
        reference_samples: 20_000,
        ..Default::default()
    };
    cfg.train.iterations = iterations;
    let spec = cfg.spec()?;
    let sched = cfg.schedule.build()?;
    let (train, heldout) = generate_data(&cfg, &spec);
    let (stack, transformed, _) = fit_transform_data(&cfg, &train, &heldout)?;
    let reference = reference_ll(&cfg, &spec)?;

    let mut ll_chart = Chart::new(format!("log-likelihood by reverse step, width {width}"))
        .labels("reverse step", "average log-likelihood")
        .with(Series::reference("reference", plot::RED, reference, 0.0, sched.steps as f64));
    let mut loss_chart = Chart::new("training loss (moving average)").labels("iteration", "loss");
    let mut finals = Vec::new();
    for (pipeline, data, color) in [
        (Pipeline::Baseline, &train, plot::ORANGE),
        (Pipeline::Gaussianized, &transformed, plot::BLUE),
    ] {
        let (net, losses): (EpsNet, Vec<f64>) = train_network(&cfg, data, &sched, width)?;
        let (_, curve): (_, LlCurve) = sample_and_score(
            &cfg, &spec, &net, &sched, Some(&stack), pipeline, width, reference,
        )?;
        let pts = curve.steps.iter().zip(&curve.values).map(|(&s, &v)| (s as f64, v)).collect();
        ll_chart = ll_chart.with(Series::line(pipeline.as_str(), color, pts));
        let window = (iterations / 50).max(1);
        let smooth = losses
            .chunks(window)
            .enumerate()
            .map(|(i, c)| (((i + 1) * window) as f64, c.iter().sum::<f64>() / c.len() as f64))
            .collect();
        loss_chart = loss_chart.with(Series::line(pipeline.as_str(), color, smooth));
        finals.push(format!("{pipeline} {:.3}", final_window_mean(&losses, 0.1)));
    }
    let widths = hidden_widths(width);
    let title = format!(
        "Diffusion on raw vs Gaussianized data (hidden {widths:?}, final loss: {})",
        finals.join(", ")
    );
    Ok(plot::grid_svg(&title, &[ll_chart, loss_chart], 2, 460.0, 340.0))
}

fn js(result: Result<String>) -> std::result::Result<String, JsError> {
    result.map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = marginalDemo)]
pub fn marginal_demo_js(
    separation: f64,
    n: u32,
    bandwidth_scale: f64,
    seed: u32,
) -> std::result::Result<String, JsError> {
    js(marginal_demo(separation, n as usize, bandwidth_scale, seed.into()))
}

#[wasm_bindgen(js_name = stackDemo)]
pub fn stack_demo_js(layers: u32, n: u32, seed: u32) -> std::result::Result<String, JsError> {
    js(stack_demo(layers as usize, n as usize, seed.into()))
}

#[wasm_bindgen(js_name = diffusionDemo)]
pub fn diffusion_demo_js(width: u32, iterations: u32, seed: u32) -> std::result::Result<String, JsError> {
    js(diffusion_demo(width as usize, iterations as usize, seed.into()))
}

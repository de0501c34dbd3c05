use std::f64::consts::PI;

use gaussprep::marginal::{
    degaussianize_1d, fit_marginal, gaussianize_1d, kde_pdf, marginal_cdf, marginal_inverse_cdf,
    silverman_bandwidth, Bandwidth, MarginalConfig, MarginalMap,
};
use gaussprep::normal;
use gaussprep::rng::{self, std_normal, uniform_open};
use gaussprep::Error;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

fn normal_samples(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, "test-normal");
    (0..n).map(|_| std_normal(&mut r)).collect()
}

/// Equal mixture of N(−2, 0.25) and N(2, 0.25).
fn bimodal(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, "test-bimodal");
    (0..n)
        .map(|i| {
            let c = if i % 2 == 0 { -2.0 } else { 2.0 };
            c + 0.5 * std_normal(&mut r)
        })
        .collect()
}

fn exponential(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, "test-exp");
    (0..n).map(|_| -uniform_open(&mut r).ln()).collect()
}

/// 0.7·N(0, 1) + 0.3·N(3, 0.25), skewed and smooth.
fn skewed(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, "test-skewed");
    (0..n)
        .map(|_| {
            if uniform_open(&mut r) < 0.7 {
                std_normal(&mut r)
            } else {
                3.0 + 0.5 * std_normal(&mut r)
            }
        })
        .collect()
}

fn fit(samples: &[f64]) -> MarginalMap {
    fit_marginal(samples, &MarginalConfig::default()).unwrap()
}

/// Sup distance between the empirical CDF and the uniform CDF on [0, 1].
fn ks_uniform(u: &[f64]) -> f64 {
    let mut s = u.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| ((i + 1) as f64 / n - x).max(x - i as f64 / n))
        .fold(0.0, f64::max)
}

fn moments(x: &[f64]) -> (f64, f64, f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let m2 = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m3 = x.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    let m4 = x.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    (mean, m2, m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
}

// ---------------------------------------------------------------- kde

#[test]
fn kde_kernel_at_origin() {
    let v = kde_pdf(&[0.0; 5], 1.0, 0.0).unwrap();
    assert!((v - INV_SQRT_2PI).abs() < 1e-12);
}

#[test]
fn kde_symmetric_pair() {
    for h in [0.3, 1.0, 2.5] {
        let v = kde_pdf(&[-1.0, 1.0], h, 0.0).unwrap();
        let k = (-0.5 / (h * h)).exp() * INV_SQRT_2PI;
        assert!((v - k / h).abs() < 1e-12);
    }
}

#[test]
fn kde_consistency_with_true_density() {
    let s = normal_samples(10_000, 1);
    let h = silverman_bandwidth(&s);
    let sd = {
        let m = s.iter().sum::<f64>() / s.len() as f64;
        (s.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (s.len() - 1) as f64).sqrt()
    };
    assert!((h - 1.06 * sd * (s.len() as f64).powf(-0.2)).abs() < 1e-12);
    let v = kde_pdf(&s, h, 0.0).unwrap();
    assert!((v - INV_SQRT_2PI).abs() < 0.03, "{v}");
}

#[test]
fn kde_rejects_bad_bandwidth() {
    assert!(kde_pdf(&[0.0, 1.0], 0.0, 0.0).is_err());
    assert!(kde_pdf(&[0.0, 1.0], -1.0, 0.0).is_err());
}

// ---------------------------------------------------------------- fit

#[test]
fn cdf_tails_and_clamp_bounds() {
    let s = bimodal(2_000, 2);
    let map = fit(&s);
    let cdf = map.cdf_values();
    assert_eq!(map.grid().len(), 1024);
    assert!(cdf[0] < 1e-4);
    assert!(cdf[cdf.len() - 1] > 1.0 - 1e-4);
    let n = s.len() as f64;
    assert_eq!(map.clamp(), (1.0 / (n + 1.0), n / (n + 1.0)));
    let (lo, hi) = (
        s.iter().copied().fold(f64::INFINITY, f64::min),
        s.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    let h = map.bandwidth();
    assert!((map.grid()[0] - (lo - 4.0 * h)).abs() < 1e-9);
    assert!((map.grid()[1023] - (hi + 4.0 * h)).abs() < 1e-9);
}

#[test]
fn symmetric_samples_have_median_at_center() {
    let c = 1.7;
    let half = exponential(1_000, 3);
    let s: Vec<f64> = half.iter().flat_map(|x| [c + x, c - x]).collect();
    let map = fit(&s);
    assert!((marginal_cdf(&map, c) - 0.5).abs() < 1e-3);
}

#[test]
fn kde_integrates_to_one_before_normalization() {
    let s = bimodal(500, 4);
    let map = fit(&s);
    let g = map.grid();
    let h = map.bandwidth();
    let mut total = 0.0;
    for w in g.windows(2) {
        let (a, b) = (kde_pdf(&s, h, w[0]).unwrap(), kde_pdf(&s, h, w[1]).unwrap());
        total += 0.5 * (a + b) * (w[1] - w[0]);
    }
    assert!((0.999..=1.001).contains(&total), "{total}");
}

#[test]
fn fit_errors() {
    assert!(matches!(
        fit_marginal(&[3.0; 50], &MarginalConfig::default()),
        Err(Error::ZeroVariance)
    ));
    assert!(fit_marginal(&[1.0, 2.0, 3.0], &MarginalConfig::default()).is_err());
    assert!(fit_marginal(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, f64::NAN], &MarginalConfig::default()).is_err());
}

#[test]
fn bandwidth_overrides() {
    let s = normal_samples(1_000, 5);
    let auto = fit(&s).bandwidth();
    let scaled = fit_marginal(&s, &MarginalConfig { bandwidth: Bandwidth::Scaled(0.5), ..Default::default() })
        .unwrap()
        .bandwidth();
    let fixed = fit_marginal(&s, &MarginalConfig { bandwidth: Bandwidth::Fixed(0.123), ..Default::default() })
        .unwrap()
        .bandwidth();
    assert!((scaled - 0.5 * auto).abs() < 1e-12);
    assert_eq!(fixed, 0.123);
    assert!(fit_marginal(&s, &MarginalConfig { bandwidth: Bandwidth::Fixed(0.0), ..Default::default() }).is_err());
}

// ---------------------------------------------------------------- cdf / inverse

#[test]
fn cdf_clamps_and_hits_knots() {
    let s = bimodal(1_000, 6);
    let map = fit(&s);
    let (lo, hi) = map.clamp();
    assert_eq!(marginal_cdf(&map, -1e9), lo);
    assert_eq!(marginal_cdf(&map, 1e9), hi);
    for k in [0, 100, 511, 800, 1023] {
        let expected = map.cdf_values()[k].clamp(lo, hi);
        assert_eq!(marginal_cdf(&map, map.grid()[k]), expected);
    }
}

#[test]
fn probability_integral_transform_is_uniform() {
    let s = bimodal(10_000, 7);
    let map = fit(&s);
    let u: Vec<f64> = s.iter().map(|&z| marginal_cdf(&map, z)).collect();
    let d = ks_uniform(&u);
    assert!(d < 0.03, "{d}");
}

#[test]
fn inverse_hits_knots_and_rejects_bad_u() {
    let s = bimodal(1_000, 8);
    let map = fit(&s);
    let (lo, hi) = map.clamp();
    for k in (0..1024).step_by(37) {
        let u = map.cdf_values()[k];
        if u > lo && u < hi && (k == 0 || map.cdf_values()[k - 1] < u) {
            let z = marginal_inverse_cdf(&map, u).unwrap();
            assert!((z - map.grid()[k]).abs() < 1e-9, "knot {k}");
        }
    }
    for bad in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
        assert!(marginal_inverse_cdf(&map, bad).is_err());
    }
}

#[test]
fn inverse_round_trips() {
    let s = bimodal(5_000, 9);
    let map = fit(&s);
    let spacing = map.grid_spacing();
    let mut sorted = s.clone();
    sorted.sort_by(f64::total_cmp);
    let (q_lo, q_hi) = (sorted[25], sorted[4974]);
    for &z in s.iter().filter(|&&z| z >= q_lo && z <= q_hi) {
        let back = marginal_inverse_cdf(&map, marginal_cdf(&map, z)).unwrap();
        assert!((back - z).abs() < 2.0 * spacing);
        let back = degaussianize_1d(&map, gaussianize_1d(&map, z));
        assert!((back - z).abs() < 2.0 * spacing);
    }
    let mut r = rng::stream(1, "test-u");
    for _ in 0..1_000 {
        let u = 0.01 + 0.98 * uniform_open(&mut r);
        let again = marginal_cdf(&map, marginal_inverse_cdf(&map, u).unwrap());
        assert!((again - u).abs() < 1e-6);
    }
}

// ---------------------------------------------------------------- gaussianize

#[test]
fn gaussianized_samples_are_normal() {
    for (name, s) in [("bimodal", bimodal(10_000, 10)), ("skewed", skewed(10_000, 11))] {
        let map = fit(&s);
        let y: Vec<f64> = s.iter().map(|&z| gaussianize_1d(&map, z)).collect();
        let mut sorted = y.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let d = sorted
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = normal::cdf(x);
                ((i + 1) as f64 / n - f).max(f - i as f64 / n)
            })
            .fold(0.0, f64::max);
        assert!(d < 0.03, "{name}: KS {d}");
    }
}

#[test]
fn bimodal_becomes_unimodal() {
    // Silverman's rule oversmooths two well-separated modes (output variance
    // about 0.83 here), so this uses a hand-picked bandwidth.
    let s = bimodal(10_000, 12);
    let cfg = MarginalConfig { bandwidth: Bandwidth::Fixed(0.1), ..Default::default() };
    let map = fit_marginal(&s, &cfg).unwrap();
    let y: Vec<f64> = s.iter().map(|&z| gaussianize_1d(&map, z)).collect();
    let (_, _, skew, kurt) = moments(&y);
    assert!(skew.abs() < 0.1, "skewness {skew}");
    assert!(kurt.abs() < 0.2, "excess kurtosis {kurt}");
    // unimodal: histogram counts rise to a single peak and then fall
    let mut bins = [0usize; 12];
    for v in &y {
        let b = ((v + 3.0) / 0.5).floor();
        if (0.0..12.0).contains(&b) {
            bins[b as usize] += 1;
        }
    }
    let peak = (0..12).max_by_key(|&i| bins[i]).unwrap();
    assert!((0..peak).all(|i| bins[i] <= bins[i + 1]), "{bins:?}");
    assert!((peak..11).all(|i| bins[i] >= bins[i + 1]), "{bins:?}");
}

#[test]
fn gaussianize_is_increasing_on_grid_interior() {
    let s = bimodal(3_000, 13);
    let map = fit(&s);
    let (lo, hi) = map.clamp();
    let inside: Vec<f64> = map
        .grid()
        .iter()
        .copied()
        .filter(|&z| {
            let u = marginal_cdf(&map, z);
            u > lo && u < hi
        })
        .collect();
    assert!(inside.len() > 500);
    for w in inside.windows(2) {
        assert!(gaussianize_1d(&map, w[1]) > gaussianize_1d(&map, w[0]));
    }
}

#[test]
fn degaussianize_clamps_out_of_range() {
    let s = bimodal(1_000, 14);
    let map = fit(&s);
    let top = degaussianize_1d(&map, 50.0);
    let bottom = degaussianize_1d(&map, -50.0);
    assert!(top.is_finite() && bottom.is_finite());
    assert_eq!(top, degaussianize_1d(&map, 10.0));
    assert!(top <= map.grid()[1023] && bottom >= map.grid()[0]);
}

#[test]
fn map_json_schema() {
    let map = fit(&bimodal(200, 15));
    let v = serde_json::to_value(&map).unwrap();
    let mut keys: Vec<&String> = v.as_object().unwrap().keys().collect();
    keys.sort();
    assert_eq!(keys, ["bandwidth", "cdf", "clamp", "grid"]);
    let back: MarginalMap = serde_json::from_value(v.clone()).unwrap();
    assert_eq!(back, map);
    let mut broken = v;
    broken["cdf"][5] = serde_json::json!(2.0);
    assert!(serde_json::from_value::<MarginalMap>(broken).is_err());
}

// ---------------------------------------------------------------- normal cdf

#[test]
fn normal_cdf_basics() {
    assert_eq!(normal::cdf(0.0), 0.5);
    assert_eq!(normal::inverse_cdf(0.5).unwrap(), 0.0);
    for i in 0..=800 {
        let z = i as f64 * 0.01;
        assert!((normal::cdf(-z) - (1.0 - normal::cdf(z))).abs() < 1e-12);
    }
    for bad in [0.0, 1.0, -1.0, 2.0, f64::NAN] {
        assert!(normal::inverse_cdf(bad).is_err());
    }
}

#[test]
fn normal_cdf_matches_quadrature() {
    // composite Simpson on the density over [0, 1.959964]
    let b = 1.959_964;
    let m = 20_000;
    let h = b / m as f64;
    let pdf = |x: f64| (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
    let mut s = pdf(0.0) + pdf(b);
    for i in 1..m {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * pdf(i as f64 * h);
    }
    let oracle = 0.5 + s * h / 3.0;
    assert!((normal::cdf(b) - oracle).abs() < 1e-12);
    assert!((normal::cdf(b) - 0.975).abs() < 1e-6);
}

#[test]
fn inverse_normal_cdf_matches_bisection() {
    let mut us: Vec<f64> = vec![1e-15, 1e-12, 1e-9, 1e-6, 1e-3, 0.02425, 0.1, 0.3, 0.5];
    us.extend(us.clone().iter().map(|u| 1.0 - u));
    for u in us {
        // bisection on the erfc-based CDF, working in the lower tail for accuracy
        let (target, sign) = if u > 0.5 { (1.0 - u, -1.0) } else { (u, 1.0) };
        let (mut lo, mut hi) = (-40.0, 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if normal::cdf(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let oracle = sign * 0.5 * (lo + hi);
        let got = normal::inverse_cdf(u).unwrap();
        assert!((got - oracle).abs() < 1e-9, "u = {u}: {got} vs {oracle}");
    }
}

use std::f64::consts::PI;

use gaussprep::gmm::{
    average_log_likelihood, gmm_log_density, reference_log_likelihood, sample_gmm, GmmSpec,
};
use gaussprep::{Dataset, Error};

fn std_normal_2d() -> GmmSpec {
    GmmSpec::isotropic(&[0.0, 0.0], 1.0).unwrap()
}

/// Differential entropy of N(0, I_2), negated.
const NEG_ENTROPY_2D: f64 = -2.837_877_066_409_345;

/// Direct evaluation of a 2-D normal density from the closed-form inverse
/// and determinant of a 2×2 covariance.
fn normal_logpdf_2x2(x: &[f64], mean: &[f64], cov: [[f64; 2]; 2]) -> f64 {
    let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
    let inv = [
        [cov[1][1] / det, -cov[0][1] / det],
        [-cov[1][0] / det, cov[0][0] / det],
    ];
    let d = [x[0] - mean[0], x[1] - mean[1]];
    let q = d[0] * (inv[0][0] * d[0] + inv[0][1] * d[1]) + d[1] * (inv[1][0] * d[0] + inv[1][1] * d[1]);
    -(2.0 * PI).ln() - 0.5 * det.ln() - 0.5 * q
}

#[test]
fn empty_sample() {
    let ds = sample_gmm(&GmmSpec::default_2d(), 0, 1);
    assert_eq!(ds.rows(), 0);
    assert_eq!(ds.dim(), 2);
}

#[test]
fn sampling_is_deterministic() {
    let spec = GmmSpec::default_2d();
    assert_eq!(sample_gmm(&spec, 500, 42), sample_gmm(&spec, 500, 42));
    assert_ne!(sample_gmm(&spec, 500, 42), sample_gmm(&spec, 500, 43));
}

#[test]
fn standard_normal_moments() {
    let ds = sample_gmm(&std_normal_2d(), 100_000, 3);
    for m in ds.column_means() {
        assert!(m.abs() < 0.02, "mean {m}");
    }
    let cov = ds.covariance();
    for i in 0..2 {
        for j in 0..2 {
            let target = if i == j { 1.0 } else { 0.0 };
            assert!((cov[(i, j)] - target).abs() < 0.05, "cov[{i},{j}] = {}", cov[(i, j)]);
        }
    }
}

#[test]
fn component_frequencies_match_weights() {
    let weights = vec![0.1, 0.2, 0.3, 0.4];
    let means = vec![vec![0.0, 0.0], vec![10.0, 0.0], vec![0.0, 10.0], vec![10.0, 10.0]];
    let cov = vec![vec![0.01, 0.0], vec![0.0, 0.01]];
    let spec = GmmSpec::new(weights.clone(), means.clone(), vec![cov; 4]).unwrap();
    let n = 20_000;
    let ds = sample_gmm(&spec, n, 11);
    let mut counts = [0usize; 4];
    for row in ds.iter_rows() {
        let k = (0..4)
            .min_by(|&a, &b| {
                let da = (row[0] - means[a][0]).powi(2) + (row[1] - means[a][1]).powi(2);
                let db = (row[0] - means[b][0]).powi(2) + (row[1] - means[b][1]).powi(2);
                da.total_cmp(&db)
            })
            .unwrap();
        counts[k] += 1;
    }
    for (k, &c) in counts.iter().enumerate() {
        let p = weights[k];
        let freq = c as f64 / n as f64;
        assert!((freq - p).abs() < 4.0 * (p * (1.0 - p) / n as f64).sqrt(), "component {k}: {freq}");
    }
}

#[test]
fn sampled_correlated_covariance() {
    let cov = vec![vec![2.0, 0.8], vec![0.8, 0.5]];
    let spec = GmmSpec::new(vec![1.0], vec![vec![1.0, -2.0]], vec![cov.clone()]).unwrap();
    let ds = sample_gmm(&spec, 100_000, 5);
    let m = ds.column_means();
    assert!((m[0] - 1.0).abs() < 0.03 && (m[1] + 2.0).abs() < 0.03);
    let c = ds.covariance();
    for i in 0..2 {
        for j in 0..2 {
            assert!((c[(i, j)] - cov[i][j]).abs() < 0.05);
        }
    }
}

#[test]
fn log_density_at_mode() {
    let v = gmm_log_density(&std_normal_2d(), &[0.0, 0.0]).unwrap();
    assert!((v + (2.0 * PI).ln()).abs() < 1e-12);
    assert!((v + 1.837_877).abs() < 1e-6);
}

#[test]
fn duplicated_component_is_degenerate() {
    let single = std_normal_2d();
    let cov = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
    let double = GmmSpec::new(vec![0.5, 0.5], vec![vec![0.0, 0.0]; 2], vec![cov; 2]).unwrap();
    for x in [[0.0, 0.0], [1.5, -0.3], [-4.0, 7.0]] {
        let a = gmm_log_density(&single, &x).unwrap();
        let b = gmm_log_density(&double, &x).unwrap();
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn default_spec_matches_direct_summation() {
    let spec = GmmSpec::default_2d();
    for x in [[0.0, 0.0], [3.0, 3.0], [-2.9, 3.4], [40.0, -40.0]] {
        let logs: Vec<f64> = (0..spec.components())
            .map(|k| {
                let c = spec.covariance(k);
                spec.weights()[k].ln()
                    + normal_logpdf_2x2(&x, spec.mean(k), [[c[(0, 0)], c[(0, 1)]], [c[(1, 0)], c[(1, 1)]]])
            })
            .collect();
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let oracle = top + logs.iter().map(|l| (l - top).exp()).sum::<f64>().ln();
        let got = gmm_log_density(&spec, &x).unwrap();
        assert!((got - oracle).abs() < 1e-10, "x = {x:?}: {got} vs {oracle}");
        let naive: f64 = logs.iter().map(|l| l.exp()).sum();
        if naive > 1e-300 {
            assert!((got - naive.ln()).abs() < 1e-10);
        }
    }
}

#[test]
fn far_point_does_not_underflow() {
    let v = gmm_log_density(&GmmSpec::default_2d(), &[1e3, 1e3]).unwrap();
    assert!(v.is_finite() && v < -1e5);
}

#[test]
fn log_density_dimension_mismatch() {
    let err = gmm_log_density(&std_normal_2d(), &[0.0]).unwrap_err();
    assert!(matches!(err, Error::DimensionMismatch { expected: 2, found: 1 }));
}

#[test]
fn average_of_single_sample() {
    let spec = GmmSpec::default_2d();
    let x = [1.2, -0.7];
    let ds = Dataset::from_rows(&[x]).unwrap();
    assert_eq!(average_log_likelihood(&spec, &ds).unwrap(), gmm_log_density(&spec, &x).unwrap());
}

#[test]
fn average_invariant_under_duplication() {
    let spec = GmmSpec::default_2d();
    let ds = sample_gmm(&spec, 300, 2);
    let mut rows: Vec<Vec<f64>> = ds.iter_rows().map(|r| r.to_vec()).collect();
    rows.extend(ds.iter_rows().map(|r| r.to_vec()));
    let doubled = Dataset::from_rows(&rows).unwrap();
    let a = average_log_likelihood(&spec, &ds).unwrap();
    let b = average_log_likelihood(&spec, &doubled).unwrap();
    assert!((a - b).abs() < 1e-12);
}

#[test]
fn average_of_empty_is_an_error() {
    assert!(matches!(
        average_log_likelihood(&std_normal_2d(), &Dataset::empty(2)),
        Err(Error::EmptyDataset)
    ));
}

#[test]
fn entropy_oracle() {
    let spec = std_normal_2d();
    let ds = sample_gmm(&spec, 100_000, 9);
    let ll = average_log_likelihood(&spec, &ds).unwrap();
    assert!((ll - NEG_ENTROPY_2D).abs() < 0.02, "{ll}");
}

#[test]
fn reference_log_likelihood_properties() {
    let spec = std_normal_2d();
    let r = reference_log_likelihood(&spec, 100_000, 1).unwrap();
    assert!((r - NEG_ENTROPY_2D).abs() < 0.02);
    assert_eq!(r, reference_log_likelihood(&spec, 100_000, 1).unwrap());

    let default = GmmSpec::default_2d();
    let small = reference_log_likelihood(&default, 10_000, 4).unwrap();
    let large = reference_log_likelihood(&default, 100_000, 4).unwrap();
    assert!((small - large).abs() < 0.05);

    assert!(reference_log_likelihood(&spec, 999, 1).is_err());
}

#[test]
fn spec_validation() {
    let eye = || vec![vec![1.0, 0.0], vec![0.0, 1.0]];
    let origin = || vec![0.0, 0.0];
    let bad_sum = GmmSpec::new(vec![0.5, 0.4], vec![origin(), origin()], vec![eye(), eye()]);
    assert!(matches!(bad_sum, Err(Error::InvalidSpec(_))));
    let non_positive = GmmSpec::new(vec![1.5, -0.5], vec![origin(), origin()], vec![eye(), eye()]);
    assert!(matches!(non_positive, Err(Error::InvalidSpec(_))));
    let asym = GmmSpec::new(vec![1.0], vec![origin()], vec![vec![vec![1.0, 0.5], vec![0.0, 1.0]]]);
    assert!(matches!(asym, Err(Error::InvalidSpec(_))));
    let not_pd = GmmSpec::new(vec![1.0], vec![origin()], vec![vec![vec![1.0, 2.0], vec![2.0, 1.0]]]);
    assert!(matches!(not_pd, Err(Error::InvalidSpec(_))));
    let dims = GmmSpec::new(vec![1.0], vec![vec![0.0, 0.0, 0.0]], vec![eye()]);
    assert!(matches!(dims, Err(Error::InvalidSpec(_))));
    assert!(GmmSpec::new(vec![], vec![], vec![]).is_err());
}

#[test]
fn spec_json_schema_round_trip() {
    let spec = GmmSpec::default_2d();
    let text = serde_json::to_string(&spec).unwrap();
    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    let keys: Vec<&String> = value.as_object().unwrap().keys().collect();
    assert_eq!(keys, ["covariances", "means", "weights"]);
    assert_eq!(value["means"][3], serde_json::json!([3.0, 3.0]));
    let back: GmmSpec = serde_json::from_str(&text).unwrap();
    assert_eq!(back, spec);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("spec.json");
    spec.save(&path).unwrap();
    assert_eq!(GmmSpec::load(&path).unwrap(), spec);
    assert!(matches!(
        GmmSpec::load(dir.path().join("missing.json")),
        Err(Error::MissingArtifact(_))
    ));
    std::fs::write(&path, r#"{"weights":[1.0],"means":[[0,0]],"covariances":[[[0,0],[0,0]]]}"#).unwrap();
    assert!(matches!(GmmSpec::load(&path), Err(Error::InvalidSpec(_))));
}

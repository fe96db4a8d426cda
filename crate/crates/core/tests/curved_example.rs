//! The two-parameter curved Gaussian at θ₁ = 0 against hand-derived values.

use curvcrb::bounds::{directional_bound, directional_sweep, exact_matrix_correction, DirectionSet};
use curvcrb::geometry::{geometry_report, GeometryReport};
use curvcrb::linalg::Mat;
use curvcrb::model::{builtin_curved_gaussian, builtin_gamma_estimator, ParameterPoint};
use curvcrb::pairing::PairingConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(sigma: f64, alpha: f64, gamma: f64, theta2: f64, cfg: &PairingConfig) -> GeometryReport<f64> {
    let model = builtin_curved_gaussian(sigma, alpha).unwrap();
    let theta = ParameterPoint::new(vec![0.0, theta2]).unwrap();
    let est = builtin_gamma_estimator(gamma, &model, &theta).unwrap();
    geometry_report(&model, &est, &theta, cfg).unwrap()
}

/// Normal Gram written out by hand over pairs (11, 12, 22).
fn expected_normal_gram(sigma: f64, alpha: f64) -> Mat<f64> {
    let q = 1.0 / (16.0 * sigma.powi(4));
    Mat::from_rows(&[
        vec![3.0 * q + alpha * alpha / (sigma * sigma), 0.0, q],
        vec![0.0, q, 0.0],
        vec![q, 0.0, 3.0 * q],
    ])
    .unwrap()
}

fn expected_r(sigma: f64, alpha: f64, gamma: f64, v: &[f64]) -> f64 {
    let (v1, v2) = (v[0], v[1]);
    let num = 16.0 * sigma.powi(4) * v2 * v2 * v1.powi(4) * gamma * gamma * alpha * alpha;
    let den = 3.0 * (v1 * v1 + v2 * v2).powi(2) + 16.0 * sigma * sigma * alpha * alpha * v1.powi(4);
    num / den
}

fn assert_close(a: &Mat<f64>, b: &Mat<f64>, tol: f64, what: &str) {
    let diff = (a - b).max_abs();
    assert!(diff <= tol, "{what}: max deviation {diff:e}\n{a:?}\nvs\n{b:?}");
}

#[test]
fn unit_parameters_under_quadrature() {
    let r = report(1.0, 1.0, 1.0, 0.0, &PairingConfig::default());
    assert_close(&r.fisher, &Mat::identity(2), 1e-8, "J");
    assert!(r.christoffel.iter().flatten().flatten().all(|g| g.abs() <= 1e-8));
    assert_close(&r.normal_gram, &expected_normal_gram(1.0, 1.0), 1e-8, "G_N");
    let mut c = Mat::zeros(2, 3);
    c[(1, 0)] = 1.0;
    assert_close(&r.error_pairings, &c, 1e-8, "C");
    assert_close(&r.unbias, &Mat::identity(2).scale(0.5), 1e-8, "unbias");
    assert!(r.meta.warnings.is_empty());
    assert!(!r.meta.flat);
}

#[test]
fn general_parameters_all_backends_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5 {
        let sigma = rng.random_range(0.5..2.0);
        let alpha = rng.random_range(0.3..2.0);
        let gamma = rng.random_range(-1.5..1.5);
        let theta2 = rng.random_range(-2.0..2.0);
        for cfg in [PairingConfig::closed_form(), PairingConfig::gauss_hermite(12).unwrap()] {
            let r = report(sigma, alpha, gamma, theta2, &cfg);
            let scale = 1.0 + expected_normal_gram(sigma, alpha).max_abs();
            assert_close(&r.fisher, &Mat::identity(2).scale(1.0 / (sigma * sigma)), 1e-9 * scale, "J");
            assert_close(&r.normal_gram, &expected_normal_gram(sigma, alpha), 1e-9 * scale, "G_N");
            let mut c = Mat::zeros(2, 3);
            c[(1, 0)] = gamma * alpha;
            assert_close(&r.error_pairings, &c, 1e-9 * scale, "C");
        }
    }
}

#[test]
fn directional_bound_matches_rational_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..5 {
        let sigma = rng.random_range(0.5..2.0);
        let alpha = rng.random_range(0.3..2.0);
        let gamma = rng.random_range(0.2..2.0);
        let r = report(sigma, alpha, gamma, 0.0, &PairingConfig::default());
        for _ in 0..1000 {
            let v = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let got = directional_bound(&r, &v).unwrap().correction;
            let want = expected_r(sigma, alpha, gamma, &v);
            assert!((got - want).abs() <= 1e-8 * want.abs().max(1e-300) + 1e-14, "{v:?}: {got} vs {want}");
        }
    }
    let r = report(1.0, 1.0, 1.0, 0.0, &PairingConfig::default());
    assert!((directional_bound(&r, &[1.0, 1.0]).unwrap().correction - 4.0 / 7.0).abs() < 1e-12);
}

#[test]
fn axis_pattern_and_sandwich() {
    let r = report(1.0, 1.0, 1.0, 0.0, &PairingConfig::closed_form());
    let dirs = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
    let b = directional_sweep(&r, &DirectionSet::Explicit(dirs)).unwrap();
    let got: Vec<f64> = b.iter().map(|x| x.correction).collect();
    assert_eq!(got[0], 0.0);
    assert_eq!(got[1], 0.0);
    assert!((got[2] - 4.0 / 7.0).abs() < 1e-12);

    // Σ − J⁻¹ = diag(0, σ²γ²) for the γ-estimator
    let gap = Mat::diag(&[0.0, 1.0]);
    let sweep = directional_sweep(&r, &DirectionSet::Random { count: 1000, seed: 2 }).unwrap();
    let worst = sweep
        .iter()
        .map(|b| gap.bilinear(&b.v, &b.v) - b.correction)
        .fold(f64::INFINITY, f64::min);
    assert!(worst >= -1e-9, "{worst}");
}

#[test]
fn full_rank_normal_gram_has_no_exact_correction() {
    let r = report(1.0, 1.0, 1.0, 0.0, &PairingConfig::default());
    let e = exact_matrix_correction(&r, 1e-8);
    assert!(!e.applies);
    assert!(e.residuals.eigen_ratio > 1e-2);
}

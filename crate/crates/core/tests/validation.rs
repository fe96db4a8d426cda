//! Sampled covariance and the end-to-end bound checks.

use curvcrb::bounds::DirectionSet;
use curvcrb::geometry::geometry_report;
use curvcrb::linalg::Mat;
use curvcrb::model::{
    builtin_curved_gaussian, builtin_gamma_estimator, builtin_linear_gaussian, least_squares_estimator,
    EstimatorSpec, ParameterPoint,
};
use curvcrb::pairing::PairingConfig;
use curvcrb::soscert::{build_system, solve_sos_sdp, Objective};
use curvcrb::validate::{estimate_covariance, full_validation, CovarianceSource, ValidationConfig};

fn origin() -> ParameterPoint<f64> {
    ParameterPoint::new(vec![0.0, 0.0]).unwrap()
}

fn config(covariance: CovarianceSource) -> ValidationConfig {
    ValidationConfig {
        pairing: PairingConfig::default(),
        samples: 100_000,
        seed: 42,
        covariance,
    }
}

#[test]
fn covariance_within_four_standard_errors() {
    let model = builtin_curved_gaussian(1.0, 1.0).unwrap();
    for (gamma, expected) in [(1.0, Mat::diag(&[1.0, 2.0])), (0.0, Mat::identity(2))] {
        let est = builtin_gamma_estimator(gamma, &model, &origin()).unwrap();
        let cov = estimate_covariance(&model, &est, &origin(), 100_000, 3).unwrap();
        for p in 0..2 {
            for q in 0..2 {
                let z = (cov.sigma_hat[(p, q)] - expected[(p, q)]).abs() / cov.standard_errors[(p, q)];
                assert!(z <= 4.0, "gamma={gamma} [{p},{q}] z={z}");
            }
        }
    }
}

#[test]
fn covariance_is_bit_reproducible() {
    let model = builtin_curved_gaussian(1.0, 1.0).unwrap();
    let est = builtin_gamma_estimator(1.0, &model, &origin()).unwrap();
    let a = estimate_covariance(&model, &est, &origin(), 5_000, 8).unwrap();
    let b = estimate_covariance(&model, &est, &origin(), 5_000, 8).unwrap();
    assert_eq!(a, b);
    assert!(estimate_covariance(&model, &est, &origin(), 999, 8).is_err());
}

#[test]
fn certified_pipeline_passes_both_covariance_sources() {
    let model = builtin_curved_gaussian(1.0, 1.0).unwrap();
    let est = builtin_gamma_estimator(1.0, &model, &origin()).unwrap();
    let report = geometry_report(&model, &est, &origin(), &PairingConfig::default()).unwrap();
    let cert = solve_sos_sdp(&build_system(&report).unwrap(), Objective::Trace);
    let sweep = DirectionSet::Random { count: 500, seed: 1 };
    for source in [CovarianceSource::Auto, CovarianceSource::Empirical] {
        let v = full_validation(&model, &est, &origin(), &config(source), Some(&cert), &sweep).unwrap();
        assert!(v.passed, "{source:?}: {v:#?}");
        assert!(v.warnings.is_empty());
    }
}

#[test]
fn biased_estimator_is_flagged() {
    let model = builtin_curved_gaussian(1.0, 1.0).unwrap();
    let linear = Mat::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
    let est = EstimatorSpec::affine("shifted", origin(), vec![0.5, 0.0], linear).unwrap();
    let v = full_validation(
        &model,
        &est,
        &origin(),
        &config(CovarianceSource::Empirical),
        None,
        &DirectionSet::Random { count: 100, seed: 1 },
    )
    .unwrap();
    assert!(v.warnings.iter().any(|w| w.contains("mean deviates")), "{:?}", v.warnings);
}

#[test]
fn efficient_linear_model_has_zero_slack() {
    let design = Mat::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
    let model = builtin_linear_gaussian(0.8, design).unwrap();
    let est = least_squares_estimator(&model, &origin()).unwrap();
    let v = full_validation(
        &model,
        &est,
        &origin(),
        &config(CovarianceSource::Auto),
        None,
        &DirectionSet::Random { count: 200, seed: 1 },
    )
    .unwrap();
    assert!(v.passed, "{v:#?}");
    assert!(v.directional_slacks.min >= -1e-8);
    assert!(v.classical.margin.abs() < 1e-8);
}

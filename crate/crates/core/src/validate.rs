//! End-to-end checks of the bounds against the estimator's actual covariance.

use serde::{Deserialize, Serialize};

use crate::bounds::{classical_crb, directional_sweep, DirectionSet};
use crate::error::{CrbError, Result};
use crate::geometry::geometry_report;
use crate::linalg::{min_eigenvalue, Mat};
use crate::model::{EstimatorSpec, ParameterPoint, StatModel};
use crate::pairing::{expect_vector, PairingConfig, MIN_MC_SAMPLES};
use crate::rng::{split_seed, SeedPurpose};
use crate::scalar::Scalar;
use crate::soscert::SOSCertificate;

/// Tolerance when `Σ` is known in closed form.
pub const CLOSED_FORM_TOL: f64 = 1e-8;
/// Margins computed from `Σ̂` may fall this many standard errors below zero.
pub const SE_MULTIPLIER: f64 = 3.0;
/// `Σ̂` and the mean error are compared to their references at this many standard errors.
pub const CONSISTENCY_SE: f64 = 4.0;
/// Negative eigenvalues of `Σ̂` above `−PSD_CLAMP` are rounding.
pub const PSD_CLAMP: f64 = 1e-10;

/// `E[(T − θ)(T − θ)ᵀ]` from seeded draws, centered at the known `θ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct CovarianceEstimate<S: Scalar> {
    pub sigma_hat: Mat<S>,
    pub standard_errors: Mat<S>,
    /// `E[T − θ]`.
    pub mean_error: Vec<S>,
    pub mean_error_se: Vec<S>,
    pub samples: usize,
}

/// `n ≥ 1000` draws; standard errors from per-entry sample variances.
pub fn estimate_covariance<S: Scalar, M: StatModel<S> + ?Sized>(
    model: &M,
    estimator: &EstimatorSpec<S>,
    theta: &ParameterPoint<S>,
    n: usize,
    seed: u64,
) -> Result<CovarianceEstimate<S>> {
    if n < MIN_MC_SAMPLES {
        return Err(CrbError::InvalidParameter(format!(
            "covariance needs at least {MIN_MC_SAMPLES} samples, got {n}"
        )));
    }
    let d = theta.dim();
    if estimator.dim() != d {
        return Err(CrbError::DimensionMismatch {
            expected: d,
            got: estimator.dim(),
            context: "estimator output",
        });
    }
    let th = theta.as_slice();
    let est = expect_vector(
        model,
        th,
        d + d * d,
        |x, out| {
            let z = estimator.centered_error(x, th);
            out[..d].copy_from_slice(&z);
            for p in 0..d {
                for q in 0..d {
                    out[d + p * d + q] = z[p] * z[q];
                }
            }
        },
        &PairingConfig::monte_carlo(n, seed)?,
    )?;
    if est.mean.iter().any(|x| !x.is_finite()) {
        return Err(CrbError::NonFinite("estimator values".into()));
    }
    let se = est.std_error.expect("Monte Carlo backend");
    let sigma_hat = Mat::from_fn(d, d, |p, q| est.mean[d + p * d + q]).symmetrize();
    if min_eigenvalue(&sigma_hat) < -S::of(PSD_CLAMP) * sigma_hat.max_abs().max(S::one()) {
        return Err(CrbError::NotPositiveDefinite("sample covariance"));
    }
    Ok(CovarianceEstimate {
        sigma_hat,
        standard_errors: Mat::from_fn(d, d, |p, q| se[d + p * d + q]),
        mean_error: est.mean[..d].to_vec(),
        mean_error_se: se[..d].to_vec(),
        samples: n,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct MatrixBoundCheck<S: Scalar> {
    /// `λ_min(Σ − J⁻¹ − Δ)`.
    pub margin: S,
    pub tol: S,
    pub passed: bool,
}

/// `Σ ⪰ J⁻¹ + Δ` up to `tol`.
pub fn check_matrix_bound<S: Scalar>(sigma: &Mat<S>, j_inv: &Mat<S>, delta: &Mat<S>, tol: S) -> MatrixBoundCheck<S> {
    let margin = min_eigenvalue(&(&(sigma - j_inv) - delta).symmetrize());
    MatrixBoundCheck {
        margin,
        tol,
        passed: margin >= -tol,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceSource {
    /// Closed-form `Σ` when the estimator has one, else `Σ̂`.
    Auto,
    /// Always `Σ̂`.
    Empirical,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationConfig {
    pub pairing: PairingConfig,
    pub samples: usize,
    /// Top-level seed; the covariance draws use its covariance stream.
    pub seed: u64,
    pub covariance: CovarianceSource,
}

/// Summary of `vᵀ(Σ − J⁻¹)v − R(v)` over a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct SlackSummary<S: Scalar> {
    pub count: usize,
    pub min: S,
    pub mean: S,
    pub max: S,
    pub argmin: Vec<S>,
    pub tol: S,
    pub passed: bool,
}

/// `|Σ̂ − Σ|` and `|E[T − θ]|` in standard errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct ConsistencyCheck<S: Scalar> {
    pub max_covariance_z: Option<S>,
    pub max_bias_z: S,
    pub threshold: S,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct ValidationReport<S: Scalar> {
    pub sigma_hat: Mat<S>,
    pub sample_count: usize,
    pub standard_errors: Mat<S>,
    /// `"closed_form"` or `"empirical"`.
    pub covariance_source: String,
    /// The `Σ` used for every margin below.
    pub sigma: Mat<S>,
    pub fisher_inverse: Mat<S>,
    #[serde(rename = "Delta")]
    pub delta: Mat<S>,
    pub tolerance: S,
    /// `λ_min(Σ − J⁻¹)`.
    pub classical: MatrixBoundCheck<S>,
    /// `λ_min(Σ − J⁻¹ − Δ)`.
    pub matrix: MatrixBoundCheck<S>,
    pub directional_slacks: SlackSummary<S>,
    pub consistency: ConsistencyCheck<S>,
    pub mean_error: Vec<S>,
    pub mean_error_se: Vec<S>,
    pub warnings: Vec<String>,
    pub passed: bool,
}

/// Geometry, covariance, and all three bounds at one point.
pub fn full_validation<S: Scalar, M: StatModel<S> + ?Sized>(
    model: &M,
    estimator: &EstimatorSpec<S>,
    theta: &ParameterPoint<S>,
    cfg: &ValidationConfig,
    certificate: Option<&SOSCertificate<S>>,
    sweep: &DirectionSet<S>,
) -> Result<ValidationReport<S>> {
    let report = geometry_report(model, estimator, theta, &cfg.pairing)?;
    let d = report.dim();
    let j_inv = classical_crb(&report.fisher)?;
    let cov = estimate_covariance(
        model,
        estimator,
        theta,
        cfg.samples,
        split_seed(cfg.seed, SeedPurpose::Covariance),
    )?;
    let max_se = cov.standard_errors.max_abs();
    let closed = match cfg.covariance {
        CovarianceSource::Auto => estimator.closed_form_covariance().cloned(),
        CovarianceSource::Empirical => None,
    };
    let (sigma, tolerance, source) = match &closed {
        Some(s) => (s.clone(), S::of(CLOSED_FORM_TOL), "closed_form"),
        None => (cov.sigma_hat.clone(), S::of(SE_MULTIPLIER) * max_se, "empirical"),
    };
    let delta = match certificate {
        Some(c) if c.delta.rows() != d => {
            return Err(CrbError::DimensionMismatch {
                expected: d,
                got: c.delta.rows(),
                context: "certificate Delta",
            })
        }
        Some(c) => c.delta.clone(),
        None => Mat::zeros(d, d),
    };
    let classical = check_matrix_bound(&sigma, &j_inv, &Mat::zeros(d, d), tolerance);
    let matrix = check_matrix_bound(&sigma, &j_inv, &delta, tolerance);

    let bounds = directional_sweep(&report, sweep)?;
    let gap = &sigma - &j_inv;
    let mut slack = SlackSummary {
        count: bounds.len(),
        min: S::infinity(),
        mean: S::zero(),
        max: S::neg_infinity(),
        argmin: Vec::new(),
        tol: tolerance,
        passed: true,
    };
    for b in &bounds {
        let v2 = b.v.iter().map(|&x| x * x).sum::<S>();
        // per unit direction, so the tolerance is comparable across the sweep
        let s = (gap.bilinear(&b.v, &b.v) - b.correction) / v2;
        slack.mean += s;
        slack.max = slack.max.max(s);
        if s < slack.min {
            slack.min = s;
            slack.argmin = b.v.clone();
        }
    }
    slack.mean /= S::of(bounds.len() as f64);
    slack.passed = slack.min >= -tolerance;

    let threshold = S::of(CONSISTENCY_SE);
    let ratio = |diff: S, se: S| {
        if se > S::zero() {
            diff.abs() / se
        } else if diff.abs() <= S::of(CLOSED_FORM_TOL) {
            S::zero()
        } else {
            S::infinity()
        }
    };
    let max_covariance_z = closed.as_ref().map(|s| {
        (0..d)
            .flat_map(|p| (0..d).map(move |q| (p, q)))
            .map(|(p, q)| ratio(cov.sigma_hat[(p, q)] - s[(p, q)], cov.standard_errors[(p, q)]))
            .fold(S::zero(), S::max)
    });
    let max_bias_z = cov
        .mean_error
        .iter()
        .zip(&cov.mean_error_se)
        .map(|(&m, &se)| ratio(m, se))
        .fold(S::zero(), S::max);
    let mut warnings = report.meta.warnings.clone();
    if max_bias_z > threshold {
        warnings.push(format!(
            "sampled estimator mean deviates from theta by {max_bias_z} standard errors"
        ));
    }
    let consistency = ConsistencyCheck {
        max_covariance_z,
        max_bias_z,
        threshold,
        passed: max_covariance_z.is_none_or(|z| z <= threshold),
    };
    let passed = classical.passed && matrix.passed && slack.passed && consistency.passed;
    Ok(ValidationReport {
        sigma_hat: cov.sigma_hat,
        sample_count: cov.samples,
        standard_errors: cov.standard_errors,
        covariance_source: source.into(),
        sigma,
        fisher_inverse: j_inv,
        delta,
        tolerance,
        classical,
        matrix,
        directional_slacks: slack,
        consistency,
        mean_error: cov.mean_error,
        mean_error_se: cov.mean_error_se,
        warnings,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_bound_examples() {
        let sigma = Mat::diag(&[1.0, 2.0]);
        let i2 = Mat::<f64>::identity(2);
        let ok = check_matrix_bound(&sigma, &i2, &Mat::zeros(2, 2), 1e-8);
        assert!(ok.passed && ok.margin.abs() < 1e-14);
        let bad = check_matrix_bound(&sigma, &i2, &i2.scale(2.0), 1e-8);
        assert!(!bad.passed && (bad.margin + 2.0).abs() < 1e-14);
        let edge = check_matrix_bound(&i2, &i2, &Mat::zeros(2, 2), 1e-8);
        assert!(edge.passed && edge.margin == 0.0);
    }
}

//! Classical CRB, the directional curvature correction, and the exact rank-1
//! matrix correction.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CrbError, Result};
use crate::geometry::{GeometryReport, PairIndex};
use crate::linalg::{cholesky, dot, inverse_spd, Mat, SymEigen};
use crate::rng::sphere_directions;
use crate::scalar::Scalar;

/// `D ≤ DEGENERATE_RATIO · ‖G_N‖_F · ‖s(v)‖²` counts as `Π_v = 0`.
pub const DEGENERATE_RATIO: f64 = 1e-12;
/// Negative `D` above this (relative) level is rounding and is clamped to zero.
pub const D_CLAMP: f64 = 1e-10;
/// Default rank-1 tolerance for deterministic reports.
pub const RANK_ONE_TOL: f64 = 1e-8;

/// `J⁻¹`; fails unless `J` is symmetric positive definite.
pub fn classical_crb<S: Scalar>(fisher: &Mat<S>) -> Result<Mat<S>> {
    if !fisher.is_square() {
        return Err(CrbError::DimensionMismatch {
            expected: fisher.rows(),
            got: fisher.cols(),
            context: "Fisher information columns",
        });
    }
    let scale = fisher.max_abs().max(S::one());
    if fisher.asymmetry() > S::tol(1e-10, 16.0) * scale {
        return Err(CrbError::NotPositiveDefinite("Fisher information is not symmetric"));
    }
    let sym = fisher.symmetrize();
    cholesky(&sym).map_err(|_| CrbError::SingularFisher {
        condition: f64::INFINITY,
    })?;
    inverse_spd(&sym)
}

/// Directional correction for one direction `v`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct DirectionalBound<S: Scalar> {
    pub v: Vec<S>,
    /// `G⁻¹ v`.
    pub v_tilde: Vec<S>,
    /// `N(v) = vᵀ C s(v)`.
    #[serde(rename = "N")]
    pub numerator: S,
    /// `D(v) = s(v)ᵀ G_N s(v)`, clamped at zero.
    #[serde(rename = "D")]
    pub denominator: S,
    /// `N²/D`, or 0 on degenerate directions.
    #[serde(rename = "R")]
    pub correction: S,
    pub degenerate: bool,
}

/// Precomputed pieces of a report for evaluating many directions.
#[derive(Clone, Debug)]
pub struct BoundEvaluator<S: Scalar> {
    pairs: PairIndex,
    g_inv: Mat<S>,
    error_pairings: Mat<S>,
    normal_gram: Mat<S>,
    normal_norm: S,
}

impl<S: Scalar> BoundEvaluator<S> {
    pub fn new(report: &GeometryReport<S>) -> Result<Self> {
        Ok(Self {
            pairs: report.pairs(),
            g_inv: inverse_spd(&report.tangent_gram)?,
            error_pairings: report.error_pairings.clone(),
            normal_gram: report.normal_gram.clone(),
            normal_norm: report.normal_gram.frobenius_norm(),
        })
    }

    pub fn dim(&self) -> usize {
        self.g_inv.rows()
    }

    /// `s(v)_α = w_α ṽ_i ṽ_j`.
    pub fn monomial_vector(&self, v_tilde: &[S]) -> Vec<S> {
        self.pairs
            .iter()
            .enumerate()
            .map(|(a, (i, j))| S::of(self.pairs.weight(a) as f64) * v_tilde[i] * v_tilde[j])
            .collect()
    }

    pub fn evaluate(&self, v: &[S]) -> Result<DirectionalBound<S>> {
        let d = self.dim();
        if v.len() != d {
            return Err(CrbError::DimensionMismatch {
                expected: d,
                got: v.len(),
                context: "direction",
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(CrbError::NonFinite("direction".into()));
        }
        if v.iter().all(|x| x.is_zero()) {
            return Err(CrbError::ZeroDirection);
        }
        let v_tilde = self.g_inv.matvec(v);
        let s = self.monomial_vector(&v_tilde);
        let numerator = dot(v, &self.error_pairings.matvec(&s));
        let raw_d = self.normal_gram.bilinear(&s, &s);
        let s_sq = dot(&s, &s);
        let scale = self.normal_norm * s_sq;
        if raw_d < -S::of(D_CLAMP) * scale.max(S::min_positive_value()) {
            return Err(CrbError::NotPositiveDefinite("normal Gram"));
        }
        let denominator = raw_d.max(S::zero());
        let degenerate = denominator <= S::of(DEGENERATE_RATIO) * scale;
        let correction = if degenerate {
            S::zero()
        } else {
            numerator * numerator / denominator
        };
        Ok(DirectionalBound {
            v: v.to_vec(),
            v_tilde,
            numerator,
            denominator,
            correction,
            degenerate,
        })
    }
}

/// Directional correction `R(v)` and its ingredients.
pub fn directional_bound<S: Scalar>(report: &GeometryReport<S>, v: &[S]) -> Result<DirectionalBound<S>> {
    BoundEvaluator::new(report)?.evaluate(v)
}

/// Deviations that decide whether the rank-1 case applies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct RankOneResiduals<S: Scalar> {
    /// `max_{k≥2} |λ_k(G_N)| / λ₁(G_N)`.
    pub eigen_ratio: S,
    /// `‖C − (Cu)uᵀ‖_F / ‖C‖_F`.
    pub coupling_ratio: S,
    pub tol: S,
}

/// Exact matrix correction when the normal Gram has rank one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct ExactCorrection<S: Scalar> {
    pub applies: bool,
    #[serde(rename = "Delta")]
    pub delta: Mat<S>,
    /// `C u`.
    pub a: Vec<S>,
    /// Top eigenvalue of `G_N`.
    pub c: S,
    /// Unit top eigenvector of `G_N` in pair coordinates.
    pub u: Vec<S>,
    pub residuals: RankOneResiduals<S>,
}

/// Tolerance for [`exact_matrix_correction`]: [`RANK_ONE_TOL`] for deterministic
/// reports, widened to three propagated standard errors for Monte Carlo ones.
pub fn rank_one_tolerance<S: Scalar>(report: &GeometryReport<S>) -> S {
    let base = S::of(RANK_ONE_TOL);
    let Some(se) = &report.meta.standard_errors else {
        return base;
    };
    let top = SymEigen::new(&report.normal_gram).max();
    let c_norm = report.error_pairings.frobenius_norm();
    let three = S::of(3.0);
    let mut tol = base;
    if top > S::zero() {
        tol = tol.max(three * se.normal_gram.frobenius_norm() / top);
    }
    if c_norm > S::zero() {
        tol = tol.max(three * se.error_pairings.frobenius_norm() / c_norm);
    }
    tol
}

/// Detects `G_N ≈ λ₁uuᵀ` and `C ≈ a uᵀ`; then `R(v) = (vᵀa)²/λ₁` exactly and
/// `Δ = aaᵀ/λ₁`.
pub fn exact_matrix_correction<S: Scalar>(report: &GeometryReport<S>, tol: S) -> ExactCorrection<S> {
    let d = report.dim();
    let m = report.pairs().len();
    let eig = SymEigen::new(&report.normal_gram.symmetrize());
    let top = eig.values[m - 1];
    let u = eig.vectors.col(m - 1);
    let c_mat = &report.error_pairings;
    let a = c_mat.matvec(&u);
    let rest = eig.values[..m - 1].iter().fold(S::zero(), |acc, l| acc.max(l.abs()));
    let scale = top.abs().max(report.tangent_gram.frobenius_norm().powi(2));
    let positive = top > S::of(crate::geometry::FLAT_RATIO) * scale;
    let eigen_ratio = if positive { rest / top } else { S::one() };
    let c_norm = c_mat.frobenius_norm();
    let coupling_ratio = if c_norm > S::zero() {
        (c_mat - &Mat::outer(&a, &u)).frobenius_norm() / c_norm
    } else {
        S::zero()
    };
    let applies = positive && eigen_ratio <= tol && coupling_ratio <= tol;
    let delta = if applies {
        Mat::outer(&a, &a).scale(top.recip())
    } else {
        Mat::zeros(d, d)
    };
    ExactCorrection {
        applies,
        delta,
        a,
        c: top,
        u,
        residuals: RankOneResiduals {
            eigen_ratio,
            coupling_ratio,
            tol,
        },
    }
}

/// Directions for a sweep.
#[derive(Clone, Debug, PartialEq)]
pub enum DirectionSet<S> {
    Explicit(Vec<Vec<S>>),
    /// Uniform on the unit sphere.
    Random { count: usize, seed: u64 },
}

/// One bound per direction, in input order.
pub fn directional_sweep<S: Scalar>(
    report: &GeometryReport<S>,
    directions: &DirectionSet<S>,
) -> Result<Vec<DirectionalBound<S>>> {
    let dirs = match directions {
        DirectionSet::Explicit(v) => v.clone(),
        DirectionSet::Random { count, seed } => sphere_directions(report.dim(), *count, *seed),
    };
    if dirs.is_empty() {
        return Err(CrbError::EmptyDirections);
    }
    let eval = BoundEvaluator::new(report)?;
    dirs.par_iter().map(|v| eval.evaluate(v)).collect()
}

/// Sweep as CSV; adds `gap = vᵀ(Σ − J⁻¹)v` when `Σ` is known.
pub fn sweep_csv<S: Scalar>(
    bounds: &[DirectionalBound<S>],
    covariance_gap: Option<&Mat<S>>,
) -> String {
    let d = bounds.first().map_or(0, |b| b.v.len());
    let mut out = String::new();
    let mut header: Vec<String> = (1..=d).map(|i| format!("v{i}")).collect();
    header.extend(["N", "D", "R", "degenerate"].map(String::from));
    if covariance_gap.is_some() {
        header.push("gap".into());
    }
    out.push_str(&header.join(","));
    out.push('\n');
    for b in bounds {
        for x in &b.v {
            let _ = write!(out, "{x},");
        }
        let _ = write!(
            out,
            "{},{},{},{}",
            b.numerator, b.denominator, b.correction, b.degenerate as u8
        );
        if let Some(gap) = covariance_gap {
            let _ = write!(out, ",{}", gap.bilinear(&b.v, &b.v));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_curved_gaussian, builtin_gamma_estimator, ParameterPoint};
    use crate::pairing::PairingConfig;
    use crate::geometry::geometry_report;

    fn example(sigma: f64, alpha: f64, gamma: f64) -> GeometryReport<f64> {
        let model = builtin_curved_gaussian(sigma, alpha).unwrap();
        let theta = ParameterPoint::new(vec![0.0, 0.0]).unwrap();
        let est = builtin_gamma_estimator(gamma, &model, &theta).unwrap();
        geometry_report(&model, &est, &theta, &PairingConfig::closed_form()).unwrap()
    }

    #[test]
    fn classical_examples() {
        let i2 = Mat::<f64>::identity(2);
        assert_eq!(classical_crb(&i2).unwrap(), i2);
        let q = classical_crb(&i2.scale(0.25)).unwrap();
        assert!((&q - &i2.scale(4.0)).max_abs() < 1e-14);
        let j = Mat::from_rows(&[vec![2.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let expected = Mat::from_rows(&[vec![1.0, -1.0], vec![-1.0, 2.0]]).unwrap();
        assert!((&classical_crb(&j).unwrap() - &expected).max_abs() < 1e-14);
        assert!(classical_crb(&Mat::<f64>::zeros(2, 2)).is_err());
    }

    #[test]
    fn known_directions() {
        let r = example(1.0, 1.0, 1.0);
        let b = directional_bound(&r, &[1.0, 1.0]).unwrap();
        assert!((b.correction - 4.0 / 7.0).abs() < 1e-12);
        assert!((b.numerator - 16.0).abs() < 1e-12);
        assert!((b.denominator - 448.0).abs() < 1e-10);
        assert!((directional_bound(&r, &[2.0, 2.0]).unwrap().correction - 16.0 / 7.0).abs() < 1e-12);
        assert_eq!(directional_bound(&r, &[1.0, 0.0]).unwrap().correction, 0.0);
        assert_eq!(directional_bound(&r, &[0.0, 1.0]).unwrap().correction, 0.0);
        assert!(matches!(directional_bound(&r, &[0.0, 0.0]), Err(CrbError::ZeroDirection)));
    }

    #[test]
    fn exact_correction_on_toy() {
        let gn = Mat::diag(&[4.0, 0.0, 0.0]);
        let c = Mat::from_rows(&[vec![1.0, 0.0, 0.0], vec![2.0, 0.0, 0.0]]).unwrap();
        let r = GeometryReport::synthetic(Mat::identity(2), gn, c).unwrap();
        let e = exact_matrix_correction(&r, 1e-8);
        assert!(e.applies);
        let expected = Mat::from_rows(&[vec![0.25, 0.5], vec![0.5, 1.0]]).unwrap();
        assert!((&e.delta - &expected).max_abs() < 1e-14);
    }

    #[test]
    fn exact_correction_rejects_full_rank_and_flat() {
        assert!(!exact_matrix_correction(&example(1.0, 1.0, 1.0), 1e-8).applies);
        let r = GeometryReport::synthetic(Mat::identity(2), Mat::zeros(3, 3), Mat::zeros(2, 3)).unwrap();
        let e = exact_matrix_correction(&r, 1e-8);
        assert!(!e.applies);
        assert_eq!(e.delta, Mat::zeros(2, 2));
    }

    #[test]
    fn sweep_is_ordered_and_seeded() {
        let r = example(1.0, 1.0, 1.0);
        let set = DirectionSet::Random { count: 50, seed: 3 };
        let a = directional_sweep(&r, &set).unwrap();
        assert_eq!(a, directional_sweep(&r, &set).unwrap());
        assert!(matches!(
            directional_sweep(&r, &DirectionSet::Random { count: 0, seed: 3 }),
            Err(CrbError::EmptyDirections)
        ));
        let csv = sweep_csv(&a, None);
        assert!(csv.starts_with("v1,v2,N,D,R,degenerate\n"));
        assert_eq!(csv.lines().count(), 51);
    }
}

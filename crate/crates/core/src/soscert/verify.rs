//! Direct pointwise check of a certificate on random unit directions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::BoundEvaluator;
use crate::error::{CrbError, Result};
use crate::geometry::GeometryReport;
use crate::linalg::min_eigenvalue;
use crate::rng::sphere_directions;
use crate::scalar::Scalar;

use super::sdp::{SOSCertificate, PSD_TOL, RESIDUAL_TOL};
use super::system::PolynomialSystem;

/// `P_Δ(v) ≥ −NONNEG_TOL · max(1, ‖N²‖_∞)`.
pub const NONNEG_TOL: f64 = 1e-8;
/// `vᵀΔv ≤ R(v) + BOUND_TOL` on non-degenerate unit directions.
pub const BOUND_TOL: f64 = 1e-8;
pub const MAX_OFFENDERS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    /// `P_Δ(v) < 0`.
    Nonnegativity,
    /// `P_Δ(v) ≠ z(v)ᵀSz(v)`.
    Identity,
    /// `vᵀΔv > R(v)` with `D(v) > 0`.
    Bound,
    /// `vᵀΔv > 0` on a degenerate direction, where `R(v) = 0` by convention.
    DegenerateCone,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct Offender<S: Scalar> {
    pub v: Vec<S>,
    pub check: Check,
    pub value: S,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct VerificationReport<S: Scalar> {
    pub samples: usize,
    pub seed: u64,
    /// PSD blocks, nonnegativity, identity, and `vᵀΔv ≤ R(v)` off the degenerate cone.
    pub passed: bool,
    /// Additionally requires `vᵀΔv ≤ 0` wherever `D(v) = 0`.
    pub passed_including_degenerate: bool,
    pub min_eigenvalue_delta: S,
    pub min_eigenvalue_gram: S,
    /// `min_v P_Δ(v) / max(1, ‖N²‖_∞)`.
    pub worst_nonnegativity: S,
    /// `max_v |P_Δ(v) − z(v)ᵀSz(v)|`.
    pub worst_identity_residual: S,
    pub identity_tolerance: S,
    /// `max_v vᵀΔv − R(v)` over non-degenerate directions.
    pub worst_bound_excess: S,
    pub degenerate_directions: usize,
    /// Degenerate directions with `vᵀΔv > BOUND_TOL`, outside the directional guarantee.
    pub degenerate_positive: usize,
    pub offenders: Vec<Offender<S>>,
}

struct Point<S: Scalar> {
    v: Vec<S>,
    nonneg: S,
    identity: S,
    excess: Option<S>,
    quad: S,
    degenerate: bool,
}

/// Checks the certificate against `N`, `D`, `R` evaluated directly from the report.
pub fn verify_certificate<S: Scalar>(
    cert: &SOSCertificate<S>,
    system: &PolynomialSystem<S>,
    report: &GeometryReport<S>,
    nsamples: usize,
    seed: u64,
) -> Result<VerificationReport<S>> {
    if nsamples == 0 {
        return Err(CrbError::EmptyDirections);
    }
    let eval = BoundEvaluator::new(report)?;
    let scale = system.nsq_scale().max(S::one());
    let k = S::of(system.constraint_count() as f64);
    let identity_tolerance = k * S::of(RESIDUAL_TOL) * (S::one() + system.nsq_scale());
    let dirs = sphere_directions::<S>(report.dim(), nsamples, seed);
    let points: Vec<Point<S>> = dirs
        .into_par_iter()
        .map(|v| {
            let b = eval.evaluate(&v)?;
            let quad = cert.delta.bilinear(&v, &v);
            let p = b.numerator * b.numerator - quad * b.denominator;
            let z = system.cubic.evaluate(&v);
            let sos = cert.gram.bilinear(&z, &z);
            Ok(Point {
                nonneg: p / scale,
                identity: (p - sos).abs(),
                excess: (!b.degenerate).then(|| quad - b.correction),
                quad,
                degenerate: b.degenerate,
                v,
            })
        })
        .collect::<Result<_>>()?;

    let mut offenders = Vec::new();
    let mut push = |v: &[S], check, value| {
        if offenders.len() < MAX_OFFENDERS {
            offenders.push(Offender {
                v: v.to_vec(),
                check,
                value,
            });
        }
    };
    let nonneg_tol = S::of(NONNEG_TOL);
    let bound_tol = S::of(BOUND_TOL);
    let mut worst_nonnegativity = S::infinity();
    let mut worst_identity_residual = S::zero();
    let mut worst_bound_excess = S::neg_infinity();
    let mut degenerate_directions = 0;
    let mut degenerate_positive = 0;
    let mut ok = true;
    for pt in &points {
        worst_nonnegativity = worst_nonnegativity.min(pt.nonneg);
        worst_identity_residual = worst_identity_residual.max(pt.identity);
        if pt.nonneg < -nonneg_tol {
            ok = false;
            push(&pt.v, Check::Nonnegativity, pt.nonneg);
        }
        if pt.identity > identity_tolerance {
            ok = false;
            push(&pt.v, Check::Identity, pt.identity);
        }
        match pt.excess {
            Some(e) => {
                worst_bound_excess = worst_bound_excess.max(e);
                if e > bound_tol {
                    ok = false;
                    push(&pt.v, Check::Bound, e);
                }
            }
            None => {
                degenerate_directions += 1;
                if pt.quad > bound_tol {
                    degenerate_positive += 1;
                    push(&pt.v, Check::DegenerateCone, pt.quad);
                }
            }
        }
        debug_assert_eq!(pt.degenerate, pt.excess.is_none());
    }
    let min_eigenvalue_delta = min_eigenvalue(&cert.delta);
    let min_eigenvalue_gram = min_eigenvalue(&cert.gram);
    let psd = min_eigenvalue_delta >= -S::of(PSD_TOL) && min_eigenvalue_gram >= -S::of(PSD_TOL) * scale;
    let passed = ok && psd;
    Ok(VerificationReport {
        samples: nsamples,
        seed,
        passed,
        passed_including_degenerate: passed && degenerate_positive == 0,
        min_eigenvalue_delta,
        min_eigenvalue_gram,
        worst_nonnegativity,
        worst_identity_residual,
        identity_tolerance,
        worst_bound_excess: if worst_bound_excess.is_finite() { worst_bound_excess } else { S::zero() },
        degenerate_directions,
        degenerate_positive,
        offenders,
    })
}

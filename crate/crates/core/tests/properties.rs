//! Invariants checked over random models, directions, and reparameterizations.

use curvcrb::bounds::{directional_bound, exact_matrix_correction};
use curvcrb::geometry::{geometry_report, GeometryReport, PairIndex};
use curvcrb::linalg::{inverse, min_eigenvalue, Mat, SymEigen};
use curvcrb::model::{builtin_curved_gaussian, builtin_gamma_estimator, ParameterPoint};
use curvcrb::pairing::PairingConfig;
use curvcrb::rng::{sphere_directions, split_seed, SeedPurpose};
use curvcrb::soscert::{build_system, solve_sos_sdp, verify_certificate, Objective, SolverStatus};
use proptest::prelude::*;

fn curved(sigma: f64, alpha: f64, gamma: f64, theta: [f64; 2]) -> GeometryReport<f64> {
    let model = builtin_curved_gaussian(sigma, alpha).unwrap();
    let point = ParameterPoint::new(theta.to_vec()).unwrap();
    let est = builtin_gamma_estimator(gamma, &model, &point).unwrap();
    geometry_report(&model, &est, &point, &PairingConfig::default()).unwrap()
}

fn rel_close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-12)
}

fn params() -> impl Strategy<Value = (f64, f64, f64, [f64; 2])> {
    (0.5..2.0f64, 0.3..2.0f64, -1.5..1.5f64, -1.0..1.0f64, -1.0..1.0f64).prop_map(|(s, a, g, t1, t2)| (s, a, g, [t1, t2]))
}

fn direction() -> impl Strategy<Value = [f64; 2]> {
    (-1.0..1.0f64, -1.0..1.0f64).prop_filter("nonzero", |(a, b)| a.abs() + b.abs() > 1e-3).prop_map(|(a, b)| [a, b])
}

/// Random SPD matrix with eigenvalues in [1, cond].
fn spd(d: usize, cond: f64, seed: u64) -> Mat<f64> {
    let dirs: Vec<Vec<f64>> = sphere_directions(d * d, 1, seed);
    let raw = Mat::from_fn(d, d, |i, j| dirs[0][i * d + j] + if i == j { 1.0 } else { 0.0 });
    let q = SymEigen::new(&(&raw.transpose() * &raw)).vectors;
    let vals: Vec<f64> = (0..d).map(|k| 1.0 + (cond - 1.0) * k as f64 / (d - 1).max(1) as f64).collect();
    &(&q * &Mat::diag(&vals)) * &q.transpose()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn correction_is_homogeneous_of_degree_two((s, a, g, th) in params(), v in direction()) {
        let r = curved(s, a, g, th);
        let base = directional_bound(&r, &v).unwrap().correction;
        for c in [-2.0, 0.5, 3.0] {
            let scaled = directional_bound(&r, &[c * v[0], c * v[1]]).unwrap().correction;
            prop_assert!(rel_close(scaled, c * c * base, 1e-10), "{} vs {}", scaled, c * c * base);
        }
    }

    #[test]
    fn report_structure((s, a, g, th) in params()) {
        let r = curved(s, a, g, th);
        prop_assert!(r.normal_gram.asymmetry() <= 1e-12);
        prop_assert!(min_eigenvalue(&r.normal_gram) >= -1e-10 * r.normal_gram.max_abs());
        prop_assert!(r.fisher.asymmetry() <= 1e-12);
        for l in 0..2 {
            prop_assert!((r.christoffel[l][0][1] - r.christoffel[l][1][0]).abs() <= 1e-12);
        }
        let pairs = PairIndex::new(2);
        // Γ^1_{11} = 4α²θ₁ / (1 + 4α²θ₁²) for the curved mean
        let expected = 4.0 * a * a * th[0] / (1.0 + 4.0 * a * a * th[0] * th[0]);
        prop_assert!((r.christoffel[0][0][0] - expected).abs() <= 1e-9);
        prop_assert_eq!(pairs.len(), r.normal_gram.rows());
    }

    #[test]
    fn linear_reparameterization_is_equivariant(
        (s, a, g, th) in params(),
        seed in any::<u64>(),
        flip in any::<bool>(),
        vp in direction(),
    ) {
        let mut fwd = spd(2, 10.0, seed);
        if flip {
            fwd = &fwd * &Mat::diag(&[1.0, -1.0]);
        }
        let eig = SymEigen::new(&(&fwd.transpose() * &fwd));
        prop_assume!((eig.max() / eig.min()).sqrt() <= 10.0 + 1e-9);
        let model = builtin_curved_gaussian(s, a).unwrap();
        let point = ParameterPoint::new(th.to_vec()).unwrap();
        let est = builtin_gamma_estimator(g, &model, &point).unwrap();
        let cfg = PairingConfig::default();
        let base = geometry_report(&model, &est, &point, &cfg).unwrap();

        let point_p = ParameterPoint::new(fwd.matvec(&th)).unwrap();
        let est_p = est.linearly_transformed(&fwd).unwrap();
        let model_p = model.reparameterize(fwd.clone()).unwrap();
        let moved = geometry_report(&model_p, &est_p, &point_p, &cfg).unwrap();

        let r_p = directional_bound(&moved, &vp).unwrap().correction;
        let v = fwd.tr_matvec(&vp);
        let r = directional_bound(&base, &v).unwrap().correction;
        let j_inv = inverse(&base.fisher).unwrap();
        // corrections near zero are only meaningful next to the classical term
        let floor = 1e-14 * j_inv.bilinear(&v, &v);
        prop_assert!((r_p - r).abs() <= 1e-8 * r.abs() + floor, "{} vs {}", r_p, r);
        let j_inv_p = inverse(&moved.fisher).unwrap();
        let pulled = &(&fwd * &j_inv) * &fwd.transpose();
        prop_assert!((&pulled - &j_inv_p).max_abs() <= 1e-8 * pulled.max_abs());
    }

    #[test]
    fn rank_one_correction_is_exact(
        d in 1usize..=3,
        seed in any::<u64>(),
        c in 0.1..10.0f64,
    ) {
        let m = d * (d + 1) / 2;
        let u = sphere_directions::<f64>(m, 1, seed).remove(0);
        let a = sphere_directions::<f64>(d, 1, seed ^ 1).remove(0);
        let g = spd(d, 5.0, seed ^ 2);
        let gn = Mat::outer(&u, &u).scale(c);
        let cm = Mat::outer(&a, &u);
        let r = GeometryReport::synthetic(g, gn, cm).unwrap();
        let e = exact_matrix_correction(&r, 1e-8);
        prop_assert!(e.applies);
        prop_assert!(min_eigenvalue(&e.delta) >= -1e-12);
        for v in sphere_directions::<f64>(d, 50, seed ^ 3) {
            let b = directional_bound(&r, &v).unwrap();
            if b.denominator > 1e-8 {
                let q = e.delta.bilinear(&v, &v);
                prop_assert!((b.correction - q).abs() <= 1e-6 * (1.0 + q), "{} vs {}", b.correction, q);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn feasible_start_and_solver_progress((s, a, g, th) in params()) {
        let r = curved(s, a, g, th);
        let sys = build_system(&r).unwrap();
        let (d0, s0) = sys.feasible_start();
        prop_assert!(sys.residual(&d0, &s0) <= 1e-12 * (1.0 + sys.nsq_scale()));
        let cert = solve_sos_sdp(&sys, Objective::Trace);
        prop_assert_eq!(cert.solver_status, SolverStatus::Optimal);
        // residuals shrink by (1 − step) in exact arithmetic; allow a rounding floor
        let floor = 1e-8 * (1.0 + sys.nsq_scale());
        for w in cert.history.windows(2) {
            let (p, q) = (w[0].primal_infeasibility, w[1].primal_infeasibility);
            prop_assert!(q <= p * (1.0 + 1e-6) + floor, "primal {} -> {}", p, q);
            let (p, q) = (w[0].dual_infeasibility, w[1].dual_infeasibility);
            prop_assert!(q <= p * (1.0 + 1e-6) + floor, "dual {} -> {}", p, q);
        }
        let rep = verify_certificate(&cert, &sys, &r, 2_000, 7).unwrap();
        prop_assert!(rep.passed, "{:?}", rep);
    }
}

fn toy(a: &[f64], c: f64) -> GeometryReport<f64> {
    let d = a.len();
    let m = d * (d + 1) / 2;
    let mut gn = Mat::zeros(m, m);
    gn[(0, 0)] = c;
    let cm = Mat::from_fn(d, m, |p, al| if al == 0 { a[p] } else { 0.0 });
    GeometryReport::synthetic(Mat::identity(d), gn, cm).unwrap()
}

#[test]
fn trace_scales_quadratically_with_error_pairings() {
    let base = solve_sos_sdp(&build_system(&toy(&[1.0, 2.0], 4.0)).unwrap(), Objective::Trace);
    let doubled = solve_sos_sdp(&build_system(&toy(&[2.0, 4.0], 4.0)).unwrap(), Objective::Trace);
    assert!(rel_close(doubled.objective, 4.0 * base.objective, 1e-5));
    assert!(rel_close(base.objective, 1.25, 1e-6));
}

#[test]
fn inflated_delta_fails_verification() {
    let r = toy(&[1.0, 2.0], 4.0);
    let sys = build_system(&r).unwrap();
    let mut cert = solve_sos_sdp(&sys, Objective::Trace);
    assert!(verify_certificate(&cert, &sys, &r, 10_000, 3).unwrap().passed);
    cert.delta = cert.delta.scale(1.01);
    let rep = verify_certificate(&cert, &sys, &r, 10_000, 3).unwrap();
    assert!(!rep.passed);
    assert!(!rep.offenders.is_empty());
}

#[test]
fn flat_system_certifies_zero() {
    let r = GeometryReport::<f64>::synthetic(Mat::identity(2), Mat::zeros(3, 3), Mat::zeros(2, 3)).unwrap();
    assert!(r.meta.flat);
    let sys = build_system(&r).unwrap();
    assert!(sys.nsq_coeffs.iter().all(|&c| c == 0.0));
    let cert = solve_sos_sdp(&sys, Objective::Trace);
    assert_eq!(cert.solver_status, SolverStatus::Optimal);
    assert_eq!(cert.delta, Mat::zeros(2, 2));
    assert_eq!(cert.gram.max_abs(), 0.0);
    let rep = verify_certificate(&cert, &sys, &r, 1_000, 3).unwrap();
    assert!(rep.passed && rep.worst_nonnegativity == 0.0);
}

#[test]
fn zero_objective_returns_feasible_start() {
    let r = curved(1.0, 1.0, 1.0, [0.0, 0.0]);
    let sys = build_system(&r).unwrap();
    let cert = solve_sos_sdp(&sys, Objective::Zero);
    let (d0, s0) = sys.feasible_start();
    assert_eq!(cert.delta, d0);
    assert_eq!(cert.gram, s0);
}

#[test]
fn three_parameter_toy() {
    let r = toy(&[1.0, -0.5, 2.0], 2.0);
    let sys = build_system(&r).unwrap();
    assert_eq!(sys.gram_size(), 10);
    assert_eq!(sys.constraint_count(), 28);
    let cert = solve_sos_sdp(&sys, Objective::Trace);
    assert_eq!(cert.solver_status, SolverStatus::Optimal);
    let a = [1.0, -0.5, 2.0];
    let expected = Mat::outer(&a, &a).scale(0.5);
    assert!((&cert.delta - &expected).max_abs() < 1e-6, "{:?}", cert.delta);
}

#[test]
fn seed_streams_are_distinct() {
    let purposes = [SeedPurpose::Pairing, SeedPurpose::Sweep, SeedPurpose::Verification, SeedPurpose::Covariance];
    let seeds: Vec<u64> = purposes.iter().map(|&p| split_seed(7, p)).collect();
    for i in 0..seeds.len() {
        for j in i + 1..seeds.len() {
            assert_ne!(seeds[i], seeds[j]);
        }
    }
    for v in sphere_directions::<f64>(3, 100, 1) {
        assert!((v.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

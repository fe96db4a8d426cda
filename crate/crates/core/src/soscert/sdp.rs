//! Primal-dual interior point solver for the two-block SOS program.
//!
//! Standard form over `X = diag(Δ, S)`:
//! `min ⟨C, X⟩  s.t.  ⟨A_k, X⟩ = b_k,  X ⪰ 0`, with `C = −diag(I, 0)` for the
//! trace objective. The program generally has no strictly feasible point
//! (`P_Δ` vanishes on whole curves at the optimum), so the solver runs an
//! infeasible-start HKM path-following method with Mehrotra
//! predictor-corrector steps. Primal and dual residuals shrink by the factor
//! `(1 − step)` every iteration.

use serde::{Deserialize, Serialize};

use crate::linalg::{cholesky, cholesky_solve, inverse, inverse_spd, Mat, SymEigen};
use crate::scalar::Scalar;

use super::system::PolynomialSystem;

pub const MAX_ITER: usize = 200;
/// Relative primal, dual, and gap tolerance of the scaled problem.
pub const SOLVER_TOL: f64 = 1e-9;
/// A run that stalls with every relative measure below this is still optimal.
pub const ACCEPT_TOL: f64 = 1e-7;
/// Iterations without improving the best iterate before the run is declared stalled.
const STALL_LIMIT: usize = 8;
/// Coefficient residual (relative to `1 + ‖N²‖_∞`) accepted as optimal.
pub const RESIDUAL_TOL: f64 = 1e-7;
/// Residual above which the run is reported as numerically infeasible.
pub const INFEASIBLE_TOL: f64 = 1e-6;
/// Eigenvalue floor for `Δ`; the floor for `S` is scaled by `max(1, ‖N²‖_∞)`.
pub const PSD_TOL: f64 = 1e-8;
const STEP_FRACTION: f64 = 0.95;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Maximize `trace(Δ)`.
    Trace,
    /// Any feasible certificate.
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Optimal,
    MaxIter,
    InfeasibleNumerics,
}

/// State after one iteration, in the original (unscaled) units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub objective: f64,
    pub relative_gap: f64,
    pub step_primal: f64,
    pub step_dual: f64,
}

/// `(Δ, S)` with `(vᵀΔv)·D(v) + z(v)ᵀSz(v) = N(v)²` coefficientwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct SOSCertificate<S: Scalar> {
    #[serde(rename = "Delta")]
    pub delta: Mat<S>,
    #[serde(rename = "S")]
    pub gram: Mat<S>,
    /// `trace(Δ)`.
    pub objective: S,
    /// Largest absolute coefficient mismatch.
    #[serde(rename = "residual")]
    pub max_coeff_residual: S,
    #[serde(rename = "status")]
    pub solver_status: SolverStatus,
    pub iterations: usize,
    #[serde(skip)]
    pub history: Vec<IterationRecord>,
}

type Blocks = [Mat<f64>; 2];

fn zip_blocks(a: &Blocks, b: &Blocks, f: impl Fn(&Mat<f64>, &Mat<f64>) -> Mat<f64>) -> Blocks {
    [f(&a[0], &b[0]), f(&a[1], &b[1])]
}

fn add_scaled(a: &Blocks, k: f64, b: &Blocks) -> Blocks {
    zip_blocks(a, b, |x, y| x + &y.scale(k))
}

fn product(a: &Blocks, b: &Blocks) -> Blocks {
    zip_blocks(a, b, |x, y| x * y)
}

fn inner(a: &Blocks, b: &Blocks) -> f64 {
    a[0].frob_dot(&b[0]) + a[1].frob_dot(&b[1])
}

fn frob(a: &Blocks) -> f64 {
    inner(a, a).sqrt()
}

fn sym(a: &Blocks) -> Blocks {
    [a[0].symmetrize(), a[1].symmetrize()]
}

fn scaled_identity(sizes: [usize; 2], k: f64) -> Blocks {
    [Mat::identity(sizes[0]).scale(k), Mat::identity(sizes[1]).scale(k)]
}

/// Largest `α ≤ ∞` with `X + α·dX ⪰ 0`, for `X ≻ 0`.
fn max_step(x: &Blocks, dx: &Blocks) -> Option<f64> {
    let mut alpha = f64::INFINITY;
    for (xb, db) in x.iter().zip(dx) {
        if xb.rows() == 0 {
            continue;
        }
        let l = cholesky(xb).ok()?;
        let l_inv = inverse(&l).ok()?;
        let w = &(&l_inv * db) * &l_inv.transpose();
        let lo = SymEigen::new(&w.symmetrize()).min();
        if lo < 0.0 {
            alpha = alpha.min(-1.0 / lo);
        }
    }
    Some(alpha)
}

struct Scaled {
    sizes: [usize; 2],
    constraints: Vec<Blocks>,
    /// Cholesky factor of `A Aᵀ`.
    gram_factor: Mat<f64>,
    b: Vec<f64>,
    c: Blocks,
    b_scale: f64,
    /// Solver variable is `κ·Δ`, balancing the two blocks' coefficient sizes.
    delta_scale: f64,
}

impl Scaled {
    fn new(system: &PolynomialSystem<f64>) -> Self {
        let d = system.d;
        let m = system.gram_size();
        let delta_scale = system.d_quad_map.max_abs().max(f64::MIN_POSITIVE);
        let mut b_raw = Vec::new();
        let mut constraints = Vec::new();
        for k in 0..system.constraint_count() {
            let a0 = Mat::from_fn(d, d, |i, j| system.d_quad_map[(k, i * d + j)] / delta_scale);
            let a1 = Mat::from_fn(m, m, |i, j| system.sos_map[(k, i * m + j)]);
            let blocks = [a0, a1];
            let r = frob(&blocks);
            constraints.push([blocks[0].scale(1.0 / r), blocks[1].scale(1.0 / r)]);
            b_raw.push(system.nsq_coeffs[k] / r);
        }
        let b_scale = b_raw.iter().fold(1.0f64, |acc, x| acc.max(x.abs()));
        let b = b_raw.iter().map(|x| x / b_scale).collect();
        let c = [Mat::identity(d).scale(-1.0), Mat::zeros(m, m)];
        let k = constraints.len();
        let gram = Mat::from_fn(k, k, |i, j| inner(&constraints[i], &constraints[j]));
        // every sextic monomial owns distinct entries of the S block, so A Aᵀ ≻ 0
        let gram_factor = cholesky(&gram).expect("constraints are linearly independent");
        Self {
            sizes: [d, m],
            constraints,
            gram_factor,
            b,
            c,
            b_scale,
            delta_scale,
        }
    }

    fn apply(&self, x: &Blocks) -> Vec<f64> {
        self.constraints.iter().map(|a| inner(a, x)).collect()
    }

    /// Least-norm change making `A(dx) = target` hold to rounding.
    fn restore(&self, dx: &Blocks, target: &[f64]) -> Blocks {
        let miss: Vec<f64> = target.iter().zip(self.apply(dx)).map(|(t, a)| t - a).collect();
        let w = cholesky_solve(&self.gram_factor, &miss);
        add_scaled(dx, 1.0, &self.adjoint(&w))
    }

    fn adjoint(&self, y: &[f64]) -> Blocks {
        let mut out = [Mat::zeros(self.sizes[0], self.sizes[0]), Mat::zeros(self.sizes[1], self.sizes[1])];
        for (a, &yk) in self.constraints.iter().zip(y) {
            out = add_scaled(&out, yk, a);
        }
        out
    }
}

struct Direction {
    dx: Blocks,
    dy: Vec<f64>,
    dz: Blocks,
}

struct Newton<'a> {
    p: &'a Scaled,
    x: &'a Blocks,
    z_inv: Blocks,
    schur: Mat<f64>,
    factor: Mat<f64>,
    rp: Vec<f64>,
    rd: Blocks,
}

impl Newton<'_> {
    /// Solves `A(dX) = rp`, `Aᵀdy + dZ = Rd`, `X·dZ + dX·Z = Rc`.
    fn solve(&self, rc: &Blocks) -> Direction {
        let t = add_scaled(&product(rc, &self.z_inv), -1.0, &product(&product(self.x, &self.rd), &self.z_inv));
        let at = self.p.apply(&t);
        let rhs: Vec<f64> = self.rp.iter().zip(&at).map(|(r, a)| r - a).collect();
        let mut dy = cholesky_solve(&self.factor, &rhs);
        // one step of iterative refinement; the Schur matrix degrades as μ → 0
        let fit = self.schur.matvec(&dy);
        let fix = cholesky_solve(&self.factor, &rhs.iter().zip(&fit).map(|(r, f)| r - f).collect::<Vec<_>>());
        dy.iter_mut().zip(&fix).for_each(|(a, b)| *a += b);
        let dz = add_scaled(&self.rd, -1.0, &self.p.adjoint(&dy));
        let dx = sym(&product(&add_scaled(rc, -1.0, &product(self.x, &dz)), &self.z_inv));
        // Z⁻¹ is badly conditioned near the optimum; keep A(dX) = rp exact
        let dx = self.p.restore(&dx, &self.rp);
        Direction { dx, dy, dz }
    }
}

fn schur_complement(p: &Scaled, x: &Blocks, z_inv: &Blocks) -> Option<(Mat<f64>, Mat<f64>)> {
    let k = p.constraints.len();
    let mut m = Mat::zeros(k, k);
    for l in 0..k {
        let g = sym(&product(&product(x, &p.constraints[l]), z_inv));
        for (kk, a) in p.constraints.iter().enumerate() {
            m[(kk, l)] = inner(a, &g);
        }
    }
    let m = m.symmetrize();
    if let Ok(l) = cholesky(&m) {
        return Some((m, l));
    }
    let reg = 1e-14 * m.trace().max(1.0);
    let m = &m + &Mat::identity(k).scale(reg);
    cholesky(&m).ok().map(|l| (m, l))
}

fn finish<S: Scalar>(
    sys64: &PolynomialSystem<f64>,
    delta: Mat<f64>,
    mut gram: Mat<f64>,
    converged: bool,
    iterations: usize,
    history: Vec<IterationRecord>,
) -> SOSCertificate<S> {
    // least-norm correction of S so the coefficient equalities hold to rounding
    let lhs = sys64.apply(&delta, &gram);
    let m = sys64.gram_size();
    let counts: Vec<f64> = (0..sys64.constraint_count()).map(|k| sys64.sos_map.row(k).iter().sum()).collect();
    let before = sys64.residual(&delta, &gram);
    for a in 0..m {
        for b in 0..m {
            let e: Vec<u32> = sys64.cubic.monomials()[a]
                .iter()
                .zip(&sys64.cubic.monomials()[b])
                .map(|(x, y)| x + y)
                .collect();
            let k = sys64.sextic.index_of(&e).expect("sextic");
            gram[(a, b)] += (sys64.nsq_coeffs[k] - lhs[k]) / counts[k];
        }
    }
    let residual = sys64.residual(&delta, &gram);
    let scale = 1.0 + sys64.nsq_scale();
    // S carries the units of N², so its floor scales with them
    let psd_ok = SymEigen::new(&delta).min() >= -PSD_TOL && SymEigen::new(&gram).min() >= -PSD_TOL * sys64.nsq_scale().max(1.0);
    let solver_status = if before > INFEASIBLE_TOL * scale {
        SolverStatus::InfeasibleNumerics
    } else if converged && residual <= RESIDUAL_TOL * scale && psd_ok {
        SolverStatus::Optimal
    } else {
        SolverStatus::MaxIter
    };
    SOSCertificate {
        objective: S::of(delta.trace()),
        delta: delta.cast(),
        gram: gram.cast(),
        max_coeff_residual: S::of(residual),
        solver_status,
        iterations,
        history,
    }
}

fn cast_system<S: Scalar>(system: &PolynomialSystem<S>) -> PolynomialSystem<f64> {
    let cast = |v: &[S]| v.iter().map(|x| x.to_f64_lossy()).collect::<Vec<_>>();
    PolynomialSystem {
        d: system.d,
        cubic: system.cubic.clone(),
        sextic: system.sextic.clone(),
        n_coeffs: cast(&system.n_coeffs),
        nsq_coeffs: cast(&system.nsq_coeffs),
        d_quad_map: system.d_quad_map.cast(),
        sos_map: system.sos_map.cast(),
        numerator: system.numerator.cast(),
        denominator: system.denominator.cast(),
    }
}

/// Solves the SOS program. Deterministic given the system.
pub fn solve_sos_sdp<S: Scalar>(system: &PolynomialSystem<S>, objective: Objective) -> SOSCertificate<S> {
    let sys64 = cast_system(system);
    let (delta0, gram0) = sys64.feasible_start();
    if objective == Objective::Zero || sys64.is_flat() {
        return finish(&sys64, delta0, gram0, true, 0, Vec::new());
    }
    let p = Scaled::new(&sys64);
    let n = (p.sizes[0] + p.sizes[1]) as f64;
    let b_norm = p.b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let c_norm = frob(&p.c);
    let xi = 10f64.max(n.sqrt()).max(n * p.b.iter().fold(0.0f64, |acc, x| acc.max((1.0 + x.abs()) / 2.0)));
    let eta = 10f64.max(n.sqrt()).max(c_norm);
    let mut x = scaled_identity(p.sizes, xi);
    let mut z = scaled_identity(p.sizes, eta);
    let mut y = vec![0.0; p.b.len()];
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut best: Option<(f64, Blocks)> = None;
    let mut since_best = 0;

    for iter in 0..=MAX_ITER {
        let ax = p.apply(&x);
        let rp: Vec<f64> = p.b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let rd = add_scaled(&add_scaled(&p.c, -1.0, &z), -1.0, &p.adjoint(&y));
        let mu = inner(&x, &z) / n;
        let pobj = inner(&p.c, &x);
        let dobj: f64 = p.b.iter().zip(&y).map(|(b, y)| b * y).sum();
        let rp_norm = rp.iter().map(|r| r * r).sum::<f64>().sqrt();
        let pinf = rp_norm / (1.0 + b_norm);
        let dinf = frob(&rd) / (1.0 + c_norm);
        let denom = 1.0 + pobj.abs() + dobj.abs();
        let gap = ((pobj - dobj).abs()).max(n * mu) / denom;
        history.push(IterationRecord {
            iteration: iter,
            primal_infeasibility: rp_norm * p.b_scale,
            dual_infeasibility: frob(&rd),
            objective: -pobj * p.b_scale / p.delta_scale,
            relative_gap: gap,
            step_primal: 0.0,
            step_dual: 0.0,
        });
        iterations = iter;
        let metric = pinf.max(dinf).max(gap);
        if best.as_ref().is_none_or(|(b, _)| metric < *b) {
            best = Some((metric, x.clone()));
            since_best = 0;
        } else {
            since_best += 1;
        }
        if metric < SOLVER_TOL {
            converged = true;
            break;
        }
        if iter == MAX_ITER || since_best >= STALL_LIMIT {
            break;
        }
        let Ok(z_inv) = inverse_spd(&z[0]).and_then(|a| Ok([a, inverse_spd(&z[1])?])) else {
            break;
        };
        let Some((schur, factor)) = schur_complement(&p, &x, &z_inv) else {
            break;
        };
        let newton = Newton {
            p: &p,
            x: &x,
            z_inv,
            schur,
            factor,
            rp,
            rd,
        };
        let xz = product(&x, &z);
        let pred = newton.solve(&[xz[0].scale(-1.0), xz[1].scale(-1.0)]);
        let (Some(ap), Some(ad)) = (max_step(&x, &pred.dx), max_step(&z, &pred.dz)) else {
            break;
        };
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let mu_aff = inner(&add_scaled(&x, ap, &pred.dx), &add_scaled(&z, ad, &pred.dz)) / n;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);
        let rc = add_scaled(
            &add_scaled(&scaled_identity(p.sizes, sigma * mu), -1.0, &xz),
            -1.0,
            &product(&pred.dx, &pred.dz),
        );
        let corr = newton.solve(&rc);
        let (Some(ap), Some(ad)) = (max_step(&x, &corr.dx), max_step(&z, &corr.dz)) else {
            break;
        };
        let ap = (STEP_FRACTION * ap).min(1.0);
        let ad = (STEP_FRACTION * ad).min(1.0);
        if ap < 1e-10 && ad < 1e-10 {
            break;
        }
        x = add_scaled(&x, ap, &corr.dx);
        z = add_scaled(&z, ad, &corr.dz);
        for (yk, dk) in y.iter_mut().zip(&corr.dy) {
            *yk += ad * dk;
        }
        if let Some(last) = history.last_mut() {
            last.step_primal = ap;
            last.step_dual = ad;
        }
    }
    let (metric, [delta, gram]) = best.expect("at least one iterate");
    let converged = converged || metric < ACCEPT_TOL;
    finish(
        &sys64,
        delta.symmetrize().scale(p.b_scale / p.delta_scale),
        gram.symmetrize().scale(p.b_scale),
        converged,
        iterations,
        history,
    )
}

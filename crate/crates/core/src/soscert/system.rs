//! Coefficient-matching constraints `(vᵀΔv)·D(v) + z(v)ᵀ S z(v) = N(v)²`.

use crate::error::Result;
use crate::geometry::GeometryReport;
use crate::linalg::{inverse_spd, Mat};
use crate::scalar::Scalar;

use super::monomial::{enumerate_monomials, MonomialBasis, Poly};

/// Linear constraints over degree-6 monomials.
///
/// Row `k` of `d_quad_map` holds, at column `i·d + j`, the coefficient of
/// monomial `k` in `v_i v_j D(v)`; row `k` of `sos_map` holds 1 at column
/// `a·M + b` when `z_a z_b` equals monomial `k`. Both act on full symmetric
/// matrices flattened row-major.
#[derive(Clone, Debug)]
pub struct PolynomialSystem<S: Scalar> {
    pub d: usize,
    pub cubic: MonomialBasis,
    pub sextic: MonomialBasis,
    /// Coefficients of `N(v)` over the cubic basis.
    pub n_coeffs: Vec<S>,
    /// Coefficients of `N(v)²` over the sextic basis.
    pub nsq_coeffs: Vec<S>,
    pub d_quad_map: Mat<S>,
    pub sos_map: Mat<S>,
    pub numerator: Poly<S>,
    pub denominator: Poly<S>,
}

impl<S: Scalar> PolynomialSystem<S> {
    /// Number of cubic monomials, the side of `S`.
    pub fn gram_size(&self) -> usize {
        self.cubic.size()
    }

    pub fn constraint_count(&self) -> usize {
        self.sextic.size()
    }

    /// `(Δ₀, S₀) = (0, nnᵀ)`, feasible since `N² = (nᵀz)²`.
    pub fn feasible_start(&self) -> (Mat<S>, Mat<S>) {
        (Mat::zeros(self.d, self.d), Mat::outer(&self.n_coeffs, &self.n_coeffs))
    }

    /// Left-hand side coefficients for a candidate `(Δ, S)`.
    pub fn apply(&self, delta: &Mat<S>, gram: &Mat<S>) -> Vec<S> {
        let a = self.d_quad_map.matvec(delta.as_slice());
        let b = self.sos_map.matvec(gram.as_slice());
        a.iter().zip(&b).map(|(&x, &y)| x + y).collect()
    }

    /// `max_k |lhs_k − nsq_k|`.
    pub fn residual(&self, delta: &Mat<S>, gram: &Mat<S>) -> S {
        self.apply(delta, gram)
            .iter()
            .zip(&self.nsq_coeffs)
            .fold(S::zero(), |acc, (&l, &r)| acc.max((l - r).abs()))
    }

    /// `‖N²‖_∞` over the sextic basis.
    pub fn nsq_scale(&self) -> S {
        self.nsq_coeffs.iter().fold(S::zero(), |acc, c| acc.max(c.abs()))
    }

    /// `D(v)` vanishes identically.
    pub fn is_flat(&self) -> bool {
        self.d_quad_map.max_abs() <= S::tol(1e-14, 16.0) * self.nsq_scale().max(S::one())
    }
}

fn unit<S: Scalar>(d: usize, i: usize) -> Vec<S> {
    (0..d).map(|k| if k == i { S::one() } else { S::zero() }).collect()
}

/// Expands `N(v) = vᵀC s(G⁻¹v)` and `D(v) = s(G⁻¹v)ᵀ G_N s(G⁻¹v)` into monomial
/// coefficients and assembles the constraint maps.
pub fn build_system<S: Scalar>(report: &GeometryReport<S>) -> Result<PolynomialSystem<S>> {
    let d = report.dim();
    let pairs = report.pairs();
    let g_inv = inverse_spd(&report.tangent_gram)?;
    let v_tilde: Vec<Poly<S>> = (0..d).map(|i| Poly::linear(g_inv.row(i))).collect();
    let s: Vec<Poly<S>> = pairs
        .iter()
        .enumerate()
        .map(|(a, (i, j))| v_tilde[i].mul(&v_tilde[j]).scale(S::of(pairs.weight(a) as f64)))
        .collect();
    let mut numerator = Poly::zero(d);
    for p in 0..d {
        let mut inner = Poly::zero(d);
        for (a, sa) in s.iter().enumerate() {
            inner = inner.add(&sa.scale(report.error_pairings[(p, a)]));
        }
        numerator = numerator.add(&Poly::linear(&unit(d, p)).mul(&inner));
    }
    let mut denominator = Poly::zero(d);
    for (a, sa) in s.iter().enumerate() {
        for (b, sb) in s.iter().enumerate() {
            let g = report.normal_gram[(a, b)];
            if g != S::zero() {
                denominator = denominator.add(&sa.mul(sb).scale(g));
            }
        }
    }
    let cubic = enumerate_monomials(d, 3);
    let sextic = enumerate_monomials(d, 6);
    let n_coeffs = numerator.coefficients(&cubic);
    let nsq_coeffs = numerator.mul(&numerator).coefficients(&sextic);

    let k = sextic.size();
    let mut d_quad_map = Mat::zeros(k, d * d);
    for i in 0..d {
        for j in 0..d {
            let vij = Poly::linear(&unit(d, i)).mul(&Poly::linear(&unit(d, j)));
            let col = vij.mul(&denominator).coefficients(&sextic);
            for (row, c) in col.into_iter().enumerate() {
                d_quad_map[(row, i * d + j)] = c;
            }
        }
    }
    let m = cubic.size();
    let mut sos_map = Mat::zeros(k, m * m);
    for a in 0..m {
        for b in 0..m {
            let e: Vec<u32> = cubic.monomials()[a]
                .iter()
                .zip(&cubic.monomials()[b])
                .map(|(x, y)| x + y)
                .collect();
            let row = sextic.index_of(&e).expect("product of cubics is sextic");
            sos_map[(row, a * m + b)] = S::one();
        }
    }
    Ok(PolynomialSystem {
        d,
        cubic,
        sextic,
        n_coeffs,
        nsq_coeffs,
        d_quad_map,
        sos_map,
        numerator,
        denominator,
    })
}

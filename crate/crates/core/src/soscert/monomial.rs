//! Homogeneous monomial bases and sparse polynomials over them.

use std::collections::{BTreeMap, HashMap};

use crate::scalar::Scalar;

/// All monomials in `d` variables of one total degree, graded-lex ordered:
/// `v₁³, v₁²v₂, v₁v₂², v₂³` for `(d, degree) = (2, 3)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MonomialBasis {
    d: usize,
    degree: u32,
    monomials: Vec<Vec<u32>>,
    index: HashMap<Vec<u32>, usize>,
}

/// Enumerates the basis; `d ≥ 1`.
pub fn enumerate_monomials(d: usize, degree: u32) -> MonomialBasis {
    assert!(d >= 1, "monomial basis needs at least one variable");
    let mut monomials = Vec::new();
    let mut current = vec![0u32; d];
    fill(&mut current, 0, degree, &mut monomials);
    let index = monomials.iter().cloned().enumerate().map(|(i, m)| (m, i)).collect();
    MonomialBasis {
        d,
        degree,
        monomials,
        index,
    }
}

fn fill(current: &mut Vec<u32>, pos: usize, remaining: u32, out: &mut Vec<Vec<u32>>) {
    if pos + 1 == current.len() {
        current[pos] = remaining;
        out.push(current.clone());
        return;
    }
    for e in (0..=remaining).rev() {
        current[pos] = e;
        fill(current, pos + 1, remaining - e, out);
    }
}

impl MonomialBasis {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn size(&self) -> usize {
        self.monomials.len()
    }

    pub fn monomials(&self) -> &[Vec<u32>] {
        &self.monomials
    }

    pub fn index_of(&self, exponents: &[u32]) -> Option<usize> {
        self.index.get(exponents).copied()
    }

    /// Values of every monomial at `v`.
    pub fn evaluate<S: Scalar>(&self, v: &[S]) -> Vec<S> {
        self.monomials
            .iter()
            .map(|e| e.iter().zip(v).fold(S::one(), |acc, (&k, &x)| acc * x.powi(k as i32)))
            .collect()
    }

    /// Human-readable name, e.g. `v1^2*v2`.
    pub fn label(&self, k: usize) -> String {
        let parts: Vec<String> = self.monomials[k]
            .iter()
            .enumerate()
            .filter(|(_, &e)| e > 0)
            .map(|(i, &e)| if e == 1 { format!("v{}", i + 1) } else { format!("v{}^{e}", i + 1) })
            .collect();
        if parts.is_empty() {
            "1".into()
        } else {
            parts.join("*")
        }
    }
}

/// Sparse polynomial keyed by exponent vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly<S> {
    d: usize,
    terms: BTreeMap<Vec<u32>, S>,
}

impl<S: Scalar> Poly<S> {
    pub fn zero(d: usize) -> Self {
        Self {
            d,
            terms: BTreeMap::new(),
        }
    }

    /// `Σ_i coeffs[i] v_i`.
    pub fn linear(coeffs: &[S]) -> Self {
        let d = coeffs.len();
        let mut p = Self::zero(d);
        for (i, &c) in coeffs.iter().enumerate() {
            let mut e = vec![0; d];
            e[i] = 1;
            p.add_term(e, c);
        }
        p
    }

    pub fn cast<T: Scalar>(&self) -> Poly<T> {
        Poly {
            d: self.d,
            terms: self.terms.iter().map(|(e, c)| (e.clone(), T::of(c.to_f64_lossy()))).collect(),
        }
    }

    pub fn add_term(&mut self, exponents: Vec<u32>, coeff: S) {
        *self.terms.entry(exponents).or_insert_with(S::zero) += coeff;
    }

    pub fn scale(&self, k: S) -> Self {
        Self {
            d: self.d,
            terms: self.terms.iter().map(|(e, &c)| (e.clone(), c * k)).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (e, &c) in &other.terms {
            out.add_term(e.clone(), c);
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zero(self.d);
        for (ea, &ca) in &self.terms {
            for (eb, &cb) in &other.terms {
                let e = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(e, ca * cb);
            }
        }
        out
    }

    pub fn evaluate(&self, v: &[S]) -> S {
        self.terms
            .iter()
            .map(|(e, &c)| e.iter().zip(v).fold(c, |acc, (&k, &x)| acc * x.powi(k as i32)))
            .sum()
    }

    /// Dense coefficients over `basis`; panics on a term outside it.
    pub fn coefficients(&self, basis: &MonomialBasis) -> Vec<S> {
        let mut out = vec![S::zero(); basis.size()];
        for (e, &c) in &self.terms {
            let k = basis
                .index_of(e)
                .unwrap_or_else(|| panic!("term {e:?} outside the degree-{} basis", basis.degree()));
            out[k] += c;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binomial(n: usize, k: usize) -> usize {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    #[test]
    fn graded_lex_order() {
        let b = enumerate_monomials(2, 3);
        assert_eq!(b.monomials(), &[vec![3, 0], vec![2, 1], vec![1, 2], vec![0, 3]]);
        assert_eq!(b.label(1), "v1^2*v2");
    }

    #[test]
    fn sizes_are_binomial() {
        for d in 1..=5 {
            for deg in 0..=6 {
                let b = enumerate_monomials(d, deg);
                assert_eq!(b.size(), binomial(d + deg as usize - 1, deg as usize));
                assert!(b.monomials().iter().all(|m| m.iter().sum::<u32>() == deg));
            }
        }
        assert_eq!(enumerate_monomials(2, 6).size(), 7);
        assert_eq!(enumerate_monomials(3, 3).size(), 10);
    }

    #[test]
    fn poly_product_matches_pointwise() {
        let p = Poly::linear(&[1.0f64, -2.0]);
        let q = Poly::linear(&[0.5, 3.0]).mul(&p);
        let v = [0.7, -1.3];
        let direct = (0.7 - 2.0 * -1.3) * (0.5 * 0.7 + 3.0 * -1.3);
        assert!((q.evaluate(&v) - direct).abs() < 1e-12);
        let c = q.coefficients(&enumerate_monomials(2, 2));
        assert_eq!(c, vec![0.5, 2.0, -6.0]);
    }
}

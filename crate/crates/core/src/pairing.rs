//! Expectations `E_θ[g(X)]` under the model.
//!
//! Every Hilbert-space pairing of square-root-lifted functions reduces to such
//! an expectation, since `⟨s·u, s·v⟩ = ∫ u v f dμ = E_θ[u v]`. Three backends
//! are available: closed form (registered per model, see
//! [`StatModel::closed_form_moments`]), tensor Gauss-Hermite quadrature for
//! Gaussian laws, and seeded Monte Carlo.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CrbError, Result};
use crate::model::{GaussianLaw, StatModel};
use crate::rng::{chunk_count, chunk_rng, CHUNK_SIZE};
use crate::scalar::Scalar;

pub const MIN_GH_ORDER: usize = 2;
pub const MAX_GH_ORDER: usize = 64;
pub const MAX_GRID_POINTS: u128 = 10_000_000;
pub const MIN_MC_SAMPLES: usize = 1_000;

/// Monte Carlo draws are assigned round-robin to this many batches; batch sums
/// feed the grouped jackknife used for standard errors of derived quantities.
pub const MC_BATCHES: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Backend {
    ClosedForm,
    GaussHermite { order: usize },
    MonteCarlo { samples: usize, seed: u64 },
}

/// How pairings are evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairingConfig {
    pub backend: Backend,
}

impl PairingConfig {
    pub fn closed_form() -> Self {
        Self {
            backend: Backend::ClosedForm,
        }
    }

    pub fn gauss_hermite(order: usize) -> Result<Self> {
        let cfg = Self {
            backend: Backend::GaussHermite { order },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn monte_carlo(samples: usize, seed: u64) -> Result<Self> {
        let cfg = Self {
            backend: Backend::MonteCarlo { samples, seed },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match self.backend {
            Backend::ClosedForm => Ok(()),
            Backend::GaussHermite { order } => {
                if !(MIN_GH_ORDER..=MAX_GH_ORDER).contains(&order) {
                    return Err(CrbError::InvalidParameter(format!(
                        "Gauss-Hermite order must be in {MIN_GH_ORDER}..={MAX_GH_ORDER}, got {order}"
                    )));
                }
                Ok(())
            }
            Backend::MonteCarlo { samples, .. } => {
                if samples < MIN_MC_SAMPLES {
                    return Err(CrbError::InvalidParameter(format!(
                        "Monte Carlo needs at least {MIN_MC_SAMPLES} samples, got {samples}"
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(self.backend, Backend::MonteCarlo { .. })
    }

    /// Absolute tolerance for checks on deterministic backends; Monte Carlo
    /// checks use multiples of the reported standard error instead.
    pub fn deterministic_tolerance(&self) -> f64 {
        1e-8
    }

    pub fn label(&self) -> String {
        match self.backend {
            Backend::ClosedForm => "closed_form".into(),
            Backend::GaussHermite { order } => format!("gauss_hermite(order={order})"),
            Backend::MonteCarlo { samples, seed } => format!("monte_carlo(samples={samples}, seed={seed})"),
        }
    }
}

impl Default for PairingConfig {
    fn default() -> Self {
        Self {
            backend: Backend::GaussHermite { order: 12 },
        }
    }
}

/// A scalar expectation with its Monte Carlo standard error, if any.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate<S> {
    pub value: S,
    pub std_error: Option<S>,
}

/// Expectations of every component of a vector integrand, from one draw set.
#[derive(Clone, Debug)]
pub struct VectorEstimate<S> {
    pub mean: Vec<S>,
    /// Per-component standard error (Monte Carlo only).
    pub std_error: Option<Vec<S>>,
    batches: Option<Batches<S>>,
}

#[derive(Clone, Debug)]
struct Batches<S> {
    sums: Vec<Vec<S>>,
    counts: Vec<usize>,
    total: Vec<S>,
    n: usize,
}

impl<S: Scalar> VectorEstimate<S> {
    /// Grouped (delete-one-batch) jackknife standard errors of `stat(mean)`.
    ///
    /// Returns `Ok(None)` for deterministic backends.
    pub fn jackknife<F>(&self, stat: F) -> Result<Option<Vec<S>>>
    where
        F: Fn(&[S]) -> Result<Vec<S>>,
    {
        let Some(b) = &self.batches else {
            return Ok(None);
        };
        let used: Vec<usize> = (0..b.counts.len()).filter(|&k| b.counts[k] > 0).collect();
        let groups = used.len();
        if groups < 2 {
            return Ok(None);
        }
        let mut replicates = Vec::with_capacity(groups);
        for &k in &used {
            let remaining = S::of((b.n - b.counts[k]) as f64);
            let loo: Vec<S> = b
                .total
                .iter()
                .zip(&b.sums[k])
                .map(|(&t, &s)| (t - s) / remaining)
                .collect();
            replicates.push(stat(&loo)?);
        }
        let width = replicates[0].len();
        let g = S::of(groups as f64);
        let mut se = vec![S::zero(); width];
        for (c, out) in se.iter_mut().enumerate() {
            let avg = replicates.iter().map(|r| r[c]).sum::<S>() / g;
            let ss: S = replicates.iter().map(|r| (r[c] - avg) * (r[c] - avg)).sum();
            *out = ((g - S::one()) / g * ss).sqrt();
        }
        Ok(Some(se))
    }
}

/// Gauss-Hermite nodes and weights for `∫ e^{-t²} g(t) dt`.
///
/// Newton iteration on the orthonormal Hermite recurrence with the classical
/// asymptotic starting guesses; accurate to full `f64` precision up to order 64.
pub fn gauss_hermite_rule(order: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(MIN_GH_ORDER..=MAX_GH_ORDER).contains(&order) {
        return Err(CrbError::InvalidParameter(format!("Gauss-Hermite order {order} out of range")));
    }
    const PIM4: f64 = 0.751_125_544_464_942_5; // π^{-1/4}
    let n = order;
    let nf = n as f64;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = 0.0f64;
    for i in 0..n.div_ceil(2) {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-0.166_67),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    Ok((x, w))
}

fn grid_points(order: usize, dims: usize) -> Result<u128> {
    let points = (order as u128).checked_pow(dims as u32).unwrap_or(u128::MAX);
    if points > MAX_GRID_POINTS {
        return Err(CrbError::GridBudget {
            points,
            budget: MAX_GRID_POINTS,
        });
    }
    Ok(points)
}

fn quadrature<S: Scalar, F>(law: &GaussianLaw<S>, order: usize, width: usize, f: &F) -> Result<Vec<S>>
where
    F: Fn(&[S], &mut [S]) + Sync,
{
    let dims = law.mean.len();
    grid_points(order, dims)?;
    let (nodes, weights) = gauss_hermite_rule(order)?;
    let sqrt_pi = std::f64::consts::PI.sqrt();
    let sqrt2 = std::f64::consts::SQRT_2;
    let w: Vec<S> = weights.iter().map(|&wi| S::of(wi / sqrt_pi)).collect();
    let t: Vec<S> = nodes.iter().map(|&ti| S::of(sqrt2 * ti)).collect();

    let mut idx = vec![0usize; dims];
    let mut x = vec![S::zero(); dims];
    let mut buf = vec![S::zero(); width];
    let mut acc = vec![S::zero(); width];
    loop {
        let mut weight = S::one();
        for k in 0..dims {
            x[k] = law.mean[k] + law.std[k] * t[idx[k]];
            weight *= w[idx[k]];
        }
        f(&x, &mut buf);
        for (a, &v) in acc.iter_mut().zip(&buf) {
            *a += weight * v;
        }
        // odometer over the tensor grid, last coordinate fastest
        let mut k = dims;
        loop {
            if k == 0 {
                return finite_or_err(acc);
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < order {
                break;
            }
            idx[k] = 0;
        }
    }
}

fn finite_or_err<S: Scalar>(v: Vec<S>) -> Result<Vec<S>> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(v)
    } else {
        Err(CrbError::NonFinite("integrand produced a non-finite expectation".into()))
    }
}

struct ChunkSums<S> {
    batch_sums: Vec<Vec<S>>,
    batch_counts: Vec<usize>,
    squares: Vec<S>,
}

impl<S: Scalar> ChunkSums<S> {
    fn merge(mut self, other: Self) -> Self {
        for (a, b) in self.batch_sums.iter_mut().zip(other.batch_sums) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.batch_counts.iter_mut().zip(other.batch_counts) {
            *a += b;
        }
        for (a, b) in self.squares.iter_mut().zip(other.squares) {
            *a += b;
        }
        self
    }
}

/// Pairwise reduction in a fixed tree shape over the ordered chunk list.
fn pairwise<S: Scalar>(mut parts: Vec<ChunkSums<S>>) -> ChunkSums<S> {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(a) = it.next() {
            next.push(match it.next() {
                Some(b) => a.merge(b),
                None => a,
            });
        }
        parts = next;
    }
    parts.pop().expect("at least one chunk")
}

fn monte_carlo<S: Scalar, M, F>(
    model: &M,
    theta: &[S],
    samples: usize,
    seed: u64,
    width: usize,
    f: &F,
) -> Result<VectorEstimate<S>>
where
    M: StatModel<S> + ?Sized,
    F: Fn(&[S], &mut [S]) + Sync,
{
    let n_dim = model.sample_dim();
    let parts: Vec<ChunkSums<S>> = (0..chunk_count(samples))
        .into_par_iter()
        .map(|c| {
            let start = c * CHUNK_SIZE;
            let len = CHUNK_SIZE.min(samples - start);
            let mut rng = chunk_rng(seed, c as u64);
            let mut x = vec![S::zero(); n_dim];
            let mut buf = vec![S::zero(); width];
            let mut sums = ChunkSums {
                batch_sums: vec![vec![S::zero(); width]; MC_BATCHES],
                batch_counts: vec![0; MC_BATCHES],
                squares: vec![S::zero(); width],
            };
            for i in 0..len {
                model.draw(theta, &mut rng, &mut x);
                f(&x, &mut buf);
                let batch = (start + i) % MC_BATCHES;
                sums.batch_counts[batch] += 1;
                for ((s, q), &v) in sums.batch_sums[batch].iter_mut().zip(sums.squares.iter_mut()).zip(&buf) {
                    *s += v;
                    *q += v * v;
                }
            }
            sums
        })
        .collect();
    let sums = pairwise(parts);
    let mut total = vec![S::zero(); width];
    for b in &sums.batch_sums {
        for (t, &v) in total.iter_mut().zip(b) {
            *t += v;
        }
    }
    let nf = S::of(samples as f64);
    let mean = finite_or_err(total.iter().map(|&t| t / nf).collect())?;
    let std_error = mean
        .iter()
        .zip(&sums.squares)
        .map(|(&m, &q)| {
            let var = ((q / nf - m * m) * nf / (nf - S::one())).max(S::zero());
            (var / nf).sqrt()
        })
        .collect();
    Ok(VectorEstimate {
        mean,
        std_error: Some(std_error),
        batches: Some(Batches {
            sums: sums.batch_sums,
            counts: sums.batch_counts,
            total,
            n: samples,
        }),
    })
}

/// Expectation of every component of `f(x) ∈ ℝ^width` on one shared grid or draw set.
pub fn expect_vector<S, M, F>(
    model: &M,
    theta: &[S],
    width: usize,
    f: F,
    cfg: &PairingConfig,
) -> Result<VectorEstimate<S>>
where
    S: Scalar,
    M: StatModel<S> + ?Sized,
    F: Fn(&[S], &mut [S]) + Sync,
{
    cfg.validate()?;
    match cfg.backend {
        Backend::ClosedForm => Err(CrbError::ClosedFormUnavailable(
            "opaque integrands (closed forms are registered at the moment level)".into(),
        )),
        Backend::GaussHermite { order } => {
            let law = model.gaussian_law(theta).ok_or(CrbError::QuadratureUnavailable)?;
            Ok(VectorEstimate {
                mean: quadrature(&law, order, width, &f)?,
                std_error: None,
                batches: None,
            })
        }
        Backend::MonteCarlo { samples, seed } => monte_carlo(model, theta, samples, seed, width, &f),
    }
}

/// `E_θ[g(X)]`.
pub fn expect<S, M>(
    model: &M,
    theta: &[S],
    g: &(dyn Fn(&[S]) -> S + Sync),
    cfg: &PairingConfig,
) -> Result<Estimate<S>>
where
    S: Scalar,
    M: StatModel<S> + ?Sized,
{
    Ok(expect_batch(model, theta, &[g], cfg)?.remove(0))
}

/// `E_θ[g_k(X)]` for every `g_k`, all evaluated on the same grid or draw set.
pub fn expect_batch<S, M>(
    model: &M,
    theta: &[S],
    gs: &[&(dyn Fn(&[S]) -> S + Sync)],
    cfg: &PairingConfig,
) -> Result<Vec<Estimate<S>>>
where
    S: Scalar,
    M: StatModel<S> + ?Sized,
{
    let est = expect_vector(
        model,
        theta,
        gs.len(),
        |x, out| {
            for (o, g) in out.iter_mut().zip(gs) {
                *o = g(x);
            }
        },
        cfg,
    )?;
    Ok(est
        .mean
        .iter()
        .enumerate()
        .map(|(k, &value)| Estimate {
            value,
            std_error: est.std_error.as_ref().map(|se| se[k]),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin_curved_gaussian;

    #[test]
    fn hermite_rule_integrates_even_moments() {
        let (x, w) = gauss_hermite_rule(20).unwrap();
        let pi = std::f64::consts::PI;
        let total: f64 = w.iter().sum();
        assert!((total - pi.sqrt()).abs() < 1e-13);
        // ∫ t^{2k} e^{-t²} = Γ(k + 1/2)
        let gamma_half = [pi.sqrt(), 0.5 * pi.sqrt(), 0.75 * pi.sqrt(), 1.875 * pi.sqrt()];
        for (k, &g) in gamma_half.iter().enumerate() {
            let m: f64 = x.iter().zip(&w).map(|(&t, &wi)| wi * t.powi(2 * k as i32)).sum();
            assert!((m - g).abs() < 1e-12 * g, "moment {k}");
        }
    }

    #[test]
    fn hermite_rule_high_order_is_normalized() {
        for order in [2, 3, 7, 33, 64] {
            let (x, w) = gauss_hermite_rule(order).unwrap();
            let total: f64 = w.iter().sum();
            assert!((total - std::f64::consts::PI.sqrt()).abs() < 1e-12, "order {order}");
            assert!(x.windows(2).all(|p| p[0] > p[1]));
        }
        assert!(gauss_hermite_rule(1).is_err());
        assert!(gauss_hermite_rule(65).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(PairingConfig::gauss_hermite(1).is_err());
        assert!(PairingConfig::gauss_hermite(65).is_err());
        assert!(PairingConfig::monte_carlo(999, 0).is_err());
        assert!(PairingConfig::monte_carlo(1000, 0).is_ok());
    }

    #[test]
    fn grid_budget_enforced() {
        assert!(grid_points(64, 3).is_ok());
        assert!(matches!(grid_points(64, 4), Err(CrbError::GridBudget { .. })));
    }

    #[test]
    fn constant_integrand() {
        let m = builtin_curved_gaussian(1.3, 0.5).unwrap();
        let one = |_: &[f64]| 1.0;
        let gh = expect(&m, &[0.2, 0.1], &one, &PairingConfig::gauss_hermite(5).unwrap()).unwrap();
        assert!((gh.value - 1.0).abs() < 1e-14);
        assert!(gh.std_error.is_none());
        let mc = expect(&m, &[0.2, 0.1], &one, &PairingConfig::monte_carlo(5000, 3).unwrap()).unwrap();
        assert_eq!(mc.value, 1.0);
        assert_eq!(mc.std_error, Some(0.0));
    }

    #[test]
    fn closed_form_rejects_opaque_integrands() {
        let m = builtin_curved_gaussian(1.0, 1.0).unwrap();
        let one = |_: &[f64]| 1.0;
        assert!(matches!(
            expect(&m, &[0.0, 0.0], &one, &PairingConfig::closed_form()),
            Err(CrbError::ClosedFormUnavailable(_))
        ));
    }

    #[test]
    fn non_finite_integrand_is_an_error() {
        let m = builtin_curved_gaussian(1.0, 1.0).unwrap();
        let bad = |_: &[f64]| f64::NAN;
        assert!(matches!(
            expect(&m, &[0.0, 0.0], &bad, &PairingConfig::gauss_hermite(4).unwrap()),
            Err(CrbError::NonFinite(_))
        ));
    }
}

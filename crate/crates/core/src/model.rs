//! Parametric models, estimators, and the built-in Gaussian families.
//!
//! A model supplies the log-density, its score `Y_i = ∂_i log f`, optionally
//! the score Jacobian `∂_i Y_j`, and a sampler. Built-in models are Gaussian
//! with a smooth mean map, `X ~ N(μ(θ), σ² I_n)`, and expose every derivative
//! and expectation in closed form.

use std::fmt;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CrbError, Result};
use crate::geometry::{ErrorMoments, PairIndex, RawMoments};
use crate::linalg::{dot, inverse, Mat};
use crate::rng::{chunk_count, chunk_rng, CHUNK_SIZE};
use crate::scalar::Scalar;

/// Parameter coordinates `θ ∈ ℝ^d`, `d ≥ 1`, all finite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<S>", into = "Vec<S>", bound = "S: Scalar")]
pub struct ParameterPoint<S: Scalar>(Vec<S>);

impl<S: Scalar> ParameterPoint<S> {
    pub fn new(theta: Vec<S>) -> Result<Self> {
        if theta.is_empty() {
            return Err(CrbError::InvalidParameter("parameter dimension must be at least 1".into()));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(CrbError::InvalidParameter("parameter entries must be finite".into()));
        }
        Ok(Self(theta))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[S] {
        &self.0
    }
}

impl<S: Scalar> TryFrom<Vec<S>> for ParameterPoint<S> {
    type Error = CrbError;

    fn try_from(v: Vec<S>) -> Result<Self> {
        Self::new(v)
    }
}

impl<S: Scalar> From<ParameterPoint<S>> for Vec<S> {
    fn from(p: ParameterPoint<S>) -> Self {
        p.0
    }
}

/// Independent-coordinate Gaussian law, used to place Gauss-Hermite nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianLaw<S> {
    pub mean: Vec<S>,
    pub std: Vec<S>,
}

/// A smooth parametric family `{P_θ}` with strictly positive density.
///
/// Implementations must be pure: every method depends only on its arguments.
pub trait StatModel<S: Scalar>: Send + Sync {
    fn name(&self) -> String;

    fn param_dim(&self) -> usize;

    fn sample_dim(&self) -> usize;

    fn log_density(&self, x: &[S], theta: &[S]) -> S;

    /// `Y_i(x; θ) = ∂_i log f(x; θ)`.
    fn score(&self, x: &[S], theta: &[S]) -> Vec<S>;

    /// `∂_i Y_j(x; θ)`, or `None` when only finite differences are available.
    fn score_jacobian(&self, _x: &[S], _theta: &[S]) -> Option<Mat<S>> {
        None
    }

    /// Writes one draw from `P_θ` into `out`.
    fn draw(&self, theta: &[S], rng: &mut ChaCha8Rng, out: &mut [S]);

    /// The law of `X` when it is Gaussian with independent coordinates.
    fn gaussian_law(&self, _theta: &[S]) -> Option<GaussianLaw<S>> {
        None
    }

    /// Exact pairing moments, when the model registers them for this estimator.
    fn closed_form_moments(
        &self,
        _theta: &[S],
        _estimator: Option<&EstimatorSpec<S>>,
    ) -> Option<RawMoments<S>> {
        None
    }
}

/// `count × n` matrix of draws from `P_θ`.
///
/// Chunk `c` of [`CHUNK_SIZE`] rows comes from stream `c` of the seeded
/// generator, so the result is bit-identical however the chunks are scheduled.
pub fn sample<S: Scalar, M: StatModel<S> + ?Sized>(
    model: &M,
    theta: &[S],
    count: usize,
    seed: u64,
) -> Mat<S> {
    let n = model.sample_dim();
    let chunks: Vec<Vec<S>> = (0..chunk_count(count))
        .into_par_iter()
        .map(|c| {
            let start = c * CHUNK_SIZE;
            let len = CHUNK_SIZE.min(count - start);
            let mut rng = chunk_rng(seed, c as u64);
            let mut buf = vec![S::zero(); len * n];
            for row in buf.chunks_mut(n) {
                model.draw(theta, &mut rng, row);
            }
            buf
        })
        .collect();
    let rows: Vec<Vec<S>> = chunks
        .iter()
        .flat_map(|c| c.chunks(n.max(1)).map(<[S]>::to_vec))
        .collect();
    if rows.is_empty() {
        return Mat::zeros(0, n);
    }
    Mat::from_rows(&rows).expect("rows share the sample dimension")
}

/// Default central-difference step for coordinate `i`: `cbrt(eps) · max(1, |θ_i|)`.
pub fn default_fd_step<S: Scalar>(theta_i: S) -> S {
    S::epsilon().cbrt() * S::one().max(theta_i.abs())
}

/// Central-difference estimate of `∂_i Y_j`, symmetrized as `(M + Mᵀ)/2`.
///
/// With `step = None` each coordinate uses [`default_fd_step`].
pub fn eval_score_jacobian_fd<S: Scalar, M: StatModel<S> + ?Sized>(
    model: &M,
    x: &[S],
    theta: &[S],
    step: Option<S>,
) -> Result<Mat<S>> {
    if let Some(h) = step {
        if !(h > S::zero()) || !h.is_finite() {
            return Err(CrbError::InvalidParameter("finite-difference step must be positive".into()));
        }
    }
    let d = theta.len();
    let mut jac = Mat::zeros(d, d);
    let mut shifted = theta.to_vec();
    for i in 0..d {
        let h = step.unwrap_or_else(|| default_fd_step(theta[i]));
        shifted[i] = theta[i] + h;
        let up = model.score(x, &shifted);
        shifted[i] = theta[i] - h;
        let down = model.score(x, &shifted);
        shifted[i] = theta[i];
        // use the realized step to cancel representation error in θ ± h
        let width = (theta[i] + h) - (theta[i] - h);
        for j in 0..d {
            jac[(i, j)] = (up[j] - down[j]) / width;
        }
    }
    if !jac.all_finite() {
        return Err(CrbError::NonFinite("score evaluation near θ produced a non-finite Jacobian".into()));
    }
    Ok(jac.symmetrize())
}

/// Analytic Jacobian when the model has one, finite differences otherwise.
pub fn score_jacobian_or_fd<S: Scalar, M: StatModel<S> + ?Sized>(
    model: &M,
    x: &[S],
    theta: &[S],
) -> Result<Mat<S>> {
    match model.score_jacobian(x, theta) {
        Some(j) => Ok(j),
        None => eval_score_jacobian_fd(model, x, theta, None),
    }
}

/// `T(x) = offset + L x`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMap<S: Scalar> {
    pub offset: Vec<S>,
    pub linear: Mat<S>,
}

type EstimatorFn<S> = dyn Fn(&[S]) -> Vec<S> + Send + Sync;

/// An estimator `T(x) ∈ ℝ^d` of one observation, claimed unbiased at a point.
#[derive(Clone)]
pub struct EstimatorSpec<S: Scalar> {
    label: String,
    dim: usize,
    map: Arc<EstimatorFn<S>>,
    claimed_unbiased_at: ParameterPoint<S>,
    closed_form_covariance: Option<Mat<S>>,
    affine: Option<AffineMap<S>>,
}

impl<S: Scalar> fmt::Debug for EstimatorSpec<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EstimatorSpec")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("claimed_unbiased_at", &self.claimed_unbiased_at)
            .field("closed_form_covariance", &self.closed_form_covariance)
            .field("affine", &self.affine)
            .finish_non_exhaustive()
    }
}

impl<S: Scalar> EstimatorSpec<S> {
    /// Wraps an arbitrary map `x ↦ T(x)`.
    pub fn new(
        label: impl Into<String>,
        claimed_unbiased_at: ParameterPoint<S>,
        map: impl Fn(&[S]) -> Vec<S> + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            dim: claimed_unbiased_at.dim(),
            map: Arc::new(map),
            claimed_unbiased_at,
            closed_form_covariance: None,
            affine: None,
        }
    }

    /// `T(x) = offset + L x`; the affine form lets closed-form backends pair it exactly.
    pub fn affine(
        label: impl Into<String>,
        claimed_unbiased_at: ParameterPoint<S>,
        offset: Vec<S>,
        linear: Mat<S>,
    ) -> Result<Self> {
        let d = claimed_unbiased_at.dim();
        if offset.len() != d || linear.rows() != d {
            return Err(CrbError::DimensionMismatch {
                expected: d,
                got: if offset.len() != d { offset.len() } else { linear.rows() },
                context: "affine estimator output",
            });
        }
        let map_offset = offset.clone();
        let map_linear = linear.clone();
        Ok(Self {
            label: label.into(),
            dim: d,
            map: Arc::new(move |x: &[S]| {
                let lx = map_linear.matvec(x);
                map_offset.iter().zip(lx).map(|(&o, l)| o + l).collect()
            }),
            claimed_unbiased_at,
            closed_form_covariance: None,
            affine: Some(AffineMap { offset, linear }),
        })
    }

    pub fn with_covariance(mut self, sigma: Mat<S>) -> Self {
        self.closed_form_covariance = Some(sigma);
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, x: &[S]) -> Vec<S> {
        (self.map)(x)
    }

    /// Centered error `Z₀ = T(x) − θ`.
    pub fn centered_error(&self, x: &[S], theta: &[S]) -> Vec<S> {
        self.eval(x).into_iter().zip(theta).map(|(t, &th)| t - th).collect()
    }

    pub fn claimed_unbiased_at(&self) -> &ParameterPoint<S> {
        &self.claimed_unbiased_at
    }

    pub fn closed_form_covariance(&self) -> Option<&Mat<S>> {
        self.closed_form_covariance.as_ref()
    }

    pub fn affine_form(&self) -> Option<&AffineMap<S>> {
        self.affine.as_ref()
    }

    /// The estimator `T' = A T` of the reparameterized coordinates `θ' = A θ`.
    pub fn linearly_transformed(&self, a: &Mat<S>) -> Result<Self> {
        let theta = ParameterPoint::new(a.matvec(self.claimed_unbiased_at.as_slice()))?;
        let cov = self
            .closed_form_covariance
            .as_ref()
            .map(|sig| &(a * sig) * &a.transpose());
        let mut out = match &self.affine {
            Some(aff) => Self::affine(
                format!("A·{}", self.label),
                theta,
                a.matvec(&aff.offset),
                a * &aff.linear,
            )?,
            None => {
                let inner = Arc::clone(&self.map);
                let a = a.clone();
                Self::new(format!("A·{}", self.label), theta, move |x| a.matvec(&inner(x)))
            }
        };
        out.closed_form_covariance = cov;
        Ok(out)
    }
}

/// Smooth mean map `θ ↦ μ(θ) ∈ ℝ^n` with its first and second derivatives.
pub trait MeanMap<S: Scalar>: Send + Sync {
    fn name(&self) -> String;

    fn param_dim(&self) -> usize;

    fn sample_dim(&self) -> usize;

    fn mean(&self, theta: &[S]) -> Vec<S>;

    /// `n × d` matrix whose column `i` is `μ_{,i}`.
    fn jacobian(&self, theta: &[S]) -> Mat<S>;

    /// One `d × d` Hessian per output coordinate: `hessian[k][(i, j)] = ∂_i∂_j μ_k`.
    fn hessian(&self, theta: &[S]) -> Vec<Mat<S>>;
}

/// `μ(θ) = (θ₁, θ₂, α θ₁²)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvedMean<S> {
    pub alpha: S,
}

impl<S: Scalar> MeanMap<S> for CurvedMean<S> {
    fn name(&self) -> String {
        "curved-gaussian".into()
    }

    fn param_dim(&self) -> usize {
        2
    }

    fn sample_dim(&self) -> usize {
        3
    }

    fn mean(&self, theta: &[S]) -> Vec<S> {
        vec![theta[0], theta[1], self.alpha * theta[0] * theta[0]]
    }

    fn jacobian(&self, theta: &[S]) -> Mat<S> {
        let mut j = Mat::zeros(3, 2);
        j[(0, 0)] = S::one();
        j[(1, 1)] = S::one();
        j[(2, 0)] = S::of(2.0) * self.alpha * theta[0];
        j
    }

    fn hessian(&self, _theta: &[S]) -> Vec<Mat<S>> {
        let mut h3 = Mat::zeros(2, 2);
        h3[(0, 0)] = S::of(2.0) * self.alpha;
        vec![Mat::zeros(2, 2), Mat::zeros(2, 2), h3]
    }
}

/// One-parameter analogue `μ(θ) = (θ, α θ²)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvedMean1d<S> {
    pub alpha: S,
}

impl<S: Scalar> MeanMap<S> for CurvedMean1d<S> {
    fn name(&self) -> String {
        "curved-gaussian-1d".into()
    }

    fn param_dim(&self) -> usize {
        1
    }

    fn sample_dim(&self) -> usize {
        2
    }

    fn mean(&self, theta: &[S]) -> Vec<S> {
        vec![theta[0], self.alpha * theta[0] * theta[0]]
    }

    fn jacobian(&self, theta: &[S]) -> Mat<S> {
        Mat::column(&[S::one(), S::of(2.0) * self.alpha * theta[0]])
    }

    fn hessian(&self, _theta: &[S]) -> Vec<Mat<S>> {
        vec![Mat::zeros(1, 1), Mat::diag(&[S::of(2.0) * self.alpha])]
    }
}

/// `μ(θ) = A θ` for a fixed `n × d` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearMean<S: Scalar> {
    pub design: Mat<S>,
}

impl<S: Scalar> MeanMap<S> for LinearMean<S> {
    fn name(&self) -> String {
        "linear-gaussian".into()
    }

    fn param_dim(&self) -> usize {
        self.design.cols()
    }

    fn sample_dim(&self) -> usize {
        self.design.rows()
    }

    fn mean(&self, theta: &[S]) -> Vec<S> {
        self.design.matvec(theta)
    }

    fn jacobian(&self, _theta: &[S]) -> Mat<S> {
        self.design.clone()
    }

    fn hessian(&self, _theta: &[S]) -> Vec<Mat<S>> {
        let d = self.design.cols();
        vec![Mat::zeros(d, d); self.design.rows()]
    }
}

/// `μ'(θ') = μ(A⁻¹ θ')`: the same family in linearly transformed coordinates.
#[derive(Clone, Debug)]
pub struct Reparameterized<S: Scalar, M> {
    inner: M,
    forward: Mat<S>,
    inverse: Mat<S>,
}

impl<S: Scalar, M: MeanMap<S>> Reparameterized<S, M> {
    pub fn new(inner: M, forward: Mat<S>) -> Result<Self> {
        if !forward.is_square() || forward.rows() != inner.param_dim() {
            return Err(CrbError::DimensionMismatch {
                expected: inner.param_dim(),
                got: forward.rows(),
                context: "reparameterization matrix",
            });
        }
        let inverse = inverse(&forward)?;
        Ok(Self { inner, forward, inverse })
    }

    pub fn forward(&self) -> &Mat<S> {
        &self.forward
    }
}

impl<S: Scalar, M: MeanMap<S>> MeanMap<S> for Reparameterized<S, M> {
    fn name(&self) -> String {
        format!("{} (linearly reparameterized)", self.inner.name())
    }

    fn param_dim(&self) -> usize {
        self.inner.param_dim()
    }

    fn sample_dim(&self) -> usize {
        self.inner.sample_dim()
    }

    fn mean(&self, theta: &[S]) -> Vec<S> {
        self.inner.mean(&self.inverse.matvec(theta))
    }

    fn jacobian(&self, theta: &[S]) -> Mat<S> {
        &self.inner.jacobian(&self.inverse.matvec(theta)) * &self.inverse
    }

    fn hessian(&self, theta: &[S]) -> Vec<Mat<S>> {
        let inv_t = self.inverse.transpose();
        self.inner
            .hessian(&self.inverse.matvec(theta))
            .iter()
            .map(|h| &(&inv_t * h) * &self.inverse)
            .collect()
    }
}

/// `X ~ N(μ(θ), σ² I_n)`.
#[derive(Clone, Debug)]
pub struct GaussianMeanModel<S: Scalar, M> {
    sigma: S,
    mean_map: M,
}

impl<S: Scalar, M: MeanMap<S>> GaussianMeanModel<S, M> {
    pub fn new(sigma: S, mean_map: M) -> Result<Self> {
        if !(sigma > S::zero()) || !sigma.is_finite() {
            return Err(CrbError::InvalidParameter(format!("sigma must be positive, got {sigma}")));
        }
        Ok(Self { sigma, mean_map })
    }

    pub fn sigma(&self) -> S {
        self.sigma
    }

    pub fn mean_map(&self) -> &M {
        &self.mean_map
    }

    /// `T(x) = θ₀ + L (x − μ(θ₀))`, with covariance `σ² L Lᵀ`.
    pub fn residual_estimator(
        &self,
        label: impl Into<String>,
        theta: &ParameterPoint<S>,
        linear: Mat<S>,
    ) -> Result<EstimatorSpec<S>> {
        if linear.cols() != self.mean_map.sample_dim() {
            return Err(CrbError::DimensionMismatch {
                expected: self.mean_map.sample_dim(),
                got: linear.cols(),
                context: "residual estimator columns",
            });
        }
        let mu = self.mean_map.mean(theta.as_slice());
        let l_mu = linear.matvec(&mu);
        let offset = theta.as_slice().iter().zip(l_mu).map(|(&t, lm)| t - lm).collect();
        let cov = (&linear * &linear.transpose()).scale(self.sigma * self.sigma);
        Ok(EstimatorSpec::affine(label, theta.clone(), offset, linear)?.with_covariance(cov))
    }

    /// Reparameterizes by `θ' = A θ`.
    pub fn reparameterize(self, forward: Mat<S>) -> Result<GaussianMeanModel<S, Reparameterized<S, M>>> {
        let sigma = self.sigma;
        GaussianMeanModel::new(sigma, Reparameterized::new(self.mean_map, forward)?)
    }

    fn residual(&self, x: &[S], theta: &[S]) -> Vec<S> {
        let mu = self.mean_map.mean(theta);
        x.iter().zip(mu).map(|(&xi, m)| xi - m).collect()
    }
}

impl<S: Scalar, M: MeanMap<S>> StatModel<S> for GaussianMeanModel<S, M> {
    fn name(&self) -> String {
        self.mean_map.name()
    }

    fn param_dim(&self) -> usize {
        self.mean_map.param_dim()
    }

    fn sample_dim(&self) -> usize {
        self.mean_map.sample_dim()
    }

    fn log_density(&self, x: &[S], theta: &[S]) -> S {
        let r = self.residual(x, theta);
        let s2 = self.sigma * self.sigma;
        let n = S::of(r.len() as f64);
        -S::of(0.5) * n * (S::of(2.0) * S::PI() * s2).ln() - dot(&r, &r) / (S::of(2.0) * s2)
    }

    fn score(&self, x: &[S], theta: &[S]) -> Vec<S> {
        let r = self.residual(x, theta);
        let s2 = self.sigma * self.sigma;
        self.mean_map.jacobian(theta).tr_matvec(&r).into_iter().map(|y| y / s2).collect()
    }

    fn score_jacobian(&self, x: &[S], theta: &[S]) -> Option<Mat<S>> {
        let r = self.residual(x, theta);
        let s2 = self.sigma * self.sigma;
        let jac = self.mean_map.jacobian(theta);
        let hess = self.mean_map.hessian(theta);
        let d = jac.cols();
        let gram = &jac.transpose() * &jac;
        Some(Mat::from_fn(d, d, |i, j| {
            let curv: S = hess.iter().zip(&r).map(|(h, &rk)| h[(i, j)] * rk).sum();
            (curv - gram[(i, j)]) / s2
        }))
    }

    fn draw(&self, theta: &[S], rng: &mut ChaCha8Rng, out: &mut [S]) {
        let mu = self.mean_map.mean(theta);
        for (o, m) in out.iter_mut().zip(mu) {
            *o = m + self.sigma * S::standard_normal(rng);
        }
    }

    fn gaussian_law(&self, theta: &[S]) -> Option<GaussianLaw<S>> {
        Some(GaussianLaw {
            mean: self.mean_map.mean(theta),
            std: vec![self.sigma; self.sample_dim()],
        })
    }

    /// Gaussian moment identities for the residual `r = x − μ ~ N(0, σ² I)`:
    /// odd moments vanish, `E[(r·p)(r·q)] = σ² p·q`, and the fourth moment
    /// follows Isserlis' theorem. Requires an affine estimator when one is given.
    fn closed_form_moments(
        &self,
        theta: &[S],
        estimator: Option<&EstimatorSpec<S>>,
    ) -> Option<RawMoments<S>> {
        let affine = match estimator {
            Some(e) => Some(e.affine_form()?),
            None => None,
        };
        let s2 = self.sigma * self.sigma;
        let jac = self.mean_map.jacobian(theta);
        let hess = self.mean_map.hessian(theta);
        let d = jac.cols();
        let n = jac.rows();
        let pairs = PairIndex::new(d);
        let m = pairs.len();
        let a: Vec<Vec<S>> = (0..d).map(|i| jac.col(i)).collect();
        let curv: Vec<Vec<S>> = pairs
            .iter()
            .map(|(i, j)| hess.iter().map(|h| h[(i, j)]).collect())
            .collect();
        let aa = Mat::from_fn(d, d, |i, j| dot(&a[i], &a[j]));
        let quarter = S::of(0.25);
        let half = S::of(0.5);
        let sixteenth = S::of(1.0 / 16.0);

        let yy = aa.scale(S::one() / s2);
        let hy = Mat::from_fn(m, d, |al, k| dot(&curv[al], &a[k]) * half / s2);
        // h_α = Q_α + L_α + c_α with E[Q_α] = a_i·a_j/(4σ²), c_α = −a_i·a_j/(2σ²)
        let mean_q: Vec<S> = pairs.iter().map(|(i, j)| aa[(i, j)] * quarter / s2).collect();
        let cst: Vec<S> = pairs.iter().map(|(i, j)| -aa[(i, j)] * half / s2).collect();
        let hh = Mat::from_fn(m, m, |al, be| {
            let (i, j) = pairs.pair(al);
            let (k, l) = pairs.pair(be);
            let qq = (aa[(i, j)] * aa[(k, l)] + aa[(i, k)] * aa[(j, l)] + aa[(i, l)] * aa[(j, k)])
                * sixteenth
                / (s2 * s2);
            let ll = dot(&curv[al], &curv[be]) * quarter / s2;
            qq + mean_q[al] * cst[be] + cst[al] * mean_q[be] + ll + cst[al] * cst[be]
        });

        let errors = affine.map(|aff| {
            let mu = self.mean_map.mean(theta);
            let l_mu = aff.linear.matvec(&mu);
            let bias: Vec<S> = (0..d).map(|p| aff.offset[p] + l_mu[p] - theta[p]).collect();
            let rows: Vec<Vec<S>> = (0..d).map(|p| aff.linear.row(p).to_vec()).collect();
            debug_assert!(rows.iter().all(|r| r.len() == n));
            ErrorMoments {
                z_mean: bias.clone(),
                zy: Mat::from_fn(d, d, |p, j| dot(&rows[p], &a[j])),
                zh: Mat::from_fn(d, m, |p, al| {
                    dot(&rows[p], &curv[al]) * half + bias[p] * (mean_q[al] + cst[al])
                }),
                zz: Mat::from_fn(d, d, |p, q| s2 * dot(&rows[p], &rows[q]) + bias[p] * bias[q]),
            }
        });

        Some(RawMoments {
            score_mean: vec![S::zero(); d],
            yy,
            hy,
            hh,
            errors,
        })
    }
}

pub type CurvedGaussianModel<S> = GaussianMeanModel<S, CurvedMean<S>>;

/// `X ~ N((θ₁, θ₂, α θ₁²), σ² I₃)`.
pub fn builtin_curved_gaussian<S: Scalar>(sigma: S, alpha: S) -> Result<CurvedGaussianModel<S>> {
    check_alpha(alpha)?;
    GaussianMeanModel::new(sigma, CurvedMean { alpha })
}

/// `X ~ N((θ, α θ²), σ² I₂)`.
pub fn builtin_curved_gaussian_1d<S: Scalar>(
    sigma: S,
    alpha: S,
) -> Result<GaussianMeanModel<S, CurvedMean1d<S>>> {
    check_alpha(alpha)?;
    GaussianMeanModel::new(sigma, CurvedMean1d { alpha })
}

/// `X ~ N(A θ, σ² I_n)`; `A` must have full column rank.
pub fn builtin_linear_gaussian<S: Scalar>(
    sigma: S,
    design: Mat<S>,
) -> Result<GaussianMeanModel<S, LinearMean<S>>> {
    if design.cols() == 0 || design.rows() < design.cols() {
        return Err(CrbError::InvalidParameter("design matrix must have full column rank".into()));
    }
    crate::linalg::cholesky(&(&design.transpose() * &design))
        .map_err(|_| CrbError::InvalidParameter("design matrix must have full column rank".into()))?;
    GaussianMeanModel::new(sigma, LinearMean { design })
}

fn check_alpha<S: Scalar>(alpha: S) -> Result<()> {
    if alpha == S::zero() || !alpha.is_finite() {
        return Err(CrbError::InvalidParameter(format!("alpha must be finite and nonzero, got {alpha}")));
    }
    Ok(())
}

/// `T₁ = X₁`, `T₂ = X₂ + γ (X₃ − μ₃(θ))`, with covariance `diag(σ², σ²(1+γ²))`.
pub fn builtin_gamma_estimator<S: Scalar>(
    gamma: S,
    model: &CurvedGaussianModel<S>,
    theta: &ParameterPoint<S>,
) -> Result<EstimatorSpec<S>> {
    let linear = Mat::from_rows(&[
        vec![S::one(), S::zero(), S::zero()],
        vec![S::zero(), S::one(), gamma],
    ])?;
    model.residual_estimator(format!("gamma={gamma}"), theta, linear)
}

/// `T = X₁ + γ (X₂ − μ₂(θ))` for the one-parameter curved model.
pub fn builtin_gamma_estimator_1d<S: Scalar>(
    gamma: S,
    model: &GaussianMeanModel<S, CurvedMean1d<S>>,
    theta: &ParameterPoint<S>,
) -> Result<EstimatorSpec<S>> {
    let linear = Mat::from_rows(&[vec![S::one(), gamma]])?;
    model.residual_estimator(format!("gamma={gamma}"), theta, linear)
}

/// Least-squares estimator `T = (AᵀA)⁻¹Aᵀ X` for the linear-mean model (efficient).
pub fn least_squares_estimator<S: Scalar>(
    model: &GaussianMeanModel<S, LinearMean<S>>,
    theta: &ParameterPoint<S>,
) -> Result<EstimatorSpec<S>> {
    let a = &model.mean_map().design;
    let at = a.transpose();
    let pinv = &crate::linalg::inverse_spd(&(&at * a))? * &at;
    model.residual_estimator("least-squares", theta, pinv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;

    fn curved(sigma: f64, alpha: f64) -> CurvedGaussianModel<f64> {
        builtin_curved_gaussian(sigma, alpha).unwrap()
    }

    #[test]
    fn score_at_origin() {
        let m = curved(1.0, 1.0);
        assert_eq!(m.score(&[1.0, 0.0, 0.0], &[0.0, 0.0]), vec![1.0, 0.0]);
    }

    #[test]
    fn jacobian_entry_two_two_is_minus_one() {
        let m = curved(1.0, 1.0);
        for x in [[0.0, 0.0, 0.0], [1.5, -2.0, 0.7], [3.0, 1.0, -4.0]] {
            let j = m.score_jacobian(&x, &[0.0, 0.0]).unwrap();
            assert_eq!(j[(1, 1)], -1.0);
        }
    }

    #[test]
    fn zero_alpha_and_bad_sigma_rejected() {
        assert!(builtin_curved_gaussian(1.0, 0.0).is_err());
        assert!(builtin_curved_gaussian(0.0, 1.0).is_err());
        assert!(builtin_curved_gaussian(-1.0, 1.0).is_err());
        assert!(builtin_curved_gaussian(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn gamma_estimator_covariances() {
        let theta = ParameterPoint::new(vec![0.0, 0.0]).unwrap();
        let cases = [
            (1.0, 0.0, [[1.0, 0.0], [0.0, 1.0]]),
            (1.0, 1.0, [[1.0, 0.0], [0.0, 2.0]]),
            (2.0, 1.0, [[4.0, 0.0], [0.0, 8.0]]),
        ];
        for (sigma, gamma, expected) in cases {
            let m = curved(sigma, 1.0);
            let est = builtin_gamma_estimator(gamma, &m, &theta).unwrap();
            let cov = est.closed_form_covariance().unwrap();
            let expected = Mat::from_rows(&expected.map(|r| r.to_vec())).unwrap();
            assert!((cov - &expected).max_abs() < 1e-15, "{cov:?}");
        }
    }

    #[test]
    fn gamma_estimator_matches_formula() {
        let m = curved(1.0, 2.0);
        let theta = ParameterPoint::new(vec![0.5, -1.0]).unwrap();
        let est = builtin_gamma_estimator(0.3, &m, &theta).unwrap();
        let x = [0.2, 0.4, 1.7];
        let mu3 = 2.0 * 0.25;
        let t = est.eval(&x);
        assert!((t[0] - 0.2).abs() < 1e-15);
        assert!((t[1] - (0.4 + 0.3 * (1.7 - mu3))).abs() < 1e-15);
    }

    #[test]
    fn fd_jacobian_linear_mean_is_minus_one() {
        let m = builtin_linear_gaussian(1.0f64, Mat::identity(1)).unwrap();
        for x in [-2.0, 0.0, 3.5] {
            let j = eval_score_jacobian_fd(&m, &[x], &[0.4], None).unwrap();
            assert!((j[(0, 0)] + 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn fd_jacobian_curved_entry() {
        let m = curved(1.0, 1.0);
        let j = eval_score_jacobian_fd(&m, &[0.0, 0.0, 1.0], &[0.0, 0.0], None).unwrap();
        assert!((j[(0, 0)] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fd_rejects_zero_step() {
        let m = curved(1.0, 1.0);
        assert!(eval_score_jacobian_fd(&m, &[0.0; 3], &[0.0, 0.0], Some(0.0)).is_err());
        assert!(eval_score_jacobian_fd(&m, &[0.0; 3], &[0.0, 0.0], Some(-1e-3)).is_err());
    }

    #[test]
    fn parameter_point_validation() {
        assert!(ParameterPoint::<f64>::new(vec![]).is_err());
        assert!(ParameterPoint::new(vec![1.0, f64::INFINITY]).is_err());
        assert_eq!(ParameterPoint::new(vec![1.0, 2.0]).unwrap().dim(), 2);
    }

    #[test]
    fn sampler_is_deterministic_and_chunked() {
        let m = curved(1.0, 1.0);
        let a = sample(&m, &[0.1, 0.2], 10_000, 99);
        let b = sample(&m, &[0.1, 0.2], 10_000, 99);
        assert_eq!(a, b);
        assert_eq!((a.rows(), a.cols()), (10_000, 3));
        // a shorter request is a prefix of the longer one
        let c = sample(&m, &[0.1, 0.2], 5_000, 99);
        assert_eq!(c.row(4_999), a.row(4_999));
    }

    #[test]
    fn log_density_matches_gaussian() {
        let m = curved(2.0, 1.0);
        let x = [0.5, -0.5, 1.0];
        let theta = [0.0, 0.0];
        let expected = -1.5 * (2.0 * std::f64::consts::PI * 4.0).ln() - (0.25 + 0.25 + 1.0) / 8.0;
        assert!((m.log_density(&x, &theta) - expected).abs() < 1e-14);
    }

    #[test]
    fn reparameterized_mean_composes() {
        let a = Mat::from_rows(&[vec![2.0, 1.0], vec![0.5, 3.0]]).unwrap();
        let base = curved(1.0, 0.7);
        let rep = base.clone().reparameterize(a.clone()).unwrap();
        let theta = [0.3, -0.4];
        let theta_p = a.matvec(&theta);
        let mu = base.mean_map().mean(&theta);
        let mu_p = rep.mean_map().mean(&theta_p);
        for (x, y) in mu.iter().zip(&mu_p) {
            assert!((x - y).abs() < 1e-14);
        }
    }
}

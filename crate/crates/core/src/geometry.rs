//! Extrinsic geometry of the square-root embedding at one parameter point.
//!
//! The embedding `s(θ) = √f(·; θ)` is never materialized. With `A_i = ½Y_i`,
//! `∂_i∂_j s = s·h_ij` where `h_ij = ¼Y_iY_j + ½∂_iY_j`, so all pairings are
//! expectations of products of `Y`, `h`, and the centered error `Z₀ = T − θ`:
//!
//! * `G = ⟨η_i, η_j⟩ = J/4`
//! * `b_{(ij),m} = ⟨∂_i∂_j s, η_m⟩ = ½E[h_ij Y_m]`
//! * `Γ^ℓ_{ij} = Σ_m b_{(ij),m} (G⁻¹)_{mℓ}`
//! * `⟨Π_α, Π_β⟩ = E[h_α h_β] − b_αᵀ G⁻¹ b_β`
//! * `⟨Z̃^{(p)}, η_j⟩ = ½E[Z₀^{(p)} Y_j]`
//! * `⟨Z̃^{(p)}, Π_α⟩ = E[Z₀^{(p)} h_α] − Σ_ℓ Γ^ℓ_α ⟨Z̃^{(p)}, η_ℓ⟩`

use serde::{Deserialize, Serialize};

use crate::error::{CrbError, Result};
use crate::linalg::{inverse_spd, Mat, SymEigen};
use crate::model::{score_jacobian_or_fd, EstimatorSpec, ParameterPoint, StatModel};
use crate::pairing::{expect_vector, Backend, PairingConfig, VectorEstimate};
use crate::scalar::Scalar;

/// Fisher information with `λ_min ≤ COND_LIMIT⁻¹ · λ_max` is rejected.
pub const COND_LIMIT: f64 = 1e10;
/// `‖G_N‖ < FLAT_RATIO · ‖G‖²` marks the point as flat.
pub const FLAT_RATIO: f64 = 1e-12;
/// Monte Carlo checks use this many standard errors.
pub const MC_SE_MULTIPLIER: f64 = 5.0;

/// Unique symmetric index pairs `(i, j)`, `i ≤ j`, in lexicographic order.
///
/// `weight(α)` is 1 on the diagonal and 2 off it, so that
/// `Σ_{i,j} x_{ij} = Σ_α w_α x_α` for symmetric `x`. Normal Grams and error
/// pairings are stored without multiplicity; the weights live in the
/// monomial vector `s(v)` used by the bounds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairIndex {
    d: usize,
    pairs: Vec<(usize, usize)>,
}

impl PairIndex {
    pub fn new(d: usize) -> Self {
        let pairs = (0..d).flat_map(|i| (i..d).map(move |j| (i, j))).collect();
        Self { d, pairs }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pair(&self, alpha: usize) -> (usize, usize) {
        self.pairs[alpha]
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pairs.iter().copied()
    }

    /// Position of `(i, j)` or `(j, i)`.
    pub fn index_of(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        // rows before i hold d + (d-1) + ... + (d-i+1) entries
        i * self.d - i * i.saturating_sub(1) / 2 + (j - i)
    }

    pub fn weight(&self, alpha: usize) -> usize {
        let (i, j) = self.pairs[alpha];
        if i == j {
            1
        } else {
            2
        }
    }
}

/// Pairings involving the estimator error.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorMoments<S: Scalar> {
    /// `E[Z₀]`.
    pub z_mean: Vec<S>,
    /// `E[Z₀^{(p)} Y_j]`.
    pub zy: Mat<S>,
    /// `E[Z₀^{(p)} h_α]`.
    pub zh: Mat<S>,
    /// `E[Z₀^{(p)} Z₀^{(q)}]`.
    pub zz: Mat<S>,
}

/// Raw expectations from which every geometric object is derived.
#[derive(Clone, Debug, PartialEq)]
pub struct RawMoments<S: Scalar> {
    /// `E[Y]`, zero for a regular model.
    pub score_mean: Vec<S>,
    /// `E[Y_k Y_l]`.
    pub yy: Mat<S>,
    /// `E[h_α Y_m]`, `m × d`.
    pub hy: Mat<S>,
    /// `E[h_α h_β]`.
    pub hh: Mat<S>,
    pub errors: Option<ErrorMoments<S>>,
}

impl<S: Scalar> RawMoments<S> {
    fn width(d: usize, with_errors: bool) -> usize {
        let m = d * (d + 1) / 2;
        let base = d + d * d + m * d + m * m;
        if with_errors {
            base + d + d * d + d * m + d * d
        } else {
            base
        }
    }

    fn from_flat(d: usize, with_errors: bool, flat: &[S]) -> Self {
        let m = d * (d + 1) / 2;
        let mut pos = 0;
        let mut take = |rows: usize, cols: usize| {
            let out = Mat::from_fn(rows, cols, |i, j| flat[pos + i * cols + j]);
            pos += rows * cols;
            out
        };
        let score_mean = take(1, d).row(0).to_vec();
        let yy = take(d, d);
        let hy = take(m, d);
        let hh = take(m, m);
        let errors = with_errors.then(|| {
            let z_mean = take(1, d).row(0).to_vec();
            ErrorMoments {
                z_mean,
                zy: take(d, d),
                zh: take(d, m),
                zz: take(d, d),
            }
        });
        Self {
            score_mean,
            yy,
            hy,
            hh,
            errors,
        }
    }
}

/// Fills the flat integrand vector at one point `x`.
fn integrand<S: Scalar, M: StatModel<S> + ?Sized>(
    model: &M,
    estimator: Option<&EstimatorSpec<S>>,
    theta: &[S],
    pairs: &PairIndex,
    x: &[S],
    out: &mut [S],
) -> Result<()> {
    let d = theta.len();
    let y = model.score(x, theta);
    let jac = score_jacobian_or_fd(model, x, theta)?.symmetrize();
    let h: Vec<S> = pairs
        .iter()
        .map(|(i, j)| S::of(0.25) * y[i] * y[j] + S::of(0.5) * jac[(i, j)])
        .collect();
    let mut pos = 0;
    let mut push = |v: S| {
        out[pos] = v;
        pos += 1;
    };
    y.iter().for_each(|&v| push(v));
    for k in 0..d {
        for l in 0..d {
            push(y[k] * y[l]);
        }
    }
    for &ha in &h {
        for &ym in &y {
            push(ha * ym);
        }
    }
    for &ha in &h {
        for &hb in &h {
            push(ha * hb);
        }
    }
    if let Some(est) = estimator {
        let z = est.centered_error(x, theta);
        z.iter().for_each(|&v| push(v));
        for &zp in &z {
            for &yj in &y {
                push(zp * yj);
            }
        }
        for &zp in &z {
            for &ha in &h {
                push(zp * ha);
            }
        }
        for &zp in &z {
            for &zq in &z {
                push(zp * zq);
            }
        }
    }
    Ok(())
}

/// Raw moments plus, for Monte Carlo, the per-batch data needed for jackknife errors.
pub struct MomentEstimate<S: Scalar> {
    pub moments: RawMoments<S>,
    pub(crate) sampled: Option<VectorEstimate<S>>,
    pub(crate) with_errors: bool,
    pub jacobian_source: JacobianSource,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianSource {
    Analytic,
    FiniteDifference,
}

fn check_dims<S: Scalar, M: StatModel<S> + ?Sized>(
    model: &M,
    theta: &ParameterPoint<S>,
    estimator: Option<&EstimatorSpec<S>>,
) -> Result<()> {
    if theta.dim() != model.param_dim() {
        return Err(CrbError::DimensionMismatch {
            expected: model.param_dim(),
            got: theta.dim(),
            context: "parameter point",
        });
    }
    if let Some(e) = estimator {
        if e.dim() != theta.dim() {
            return Err(CrbError::DimensionMismatch {
                expected: theta.dim(),
                got: e.dim(),
                context: "estimator output",
            });
        }
    }
    Ok(())
}

/// Evaluates every raw pairing on one grid or draw set.
pub fn raw_moments<S: Scalar, M: StatModel<S> + ?Sized>(
    model: &M,
    estimator: Option<&EstimatorSpec<S>>,
    theta: &ParameterPoint<S>,
    cfg: &PairingConfig,
) -> Result<MomentEstimate<S>> {
    check_dims(model, theta, estimator)?;
    let th = theta.as_slice();
    let d = th.len();
    let with_errors = estimator.is_some();
    let probe = vec![S::zero(); model.sample_dim()];
    let jacobian_source = if model.score_jacobian(&probe, th).is_some() {
        JacobianSource::Analytic
    } else {
        JacobianSource::FiniteDifference
    };
    if let Backend::ClosedForm = cfg.backend {
        let moments = model.closed_form_moments(th, estimator).ok_or_else(|| {
            CrbError::ClosedFormUnavailable(format!(
                "model '{}'{}",
                model.name(),
                estimator.map_or(String::new(), |e| format!(" with estimator '{}'", e.label()))
            ))
        })?;
        return Ok(MomentEstimate {
            moments,
            sampled: None,
            with_errors,
            jacobian_source,
        });
    }
    let pairs = PairIndex::new(d);
    let width = RawMoments::<S>::width(d, with_errors);
    let failure = std::sync::Mutex::new(None);
    let est = expect_vector(
        model,
        th,
        width,
        |x, out| {
            if let Err(e) = integrand(model, estimator, th, &pairs, x, out) {
                out.iter_mut().for_each(|o| *o = S::nan());
                failure.lock().expect("poisoned").get_or_insert(e);
            }
        },
        cfg,
    );
    if let Some(e) = failure.into_inner().expect("poisoned") {
        return Err(e);
    }
    let est = est?;
    Ok(MomentEstimate {
        moments: RawMoments::from_flat(d, with_errors, &est.mean),
        sampled: est.std_error.is_some().then_some(est),
        with_errors,
        jacobian_source,
    })
}

/// Everything derived from raw moments, before packaging into a report.
#[derive(Clone, Debug)]
struct Derived<S: Scalar> {
    fisher: Mat<S>,
    tangent_gram: Mat<S>,
    condition: S,
    christoffel: Vec<Vec<Vec<S>>>,
    tangent_pairings: Mat<S>,
    normal_gram: Mat<S>,
    error_pairings: Option<Mat<S>>,
    unbias: Option<Mat<S>>,
}

fn fisher_checked<S: Scalar>(yy: &Mat<S>) -> Result<(Mat<S>, S)> {
    let fisher = yy.symmetrize();
    if !fisher.all_finite() {
        return Err(CrbError::NonFinite("Fisher information".into()));
    }
    let eig = SymEigen::new(&fisher);
    let (lo, hi) = (eig.min(), eig.max());
    if !(hi > S::zero()) || lo <= hi / S::of(COND_LIMIT) {
        let condition = if lo > S::zero() { (hi / lo).to_f64_lossy() } else { f64::INFINITY };
        return Err(CrbError::SingularFisher { condition });
    }
    Ok((fisher, hi / lo))
}

fn derive<S: Scalar>(raw: &RawMoments<S>) -> Result<Derived<S>> {
    let (fisher, condition) = fisher_checked(&raw.yy)?;
    let d = fisher.rows();
    let pairs = PairIndex::new(d);
    let m = pairs.len();
    let tangent_gram = fisher.scale(S::of(0.25));
    let g_inv = inverse_spd(&tangent_gram)?;
    let b = raw.hy.scale(S::of(0.5));
    // Γ^ℓ_α = Σ_m b_{α,m} (G⁻¹)_{mℓ}
    let gamma_pairs = &b * &g_inv;
    let christoffel = (0..d)
        .map(|l| {
            (0..d)
                .map(|i| (0..d).map(|j| gamma_pairs[(pairs.index_of(i, j), l)]).collect())
                .collect()
        })
        .collect();
    let tangential = &(&b * &g_inv) * &b.transpose();
    let normal_gram = (&raw.hh - &tangential).symmetrize();
    let (error_pairings, unbias) = match &raw.errors {
        Some(e) => {
            let unbias = e.zy.scale(S::of(0.5));
            let c = Mat::from_fn(d, m, |p, al| {
                let proj: S = (0..d).map(|l| gamma_pairs[(al, l)] * unbias[(p, l)]).sum();
                e.zh[(p, al)] - proj
            });
            (Some(c), Some(unbias))
        }
        None => (None, None),
    };
    Ok(Derived {
        fisher,
        tangent_gram,
        condition,
        christoffel,
        tangent_pairings: b,
        normal_gram,
        error_pairings,
        unbias,
    })
}

/// Monte Carlo standard errors of report entries (grouped jackknife).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct GeometryErrors<S: Scalar> {
    #[serde(rename = "J")]
    pub fisher: Mat<S>,
    #[serde(rename = "G")]
    pub tangent_gram: Mat<S>,
    #[serde(rename = "Gamma")]
    pub christoffel: Vec<Vec<Vec<S>>>,
    pub b: Mat<S>,
    #[serde(rename = "G_N")]
    pub normal_gram: Mat<S>,
    #[serde(rename = "C")]
    pub error_pairings: Mat<S>,
    pub unbias: Mat<S>,
    /// `E[Z₀]` and its standard error.
    pub bias: Vec<S>,
    pub bias_se: Vec<S>,
}

/// Provenance and diagnostics attached to a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct GeometryMeta<S: Scalar> {
    pub model: String,
    pub estimator: String,
    pub backend: String,
    pub jacobian: JacobianSource,
    pub condition_number: S,
    /// `‖G_N‖` negligible against `‖G‖²`: curvature corrections are zero.
    pub flat: bool,
    pub warnings: Vec<String>,
    pub standard_errors: Option<GeometryErrors<S>>,
}

/// Geometric objects at one parameter point. Pairs are indexed by [`PairIndex`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct GeometryReport<S: Scalar> {
    pub theta: ParameterPoint<S>,
    /// Fisher information `J`.
    #[serde(rename = "J")]
    pub fisher: Mat<S>,
    /// Tangent Gram `G = J/4`.
    #[serde(rename = "G")]
    pub tangent_gram: Mat<S>,
    /// `christoffel[ℓ][i][j] = Γ^ℓ_{ij}`.
    #[serde(rename = "Gamma")]
    pub christoffel: Vec<Vec<Vec<S>>>,
    /// `m × d` tangent pairings `⟨∂_i∂_j s, η_m⟩`.
    #[serde(rename = "b")]
    pub tangent_pairings: Mat<S>,
    /// `m × m` normal Gram `⟨Π_α, Π_β⟩`.
    #[serde(rename = "G_N")]
    pub normal_gram: Mat<S>,
    /// `d × m` error pairings `⟨Z̃^{(p)}, Π_α⟩`.
    #[serde(rename = "C")]
    pub error_pairings: Mat<S>,
    /// `d × d` pairings `⟨Z̃^{(p)}, η_j⟩`, `½I` for an unbiased estimator.
    pub unbias: Mat<S>,
    pub meta: GeometryMeta<S>,
}

impl<S: Scalar> GeometryReport<S> {
    pub fn dim(&self) -> usize {
        self.fisher.rows()
    }

    pub fn pairs(&self) -> PairIndex {
        PairIndex::new(self.dim())
    }

    /// A report assembled directly from `G`, `G_N`, and `C`, with zero
    /// Christoffel symbols and ideal unbiasedness pairings. Used for
    /// constructed examples that do not come from a sampling model.
    pub fn synthetic(tangent_gram: Mat<S>, normal_gram: Mat<S>, error_pairings: Mat<S>) -> Result<Self> {
        let d = tangent_gram.rows();
        let m = d * (d + 1) / 2;
        if !tangent_gram.is_square() || normal_gram.rows() != m || normal_gram.cols() != m {
            return Err(CrbError::DimensionMismatch {
                expected: m,
                got: normal_gram.rows(),
                context: "synthetic normal Gram",
            });
        }
        if error_pairings.rows() != d || error_pairings.cols() != m {
            return Err(CrbError::DimensionMismatch {
                expected: m,
                got: error_pairings.cols(),
                context: "synthetic error pairings",
            });
        }
        let fisher = tangent_gram.scale(S::of(4.0));
        let (_, condition) = fisher_checked(&fisher)?;
        let flat = is_flat(&normal_gram, &tangent_gram);
        Ok(Self {
            theta: ParameterPoint::new(vec![S::zero(); d])?,
            fisher,
            tangent_gram,
            christoffel: vec![vec![vec![S::zero(); d]; d]; d],
            tangent_pairings: Mat::zeros(m, d),
            normal_gram,
            error_pairings,
            unbias: Mat::identity(d).scale(S::of(0.5)),
            meta: GeometryMeta {
                model: "synthetic".into(),
                estimator: "synthetic".into(),
                backend: "synthetic".into(),
                jacobian: JacobianSource::Analytic,
                condition_number: condition,
                flat,
                warnings: Vec::new(),
                standard_errors: None,
            },
        })
    }
}

fn is_flat<S: Scalar>(normal_gram: &Mat<S>, tangent_gram: &Mat<S>) -> bool {
    let g = tangent_gram.frobenius_norm();
    normal_gram.frobenius_norm() < S::of(FLAT_RATIO) * g * g
}

/// `J_ij = E[Y_i Y_j]`; fails when `J` is singular or has condition number above 1e10.
pub fn fisher_info<S: Scalar, M: StatModel<S> + ?Sized>(
    model: &M,
    theta: &ParameterPoint<S>,
    cfg: &PairingConfig,
) -> Result<Mat<S>> {
    let raw = raw_moments(model, None, theta, cfg)?;
    Ok(fisher_checked(&raw.moments.yy)?.0)
}

/// `christoffel[ℓ][i][j] = Γ^ℓ_{ij}`.
pub fn christoffel<S: Scalar, M: StatModel<S> + ?Sized>(
    model: &M,
    theta: &ParameterPoint<S>,
    cfg: &PairingConfig,
) -> Result<Vec<Vec<Vec<S>>>> {
    let raw = raw_moments(model, None, theta, cfg)?;
    Ok(derive(&raw.moments)?.christoffel)
}

/// `m × m` normal Gram `⟨Π_α, Π_β⟩` over [`PairIndex`] order.
pub fn normal_gram<S: Scalar, M: StatModel<S> + ?Sized>(
    model: &M,
    theta: &ParameterPoint<S>,
    cfg: &PairingConfig,
) -> Result<Mat<S>> {
    let raw = raw_moments(model, None, theta, cfg)?;
    Ok(derive(&raw.moments)?.normal_gram)
}

/// `(C, unbias)`: `C_{p,α} = ⟨Z̃^{(p)}, Π_α⟩`, `unbias_{pj} = ⟨Z̃^{(p)}, η_j⟩`.
pub fn error_pairings<S: Scalar, M: StatModel<S> + ?Sized>(
    model: &M,
    estimator: &EstimatorSpec<S>,
    theta: &ParameterPoint<S>,
    cfg: &PairingConfig,
) -> Result<(Mat<S>, Mat<S>)> {
    let raw = raw_moments(model, Some(estimator), theta, cfg)?;
    let derived = derive(&raw.moments)?;
    Ok((
        derived.error_pairings.expect("estimator given"),
        derived.unbias.expect("estimator given"),
    ))
}

fn flatten_derived<S: Scalar>(d: &Derived<S>, bias: &[S]) -> Vec<S> {
    let mut out = Vec::new();
    out.extend_from_slice(d.fisher.as_slice());
    out.extend_from_slice(d.tangent_gram.as_slice());
    out.extend(d.christoffel.iter().flatten().flatten().copied());
    out.extend_from_slice(d.tangent_pairings.as_slice());
    out.extend_from_slice(d.normal_gram.as_slice());
    if let (Some(c), Some(u)) = (&d.error_pairings, &d.unbias) {
        out.extend_from_slice(c.as_slice());
        out.extend_from_slice(u.as_slice());
    }
    out.extend_from_slice(bias);
    out
}

fn unflatten_errors<S: Scalar>(d: usize, flat: &[S]) -> GeometryErrors<S> {
    let m = d * (d + 1) / 2;
    let mut pos = 0;
    let mut take = |rows: usize, cols: usize| {
        let out = Mat::from_fn(rows, cols, |i, j| flat[pos + i * cols + j]);
        pos += rows * cols;
        out
    };
    let fisher = take(d, d);
    let tangent_gram = take(d, d);
    let gamma_flat = take(d * d, d);
    let christoffel = (0..d)
        .map(|l| (0..d).map(|i| gamma_flat.row(l * d + i).to_vec()).collect())
        .collect();
    let b = take(m, d);
    let normal_gram = take(m, m);
    let error_pairings = take(d, m);
    let unbias = take(d, d);
    let bias = take(1, d).row(0).to_vec();
    GeometryErrors {
        fisher,
        tangent_gram,
        christoffel,
        b,
        normal_gram,
        error_pairings,
        unbias,
        bias,
        bias_se: Vec::new(),
    }
}

/// Full report at `θ`: every pairing comes from the same grid or draw set.
pub fn geometry_report<S: Scalar, M: StatModel<S> + ?Sized>(
    model: &M,
    estimator: &EstimatorSpec<S>,
    theta: &ParameterPoint<S>,
    cfg: &PairingConfig,
) -> Result<GeometryReport<S>> {
    let raw = raw_moments(model, Some(estimator), theta, cfg)?;
    let derived = derive(&raw.moments)?;
    let d = theta.dim();
    let errors = raw.moments.errors.as_ref().expect("estimator given");

    let standard_errors = match &raw.sampled {
        Some(sampled) => {
            let se = sampled.jackknife(|flat| {
                let moments = RawMoments::from_flat(d, raw.with_errors, flat);
                let bias = moments.errors.as_ref().expect("estimator given").z_mean.clone();
                Ok(flatten_derived(&derive(&moments)?, &bias))
            })?;
            se.map(|flat| {
                let mut e = unflatten_errors(d, &flat);
                // linear statistic: plain sample standard error is sharper than the jackknife
                let m = d * (d + 1) / 2;
                let z_offset = d + d * d + m * d + m * m;
                let direct = sampled.std_error.as_ref().expect("sampled");
                e.bias_se = direct[z_offset..z_offset + d].to_vec();
                e
            })
        }
        None => None,
    };

    let mut warnings = Vec::new();
    let unbias = derived.unbias.clone().expect("estimator given");
    let half_identity = Mat::identity(d).scale(S::of(0.5));
    let deviation = &unbias - &half_identity;
    let det_tol = S::tol(cfg.deterministic_tolerance(), 64.0);
    let k = S::of(MC_SE_MULTIPLIER);
    let unbias_violated = (0..d).any(|p| {
        (0..d).any(|j| {
            let tol = match &standard_errors {
                Some(se) => k * se.unbias[(p, j)] + det_tol,
                None => det_tol,
            };
            deviation[(p, j)].abs() > tol
        })
    });
    if unbias_violated {
        warnings.push(format!(
            "unbiasedness violated: pairings <Z~,eta> deviate from I/2 by up to {}",
            deviation.max_abs()
        ));
    }
    let bias_violated = errors.z_mean.iter().enumerate().any(|(p, &b)| {
        let tol = match &standard_errors {
            Some(se) => k * se.bias_se[p] + det_tol,
            None => det_tol,
        };
        b.abs() > tol
    });
    if bias_violated {
        warnings.push(format!("estimator mean deviates from theta: E[T - theta] = {:?}", errors.z_mean));
    }
    let flat = is_flat(&derived.normal_gram, &derived.tangent_gram);

    Ok(GeometryReport {
        theta: theta.clone(),
        fisher: derived.fisher,
        tangent_gram: derived.tangent_gram,
        christoffel: derived.christoffel,
        tangent_pairings: derived.tangent_pairings,
        normal_gram: derived.normal_gram,
        error_pairings: derived.error_pairings.expect("estimator given"),
        unbias,
        meta: GeometryMeta {
            model: model.name(),
            estimator: estimator.label().to_string(),
            backend: cfg.label(),
            jacobian: raw.jacobian_source,
            condition_number: derived.condition,
            flat,
            warnings,
            standard_errors,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_curved_gaussian, builtin_gamma_estimator};

    #[test]
    fn pair_index_roundtrip() {
        for d in 1..6 {
            let p = PairIndex::new(d);
            assert_eq!(p.len(), d * (d + 1) / 2);
            for (a, (i, j)) in p.iter().enumerate() {
                assert_eq!(p.index_of(i, j), a);
                assert_eq!(p.index_of(j, i), a);
                assert_eq!(p.weight(a), if i == j { 1 } else { 2 });
            }
        }
    }

    #[test]
    fn closed_form_matches_known_values() {
        let model = builtin_curved_gaussian(1.0f64, 1.0).unwrap();
        let theta = ParameterPoint::new(vec![0.0, 0.0]).unwrap();
        let est = builtin_gamma_estimator(1.0, &model, &theta).unwrap();
        let r = geometry_report(&model, &est, &theta, &PairingConfig::closed_form()).unwrap();
        let gn = &r.normal_gram;
        assert!((gn[(0, 0)] - 19.0 / 16.0).abs() < 1e-12);
        assert!((gn[(1, 1)] - 1.0 / 16.0).abs() < 1e-12);
        assert!((gn[(2, 2)] - 3.0 / 16.0).abs() < 1e-12);
        assert!((gn[(0, 2)] - 1.0 / 16.0).abs() < 1e-12);
        assert!((r.error_pairings[(1, 0)] - 1.0).abs() < 1e-12);
        assert!(r.meta.warnings.is_empty(), "{:?}", r.meta.warnings);
    }
}

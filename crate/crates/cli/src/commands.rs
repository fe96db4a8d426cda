//! One function per subcommand. Each returns the bytes to emit and, separately,
//! whether the run should exit nonzero after emitting them.

use std::fmt::Write as _;

use curvcrb::bounds::rank_one_tolerance;
use curvcrb::model::{
    builtin_curved_gaussian, builtin_curved_gaussian_1d, builtin_gamma_estimator, builtin_gamma_estimator_1d,
    builtin_linear_gaussian, least_squares_estimator,
};
use curvcrb::soscert::verify::VerificationReport;
use curvcrb::validate::CovarianceSource;
use curvcrb::{
    build_system, classical_crb, directional_bound, directional_sweep, exact_matrix_correction, full_validation,
    geometry_report, solve_sos_sdp, split_seed, sweep_csv, verify_certificate, DirectionSet, EstimatorSpec64,
    GeometryReport64, Mat64, Objective, PairingConfig, ParameterPoint64, SOSCertificate64, SeedPurpose,
    SolverStatus, StatModel, ValidationConfig,
};
use serde::Serialize;
use serde_json::Value;

use crate::config::{BackendName, Command, CovarianceName, ModelName, RunConfig, ToyName};
use crate::error::CliError;

pub const SPEC_VERSION: u64 = 1;
pub const DEFAULT_GH_ORDER: usize = 20;
pub const DEFAULT_MC_SAMPLES: usize = 100_000;
pub const DEFAULT_COUNT: usize = 1000;
pub const DEFAULT_VERIFY_SAMPLES: usize = 10_000;
/// Largest deviation `paper-example` accepts between computed and closed-form values.
pub const PAPER_EXAMPLE_TOL: f64 = 1e-8;

/// Rendered output plus the failure to report after writing it.
#[derive(Debug)]
pub struct Output {
    pub body: String,
    pub failure: Option<CliError>,
}

impl Output {
    fn ok(body: String) -> Self {
        Self { body, failure: None }
    }
}

pub fn execute(command: Command, cfg: &RunConfig) -> Result<Output, CliError> {
    match command {
        Command::Geometry => cmd_geometry(cfg),
        Command::Bound => cmd_bound(cfg),
        Command::Sweep => cmd_sweep(cfg),
        Command::Sdp => cmd_sdp(cfg),
        Command::Validate => cmd_validate(cfg),
        Command::PaperExample => cmd_paper_example(cfg),
    }
}

/// JSON object with `"spec_version"` merged into the top level.
fn to_json<T: Serialize>(doc: &T, extra: Vec<(&str, Value)>) -> Result<String, CliError> {
    let mut value = serde_json::to_value(doc).map_err(|e| CliError::Numerical(e.to_string()))?;
    let map = value.as_object_mut().expect("documents serialize as objects");
    map.insert("spec_version".into(), SPEC_VERSION.into());
    for (k, v) in extra {
        map.insert(k.into(), v);
    }
    let mut s = serde_json::to_string_pretty(&value).map_err(|e| CliError::Numerical(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn json_value<T: Serialize>(doc: &T) -> Value {
    serde_json::to_value(doc).expect("reports serialize")
}

/// A model, its estimator, and the evaluation point.
pub struct ModelSetup {
    pub model: Box<dyn StatModel<f64>>,
    pub estimator: EstimatorSpec64,
    pub theta: ParameterPoint64,
}

fn positive(name: &str, x: f64) -> Result<f64, CliError> {
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(CliError::Config(format!("--{name} must be positive and finite, got {x}")))
    }
}

fn theta_of(cfg: &RunConfig, d: usize) -> Result<ParameterPoint64, CliError> {
    let theta = cfg.theta.clone().unwrap_or_else(|| vec![0.0; d]);
    if theta.len() != d {
        return Err(CliError::Config(format!("--theta needs {d} values, got {}", theta.len())));
    }
    Ok(ParameterPoint64::new(theta)?)
}

pub fn build_model(name: ModelName, cfg: &RunConfig) -> Result<ModelSetup, CliError> {
    let sigma = positive("sigma", cfg.sigma.unwrap_or(1.0))?;
    let gamma = cfg.gamma.unwrap_or(1.0);
    let alpha = || {
        cfg.alpha
            .ok_or_else(|| CliError::Config(format!("--alpha is required for {name:?}")))
    };
    match name {
        ModelName::CurvedGaussian => {
            let model = builtin_curved_gaussian(sigma, alpha()?)?;
            let theta = theta_of(cfg, 2)?;
            let estimator = builtin_gamma_estimator(gamma, &model, &theta)?;
            Ok(ModelSetup {
                model: Box::new(model),
                estimator,
                theta,
            })
        }
        ModelName::CurvedGaussian1d => {
            let model = builtin_curved_gaussian_1d(sigma, alpha()?)?;
            let theta = theta_of(cfg, 1)?;
            let estimator = builtin_gamma_estimator_1d(gamma, &model, &theta)?;
            Ok(ModelSetup {
                model: Box::new(model),
                estimator,
                theta,
            })
        }
        ModelName::LinearGaussian => {
            let design = match &cfg.design {
                Some(rows) => Mat64::from_rows(rows)?,
                None => Mat64::identity(cfg.theta.as_ref().map_or(2, Vec::len)),
            };
            let theta = theta_of(cfg, design.cols())?;
            let model = builtin_linear_gaussian(sigma, design)?;
            let estimator = least_squares_estimator(&model, &theta)?;
            Ok(ModelSetup {
                model: Box::new(model),
                estimator,
                theta,
            })
        }
    }
}

fn pairing(cfg: &RunConfig) -> Result<PairingConfig, CliError> {
    let seed = split_seed(cfg.seed.unwrap_or(0), SeedPurpose::Pairing);
    Ok(match cfg.backend.unwrap_or(BackendName::Gh) {
        BackendName::Closed => PairingConfig::closed_form(),
        BackendName::Gh => PairingConfig::gauss_hermite(cfg.gh_order.unwrap_or(DEFAULT_GH_ORDER))?,
        BackendName::Mc => PairingConfig::monte_carlo(cfg.mc_samples.unwrap_or(DEFAULT_MC_SAMPLES), seed)?,
    })
}

fn toy_report(toy: ToyName, cfg: &RunConfig) -> Result<GeometryReport64, CliError> {
    match toy {
        ToyName::Remark3 => {
            let a = cfg.a.clone().unwrap_or_else(|| vec![1.0, 2.0]);
            let c = positive("c", cfg.c.unwrap_or(4.0))?;
            if a.is_empty() || a.iter().any(|x| !x.is_finite()) {
                return Err(CliError::Config("--a must be a nonempty list of finite values".into()));
            }
            let d = a.len();
            let m = d * (d + 1) / 2;
            let mut normal_gram = Mat64::zeros(m, m);
            normal_gram[(0, 0)] = c;
            let error_pairings = Mat64::from_fn(d, m, |p, al| if al == 0 { a[p] } else { 0.0 });
            Ok(GeometryReport64::synthetic(Mat64::identity(d), normal_gram, error_pairings)?)
        }
        ToyName::Flat => {
            let d = cfg.theta.as_ref().map_or(2, Vec::len).max(1);
            let m = d * (d + 1) / 2;
            Ok(GeometryReport64::synthetic(
                Mat64::identity(d),
                Mat64::zeros(m, m),
                Mat64::zeros(d, m),
            )?)
        }
    }
}

/// What a command runs on: a model with an estimator, or a synthetic geometry.
enum Subject {
    Model(ModelSetup),
    Toy(GeometryReport64),
}

fn subject(cfg: &RunConfig) -> Result<Subject, CliError> {
    match (cfg.toy, cfg.model) {
        (Some(_), Some(_)) => Err(CliError::Config("--toy and --model are mutually exclusive".into())),
        (Some(t), None) => Ok(Subject::Toy(toy_report(t, cfg)?)),
        (None, m) => Ok(Subject::Model(build_model(m.unwrap_or(ModelName::CurvedGaussian), cfg)?)),
    }
}

fn report_of(subject: &Subject, cfg: &RunConfig) -> Result<GeometryReport64, CliError> {
    match subject {
        Subject::Model(s) => Ok(geometry_report(&*s.model, &s.estimator, &s.theta, &pairing(cfg)?)?),
        Subject::Toy(r) => Ok(r.clone()),
    }
}

pub fn cmd_geometry(cfg: &RunConfig) -> Result<Output, CliError> {
    let report = report_of(&subject(cfg)?, cfg)?;
    Ok(Output::ok(to_json(&report, vec![])?))
}

pub fn cmd_bound(cfg: &RunConfig) -> Result<Output, CliError> {
    let v = cfg.v.clone().ok_or_else(|| CliError::Config("--v is required".into()))?;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(CliError::Config("--v must be finite".into()));
    }
    let report = report_of(&subject(cfg)?, cfg)?;
    let bound = directional_bound(&report, &v)?;
    let classical = classical_crb(&report.fisher)?.bilinear(&v, &v);
    Ok(Output::ok(to_json(
        &bound,
        vec![
            ("classical", json_value(&classical)),
            ("total", json_value(&(classical + bound.correction))),
        ],
    )?))
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<Output, CliError> {
    let subject = subject(cfg)?;
    let report = report_of(&subject, cfg)?;
    let directions = DirectionSet::Random {
        count: cfg.count.unwrap_or(DEFAULT_COUNT),
        seed: split_seed(cfg.seed.unwrap_or(0), SeedPurpose::Sweep),
    };
    let bounds = directional_sweep(&report, &directions)?;
    let gap = match &subject {
        Subject::Model(s) => match s.estimator.closed_form_covariance() {
            Some(sigma) => Some(sigma - &classical_crb(&report.fisher)?),
            None => None,
        },
        Subject::Toy(_) => None,
    };
    Ok(Output::ok(sweep_csv(&bounds, gap.as_ref())))
}

fn solve_and_verify(
    report: &GeometryReport64,
    cfg: &RunConfig,
) -> Result<(SOSCertificate64, VerificationReport<f64>), CliError> {
    let system = build_system(report)?;
    let cert = solve_sos_sdp(&system, Objective::Trace);
    let verification = verify_certificate(
        &cert,
        &system,
        report,
        cfg.verify_samples.unwrap_or(DEFAULT_VERIFY_SAMPLES),
        split_seed(cfg.seed.unwrap_or(0), SeedPurpose::Verification),
    )?;
    Ok((cert, verification))
}

fn status_failure(cert: &SOSCertificate64) -> Option<CliError> {
    match cert.solver_status {
        SolverStatus::Optimal => None,
        s => Some(CliError::Numerical(format!(
            "certificate solver ended with status {s:?} (residual {:e})",
            cert.max_coeff_residual
        ))),
    }
}

pub fn cmd_sdp(cfg: &RunConfig) -> Result<Output, CliError> {
    let report = report_of(&subject(cfg)?, cfg)?;
    let (cert, verification) = solve_and_verify(&report, cfg)?;
    let exact = exact_matrix_correction(&report, rank_one_tolerance(&report));
    let failure = status_failure(&cert).or_else(|| {
        (!verification.passed).then(|| {
            CliError::Verification(format!(
                "certificate failed on {} sampled directions",
                verification.samples
            ))
        })
    });
    let body = to_json(
        &cert,
        vec![
            ("verification", json_value(&verification)),
            ("exact_correction", json_value(&exact)),
        ],
    )?;
    Ok(Output { body, failure })
}

pub fn cmd_validate(cfg: &RunConfig) -> Result<Output, CliError> {
    let setup = match (cfg.toy, cfg.model) {
        (Some(ToyName::Remark3), _) => {
            return Err(CliError::Config(
                "the remark3 toy has no sampling model; validate needs --model".into(),
            ))
        }
        (Some(ToyName::Flat), Some(_)) => {
            return Err(CliError::Config("--toy and --model are mutually exclusive".into()))
        }
        (Some(ToyName::Flat), None) => build_model(ModelName::LinearGaussian, cfg)?,
        (None, m) => build_model(m.unwrap_or(ModelName::CurvedGaussian), cfg)?,
    };
    let pairing = pairing(cfg)?;
    let report = geometry_report(&*setup.model, &setup.estimator, &setup.theta, &pairing)?;
    let (cert, verification) = solve_and_verify(&report, cfg)?;
    if let Some(f) = status_failure(&cert) {
        return Err(f);
    }
    if !verification.passed {
        return Err(CliError::Verification("certificate failed its own verification".into()));
    }
    let seed = cfg.seed.unwrap_or(0);
    let vcfg = ValidationConfig {
        pairing,
        samples: cfg.mc_samples.unwrap_or(DEFAULT_MC_SAMPLES),
        seed,
        covariance: match cfg.covariance.unwrap_or(CovarianceName::Auto) {
            CovarianceName::Auto => CovarianceSource::Auto,
            CovarianceName::Empirical => CovarianceSource::Empirical,
        },
    };
    let directions = DirectionSet::Random {
        count: cfg.count.unwrap_or(DEFAULT_COUNT),
        seed: split_seed(seed, SeedPurpose::Sweep),
    };
    let validation = full_validation(&*setup.model, &setup.estimator, &setup.theta, &vcfg, Some(&cert), &directions)?;
    let failure = (!validation.passed).then(|| CliError::Verification("estimator covariance violates a bound".into()));
    let body = to_json(&validation, vec![("verification", json_value(&verification))])?;
    Ok(Output { body, failure })
}

/// One line of the paper-example table.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub name: String,
    pub computed: f64,
    pub expected: f64,
}

impl Row {
    pub fn deviation(&self) -> f64 {
        (self.computed - self.expected).abs()
    }
}

/// Every closed-form quantity of the two-parameter curved example at `θ = (0, θ₂)`.
pub fn paper_example_rows(cfg: &RunConfig) -> Result<Vec<Row>, CliError> {
    let sigma = positive("sigma", cfg.sigma.unwrap_or(1.0))?;
    let alpha = cfg.alpha.unwrap_or(1.0);
    let gamma = cfg.gamma.unwrap_or(1.0);
    let theta2 = match cfg.theta.as_deref() {
        None => 0.0,
        Some([t1, t2]) if *t1 == 0.0 => *t2,
        Some(_) => return Err(CliError::Config("paper-example needs --theta 0,<theta2>".into())),
    };
    let model = builtin_curved_gaussian(sigma, alpha)?;
    let theta = ParameterPoint64::new(vec![0.0, theta2])?;
    let estimator = builtin_gamma_estimator(gamma, &model, &theta)?;
    let report = geometry_report(&model, &estimator, &theta, &pairing(cfg)?)?;

    let s2 = sigma * sigma;
    let q = 1.0 / (16.0 * s2 * s2);
    let pairs = ["11", "12", "22"];
    let mut rows = Vec::new();
    let mut push = |name: String, computed: f64, expected: f64| rows.push(Row { name, computed, expected });
    for i in 0..2 {
        for j in i..2 {
            push(format!("J[{}{}]", i + 1, j + 1), report.fisher[(i, j)], if i == j { 1.0 / s2 } else { 0.0 });
        }
    }
    for (l, g) in report.christoffel.iter().enumerate() {
        for i in 0..2 {
            for j in i..2 {
                push(format!("Gamma^{}[{}{}]", l + 1, i + 1, j + 1), g[i][j], 0.0);
            }
        }
    }
    let normal = [
        [3.0 * q + alpha * alpha / s2, 0.0, q],
        [0.0, q, 0.0],
        [q, 0.0, 3.0 * q],
    ];
    for a in 0..3 {
        for b in a..3 {
            push(format!("G_N[{},{}]", pairs[a], pairs[b]), report.normal_gram[(a, b)], normal[a][b]);
        }
    }
    for p in 0..2 {
        for a in 0..3 {
            let expected = if p == 1 && a == 0 { gamma * alpha } else { 0.0 };
            push(format!("C[{},{}]", p + 1, pairs[a]), report.error_pairings[(p, a)], expected);
        }
    }
    for p in 0..2 {
        for j in 0..2 {
            push(format!("unbias[{}{}]", p + 1, j + 1), report.unbias[(p, j)], if p == j { 0.5 } else { 0.0 });
        }
    }
    for v in [[1.0, 1.0], [1.0, 0.0], [0.0, 1.0], [2.0, -1.0]] {
        let b = directional_bound(&report, &v)?;
        let (v1, v2) = (v[0], v[1]);
        let num = 16.0 * s2 * s2 * v2 * v2 * v1.powi(4) * gamma * gamma * alpha * alpha;
        let den = 3.0 * (v1 * v1 + v2 * v2).powi(2) + 16.0 * s2 * alpha * alpha * v1.powi(4);
        push(format!("R({v1},{v2})"), b.correction, num / den);
    }
    Ok(rows)
}

pub fn cmd_paper_example(cfg: &RunConfig) -> Result<Output, CliError> {
    let rows = paper_example_rows(cfg)?;
    let mut body = String::new();
    let _ = writeln!(body, "{:<14} {:>24} {:>24} {:>10}", "quantity", "computed", "closed_form", "deviation");
    for r in &rows {
        let _ = writeln!(
            body,
            "{:<14} {:>24.16e} {:>24.16e} {:>10.2e}",
            r.name,
            r.computed,
            r.expected,
            r.deviation()
        );
    }
    let worst = rows.iter().map(Row::deviation).fold(0.0, f64::max);
    let passed = worst <= PAPER_EXAMPLE_TOL;
    let _ = writeln!(
        body,
        "max deviation {worst:.2e} (tolerance {PAPER_EXAMPLE_TOL:.0e}): {}",
        if passed { "PASS" } else { "FAIL" }
    );
    let failure = (!passed).then(|| CliError::Verification(format!("paper example deviates by {worst:e}")));
    Ok(Output { body, failure })
}

//! Curvature-corrected Cramér–Rao bounds via the square-root embedding.
//!
//! The core is generic over the floating point type; `f64` aliases are
//! provided at the crate root.

pub mod bounds;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod model;
pub mod pairing;
pub mod rng;
pub mod scalar;
pub mod soscert;
pub mod validate;

pub use bounds::{
    classical_crb, directional_bound, directional_sweep, exact_matrix_correction, sweep_csv, DirectionSet,
    DirectionalBound, ExactCorrection,
};
pub use error::{CrbError, Result};
pub use geometry::{
    christoffel, error_pairings, fisher_info, geometry_report, normal_gram, GeometryMeta, GeometryReport,
    JacobianSource, PairIndex,
};
pub use linalg::Mat;
pub use model::{EstimatorSpec, GaussianMeanModel, ParameterPoint, StatModel};
pub use pairing::{Backend, PairingConfig};
pub use rng::{split_seed, SeedPurpose};
pub use scalar::Scalar;
pub use soscert::{build_system, solve_sos_sdp, verify_certificate, Objective, SOSCertificate, SolverStatus};
pub use validate::{check_matrix_bound, estimate_covariance, full_validation, ValidationConfig, ValidationReport};

pub type Mat64 = Mat<f64>;
pub type ParameterPoint64 = ParameterPoint<f64>;
pub type GeometryReport64 = GeometryReport<f64>;
pub type EstimatorSpec64 = EstimatorSpec<f64>;
pub type DirectionalBound64 = DirectionalBound<f64>;
pub type SOSCertificate64 = SOSCertificate<f64>;
pub type ValidationReport64 = ValidationReport<f64>;

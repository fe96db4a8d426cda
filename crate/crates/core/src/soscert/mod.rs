//! Sum-of-squares certificates for a matrix correction `Δ`.
//!
//! A pair `Δ ⪰ 0`, `S ⪰ 0` with
//! `N(v)² − (vᵀΔv)·D(v) = z(v)ᵀ S z(v)` for the cubic monomial vector `z(v)`
//! proves `vᵀΔv ≤ R(v)` wherever `D(v) > 0`.

pub mod monomial;
pub mod sdp;
pub mod system;
pub mod verify;

pub use monomial::{enumerate_monomials, MonomialBasis, Poly};
pub use sdp::{solve_sos_sdp, IterationRecord, Objective, SOSCertificate, SolverStatus};
pub use system::{build_system, PolynomialSystem};
pub use verify::{verify_certificate, Check, Offender, VerificationReport};

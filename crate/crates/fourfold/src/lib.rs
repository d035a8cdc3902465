//! Numerical differential geometry on closed 4-manifolds, built around the
//! Bach tensor.
//!
//! The crate computes pointwise curvature (Christoffel, Riemann, Ricci,
//! scalar, Weyl, Bach by two independent formulas) from truncated Taylor
//! expansions of the metric, supports the non-conformal deformation
//! g + df ⊗ df and conformal rescalings with their closed-form curvature
//! laws, discretizes the modified conformal Laplacian −6Δ + S + t|B|^{1/2}
//! on periodic grids, and drives the ball-deformation construction that
//! produces metrics with negative total scalar-Bach curvature, normalized
//! to S + t|B|^{1/2} ≡ −1.
//!
//! Index conventions (fixed crate-wide):
//!   Γ^k_ij = ½ g^{kl}(∂_i g_jl + ∂_j g_il − ∂_l g_ij)
//!   R^m_ijk = ∂_i Γ^m_jk − ∂_j Γ^m_ik + Γ^m_ia Γ^a_jk − Γ^m_ja Γ^a_ik
//!   Ric_jk = R^m_mjk,   R_ijkl = g_km R^m_ijl
//! With these, the round 4-sphere of radius 1 has S = 12 and positive
//! sectional curvature.

pub mod aubin;
pub mod catalog;
pub mod chart;
pub mod conformal;
pub mod curvature;
pub mod error;
pub mod jet;
pub mod pipeline;
pub mod spectral;
pub mod taylor;

pub use error::GeomError;

/// Default numeric tolerances, overridable by callers.
pub mod tol {
    /// Positive-definiteness floor for metric eigenvalues.
    pub const JET_PD_FLOOR: f64 = 1e-10;
    /// Relative Richardson mismatch allowed for finite-difference jets.
    pub const FD_TOL: f64 = 1e-5;
    /// Algebraic identity tolerance (trace-freeness, Bianchi, symmetry).
    pub const ALG_TOL: f64 = 1e-9;
    /// Cross-check tolerance between the two Bach formulas, analytic jets.
    pub const CROSS_TOL: f64 = 1e-6;
    /// Cross-check tolerance with finite-difference jets.
    pub const CROSS_TOL_FD: f64 = 1e-3;
    /// Pointwise divergence-free tolerance for the Bach tensor.
    pub const DIV_TOL: f64 = 1e-5;
    /// Eigenresidual target for the principal eigenpair.
    pub const EIG_TOL: f64 = 1e-9;
    /// Half-width of the zero band in the eigenvalue trichotomy.
    pub const ZERO_TOL: f64 = 1e-6;
    /// Allowed deviation of the normalized scalar-Bach curvature from −1.
    pub const NORM_TOL: f64 = 1e-3;
    /// Floor below which a Bach norm counts as vanishing.
    pub const BACH_FLOOR: f64 = 1e-8;
    /// Agreement required between the two factorizations of the double
    /// deformation (direct sum versus scaled gradient form).
    pub const FACTOR_TOL: f64 = 1e-10;
}

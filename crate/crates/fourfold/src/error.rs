use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum GeomError {
    #[error("invalid chart spec: {0}")]
    InvalidChartSpec(String),

    #[error("point {0:?} lies outside the chart domain")]
    PointOutsideChart([f64; 4]),

    #[error("operation requires a periodic grid")]
    NonPeriodicGrid,

    #[error("field value not finite at {at:?}")]
    NonFiniteFieldValue { at: [f64; 4] },

    #[error("jet order {have} insufficient, need {need}")]
    InsufficientJetOrder { need: usize, have: usize },

    #[error("finite-difference jet inconsistent: Richardson mismatch {rel_err:.3e} exceeds {tol:.1e}")]
    JetInconsistent { rel_err: f64, tol: f64 },

    #[error("metric not positive definite: min eigenvalue {min_eig:.3e}")]
    PdViolation { min_eig: f64 },

    #[error("operation defined only in dimension 4, got {0}")]
    NotDimensionFour(usize),

    #[error("tensor rank/dimension mismatch")]
    RankMismatch,

    #[error("conformal-type factor must be positive, min value {min:.3e}")]
    FactorNotPositive { min: f64 },

    #[error("Bach norm {min_norm:.3e} below floor; hypothesis |B| > 0 violated")]
    BachVanishes { min_norm: f64 },

    #[error("every candidate scale k left the Bach norm degenerate")]
    AllCandidatesDegenerate,

    #[error("iteration failed to converge: {iterations} steps, residual {residual:.3e}")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("hypothesis failed: {0}")]
    HypothesisFailed(String),

    #[error("total curvature integral not negative: phi = {phi:.6e}; {hint}")]
    PhiNotNegative { phi: f64, hint: String },

    #[error("descent stalled before reaching the residual target")]
    DescentStalled,

    #[error("iterate lost positivity (min value {min:.3e})")]
    PositivityLost { min: f64 },

    #[error("profile floor {requested} infeasible; maximal feasible value {max_feasible:.6}")]
    InfeasibleDelta { requested: f64, max_feasible: f64 },

    #[error("zero denominator in quotient")]
    ZeroDenominator,
}

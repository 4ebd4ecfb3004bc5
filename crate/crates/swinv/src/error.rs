use thiserror::Error;

/// Errors reported by the analysis and verification routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite entry: {0}")]
    NonFinite(String),

    #[error("empty mode list")]
    EmptySystem,

    #[error("mode {mode} has a singular dynamics matrix (cond ≈ {cond:.3e}); no equilibrium")]
    SingularMode { mode: usize, cond: f64 },

    #[error("invalid switching signal: {0}")]
    InvalidSignal(String),

    #[error("signal undefined at t = {0}")]
    SignalUndefined(f64),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    #[error("no common quadratic Lyapunov function exists for this system")]
    NoCommonQuadratic,

    #[error("mode {0} is not Hurwitz; no finite quadratic dwell-time certificate")]
    NonHurwitz(usize),

    #[error("bisection bracket exhausted: {0}")]
    BracketExhausted(String),

    #[error("certificate inconsistency: {0}")]
    CertificateInconsistency(String),

    #[error("path-following stalled: {0}")]
    Stall(String),

    #[error("iteration cap of {0} reached before convergence")]
    IterationCap(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Exit code contract of the command-line tool: 1 = infeasibility (a
    /// legitimate analysis outcome), 2 = usage/IO trouble, 3 = numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Infeasible(_) | Error::NoCommonQuadratic | Error::NonHurwitz(_) => 1,
            Error::NumericFailure(_)
            | Error::BracketExhausted(_)
            | Error::CertificateInconsistency(_)
            | Error::Stall(_)
            | Error::IterationCap(_) => 3,
            _ => 2,
        }
    }
}

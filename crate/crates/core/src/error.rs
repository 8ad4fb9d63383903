use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("basis dimension {dim} exceeds the configured budget of {limit}")]
    Capacity { dim: usize, limit: usize },

    #[error("Fock level ({n}, {k}) is outside the basis (na_max = {na_max}, nb_max = {nb_max})")]
    OutOfRange {
        n: usize,
        k: usize,
        na_max: usize,
        nb_max: usize,
    },

    #[error("truncation leakage {leakage:.3e} exceeds the limit {limit:.1e}; enlarge the cutoff")]
    Truncation { leakage: f64, limit: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not Hermitian (max |M - M†| = {0:.3e})")]
    NotHermitian(f64),

    #[error("spectral block of dimension {dim} exceeds the limit {limit}; use the Krylov propagator")]
    SpectralLimit { dim: usize, limit: usize },

    #[error("g2 is undefined: <N_a> = {mean:.3e} is below the floor {floor:.1e}")]
    UndefinedG2 { mean: f64, floor: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("failed to converge: {0}")]
    Convergence(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the `xdce` binary.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidParameter(_) | Error::Io(_) => 2,
            _ => 3,
        }
    }
}

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cluster size {n} outside supported range [{min}, {max}]")]
    SizeOutOfRange { n: usize, min: usize, max: usize },

    #[error("site {site} out of range for a {n_spins}-spin cluster")]
    SiteOutOfRange { site: usize, n_spins: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("coupling matrix invalid: {0}")]
    InvalidCouplings(String),

    #[error("operator is not Hermitian (relative residual {residual:.3e})")]
    NotHermitian { residual: f64 },

    #[error("coherence order {order} outside [0, {max}]")]
    OrderOutOfRange { order: i64, max: usize },

    #[error("phase cycle with {k_steps} steps aliases orders up to {n_spins} (need more than {need})")]
    Aliasing { k_steps: usize, n_spins: usize, need: usize },

    #[error("Hamiltonian does not conserve total magnetization (max off-block element {0:.3e})")]
    NotMagnetizationConserving(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("observable `{0}` not present in sweep")]
    MissingObservable(String),

    #[error("unknown observable `{0}`")]
    UnknownObservable(String),

    #[error("spectrum must be merged before counting peaks")]
    Unmerged,

    #[error("numerical invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("config parse error: {0}")]
    Config(#[from] toml::de::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether the error reports a broken numerical invariant rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Invariant(_) | Error::NotHermitian { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("lattice [{l_minus}, {l_plus}] must have at least 2 sites")]
    LatticeTooSmall { l_minus: i64, l_plus: i64 },

    #[error("index {index} out of range 0..{bound}")]
    IndexOutOfRange { index: usize, bound: usize },

    #[error("site {site} outside lattice [{l_minus}, {l_plus}]")]
    SiteOutOfRange { site: i64, l_minus: i64, l_plus: i64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty factor list")]
    EmptyFactors,

    #[error("rate {name} = {value} must be strictly positive")]
    NonPositiveRate { name: &'static str, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("fugacity has a pole at density 1")]
    FugacityPole,

    #[error("vectors are linearly dependent (determinant {0:e})")]
    LinearlyDependent(f64),

    #[error("no positive-rate manifold solution: {0}")]
    NoManifoldSolution(String),

    #[error("{what}: requested {requested} exceeds cap {cap}; raise it via ASEP_LAB_MAX_SITES / ASEP_LAB_MAX_DENSE_DIM")]
    CapExceeded {
        what: &'static str,
        requested: usize,
        cap: usize,
    },

    #[error("iteration did not converge: {0}")]
    NonConvergence(String),

    #[error("postcondition violated: {0}")]
    Postcondition(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(&'static str),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// `true` for resource-guard failures, as opposed to invalid input.
    pub fn is_resource_cap(&self) -> bool {
        matches!(self, Error::CapExceeded { .. })
    }
}

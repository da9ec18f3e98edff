use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter `{name}` out of domain: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("{stage} did not converge after {iterations} iterations (last residual {residual:e})")]
    NonConvergence {
        stage: &'static str,
        iterations: usize,
        residual: f64,
        trace: Vec<f64>,
    },

    #[error("singular tridiagonal system (zero pivot at row {row})")]
    SingularJacobian { row: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid field `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("price aggregate must be positive, got {0}")]
    DegenerateAggregate(f64),

    #[error("spillover series diverges: f1 * spectral_radius = {product} >= 1")]
    SeriesDivergent { product: f64 },

    #[error("jacobian is rank deficient")]
    RankDeficient,

    #[error("unknown canonical network id {0} (expected 1..=6)")]
    UnknownNetwork(usize),

    #[error("sector {sector}: {source}")]
    Sector {
        sector: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn in_sector(self, sector: usize) -> Self {
        Error::Sector {
            sector,
            source: Box::new(self),
        }
    }

    /// True when the failure is numerical (iteration cap, singular solve) rather
    /// than a problem with the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NonConvergence { .. }
            | Error::SingularJacobian { .. }
            | Error::DegenerateAggregate(_)
            | Error::SeriesDivergent { .. }
            | Error::RankDeficient => true,
            Error::Sector { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A point outside the smoothness cone of the kernel.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("derivative order {order} exceeds the supported maximum {max}")]
    UnsupportedOrder { order: usize, max: usize },

    #[error("degenerate fundamental tensor: sigma_min = {sigma_min:e}, sigma_max = {sigma_max:e}")]
    DegenerateMetric { sigma_min: f64, sigma_max: f64 },

    #[error("metric value {0:e} is not positive")]
    NonPositiveValue(f64),

    #[error("indicatrix sampling accepted {accepted} of {tried} directions, {requested} requested")]
    SamplingCoverage {
        accepted: usize,
        tried: usize,
        requested: usize,
    },

    #[error("self-consistency failure in {what}: defect {defect:e}")]
    SelfConsistency { what: String, defect: f64 },

    #[error("transport left the cone at t = {t}; reduce the loop size or step")]
    TransportDomain { t: f64 },

    #[error("transport failed for sample {index}: {source}")]
    Sample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("composition error: {0}")]
    Composition(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("consistency check '{check}' failed: error {error:e}")]
    Consistency { check: String, error: f64 },

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Configuration(msg.into())
    }

    /// Process exit status for this error: 1 verification failure,
    /// 2 configuration error, 3 numeric or domain error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Consistency { .. } => 1,
            Error::Configuration(_) | Error::Parse(_) | Error::Io(_) => 2,
            Error::Sample { source, .. } => source.exit_code(),
            _ => 3,
        }
    }
}

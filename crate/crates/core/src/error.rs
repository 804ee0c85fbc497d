use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("signal too short: {len} samples, need at least {needed}")]
    SignalTooShort { len: usize, needed: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("channel length mismatch: channel {channel} has {len} samples, expected {expected}")]
    ChannelLength {
        channel: usize,
        len: usize,
        expected: usize,
    },

    #[error("invalid STFT configuration: {0}")]
    StftConfig(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("matrix is ill-conditioned (reciprocal condition {rcond:e})")]
    IllConditioned { rcond: f64 },

    #[error("matrix is not positive definite (failed at pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("matrix is not Hermitian (relative asymmetry {asymmetry:e})")]
    NotHermitian { asymmetry: f64 },

    #[error("noise covariance not positive definite at bin {bin}")]
    NoiseCovariance { bin: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sources {a} and {b} are {degrees:.2} degrees apart, below the {floor:.2} degree floor")]
    AngularFloor {
        a: usize,
        b: usize,
        degrees: f64,
        floor: f64,
    },

    #[error("missing source `{0}`")]
    MissingSource(String),

    #[error("source `{0}` has zero energy")]
    ZeroEnergy(String),

    #[error("backward called without a recorded training forward pass")]
    NoRecordedForward,

    #[error("non-finite gradient in parameter `{0}`; step rejected")]
    NonFiniteGradient(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Numerical failures (as opposed to bad input data) are reported
    /// separately by the command-line front end.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::IllConditioned { .. }
                | Error::NotPositiveDefinite { .. }
                | Error::NotHermitian { .. }
                | Error::NoiseCovariance { .. }
                | Error::NonFiniteGradient(_)
        )
    }
}

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown constellation kind `{0}`")]
    UnknownKind(String),
    #[error("invalid constellation: {0}")]
    InvalidConstellation(String),
    #[error("symbol {index} has magnitude {magnitude:e}, too small for reciprocal filtering")]
    NearZeroSymbol { index: usize, magnitude: f64 },
    #[error("filter gain w~^H x = {gain:e} is too small to normalise")]
    DegenerateGain { gain: f64 },
    #[error("Hermitian system of size {0} is not positive definite")]
    SingularSystem(usize),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("only {significant} significant singular values, model order {requested} requested")]
    RankDeficient { significant: usize, requested: usize },
    #[error("pencil parameter {pencil} invalid for {n} samples and model order {order}")]
    InvalidPencilParam { pencil: usize, n: usize, order: usize },
    #[error("kappa2*|S| = {load} must stay below N = {n}")]
    ParameterOutOfRegime { load: f64, n: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("bad frame-file magic")]
    BadMagic,
    #[error("unsupported frame-file version {0}")]
    UnsupportedVersion(u32),
    #[error("frame-file payload truncated: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("frame-file has {0} trailing bytes after the payload")]
    TrailingBytes(usize),
    #[error("numerology mismatch: {0}")]
    NumerologyMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Serialization(String),
}

/// Coarse grouping used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    DataFormat,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::UnknownKind(_)
            | Error::InvalidConstellation(_)
            | Error::InvalidConfig(_)
            | Error::InvalidPencilParam { .. }
            | Error::ParameterOutOfRegime { .. } => ErrorClass::Config,
            Error::BadMagic
            | Error::UnsupportedVersion(_)
            | Error::TruncatedPayload { .. }
            | Error::TrailingBytes(_)
            | Error::NumerologyMismatch(_)
            | Error::LengthMismatch { .. }
            | Error::EmptyInput(_)
            | Error::Io(_)
            | Error::Serialization(_) => ErrorClass::DataFormat,
            Error::NearZeroSymbol { .. }
            | Error::DegenerateGain { .. }
            | Error::SingularSystem(_)
            | Error::RankDeficient { .. } => ErrorClass::Numerical,
        }
    }
}

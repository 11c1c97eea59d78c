use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("resource limit exceeded: {requested} elements requested, cap is {cap}")]
    Resource { requested: u128, cap: u128 },
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("unsupported dimension {0} (envelopes support d <= 2)")]
    UnsupportedDimension(usize),
    #[error("non-finite generator value {value} at t={t}, y={y}, z={z:?}")]
    Evaluation { t: f64, y: f64, z: alloc::vec::Vec<f64>, value: f64 },
    #[error("Picard iteration did not converge at step {step} (path {path})")]
    StepFailure { step: usize, path: usize },
    #[error("regression basis ill-conditioned at step {step} (condition number {condition:.3e}); try a lower degree or a local basis")]
    Basis { step: usize, condition: f64 },
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("unknown label: {0}")]
    UnknownLabel(String),
    #[error("at {index}: {source}")]
    At { index: String, source: alloc::boxed::Box<Error> },
    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    /// Innermost error under any [`Error::At`] context.
    pub fn root(&self) -> &Error {
        match self {
            Error::At { source, .. } => source.root(),
            e => e,
        }
    }
}

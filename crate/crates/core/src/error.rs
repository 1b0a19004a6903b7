use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two shapes that must agree do not.
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    /// An input that must be nonempty is empty.
    Empty(&'static str),
    /// A precondition on an argument does not hold.
    InvalidArgument(String),
    /// A 1-based index outside `1..=len`.
    IndexOutOfRange { index: usize, len: usize },
    /// A value that must be finite is NaN or infinite.
    NonFinite(String),
    /// Training produced a non-finite loss or weight.
    Diverged { epoch: usize, sample: usize },
    /// Every segment was excluded from clip reconstruction.
    DegenerateEnvelope,
    /// A segment-wise model was evaluated without an envelope.
    MissingEnvelope,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch {
                what,
                expected,
                found,
            } => write!(f, "dimension mismatch in {what}: expected {expected}, found {found}"),
            Error::Empty(what) => write!(f, "{what} must not be empty"),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::IndexOutOfRange { index, len } => {
                write!(f, "index {index} out of range 1..={len}")
            }
            Error::NonFinite(what) => write!(f, "non-finite value in {what}"),
            Error::Diverged { epoch, sample } => write!(
                f,
                "training diverged at epoch {epoch}, sample {sample} (non-finite loss or weights; lower the learning rate)"
            ),
            Error::DegenerateEnvelope => {
                write!(f, "envelope excludes every segment from reconstruction")
            }
            Error::MissingEnvelope => {
                write!(f, "segment-wise model needs an envelope to reconstruct clip predictions")
            }
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

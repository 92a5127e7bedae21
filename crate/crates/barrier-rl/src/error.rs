//! Crate-wide error type.

use std::fmt;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug)]
pub enum Error {
    /// Operand shapes are incompatible for the requested operation.
    ShapeMismatch(String),
    /// A tape input was referenced but never bound to a value.
    UnboundInput(String),
    /// Two tape inputs were registered under the same name.
    DuplicateInput(String),
    /// `log` was evaluated at a non-positive argument.
    LogDomain(f64),
    /// Backward was requested from a non-scalar node.
    NotScalar(Vec<usize>),
    /// Backward was requested before any forward pass.
    BackwardBeforeForward,
    /// The tape has no designated output node.
    NoOutput,
    /// A value that must be finite was not.
    NonFinite(String),
    /// The constraint value is non-negative where strict feasibility is required.
    /// This is the safety alarm, not a recoverable state.
    InfeasibleIterate(f64),
    /// An environment layout is invalid (e.g. no safe spawn region).
    Layout(String),
    /// An episode was driven outside its valid lifecycle.
    Protocol(String),
    /// Model fitting failed (insufficient data, non-finite loss, ...).
    Training(String),
    /// Unknown analytic problem id.
    UnknownProblem(String),
    /// Configuration is missing, malformed, or contains unknown fields.
    Config(String),
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch(msg) => write!(f, "shape mismatch: {msg}"),
            Error::UnboundInput(name) => write!(f, "unbound tape input `{name}`"),
            Error::DuplicateInput(name) => write!(f, "duplicate tape input `{name}`"),
            Error::LogDomain(x) => write!(f, "log evaluated at non-positive value {x}"),
            Error::NotScalar(shape) => {
                write!(f, "backward requires a scalar node, got shape {shape:?}")
            }
            Error::BackwardBeforeForward => write!(f, "backward called before forward"),
            Error::NoOutput => write!(f, "tape has no output node"),
            Error::NonFinite(msg) => write!(f, "non-finite value: {msg}"),
            Error::InfeasibleIterate(jc) => {
                write!(f, "infeasible iterate: constraint value {jc} >= 0")
            }
            Error::Layout(msg) => write!(f, "invalid layout: {msg}"),
            Error::Protocol(msg) => write!(f, "protocol error: {msg}"),
            Error::Training(msg) => write!(f, "training error: {msg}"),
            Error::UnknownProblem(id) => write!(f, "unknown analytic problem `{id}`"),
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

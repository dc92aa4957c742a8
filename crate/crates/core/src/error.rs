use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Errors produced anywhere in the synthesis / solve pipeline.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Plant description violates one or more structural invariants.
    Validation(Vec<String>),
    /// Vector or matrix dimensions disagree with the chain layout.
    Dimension(String),
    /// Fixed-point or outer iteration hit its cap.
    NotConverged { what: &'static str, iterations: usize },
    /// A factorization met a non-positive pivot that regularization could not fix.
    NotPositiveDefinite(&'static str),
    /// The terminal-ingredient program has no strictly negative optimum.
    Infeasible(String),
    /// A set operation produced an empty set or one with empty interior.
    EmptySet(&'static str),
    /// LP was unbounded where a bounded value is required.
    Unbounded(&'static str),
    /// Combinatorial work exceeded the desk-scale cap.
    CapExceeded(&'static str),
    /// Protocol violation in the agent runtime (stalled or out-of-order payloads).
    Schedule(String),
    /// Numerical breakdown not covered by the above.
    Numerical(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Validation(v) => {
                write!(f, "invalid chain: ")?;
                for (k, msg) in v.iter().enumerate() {
                    if k > 0 {
                        write!(f, "; ")?;
                    }
                    write!(f, "{msg}")?;
                }
                Ok(())
            }
            Error::Dimension(s) => write!(f, "dimension mismatch: {s}"),
            Error::NotConverged { what, iterations } => {
                write!(f, "{what} did not converge within {iterations} iterations")
            }
            Error::NotPositiveDefinite(s) => write!(f, "matrix not positive definite: {s}"),
            Error::Infeasible(s) => write!(f, "infeasible: {s}"),
            Error::EmptySet(s) => write!(f, "empty set: {s}"),
            Error::Unbounded(s) => write!(f, "unbounded: {s}"),
            Error::CapExceeded(s) => write!(f, "cap exceeded: {s}"),
            Error::Schedule(s) => write!(f, "schedule error: {s}"),
            Error::Numerical(s) => write!(f, "numerical failure: {s}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;

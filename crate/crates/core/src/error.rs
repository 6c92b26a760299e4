//! Error taxonomy shared by the whole crate.
//!
//! Variants are grouped by how a caller should react: `Parse` points at a file
//! location, `Validation` means the inputs contradict each other or a documented
//! precondition, and the remaining numerical variants mean the math itself gave
//! up (undefined map, degenerate data, diverging integration).

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input file; `line` is 1-based and counts the header.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    /// Inputs are well-formed but inconsistent with each other or with a
    /// documented precondition (wrong dimensions, out-of-bounds goal, ...).
    #[error("invalid input: {0}")]
    Validation(String),

    /// A map was evaluated outside its domain (e.g. the orientation log at the
    /// antipode, or a non-unit quaternion).
    #[error("domain error: {0}")]
    Domain(String),

    /// Data collapsed in a way estimation cannot recover from.
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// All demonstrations agree so tightly on an axis that no stiffness
    /// modulation can be read off it.
    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    /// Numerical integration diverged or lost an invariant it must keep.
    #[error("integration failure: {0}")]
    Integration(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command-line front end: 1 for validation
    /// problems, 2 for parse problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } => 2,
            Error::Validation(_) | Error::Io(_) => 1,
            Error::Domain(_)
            | Error::DegenerateData(_)
            | Error::DegenerateVariance(_)
            | Error::Integration(_) => 3,
        }
    }
}

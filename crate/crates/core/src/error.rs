use thiserror::Error;

use crate::algebra::ValidationReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input: bad index, zero denominator, unparsable text.
    #[error("format error: {0}")]
    Format(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// The algebra parsed but violates one of the graded Lie algebra axioms.
    #[error("invalid algebra `{name}`: {report}")]
    InvalidAlgebra { name: String, report: ValidationReport },

    #[error("unknown group `{0}`")]
    UnknownGroup(String),

    #[error("unknown map `{0}`")]
    UnknownMap(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A point left the domain on which a map or function is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// The map is not filtration preserving, so no Pansu derivative is available.
    #[error("refused: map `{map}` is not filtration preserving at {at} (below-diagonal block {block:?} = {value:e})")]
    NotFiltrationPreserving {
        map: String,
        at: String,
        block: (u32, u32),
        value: f64,
    },

    /// A quadrature grid does not cover what it has to cover.
    #[error("coverage error: {0}")]
    Coverage(String),

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub fn is_refusal(&self) -> bool {
        matches!(self, Error::NotFiltrationPreserving { .. })
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

use std::fmt;

/// Errors surfaced by the engine.
///
/// Construction errors are named after the contract they break so a failing
/// operad bundle or scenario can be diagnosed from the message alone.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// A vector or matrix had the wrong length/shape for the ambient space.
    Dimension { expected: usize, got: usize, context: &'static str },
    /// A diagram's objects and maps do not line up.
    Shape(String),
    /// An arity exceeded the configured cap and the operand was not flagged
    /// as truncated.
    Capacity { arity: usize, cap: usize },
    /// An operad axiom failed; names the identity and the arities involved.
    OperadAxiom { identity: &'static str, arities: Vec<usize>, detail: String },
    /// A symmetric-group action failed to be a chain map, an involution, or
    /// to satisfy a braid relation.
    SigmaAction { arity: usize, detail: String },
    /// d composed with d is nonzero.
    NotAComplex { degree: i64 },
    /// A map's blocks do not commute with the differentials.
    NotAChainMap { degree: i64 },
    /// A cell inclusion is not a degreewise monomorphism.
    NotMono { degree: i64 },
    /// An attaching map does not land in the free base.
    UnsupportedPresentation(String),
    /// A subset pair for a cube face is not nested, or a set is not convex.
    BadSubset(String),
    /// A theorem hypothesis fails on the given scenario (this rejects the
    /// scenario; it is not a failed verdict).
    HypothesisViolation(String),
    /// Malformed configuration input, with location when available.
    Config(String),
    /// A linear solve had no solution where one was required.
    Unsolvable(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension { expected, got, context } => {
                write!(f, "dimension mismatch in {context}: expected {expected}, got {got}")
            }
            Error::Shape(s) => write!(f, "diagram shape error: {s}"),
            Error::Capacity { arity, cap } => {
                write!(f, "arity {arity} exceeds cap {cap} on an untruncated operand")
            }
            Error::OperadAxiom { identity, arities, detail } => {
                write!(f, "operad axiom `{identity}` fails at arities {arities:?}: {detail}")
            }
            Error::SigmaAction { arity, detail } => {
                write!(f, "invalid symmetric action at arity {arity}: {detail}")
            }
            Error::NotAComplex { degree } => {
                write!(f, "d*d is nonzero out of degree {degree}")
            }
            Error::NotAChainMap { degree } => {
                write!(f, "blocks do not commute with differentials at degree {degree}")
            }
            Error::NotMono { degree } => {
                write!(f, "inclusion is not a monomorphism in degree {degree}")
            }
            Error::UnsupportedPresentation(s) => write!(f, "unsupported presentation: {s}"),
            Error::BadSubset(s) => write!(f, "bad subset: {s}"),
            Error::HypothesisViolation(s) => write!(f, "scenario hypothesis violated: {s}"),
            Error::Config(s) => write!(f, "config error: {s}"),
            Error::Unsolvable(s) => write!(f, "linear system unsolvable: {s}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;

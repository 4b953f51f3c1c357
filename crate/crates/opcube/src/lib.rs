//! Exact-arithmetic engine for operads, their algebras, and cubical diagrams
//! of chain complexes over the rationals, together with a harness that checks
//! homotopy-excision and (dual) Blakers-Massey connectivity estimates on
//! desk-scale instances.
//!
//! Everything is computed over `Q` with no floating point anywhere: ranks,
//! kernels and quotients are exact, so a measured connectivity is a theorem
//! about the finite model being inspected, not an approximation.
//!
//! Module map:
//!
//! * [`linalg`] - dense rational matrices, fraction-free elimination, kernels
//!   and canonical quotients. The substrate for everything else.
//! * [`chain`] - finitely supported chain complexes, chain maps, cones,
//!   shifts, tensor products with Koszul signs, homology and connectivity.
//! * [`sigma`] - symmetric-group actions on complexes, averaging idempotents
//!   and coinvariants (characteristic zero).
//! * [`symseq`] - symmetric sequences, tensor products and tensor powers over
//!   finite sets, and the circle product.
//! * [`operad`] - operads as circle-product monoids, the built-in examples,
//!   free algebras and enveloping sequences.
//! * [`attach`] - cell attachment: the filtration computing pushouts of
//!   algebras along free maps, and the induced envelopes.
//! * [`cube`] - cubical diagrams, faces, total (co)fibers, convex-subset
//!   colimits and cocartesian/cartesian degree measurement.
//! * [`verify`] - the theorem bound formulas, scenario machinery and the
//!   batch checker behind the `opcube` command line interface.
//! * [`json`] - the on-disk encodings (matrices, complexes, operad bundles,
//!   suite configs and reports).

// Matrix and tensor code walks parallel indexed structures; index loops are
// the clearer idiom there.
#![allow(clippy::needless_range_loop)]

pub mod attach;
pub mod chain;
pub mod cube;
pub mod error;
pub mod json;
pub mod linalg;
pub mod operad;
pub mod sample;
pub mod sigma;
pub mod symseq;
pub mod verify;

/// The scalar field: arbitrary-precision rationals.
pub type Q = num_rational::BigRational;

pub use chain::{ChainComplex, ChainMap, Connectivity};
pub use error::{Error, Result};
pub use linalg::Matrix;

/// Largest arity the engine will enumerate symmetric groups for.
///
/// Averaging idempotents enumerate all `n!` permutations, so this is kept
/// small; every public constructor checks against it.
pub const MAX_ARITY: usize = 5;

/// Convenience constructor for a rational from an integer pair.
pub fn q(num: i64, den: i64) -> Q {
    use num_bigint::BigInt;
    Q::new(BigInt::from(num), BigInt::from(den))
}

/// Convenience constructor for an integer rational.
pub fn qi(num: i64) -> Q {
    q(num, 1)
}

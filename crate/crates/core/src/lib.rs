//! Spectral inverse iteration and spectral subspace iteration for elliptic
//! eigenvalue problems with parametric coefficients.
//!
//! The stochastic dependence is discretized with tensorized, normalized
//! Legendre polynomials indexed by a sparse multi-index set, the physical
//! domain with Lagrange quadrilaterals on the unit square. Every operation
//! of the iteration (linear solve, normalization, Gram-Schmidt) is carried
//! out in Galerkin sense on the chaos coefficients.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod dense;
pub mod error;
pub mod fem;
pub mod galerkin;
pub mod inverse;
pub mod legendre;
pub mod multiindex;
pub mod sparse;
pub mod subspace;
pub mod validation;

pub use error::{Error, Result};
pub use fem::{CoefficientTerm, Mesh, ParametricOperator};
pub use galerkin::{KroneckerOperator, MeanPreconditioner, SpectralVector};
pub use inverse::{EigenpairResult, InverseIteration, IterationConfig};
pub use legendre::{MomentMatrices, TripleProductTensor};
pub use multiindex::{MultiIndex, MultiIndexSet};
pub use subspace::{SpectralBasis, SubspaceConfig};

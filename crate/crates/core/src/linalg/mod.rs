//! Sparse linear algebra: local CSR storage, a dense reference
//! factorization, and row-distributed matrices and vectors with
//! halo-aware products and fixed-order reductions.

mod csr;
mod dense;
mod dist;

pub use csr::CsrMatrix;
pub use dense::{lu_nopivot_dense, DenseLu};
pub use dist::{axpby, axpbyz, dot, norm2, DistMatrix, DistVector};

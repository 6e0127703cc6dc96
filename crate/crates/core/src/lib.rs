//! Desk-scale distributed structured-grid solver kit.
//!
//! The crate provides, bottom to top:
//!
//! - [`sfc`]: Hilbert and Morton space-filling-curve encoders,
//! - [`grid`]: structured hexahedral grids with cell-centered data,
//! - [`partition`]: curve-based cell-to-rank assignment and quality metrics,
//! - [`runtime`]: an in-process simulated-rank runtime standing in for MPI,
//! - [`linalg`]: row-distributed sparse matrices and vectors,
//! - [`krylov`]: restarted GMRES and BiCGSTAB,
//! - [`precond`]: ILU, restricted additive Schwarz, algebraic multigrid and
//!   CPR-style multi-stage preconditioners.
//!
//! Everything runs inside a single process: "ranks" are threads exchanging
//! messages over channels, and all reductions combine contributions in a
//! fixed rank order so results are bitwise reproducible.

pub mod error;
pub mod grid;
pub mod krylov;
pub mod linalg;
pub mod partition;
pub mod precond;
pub mod runtime;
pub mod sfc;

pub use error::{Error, Result};

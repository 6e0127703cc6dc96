//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by grid construction, partitioning, the simulated-rank
/// runtime, distributed linear algebra and the preconditioner stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported dimension {0} (supported: 2, 3, 4)")]
    UnsupportedDimension(usize),

    #[error("degenerate domain: axis {axis} has extent {extent}")]
    DegenerateDomain { axis: usize, extent: f64 },

    #[error("cell coordinate ({i}, {j}, {k}) out of range for grid {nx}x{ny}x{nz}")]
    InvalidCoordinate {
        i: usize,
        j: usize,
        k: usize,
        nx: usize,
        ny: usize,
        nz: usize,
    },

    #[error("cannot split {ncells} cells over {np} ranks")]
    TooManyRanks { np: usize, ncells: usize },

    #[error("object is not assembled")]
    NotAssembled,

    #[error("object is already assembled")]
    AlreadyAssembled,

    #[error("row {row} is not owned by rank {rank}")]
    WrongOwner { row: usize, rank: usize },

    #[error("vector/matrix index maps do not match")]
    MapMismatch,

    #[error("communication plan mismatch: {0}")]
    PlanMismatch(String),

    #[error("collective mismatch: {0}")]
    CollectiveMismatch(String),

    #[error("rank {rank} failed: {message}")]
    RankFailed { rank: usize, message: String },

    #[error("rank group poisoned by rank {0}")]
    GroupPoisoned(usize),

    #[error("singular pivot in row {row}")]
    SingularPivot { row: usize },

    #[error("invalid block layout: {0}")]
    InvalidLayout(String),

    #[error("invalid preconditioner kind: {0}")]
    InvalidKind(String),

    #[error("singular matrix in dense factorization (column {0})")]
    SingularMatrix(usize),

    #[error("grid config: {0}")]
    GridConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

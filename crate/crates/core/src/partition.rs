//! Cell-to-rank assignment and partition-quality metrics.
//!
//! The space-filling-curve partitioner sorts cells by the curve key of
//! their normalized centroid and splits the sorted sequence into `np`
//! near-equal runs; a trivial contiguous-slab partitioner serves as the
//! comparison baseline.  Quality is reported through the load imbalance
//! factor, surface indices and inter-rank connectivity.

use crate::error::{Error, Result};
use crate::grid::{GlobalNeighbor, StructuredGrid};
use crate::sfc::{
    hilbert_encode_3d_table, hilbert_encode_nd, morton_encode, normalize_to_unit_cube, CurveKey,
    LatticeCoord,
};

/// Space-filling-curve encoder used for partitioning.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SfcEncoder {
    /// Iterative Hilbert encoder over the non-degenerate axes.
    HilbertNd,
    /// Table-driven 3D Hilbert encoder (degenerate axes pinned to zero).
    Hilbert3dTable,
    /// Morton encoder over the non-degenerate axes.
    Morton,
}

/// Disjoint, exhaustive assignment of every cell to one of `np` ranks.
#[derive(Debug, Clone)]
pub struct Partition {
    owner: Vec<usize>,
    np: usize,
}

impl Partition {
    pub fn new(owner: Vec<usize>, np: usize) -> Result<Self> {
        let p = Partition { owner, np };
        p.validate()?;
        Ok(p)
    }

    pub fn np(&self) -> usize {
        self.np
    }

    pub fn num_cells(&self) -> usize {
        self.owner.len()
    }

    pub fn owner_of(&self, cell: usize) -> usize {
        self.owner[cell]
    }

    pub fn owners(&self) -> &[usize] {
        &self.owner
    }

    /// Cells per rank.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.np];
        for &r in &self.owner {
            sizes[r] += 1;
        }
        sizes
    }

    /// Cells owned by `rank`, ascending by global index.
    pub fn cells_of(&self, rank: usize) -> Vec<usize> {
        (0..self.owner.len())
            .filter(|&c| self.owner[c] == rank)
            .collect()
    }

    /// Every rank non-empty, owners in range, union is the whole grid.
    /// (Disjointness is structural: each cell has exactly one owner.)
    pub fn validate(&self) -> Result<()> {
        if self.np == 0 {
            return Err(Error::InvalidArgument("partition with np = 0".into()));
        }
        if self.owner.iter().any(|&r| r >= self.np) {
            return Err(Error::InvalidArgument("cell owner out of range".into()));
        }
        let sizes = self.sizes();
        if sizes.contains(&0) {
            return Err(Error::InvalidArgument(
                "every rank must own at least one cell".into(),
            ));
        }
        Ok(())
    }
}

fn check_np(np: usize, ncells: usize) -> Result<()> {
    if np == 0 {
        return Err(Error::InvalidArgument("np must be at least 1".into()));
    }
    if np > ncells {
        return Err(Error::TooManyRanks { np, ncells });
    }
    Ok(())
}

/// Split `n` sorted cells into `np` consecutive runs whose sizes differ by
/// at most one; the first `n % np` runs take the extra cell.
fn split_runs(n: usize, np: usize) -> Vec<usize> {
    let base = n / np;
    let rem = n % np;
    (0..np).map(|r| base + usize::from(r < rem)).collect()
}

/// Curve key of one cell centroid: normalize to the unit cube, truncate to
/// the level-`m` lattice and encode.  Axes with a single cell are dropped
/// (pinned to zero for the 3D table encoder) so planar and line grids see
/// the curve of their effective dimension.
fn cell_key(
    grid: &StructuredGrid,
    encoder: SfcEncoder,
    level: u32,
    active: &[usize],
    cell: usize,
) -> Result<CurveKey> {
    let ijk = grid.ijk_of(cell);
    let centroid = grid.centroid(ijk);
    let unit = normalize_to_unit_cube(&centroid, grid.bbox())?;
    let scale = (1u64 << level) as f64;
    let lattice = |axis: usize| (unit[axis] * scale).floor() as u64;
    match encoder {
        SfcEncoder::Hilbert3dTable => {
            let coord = LatticeCoord::new(
                (0..3)
                    .map(|a| if active.contains(&a) { lattice(a) } else { 0 })
                    .collect(),
            );
            hilbert_encode_3d_table(&coord, level)
        }
        SfcEncoder::HilbertNd if active.len() >= 2 => {
            let coord = LatticeCoord::new(active.iter().map(|&a| lattice(a)).collect());
            hilbert_encode_nd(&coord, level)
        }
        // zero or one effective dimension: the curve order is the axis
        // order itself, which Morton encodes directly
        _ => {
            let components = if active.is_empty() {
                vec![0u64]
            } else {
                active.iter().map(|&a| lattice(a)).collect()
            };
            morton_encode(&LatticeCoord::new(components), level)
        }
    }
}

/// Space-filling-curve partition: cells sorted by curve key (ties broken
/// by global index) and split into `np` consecutive near-equal runs.
pub fn partition_sfc(grid: &StructuredGrid, np: usize, encoder: SfcEncoder) -> Result<Partition> {
    let n = grid.num_cells();
    check_np(np, n)?;
    let dims = grid.spec().dims();
    let active: Vec<usize> = (0..3).filter(|&a| dims[a] > 1).collect();
    // level chosen so distinct cells cannot collide in one curve cell
    let max_dim = dims.iter().copied().max().unwrap_or(1) as u64;
    let level = (64 - (max_dim - 1).leading_zeros()).max(1);

    let mut order: Vec<(CurveKey, usize)> = (0..n)
        .map(|c| cell_key(grid, encoder, level, &active, c).map(|k| (k, c)))
        .collect::<Result<_>>()?;
    order.sort_unstable_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut owner = vec![0usize; n];
    let mut at = 0;
    for (rank, run) in split_runs(n, np).into_iter().enumerate() {
        for &(_, cell) in &order[at..at + run] {
            owner[cell] = rank;
        }
        at += run;
    }
    Partition::new(owner, np)
}

/// Baseline partition: contiguous global-index slabs of near-equal size.
pub fn partition_block(grid: &StructuredGrid, np: usize) -> Result<Partition> {
    let n = grid.num_cells();
    check_np(np, n)?;
    let mut owner = vec![0usize; n];
    let mut at = 0;
    for (rank, run) in split_runs(n, np).into_iter().enumerate() {
        owner[at..at + run].fill(rank);
        at += run;
    }
    Partition::new(owner, np)
}

/// Load imbalance factor `np * max_i |G_i| / sum_i |G_i|` (1.0 is perfect).
pub fn load_imbalance(partition: &Partition) -> f64 {
    let sizes = partition.sizes();
    let max = sizes.iter().copied().max().unwrap_or(0);
    let total: usize = sizes.iter().sum();
    partition.np() as f64 * max as f64 / total as f64
}

/// Surface-index metrics.
///
/// `f_i` counts the faces of rank `i`'s sub-grid: faces interior to the
/// rank count once, faces cut by the partition count once on each side,
/// and domain-boundary faces count once.  `b_i` counts the cut faces.
#[derive(Debug, Clone)]
pub struct SurfaceIndices {
    /// `max_i b_i / f_i`
    pub max: f64,
    /// `sum b_i / (sum f_i - sum b_i)`
    pub global: f64,
    /// `(1 / np) * sum_i b_i / f_i`
    pub average: f64,
    pub boundary_faces: Vec<usize>,
    pub total_faces: Vec<usize>,
}

pub fn surface_indices(grid: &StructuredGrid, partition: &Partition) -> SurfaceIndices {
    let np = partition.np();
    let mut b = vec![0usize; np];
    let mut f = vec![0usize; np];
    for g in 0..grid.num_cells() {
        let r = partition.owner_of(g);
        for nb in grid.neighbors(g) {
            match nb {
                GlobalNeighbor::Boundary(_) => f[r] += 1,
                GlobalNeighbor::Interior(h) => {
                    let r2 = partition.owner_of(h);
                    if r2 == r {
                        // shared interior face counted once per rank
                        if h > g {
                            f[r] += 1;
                        }
                    } else {
                        f[r] += 1;
                        b[r] += 1;
                    }
                }
            }
        }
    }
    let ratios: Vec<f64> = b
        .iter()
        .zip(&f)
        .map(|(&bi, &fi)| if fi == 0 { 0.0 } else { bi as f64 / fi as f64 })
        .collect();
    let sum_b: usize = b.iter().sum();
    let sum_f: usize = f.iter().sum();
    SurfaceIndices {
        max: ratios.iter().copied().fold(0.0, f64::max),
        global: if sum_f > sum_b {
            sum_b as f64 / (sum_f - sum_b) as f64
        } else {
            0.0
        },
        average: ratios.iter().sum::<f64>() / np as f64,
        boundary_faces: b,
        total_faces: f,
    }
}

/// Inter-rank connectivity: `c_i` is the number of distinct other ranks
/// owning a neighbor of any cell of rank `i`.
#[derive(Debug, Clone)]
pub struct Connectivity {
    pub per_rank: Vec<usize>,
    pub max: usize,
}

pub fn connectivity(grid: &StructuredGrid, partition: &Partition) -> Connectivity {
    let np = partition.np();
    let mut peers: Vec<std::collections::BTreeSet<usize>> = vec![Default::default(); np];
    for g in 0..grid.num_cells() {
        let r = partition.owner_of(g);
        for nb in grid.neighbors(g) {
            if let GlobalNeighbor::Interior(h) = nb {
                let r2 = partition.owner_of(h);
                if r2 != r {
                    peers[r].insert(r2);
                }
            }
        }
    }
    let per_rank: Vec<usize> = peers.iter().map(|s| s.len()).collect();
    let max = per_rank.iter().copied().max().unwrap_or(0);
    Connectivity { per_rank, max }
}

/// All quality metrics of a partition in one record.
#[derive(Debug, Clone)]
pub struct PartitionQuality {
    pub load_imbalance: f64,
    pub surface: SurfaceIndices,
    pub connectivity: Connectivity,
}

pub fn partition_quality(grid: &StructuredGrid, partition: &Partition) -> PartitionQuality {
    PartitionQuality {
        load_imbalance: load_imbalance(partition),
        surface: surface_indices(grid, partition),
        connectivity: connectivity(grid, partition),
    }
}

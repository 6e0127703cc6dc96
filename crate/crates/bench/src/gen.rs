//! Linear-system generators on partitioned grids.
//!
//! Three families: a 7-point finite-volume Poisson operator with
//! Dirichlet-eliminated boundaries, its heterogeneous variant with a
//! seeded synthetic log-normal permeability field (a stand-in for licensed
//! field data; the contrast knob emulates its severity), and a two-unknown
//! pressure/saturation-like coupled system.  Right-hand sides are
//! manufactured as `b = A * 1`, so the exact solution is the constant one
//! vector.  Field data derive from the global cell index, which keeps a
//! given `(kind, dims, contrast, seed)` bitwise identical across rank
//! counts.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use reskit_core::error::Result;
use reskit_core::grid::{LocalGrid, Neighbor};
use reskit_core::linalg::{DistMatrix, DistVector};
use reskit_core::precond::BlockLayout;
use reskit_core::runtime::{IndexMap, RankCtx};
use std::sync::Arc;

/// Problem families reproduced by the benchmark driver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Poisson3d,
    Hetero,
    Coupled2,
}

impl ProblemKind {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "poisson3d" | "poisson" => Some(ProblemKind::Poisson3d),
            "hetero" | "hetero_pressure" => Some(ProblemKind::Hetero),
            "coupled2" => Some(ProblemKind::Coupled2),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ProblemKind::Poisson3d => "poisson3d",
            ProblemKind::Hetero => "hetero",
            ProblemKind::Coupled2 => "coupled2",
        }
    }
}

/// Generator inputs; `seed` makes every field deterministic.
#[derive(Debug, Clone, Copy)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub dims: [usize; 3],
    pub contrast: f64,
    pub seed: u64,
    /// Off-block coupling scale of the two-unknown system.
    pub coupling: f64,
}

impl ProblemSpec {
    pub fn new(kind: ProblemKind, dims: [usize; 3]) -> Self {
        ProblemSpec {
            kind,
            dims,
            contrast: 1.0,
            seed: 0,
            coupling: 0.1,
        }
    }
}

/// Generated system: matrix, right-hand side, block layout and the
/// manufactured exact solution.
pub struct Problem {
    pub a: Arc<DistMatrix>,
    pub b: DistVector,
    pub layout: BlockLayout,
    pub x_exact: DistVector,
}

/// Row map of a partitioned grid with `ndof` unknowns per cell: rank
/// sizes follow the partition, rows renumbered contiguously by rank.
pub fn grid_row_map(grid: &LocalGrid, ndof: usize) -> Arc<IndexMap> {
    let sizes: Vec<usize> = grid
        .partition()
        .sizes()
        .into_iter()
        .map(|s| s * ndof)
        .collect();
    Arc::new(IndexMap::from_sizes(&sizes, grid.rank()))
}

/// Row index of `(cell, unknown)` given a neighbor link.
fn neighbor_row(grid: &LocalGrid, map: &IndexMap, nb: &Neighbor, ndof: usize, u: usize) -> Option<usize> {
    match nb {
        Neighbor::Owned(l) => {
            Some(map.offsets()[grid.rank()] + l * ndof + u)
        }
        Neighbor::Remote(slot) => {
            let rn = grid.remote_neighbors()[*slot];
            Some(map.offsets()[rn.owner_rank] + rn.owner_local_index * ndof + u)
        }
        Neighbor::Boundary(_) => None,
    }
}

/// Global per-cell log-normal permeability with
/// `sigma = ln(contrast) / 2`; every rank generates the identical field.
pub fn lognormal_permeability(ncells: usize, contrast: f64, seed: u64) -> Vec<f64> {
    let sigma = if contrast > 1.0 { contrast.ln() / 2.0 } else { 0.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    (0..ncells)
        .map(|_| (sigma * normal.sample(&mut rng)).exp())
        .collect()
}

/// Face transmissibility between a cell and its neighbor across `face`:
/// harmonic average of the two half-cell conductances.
fn face_transmissibility(grid: &LocalGrid, local: usize, face: usize, perm: &[f64]) -> f64 {
    let global = grid.global();
    let g = grid.global_of_local(local);
    let ijk = global.ijk_of(g);
    let axis = face / 2;
    let area = global.face_areas(ijk)[face];
    let d1 = 0.5 * global.spacing(ijk)[axis];
    let k1 = perm[g];
    match grid.neighbors(local)[face] {
        Neighbor::Boundary(_) => area * k1 / d1,
        Neighbor::Owned(l2) => {
            let g2 = grid.global_of_local(l2);
            let d2 = 0.5 * global.spacing(global.ijk_of(g2))[axis];
            area / (d1 / k1 + d2 / perm[g2])
        }
        Neighbor::Remote(slot) => {
            let g2 = grid.remote_neighbors()[slot].global_index;
            let d2 = 0.5 * global.spacing(global.ijk_of(g2))[axis];
            area / (d1 / k1 + d2 / perm[g2])
        }
    }
}

fn manufactured_rhs(ctx: &RankCtx, a: &DistMatrix, map: &Arc<IndexMap>) -> Result<(DistVector, DistVector)> {
    let x_exact = DistVector::from_owned(Arc::clone(map), vec![1.0; map.nlocal()])?;
    let mut b = DistVector::zeros(Arc::clone(map));
    a.spmv(ctx, 1.0, &x_exact, 0.0, &mut b)?;
    Ok((b, x_exact))
}

/// Scalar 7-point diffusion operator with the given permeability field;
/// Dirichlet boundaries are folded into the diagonal.
fn diffusion_matrix(
    ctx: &RankCtx,
    grid: &LocalGrid,
    perm: &[f64],
) -> Result<(Arc<IndexMap>, DistMatrix)> {
    let map = grid_row_map(grid, 1);
    let mut a = DistMatrix::new(Arc::clone(&map));
    let row_lo = map.offsets()[grid.rank()];
    for l in 0..grid.num_owned() {
        let row = row_lo + l;
        let mut diag = 0.0;
        for face in 0..6 {
            let t = face_transmissibility(grid, l, face, perm);
            diag += t;
            if let Some(col) = neighbor_row(grid, &map, &grid.neighbors(l)[face], 1, 0) {
                a.add(row, col, -t)?;
            }
        }
        a.add(row, row, diag)?;
    }
    a.assemble(ctx)?;
    Ok((map, a))
}

/// 7-point Poisson operator (`b = A * 1`).
pub fn gen_poisson3d(ctx: &RankCtx, grid: &LocalGrid) -> Result<Problem> {
    let perm = vec![1.0; grid.global().num_cells()];
    let (map, a) = diffusion_matrix(ctx, grid, &perm)?;
    let a = Arc::new(a);
    let (b, x_exact) = manufactured_rhs(ctx, &a, &map)?;
    Ok(Problem {
        a,
        b,
        layout: BlockLayout::scalar(),
        x_exact,
    })
}

/// Heterogeneous pressure operator: log-normal cell permeabilities,
/// harmonically averaged on faces; symmetric positive definite.
pub fn gen_hetero_pressure(
    ctx: &RankCtx,
    grid: &LocalGrid,
    contrast: f64,
    seed: u64,
) -> Result<Problem> {
    let perm = lognormal_permeability(grid.global().num_cells(), contrast, seed);
    let (map, a) = diffusion_matrix(ctx, grid, &perm)?;
    let a = Arc::new(a);
    let (b, x_exact) = manufactured_rhs(ctx, &a, &map)?;
    Ok(Problem {
        a,
        b,
        layout: BlockLayout::scalar(),
        x_exact,
    })
}

/// Two unknowns per cell, interleaved `(p, s)`: heterogeneous diffusion on
/// the pressure block, a well-conditioned mass-like saturation block, and
/// weak block couplings bounded by `coupling` times the diagonals.
pub fn gen_coupled2(
    ctx: &RankCtx,
    grid: &LocalGrid,
    contrast: f64,
    seed: u64,
    coupling: f64,
) -> Result<Problem> {
    let ncells = grid.global().num_cells();
    let perm = lognormal_permeability(ncells, contrast, seed);
    // independent coupling signs per cell, same stream on every rank
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let theta_ps: Vec<f64> = (0..ncells).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let theta_sp: Vec<f64> = (0..ncells).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let map = grid_row_map(grid, 2);
    let mut a = DistMatrix::new(Arc::clone(&map));
    let row_lo = map.offsets()[grid.rank()];
    const SS_DIAG: f64 = 1.0;
    const SS_NEIGHBOR: f64 = 0.05;
    for l in 0..grid.num_owned() {
        let g = grid.global_of_local(l);
        let p_row = row_lo + 2 * l;
        let s_row = p_row + 1;

        // pressure row: diffusion over pressure unknowns
        let mut diag = 0.0;
        for face in 0..6 {
            let t = face_transmissibility(grid, l, face, &perm);
            diag += t;
            if let Some(col) = neighbor_row(grid, &map, &grid.neighbors(l)[face], 2, 0) {
                a.add(p_row, col, -t)?;
            }
        }
        a.add(p_row, p_row, diag)?;
        a.add(p_row, s_row, coupling * theta_ps[g] * diag)?;

        // saturation-like row: dominant mass block with weak couplings
        a.add(s_row, s_row, SS_DIAG)?;
        for face in 0..6 {
            if let Some(col) = neighbor_row(grid, &map, &grid.neighbors(l)[face], 2, 1) {
                a.add(s_row, col, SS_NEIGHBOR)?;
            }
        }
        a.add(s_row, p_row, coupling * theta_sp[g] * SS_DIAG)?;
    }
    a.assemble(ctx)?;
    let a = Arc::new(a);
    let (b, x_exact) = manufactured_rhs(ctx, &a, &map)?;
    Ok(Problem {
        a,
        b,
        layout: BlockLayout::new(2, 0)?,
        x_exact,
    })
}

/// Build the problem named by `spec` on an already partitioned grid.
pub fn build_problem(ctx: &RankCtx, spec: &ProblemSpec, grid: &LocalGrid) -> Result<Problem> {
    match spec.kind {
        ProblemKind::Poisson3d => gen_poisson3d(ctx, grid),
        ProblemKind::Hetero => gen_hetero_pressure(ctx, grid, spec.contrast, spec.seed),
        ProblemKind::Coupled2 => {
            gen_coupled2(ctx, grid, spec.contrast, spec.seed, spec.coupling)
        }
    }
}

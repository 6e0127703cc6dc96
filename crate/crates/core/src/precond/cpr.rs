//! Multi-stage preconditioners combining a multigrid solve on the
//! pressure sub-block with whole-system Schwarz smoothing stages.
//!
//! The system interleaves unknowns cell by cell; the restriction picks the
//! pressure row of every cell and the prolongation scatters a pressure
//! increment back with zeros elsewhere.  Four stage sequences are
//! provided: FP, PF, FPF and FFPF, where F is a full-system correction
//! and P the pressure correction.

use super::amg::{AmgParams, AmgPc};
use super::ras::{ras_setup, RasParams};
use crate::error::{Error, Result};
use crate::krylov::Precond;
use crate::linalg::{axpby, DenseLu, DistMatrix, DistVector};
use crate::runtime::{IndexMap, RankCtx};
use std::sync::Arc;

/// Which row inside each cell block is the pressure unknown.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockLayout {
    pub unknowns_per_cell: usize,
    pub pressure_index: usize,
}

impl BlockLayout {
    pub fn new(unknowns_per_cell: usize, pressure_index: usize) -> Result<Self> {
        if unknowns_per_cell == 0 {
            return Err(Error::InvalidLayout(
                "a cell needs at least one unknown".into(),
            ));
        }
        if pressure_index >= unknowns_per_cell {
            return Err(Error::InvalidLayout(format!(
                "pressure index {pressure_index} outside a block of {unknowns_per_cell}"
            )));
        }
        Ok(BlockLayout {
            unknowns_per_cell,
            pressure_index,
        })
    }

    /// Single-unknown layout: the whole system is the pressure system.
    pub fn scalar() -> Self {
        BlockLayout {
            unknowns_per_cell: 1,
            pressure_index: 0,
        }
    }
}

/// Stage sequence variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CprVariant {
    Fp,
    Pf,
    Fpf,
    Ffpf,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CprParams {
    pub ras: RasParams,
    pub amg: AmgParams,
    /// Optional cell-block diagonal scaling applied to the pressure
    /// extraction and restriction (off by default; the unscaled algorithms
    /// are the reference behavior).
    pub decouple: bool,
}

/// Assembled multi-stage preconditioner.
pub struct CprData {
    variant: CprVariant,
    layout: BlockLayout,
    a: Arc<DistMatrix>,
    full_solver: Box<dyn Precond>,
    pressure_solver: Box<dyn Precond>,
    pressure_map: Arc<IndexMap>,
    /// Row-major per-cell inverse diagonal blocks when decoupling is on.
    block_inv: Option<Vec<f64>>,
}

/// Pressure-space index map derived from the full-system map.
pub fn pressure_index_map(a: &DistMatrix, layout: &BlockLayout) -> Result<Arc<IndexMap>> {
    let nu = layout.unknowns_per_cell;
    let offsets = a.row_map().offsets();
    if offsets.iter().any(|&o| !o.is_multiple_of(nu)) {
        return Err(Error::InvalidLayout(format!(
            "row distribution is not aligned to blocks of {nu}"
        )));
    }
    let p_offsets: Vec<usize> = offsets.iter().map(|&o| o / nu).collect();
    Ok(Arc::new(IndexMap::new(
        Arc::new(p_offsets),
        a.row_map().rank(),
    )))
}

/// Per-cell inverse of the `nu x nu` diagonal block.
fn invert_diagonal_blocks(a: &DistMatrix, layout: &BlockLayout) -> Result<Vec<f64>> {
    let nu = layout.unknowns_per_cell;
    let csr = a.local_csr()?;
    let col_map = a.col_map()?;
    let rank = a.row_map().rank();
    let row_lo = a.row_map().offsets()[rank];
    let ncells = csr.num_rows / nu;
    let mut out = vec![0.0; ncells * nu * nu];
    for cell in 0..ncells {
        let base = row_lo + cell * nu;
        let mut block = vec![0.0; nu * nu];
        for u in 0..nu {
            let (cols, vals) = csr.row(cell * nu + u);
            for (&c, &v) in cols.iter().zip(vals) {
                let g = col_map.global_of_local(c);
                if g >= base && g < base + nu {
                    block[u * nu + (g - base)] += v;
                }
            }
        }
        let lu = DenseLu::factor(nu, block)?;
        for w in 0..nu {
            let mut e = vec![0.0; nu];
            e[w] = 1.0;
            let col = lu.solve(&e);
            for u in 0..nu {
                out[cell * nu * nu + u * nu + w] = col[u];
            }
        }
    }
    Ok(out)
}

/// Extract the pressure sub-matrix `A_pp` (pressure rows and columns),
/// optionally from the block-scaled system.
pub fn extract_pressure_matrix(
    ctx: &RankCtx,
    a: &DistMatrix,
    layout: &BlockLayout,
    pressure_map: &Arc<IndexMap>,
    block_inv: Option<&[f64]>,
) -> Result<DistMatrix> {
    let nu = layout.unknowns_per_cell;
    let p_idx = layout.pressure_index;
    let csr = a.local_csr()?;
    let col_map = a.col_map()?;
    let rank = a.row_map().rank();
    let row_lo = a.row_map().offsets()[rank];
    let ncells = csr.num_rows / nu;

    let mut app = DistMatrix::new(Arc::clone(pressure_map));
    for cell in 0..ncells {
        let prow_global = (row_lo / nu) + cell;
        match block_inv {
            None => {
                let (cols, vals) = csr.row(cell * nu + p_idx);
                for (&c, &v) in cols.iter().zip(vals) {
                    let g = col_map.global_of_local(c);
                    if g % nu == p_idx {
                        app.add(prow_global, g / nu, v)?;
                    }
                }
            }
            Some(inv) => {
                // scaled pressure row: sum_w inv[p][w] * row_w
                for w in 0..nu {
                    let coeff = inv[cell * nu * nu + p_idx * nu + w];
                    if coeff == 0.0 {
                        continue;
                    }
                    let (cols, vals) = csr.row(cell * nu + w);
                    for (&c, &v) in cols.iter().zip(vals) {
                        let g = col_map.global_of_local(c);
                        if g % nu == p_idx {
                            app.add(prow_global, g / nu, coeff * v)?;
                        }
                    }
                }
            }
        }
    }
    app.assemble(ctx)?;
    Ok(app)
}

/// Build the preconditioner: pressure sub-matrix with a multigrid
/// hierarchy on it, plus an overlapping Schwarz solver on the full system.
pub fn cpr_setup(
    ctx: &RankCtx,
    a: Arc<DistMatrix>,
    layout: BlockLayout,
    variant: CprVariant,
    params: CprParams,
) -> Result<CprData> {
    let pressure_map = pressure_index_map(&a, &layout)?;
    let block_inv = if params.decouple {
        Some(invert_diagonal_blocks(&a, &layout)?)
    } else {
        None
    };
    let app = extract_pressure_matrix(ctx, &a, &layout, &pressure_map, block_inv.as_deref())?;
    let amg = AmgPc::setup(ctx, app, params.amg)?;
    let ras = ras_setup(ctx, &a, params.ras)?;
    Ok(CprData {
        variant,
        layout,
        a,
        full_solver: Box::new(ras),
        pressure_solver: Box::new(amg),
        pressure_map,
        block_inv,
    })
}

impl CprData {
    /// Assemble a CPR preconditioner around externally supplied stage
    /// solvers (`full` on the whole system, `pressure` on the pressure
    /// map).  Used to study the stage algebra with exact solvers.
    pub fn with_solvers(
        a: Arc<DistMatrix>,
        layout: BlockLayout,
        variant: CprVariant,
        full: Box<dyn Precond>,
        pressure: Box<dyn Precond>,
    ) -> Result<Self> {
        let pressure_map = pressure_index_map(&a, &layout)?;
        Ok(CprData {
            variant,
            layout,
            a,
            full_solver: full,
            pressure_solver: pressure,
            pressure_map,
            block_inv: None,
        })
    }

    pub fn variant(&self) -> CprVariant {
        self.variant
    }

    pub fn pressure_map(&self) -> &Arc<IndexMap> {
        &self.pressure_map
    }

    /// Restriction `r_p = Pi_r r` (block-scaled when decoupling is on).
    pub fn restrict_pressure(&self, r: &DistVector) -> DistVector {
        let nu = self.layout.unknowns_per_cell;
        let p_idx = self.layout.pressure_index;
        let ncells = self.pressure_map.nlocal();
        let mut rp = DistVector::zeros(Arc::clone(&self.pressure_map));
        match &self.block_inv {
            None => {
                for cell in 0..ncells {
                    rp.owned_mut()[cell] = r.owned()[cell * nu + p_idx];
                }
            }
            Some(inv) => {
                for cell in 0..ncells {
                    let mut s = 0.0;
                    for w in 0..nu {
                        s += inv[cell * nu * nu + p_idx * nu + w] * r.owned()[cell * nu + w];
                    }
                    rp.owned_mut()[cell] = s;
                }
            }
        }
        rp
    }

    /// Prolongation `Pi_p p`: pressure entries filled, the rest zero.
    pub fn prolong_pressure(&self, xp: &DistVector, full: &mut DistVector) {
        let nu = self.layout.unknowns_per_cell;
        let p_idx = self.layout.pressure_index;
        full.fill(0.0);
        for cell in 0..self.pressure_map.nlocal() {
            full.owned_mut()[cell * nu + p_idx] = xp.owned()[cell];
        }
    }

    fn pressure_correction(&self, ctx: &RankCtx, r: &DistVector) -> Result<DistVector> {
        let rp = self.restrict_pressure(r);
        let mut xp = DistVector::zeros(Arc::clone(&self.pressure_map));
        self.pressure_solver.apply(ctx, &rp, &mut xp)?;
        let mut full = DistVector::zeros(Arc::clone(r.map()));
        self.prolong_pressure(&xp, &mut full);
        Ok(full)
    }

    fn full_correction(&self, ctx: &RankCtx, r: &DistVector) -> Result<DistVector> {
        let mut z = DistVector::zeros(Arc::clone(r.map()));
        self.full_solver.apply(ctx, r, &mut z)?;
        Ok(z)
    }

    fn residual(&self, ctx: &RankCtx, f: &DistVector, x: &DistVector) -> Result<DistVector> {
        let mut r = f.clone();
        self.a.spmv(ctx, -1.0, x, 1.0, &mut r)?;
        Ok(r)
    }
}

/// Run the variant's stage sequence on `f`.
pub fn cpr_apply(ctx: &RankCtx, cpr: &CprData, f: &DistVector, x: &mut DistVector) -> Result<()> {
    match cpr.variant {
        CprVariant::Fp => {
            let mut acc = cpr.full_correction(ctx, f)?;
            let r = cpr.residual(ctx, f, &acc)?;
            let p = cpr.pressure_correction(ctx, &r)?;
            axpby(1.0, &p, 1.0, &mut acc)?;
            axpby(1.0, &acc, 0.0, x)
        }
        CprVariant::Pf => {
            let mut acc = cpr.pressure_correction(ctx, f)?;
            let r = cpr.residual(ctx, f, &acc)?;
            let s = cpr.full_correction(ctx, &r)?;
            axpby(1.0, &s, 1.0, &mut acc)?;
            axpby(1.0, &acc, 0.0, x)
        }
        CprVariant::Fpf => {
            let mut acc = cpr.full_correction(ctx, f)?;
            let r = cpr.residual(ctx, f, &acc)?;
            let p = cpr.pressure_correction(ctx, &r)?;
            axpby(1.0, &p, 1.0, &mut acc)?;
            let r2 = cpr.residual(ctx, f, &acc)?;
            let s = cpr.full_correction(ctx, &r2)?;
            axpby(1.0, &s, 1.0, &mut acc)?;
            axpby(1.0, &acc, 0.0, x)
        }
        CprVariant::Ffpf => {
            let mut acc = cpr.full_correction(ctx, f)?;
            let r = cpr.residual(ctx, f, &acc)?;
            let s = cpr.full_correction(ctx, &r)?;
            axpby(1.0, &s, 1.0, &mut acc)?;
            let r2 = cpr.residual(ctx, f, &acc)?;
            let p = cpr.pressure_correction(ctx, &r2)?;
            axpby(1.0, &p, 1.0, &mut acc)?;
            let r3 = cpr.residual(ctx, f, &acc)?;
            let s2 = cpr.full_correction(ctx, &r3)?;
            axpby(1.0, &s2, 1.0, &mut acc)?;
            axpby(1.0, &acc, 0.0, x)
        }
    }
}

impl Precond for CprData {
    fn apply(&self, ctx: &RankCtx, r: &DistVector, z: &mut DistVector) -> Result<()> {
        cpr_apply(ctx, self, r, z)
    }
}

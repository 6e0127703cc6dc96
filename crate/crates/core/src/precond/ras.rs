//! Restricted additive Schwarz preconditioner.
//!
//! Setup gathers the owned rows plus `overlap` layers of neighbor rows,
//! filters small off-diagonal couplings, and factors the local overlapped
//! block with an incomplete LU.  Apply solves the local system on the
//! overlapped block and writes back only the owned entries.

use super::ilu::{ilu_factor, lu_solve_into, IluFactors, IluVariant};
use crate::error::{Error, Result};
use crate::krylov::Precond;
use crate::linalg::{CsrMatrix, DistMatrix, DistVector};
use crate::runtime::{build_comm_plan, exchange, CommPlan, RankCtx};
use std::collections::{BTreeMap, BTreeSet};

/// Local subdomain solver choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocalSolver {
    Iluk,
    Ilut,
}

/// RAS parameters; the defaults are overlap 1 with an ILU(0) local solver,
/// `ilut_p = -1` (unlimited fill), `ilut_tol = 1e-3`, `filter_tol = 1e-4`.
#[derive(Debug, Clone, Copy)]
pub struct RasParams {
    pub overlap: usize,
    pub iluk_level: usize,
    pub ilut_p: i64,
    pub solver: LocalSolver,
    pub ilut_tol: f64,
    pub filter_tol: f64,
    /// Accepted for compatibility; no drop rule is attached to it.
    pub ilutc_drop: i64,
}

impl Default for RasParams {
    fn default() -> Self {
        RasParams {
            overlap: 1,
            iluk_level: 0,
            ilut_p: -1,
            solver: LocalSolver::Iluk,
            ilut_tol: 1e-3,
            filter_tol: 1e-4,
            ilutc_drop: 0,
        }
    }
}

impl RasParams {
    fn variant(&self) -> IluVariant {
        match self.solver {
            LocalSolver::Iluk => {
                if self.iluk_level == 0 {
                    IluVariant::Ilu0
                } else {
                    IluVariant::Iluk(self.iluk_level)
                }
            }
            LocalSolver::Ilut => IluVariant::Ilut {
                p: usize::try_from(self.ilut_p).ok(),
                tol: self.ilut_tol,
            },
        }
    }
}

/// Factored overlapped subdomain of one rank.
#[derive(Debug)]
pub struct RasData {
    params: RasParams,
    n_owned: usize,
    /// Owned rows (ascending), then overlap rows (ascending).
    ext_globals: Vec<usize>,
    factors: IluFactors,
    plan: CommPlan,
}

/// Build the overlapped local problem and factor it; collective.
pub fn ras_setup(ctx: &RankCtx, a: &DistMatrix, params: RasParams) -> Result<RasData> {
    if params.ilutc_drop != 0 {
        log::warn!(
            "ras: ilutc_drop = {} has no effect and is ignored",
            params.ilutc_drop
        );
    }
    let row_map = a.row_map().clone();
    let rank = row_map.rank();
    let row_lo = row_map.offsets()[rank];
    let row_hi = row_map.offsets()[rank + 1];

    // rows of the overlapped block, keyed by global row, cols global
    let mut rows: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
    let local = a.local_csr()?;
    let col_map = a.col_map()?.clone();
    for l in 0..local.num_rows {
        let (cols, vals) = local.row(l);
        rows.insert(
            row_lo + l,
            cols.iter()
                .zip(vals)
                .map(|(&c, &v)| (col_map.global_of_local(c), v))
                .collect(),
        );
    }

    // expand by `overlap` layers; every rank runs the same number of
    // collective fetch rounds
    for _ in 0..params.overlap {
        let mut frontier: BTreeSet<usize> = BTreeSet::new();
        for row in rows.values() {
            for &(g, _) in row {
                if !rows.contains_key(&g) {
                    frontier.insert(g);
                }
            }
        }
        let wanted: Vec<usize> = frontier.into_iter().collect();
        for (g, row) in a.gather_rows(ctx, &wanted)? {
            rows.insert(g, row);
        }
    }

    let n_owned = row_hi - row_lo;
    let mut overlap_rows: Vec<usize> = rows.keys().copied().filter(|&g| !(row_lo..row_hi).contains(&g)).collect();
    overlap_rows.sort_unstable();
    let mut ext_globals: Vec<usize> = (row_lo..row_hi).collect();
    ext_globals.extend_from_slice(&overlap_rows);

    let local_of = |g: usize| -> Option<usize> {
        if (row_lo..row_hi).contains(&g) {
            Some(g - row_lo)
        } else {
            overlap_rows
                .binary_search(&g)
                .ok()
                .map(|p| n_owned + p)
        }
    };

    // restrict columns to the block and filter small off-diagonals
    let n_ext = ext_globals.len();
    let mut row_ptr = vec![0usize];
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    for (li, &g) in ext_globals.iter().enumerate() {
        let full = &rows[&g];
        let diag = full
            .iter()
            .find(|&&(c, _)| c == g)
            .map(|&(_, v)| v.abs())
            .unwrap_or(0.0);
        let mut entries: Vec<(usize, f64)> = full
            .iter()
            .filter_map(|&(gc, v)| local_of(gc).map(|lc| (lc, v)))
            .filter(|&(lc, v)| lc == li || v.abs() >= params.filter_tol * diag)
            .collect();
        entries.sort_unstable_by_key(|&(c, _)| c);
        for (c, v) in entries {
            col_idx.push(c);
            values.push(v);
        }
        row_ptr.push(col_idx.len());
    }
    let block = CsrMatrix::new(n_ext, n_ext, row_ptr, col_idx, values)?;
    let factors = ilu_factor(&block, params.variant()).map_err(|e| match e {
        Error::SingularPivot { row } => Error::SingularPivot {
            row: ext_globals[row],
        },
        other => other,
    })?;

    let plan = build_comm_plan(
        ctx,
        &overlap_rows,
        &|g| row_map.owner_of(g),
        &|g| row_map.owns(g).then(|| g - row_lo),
    )?;

    Ok(RasData {
        params,
        n_owned,
        ext_globals,
        factors,
        plan,
    })
}

impl RasData {
    pub fn params(&self) -> &RasParams {
        &self.params
    }

    pub fn overlapped_size(&self) -> usize {
        self.ext_globals.len()
    }

    pub fn factors(&self) -> &IluFactors {
        &self.factors
    }
}

/// Apply one RAS correction `z ~ A^-1 r`; collective.  Only owned entries
/// of `z` are written.
pub fn ras_apply(ctx: &RankCtx, ras: &RasData, r: &DistVector, z: &mut DistVector) -> Result<()> {
    let mut rhs = vec![0.0; ras.ext_globals.len()];
    rhs[..ras.n_owned].copy_from_slice(r.owned());
    let (owned_part, overlap_part) = rhs.split_at_mut(ras.n_owned);
    exchange(ctx, &ras.plan, owned_part, overlap_part, 1)?;
    lu_solve_into(&ras.factors, &mut rhs);
    z.owned_mut().copy_from_slice(&rhs[..ras.n_owned]);
    Ok(())
}

impl Precond for RasData {
    fn apply(&self, ctx: &RankCtx, r: &DistVector, z: &mut DistVector) -> Result<()> {
        ras_apply(ctx, self, r, z)
    }
}

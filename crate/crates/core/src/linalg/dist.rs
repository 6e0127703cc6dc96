//! Row-distributed sparse matrices and vectors.

use super::csr::CsrMatrix;
use crate::error::{Error, Result};
use crate::runtime::{build_comm_plan, exchange, CommPlan, IndexMap, RankCtx};
use std::collections::BTreeSet;
use std::sync::Arc;

/// Sparse row as `(global column, value)` pairs.
pub type SparseRowEntries = Vec<(usize, f64)>;

/// Distributed vector: owned entries first, then halo slots as laid out by
/// the index map.  Owned entries are authoritative; halo entries are valid
/// only after an exchange.
#[derive(Debug, Clone)]
pub struct DistVector {
    map: Arc<IndexMap>,
    pub values: Vec<f64>,
}

impl DistVector {
    pub fn zeros(map: Arc<IndexMap>) -> Self {
        let n = map.ntlocal();
        DistVector {
            map,
            values: vec![0.0; n],
        }
    }

    pub fn from_owned(map: Arc<IndexMap>, owned: Vec<f64>) -> Result<Self> {
        if owned.len() != map.nlocal() {
            return Err(Error::MapMismatch);
        }
        let mut values = owned;
        values.resize(map.ntlocal(), 0.0);
        Ok(DistVector { map, values })
    }

    pub fn map(&self) -> &Arc<IndexMap> {
        &self.map
    }

    pub fn nlocal(&self) -> usize {
        self.map.nlocal()
    }

    pub fn owned(&self) -> &[f64] {
        &self.values[..self.map.nlocal()]
    }

    pub fn owned_mut(&mut self) -> &mut [f64] {
        let n = self.map.nlocal();
        &mut self.values[..n]
    }

    pub fn fill(&mut self, v: f64) {
        self.owned_mut().fill(v);
    }
}

fn check_same(a: &IndexMap, b: &IndexMap) -> Result<()> {
    if a.same_distribution(b) {
        Ok(())
    } else {
        Err(Error::MapMismatch)
    }
}

/// `y = alpha * x + beta * y` over owned entries.
pub fn axpby(alpha: f64, x: &DistVector, beta: f64, y: &mut DistVector) -> Result<()> {
    check_same(x.map(), y.map())?;
    for (yi, &xi) in y.owned_mut().iter_mut().zip(x.owned()) {
        *yi = alpha * xi + beta * *yi;
    }
    Ok(())
}

/// `z = alpha * x + beta * y` over owned entries.
pub fn axpbyz(
    alpha: f64,
    x: &DistVector,
    beta: f64,
    y: &DistVector,
    z: &mut DistVector,
) -> Result<()> {
    check_same(x.map(), y.map())?;
    check_same(x.map(), z.map())?;
    let n = z.map.nlocal();
    for i in 0..n {
        z.values[i] = alpha * x.values[i] + beta * y.values[i];
    }
    Ok(())
}

/// Inner product over owned entries: per-rank partial sums combined in
/// ascending rank order.
pub fn dot(ctx: &RankCtx, x: &DistVector, y: &DistVector) -> Result<f64> {
    check_same(x.map(), y.map())?;
    let mut partial = 0.0;
    for (&a, &b) in x.owned().iter().zip(y.owned()) {
        partial += a * b;
    }
    ctx.allreduce_sum(partial)
}

/// Euclidean norm `sqrt(<x, x>)`.
pub fn norm2(ctx: &RankCtx, x: &DistVector) -> Result<f64> {
    Ok(dot(ctx, x, x)?.sqrt())
}

/// Row-distributed sparse matrix.
///
/// Rows are added by global index pre-assembly; `assemble` resolves
/// off-process columns into an ordered halo (ascending global index),
/// builds the exchange plan and packs the rows into a local CSR whose row
/// entries are ordered by global column, so distributed products sum in
/// the same order as a single-rank run.
#[derive(Debug, Clone)]
pub struct DistMatrix {
    row_map: Arc<IndexMap>,
    col_offsets: Arc<Vec<usize>>,
    pending: Option<Vec<Vec<(usize, f64)>>>,
    local: Option<CsrMatrix>,
    col_map: Option<Arc<IndexMap>>,
    plan: Option<CommPlan>,
}

impl DistMatrix {
    /// Square matrix: columns distributed like rows.
    pub fn new(map: Arc<IndexMap>) -> Self {
        let col_offsets = map.offsets_arc();
        DistMatrix::new_rect(map, col_offsets)
    }

    /// Rectangular matrix with its own column distribution.
    pub fn new_rect(row_map: Arc<IndexMap>, col_offsets: Arc<Vec<usize>>) -> Self {
        let nlocal = row_map.nlocal();
        DistMatrix {
            row_map,
            col_offsets,
            pending: Some(vec![Vec::new(); nlocal]),
            local: None,
            col_map: None,
            plan: None,
        }
    }

    pub fn row_map(&self) -> &Arc<IndexMap> {
        &self.row_map
    }

    pub fn num_global_rows(&self) -> usize {
        self.row_map.nglobal()
    }

    pub fn num_global_cols(&self) -> usize {
        *self.col_offsets.last().unwrap()
    }

    pub fn is_assembled(&self) -> bool {
        self.local.is_some()
    }

    /// Add `value` at `(global_row, global_col)`; duplicate contributions sum.
    pub fn add(&mut self, global_row: usize, global_col: usize, value: f64) -> Result<()> {
        let pending = self.pending.as_mut().ok_or(Error::AlreadyAssembled)?;
        if !self.row_map.owns(global_row) {
            return Err(Error::WrongOwner {
                row: global_row,
                rank: self.row_map.rank(),
            });
        }
        if global_col >= *self.col_offsets.last().unwrap() {
            return Err(Error::InvalidArgument(format!(
                "column {global_col} outside the matrix"
            )));
        }
        let local = global_row - self.row_map.offsets()[self.row_map.rank()];
        pending[local].push((global_col, value));
        Ok(())
    }

    /// Resolve off-process columns, build the halo plan and pack the local
    /// CSR; collective, and the matrix becomes read-only afterwards.
    pub fn assemble(&mut self, ctx: &RankCtx) -> Result<()> {
        let mut rows = self.pending.take().ok_or(Error::AlreadyAssembled)?;
        let rank = self.row_map.rank();
        let col_lo = self.col_offsets[rank];
        let col_hi = self.col_offsets[rank + 1];

        let mut halo_set: BTreeSet<usize> = BTreeSet::new();
        for row in &rows {
            for &(c, _) in row {
                if c < col_lo || c >= col_hi {
                    halo_set.insert(c);
                }
            }
        }
        let halo: Vec<usize> = halo_set.into_iter().collect();
        let col_map = Arc::new(
            IndexMap::new(Arc::clone(&self.col_offsets), rank).with_halo(halo.clone()),
        );
        let plan = build_comm_plan(
            ctx,
            &halo,
            &|g| col_map.owner_of(g),
            &|g| col_map.owns(g).then(|| g - col_lo),
        )?;

        let n_owned_cols = col_hi - col_lo;
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in &mut rows {
            // stable sort by global column keeps duplicate summation order
            // deterministic for a fixed add sequence
            row.sort_by_key(|&(c, _)| c);
            let mut it = row.iter().peekable();
            while let Some(&(c, v)) = it.next() {
                let mut sum = v;
                while let Some(&&(c2, v2)) = it.peek() {
                    if c2 != c {
                        break;
                    }
                    sum += v2;
                    it.next();
                }
                let local_col = if (col_lo..col_hi).contains(&c) {
                    c - col_lo
                } else {
                    n_owned_cols + halo.binary_search(&c).expect("halo column recorded")
                };
                col_idx.push(local_col);
                values.push(sum);
            }
            row_ptr.push(col_idx.len());
        }
        self.local = Some(CsrMatrix::new(
            rows.len(),
            n_owned_cols + halo.len(),
            row_ptr,
            col_idx,
            values,
        )?);
        self.col_map = Some(col_map);
        self.plan = Some(plan);
        Ok(())
    }

    /// Local CSR over owned rows; columns are owned-then-halo local indices.
    pub fn local_csr(&self) -> Result<&CsrMatrix> {
        self.local.as_ref().ok_or(Error::NotAssembled)
    }

    /// Owned copy of the local CSR.
    pub fn extract_local_csr(&self) -> Result<CsrMatrix> {
        self.local_csr().cloned()
    }

    /// Off-process columns in halo order (ascending global index).
    pub fn halo_columns(&self) -> Result<&[usize]> {
        Ok(self
            .col_map
            .as_ref()
            .ok_or(Error::NotAssembled)?
            .halo_globals())
    }

    pub fn col_map(&self) -> Result<&Arc<IndexMap>> {
        self.col_map.as_ref().ok_or(Error::NotAssembled)
    }

    /// Global column index of a local CSR column.
    pub fn global_col(&self, local_col: usize) -> Result<usize> {
        Ok(self.col_map()?.global_of_local(local_col))
    }

    /// Column vector values (owned + halo) gathered for a product.
    pub(crate) fn gather_column_values(&self, ctx: &RankCtx, x: &DistVector) -> Result<Vec<f64>> {
        let plan = self.plan.as_ref().ok_or(Error::NotAssembled)?;
        let rank = self.row_map.rank();
        let n_owned = self.col_offsets[rank + 1] - self.col_offsets[rank];
        if x.nlocal() != n_owned || x.map().nglobal() != self.num_global_cols() {
            return Err(Error::MapMismatch);
        }
        let mut xt = vec![0.0; n_owned + plan.recv_size()];
        xt[..n_owned].copy_from_slice(x.owned());
        let (owned_part, halo_part) = xt.split_at_mut(n_owned);
        exchange(ctx, plan, owned_part, halo_part, 1)?;
        Ok(xt)
    }

    /// `y = alpha * A * x + beta * y`; exchanges the halo of `x` first.
    pub fn spmv(
        &self,
        ctx: &RankCtx,
        alpha: f64,
        x: &DistVector,
        beta: f64,
        y: &mut DistVector,
    ) -> Result<()> {
        check_same_offsets(y.map().offsets(), self.row_map.offsets())?;
        let xt = self.gather_column_values(ctx, x)?;
        let a = self.local.as_ref().ok_or(Error::NotAssembled)?;
        for i in 0..a.num_rows {
            let (cols, vals) = a.row(i);
            let mut s = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                s += v * xt[c];
            }
            y.values[i] = alpha * s + beta * y.values[i];
        }
        Ok(())
    }

    /// `z = alpha * A * x + beta * y`.
    pub fn spmv_into(
        &self,
        ctx: &RankCtx,
        alpha: f64,
        x: &DistVector,
        beta: f64,
        y: &DistVector,
        z: &mut DistVector,
    ) -> Result<()> {
        check_same_offsets(y.map().offsets(), self.row_map.offsets())?;
        check_same_offsets(z.map().offsets(), self.row_map.offsets())?;
        let xt = self.gather_column_values(ctx, x)?;
        let a = self.local.as_ref().ok_or(Error::NotAssembled)?;
        for i in 0..a.num_rows {
            let (cols, vals) = a.row(i);
            let mut s = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                s += v * xt[c];
            }
            z.values[i] = alpha * s + beta * y.values[i];
        }
        Ok(())
    }

    /// Fetch rows by global index from their owners; collective.  Returned
    /// rows carry global column indices, in the order of `wanted`.
    pub fn gather_rows(
        &self,
        ctx: &RankCtx,
        wanted: &[usize],
    ) -> Result<Vec<(usize, SparseRowEntries)>> {
        let a = self.local.as_ref().ok_or(Error::NotAssembled)?;
        let col_map = self.col_map.as_ref().unwrap();
        let np = ctx.nprocs();
        let rank = ctx.rank();
        let row_lo = self.row_map.offsets()[rank];

        let local_row = |g: usize| -> Result<SparseRowEntries> {
            let (cols, vals) = a.row(g - row_lo);
            Ok(cols
                .iter()
                .zip(vals)
                .map(|(&c, &v)| (col_map.global_of_local(c), v))
                .collect())
        };

        let mut requests: Vec<Vec<usize>> = vec![Vec::new(); np];
        for &g in wanted {
            if g >= self.num_global_rows() {
                return Err(Error::InvalidArgument(format!(
                    "requested row {g} outside the matrix"
                )));
            }
            let owner = self.row_map.owner_of(g);
            if owner != rank {
                requests[owner].push(g);
            }
        }
        let incoming = ctx.all_to_all::<Vec<usize>>(requests.clone())?;

        // per peer: meta = [ncols, cols...] per row, vals concatenated
        let mut replies_meta: Vec<Vec<usize>> = Vec::with_capacity(np);
        let mut replies_vals: Vec<Vec<f64>> = Vec::with_capacity(np);
        for wanted_here in &incoming {
            let mut meta = Vec::new();
            let mut vals = Vec::new();
            for &g in wanted_here {
                if !self.row_map.owns(g) {
                    return Err(Error::PlanMismatch(format!(
                        "rank {rank} asked for row {g} it does not own"
                    )));
                }
                let row = local_row(g)?;
                meta.push(row.len());
                for (c, v) in row {
                    meta.push(c);
                    vals.push(v);
                }
            }
            replies_meta.push(meta);
            replies_vals.push(vals);
        }
        let got_meta = ctx.all_to_all(replies_meta)?;
        let got_vals = ctx.all_to_all(replies_vals)?;

        // decode into per-owner queues, then emit in the wanted order
        let mut queues: Vec<std::collections::VecDeque<SparseRowEntries>> =
            (0..np).map(|_| Default::default()).collect();
        for peer in 0..np {
            let meta = &got_meta[peer];
            let vals = &got_vals[peer];
            let mut mi = 0;
            let mut vi = 0;
            while mi < meta.len() {
                let ncols = meta[mi];
                mi += 1;
                let mut row = Vec::with_capacity(ncols);
                for _ in 0..ncols {
                    row.push((meta[mi], vals[vi]));
                    mi += 1;
                    vi += 1;
                }
                queues[peer].push_back(row);
            }
        }
        let mut out = Vec::with_capacity(wanted.len());
        for &g in wanted {
            let owner = self.row_map.owner_of(g);
            let row = if owner == rank {
                local_row(g)?
            } else {
                queues[owner].pop_front().ok_or_else(|| {
                    Error::PlanMismatch(format!("missing reply for row {g} from rank {owner}"))
                })?
            };
            out.push((g, row));
        }
        Ok(out)
    }
}

fn check_same_offsets(a: &[usize], b: &[usize]) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::MapMismatch)
    }
}

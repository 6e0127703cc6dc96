//! Classical algebraic multigrid.
//!
//! Setup builds a hierarchy level by level: strength-of-connection graph,
//! two-pass coarse-point selection, direct interpolation with restriction
//! as the transpose, and the Galerkin coarse operator.  Coarsening runs
//! per rank on the owned block with cross-rank rows treated as fine, so
//! interpolation never crosses rank boundaries; the Galerkin product
//! fetches the remote interpolation rows it needs.  The solve phase is a
//! V-cycle with hybrid forward Gauss-Seidel smoothing (sequential on owned
//! rows, halo couplings frozen per sweep) and a redundant dense direct
//! solve on the coarsest level.

use crate::error::{Error, Result};
use crate::krylov::Precond;
use crate::linalg::{CsrMatrix, DenseLu, DistMatrix, DistVector};
use crate::runtime::{IndexMap, RankCtx};
use std::collections::BTreeSet;
use std::sync::Arc;

/// Hard cap on the coarsest-level direct solve.
const DENSE_COARSE_CAP: usize = 5000;

/// AMG parameters; defaults are one cycle per application, six levels,
/// strength threshold 0.5, max row sum 0.9, interpolation truncation 1e-2
/// and two smoothing sweeps.
#[derive(Debug, Clone, Copy)]
pub struct AmgParams {
    /// V-cycles per preconditioner application.
    pub maxit: usize,
    pub max_levels: usize,
    /// Strength threshold: `j` is strong for `i` when
    /// `-a_ij >= strength * max_k(-a_ik)`.
    pub strength: f64,
    /// Rows with `|sum_j a_ij| > max_row_sum * |a_ii|` are smoother-only:
    /// they get no strong connections and are never interpolated.
    pub max_row_sum: f64,
    /// Interpolation weights below `trunc_tol * max |w|` are dropped and
    /// the kept weights rescaled to preserve the row sums per sign.
    pub trunc_tol: f64,
    /// Smoothing sweeps before and after the coarse correction.
    pub num_sweeps: usize,
    /// Stop coarsening at or below this global size.
    pub coarsest_size: usize,
}

impl Default for AmgParams {
    fn default() -> Self {
        AmgParams {
            maxit: 1,
            max_levels: 6,
            strength: 0.5,
            max_row_sum: 0.9,
            trunc_tol: 1e-2,
            num_sweeps: 2,
            coarsest_size: 32,
        }
    }
}

struct AmgLevel {
    a: DistMatrix,
    diag: Vec<f64>,
    p: DistMatrix,
    /// Local transpose of the interpolation (restriction applied locally;
    /// interpolation is block-diagonal per rank by construction).
    pt_local: CsrMatrix,
    coarse_map: Arc<IndexMap>,
}

/// Multigrid hierarchy; immutable after setup.
pub struct AmgHierarchy {
    params: AmgParams,
    levels: Vec<AmgLevel>,
    coarsest: DistMatrix,
    coarsest_lu: DenseLu,
}

impl AmgHierarchy {
    pub fn num_levels(&self) -> usize {
        self.levels.len() + 1
    }

    pub fn params(&self) -> &AmgParams {
        &self.params
    }

    pub fn level_matrix(&self, level: usize) -> &DistMatrix {
        if level < self.levels.len() {
            &self.levels[level].a
        } else {
            &self.coarsest
        }
    }

    pub fn interpolation(&self, level: usize) -> &DistMatrix {
        &self.levels[level].p
    }
}

/// Per-row outcome of the coarsening pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PointKind {
    Coarse(usize),
    Fine,
    /// Smoother-only row: no interpolation at all.
    FineIsolated,
}

struct Coarsening {
    kind: Vec<PointKind>,
    strong: Vec<Vec<usize>>,
    n_coarse: usize,
}

fn owned_diagonal(a: &DistMatrix) -> Result<Vec<f64>> {
    let csr = a.local_csr()?;
    let mut d = vec![0.0; csr.num_rows];
    for i in 0..csr.num_rows {
        let (cols, vals) = csr.row(i);
        for (&c, &v) in cols.iter().zip(vals) {
            if c == i {
                d[i] += v;
            }
        }
    }
    Ok(d)
}

/// Strength graph plus two-pass coarse-point selection on the owned block.
fn coarsen(a: &DistMatrix, params: &AmgParams) -> Result<Coarsening> {
    let csr = a.local_csr()?;
    let n = csr.num_rows;

    let mut strong: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut dominated = vec![false; n];
    let mut boundary = vec![false; n];
    for i in 0..n {
        let (cols, vals) = csr.row(i);
        let mut diag = 0.0;
        let mut row_sum = 0.0;
        let mut max_neg = 0.0f64;
        for (&c, &v) in cols.iter().zip(vals) {
            row_sum += v;
            if c == i {
                diag = v;
            } else {
                max_neg = max_neg.max(-v);
            }
        }
        if diag != 0.0 && row_sum.abs() > params.max_row_sum * diag.abs() {
            dominated[i] = true;
            continue;
        }
        if max_neg <= 0.0 {
            continue;
        }
        let threshold = params.strength * max_neg;
        for (&c, &v) in cols.iter().zip(vals) {
            if c == i || -v < threshold {
                continue;
            }
            if c < n {
                strong[i].push(c);
            } else {
                boundary[i] = true;
            }
        }
        strong[i].sort_unstable();
    }

    let mut strong_t: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, s) in strong.iter().enumerate() {
        for &j in s {
            strong_t[j].push(i);
        }
    }

    #[derive(Clone, Copy, PartialEq)]
    enum State {
        Unassigned,
        C,
        F,
    }
    let mut state = vec![State::Unassigned; n];
    let mut lambda: Vec<i64> = strong_t.iter().map(|s| s.len() as i64).collect();
    let mut remaining = n;

    let make_f = |i: usize,
                  state: &mut Vec<State>,
                  lambda: &mut Vec<i64>,
                  remaining: &mut usize| {
        state[i] = State::F;
        *remaining -= 1;
        for &u in &strong[i] {
            if state[u] == State::Unassigned {
                lambda[u] += 1;
            }
        }
    };

    // pre-assignments: smoother-only and cross-rank rows are fine points,
    // rows without strong connections in either direction keep themselves
    for i in 0..n {
        if dominated[i] || boundary[i] {
            make_f(i, &mut state, &mut lambda, &mut remaining);
        } else if strong[i].is_empty() && strong_t[i].is_empty() {
            state[i] = State::C;
            remaining -= 1;
        }
    }

    // first pass: greedy selection by descending measure
    while remaining > 0 {
        let mut best: Option<usize> = None;
        let mut best_l = -1i64;
        for i in 0..n {
            if state[i] == State::Unassigned && lambda[i] > best_l {
                best = Some(i);
                best_l = lambda[i];
            }
        }
        let i = best.expect("unassigned point exists");
        if best_l <= 0 {
            // no strong influence left: the rest are fine points
            for j in 0..n {
                if state[j] == State::Unassigned {
                    make_f(j, &mut state, &mut lambda, &mut remaining);
                }
            }
            break;
        }
        state[i] = State::C;
        remaining -= 1;
        let dependents: Vec<usize> = strong_t[i]
            .iter()
            .copied()
            .filter(|&j| state[j] == State::Unassigned)
            .collect();
        for j in dependents {
            make_f(j, &mut state, &mut lambda, &mut remaining);
        }
    }

    // second pass: every strong F-F pair must share a strong C point
    for i in 0..n {
        if state[i] != State::F || dominated[i] {
            continue;
        }
        let mut ci: BTreeSet<usize> = strong[i]
            .iter()
            .copied()
            .filter(|&c| state[c] == State::C)
            .collect();
        for idx in 0..strong[i].len() {
            let j = strong[i][idx];
            if state[j] != State::F || dominated[j] {
                continue;
            }
            let shares = strong[j].iter().any(|c| ci.contains(c));
            if !shares {
                state[j] = State::C;
                ci.insert(j);
            }
        }
    }

    let mut kind = Vec::with_capacity(n);
    let mut n_coarse = 0usize;
    for i in 0..n {
        kind.push(match state[i] {
            State::C => {
                let k = PointKind::Coarse(n_coarse);
                n_coarse += 1;
                k
            }
            State::F if dominated[i] => PointKind::FineIsolated,
            _ => PointKind::Fine,
        });
    }
    Ok(Coarsening {
        kind,
        strong,
        n_coarse,
    })
}

/// Direct interpolation from strong owned coarse neighbors, with sign-split
/// scaling and truncation.
fn interpolation_matrix(
    ctx: &RankCtx,
    a: &DistMatrix,
    coarsening: &Coarsening,
    coarse_offsets: Arc<Vec<usize>>,
    params: &AmgParams,
) -> Result<DistMatrix> {
    let csr = a.local_csr()?;
    let n = csr.num_rows;
    let rank = a.row_map().rank();
    let row_lo = a.row_map().offsets()[rank];
    let coarse_lo = coarse_offsets[rank];

    let mut p = DistMatrix::new_rect(a.row_map().clone(), coarse_offsets);
    for i in 0..n {
        match coarsening.kind[i] {
            PointKind::Coarse(ci) => {
                p.add(row_lo + i, coarse_lo + ci, 1.0)?;
            }
            PointKind::FineIsolated => {}
            PointKind::Fine => {
                // strong[i] is sorted, so cset stays sorted for lookups
                let cset: Vec<usize> = coarsening.strong[i]
                    .iter()
                    .copied()
                    .filter(|&c| matches!(coarsening.kind[c], PointKind::Coarse(_)))
                    .collect();
                if cset.is_empty() {
                    continue;
                }
                let (cols, vals) = csr.row(i);
                let mut diag = 0.0;
                let mut sneg = 0.0;
                let mut spos = 0.0;
                let mut cneg = 0.0;
                let mut cpos = 0.0;
                for (&c, &v) in cols.iter().zip(vals) {
                    if c == i {
                        diag = v;
                        continue;
                    }
                    if v < 0.0 {
                        sneg += v;
                    } else {
                        spos += v;
                    }
                    if cset.binary_search(&c).is_ok() {
                        if v < 0.0 {
                            cneg += v;
                        } else {
                            cpos += v;
                        }
                    }
                }
                // unmatched signs fold into the diagonal
                let mut dii = diag;
                if cpos == 0.0 {
                    dii += spos;
                }
                if cneg == 0.0 {
                    dii += sneg;
                }
                if dii == 0.0 {
                    continue;
                }
                let alpha = if cneg != 0.0 { sneg / cneg } else { 0.0 };
                let beta = if cpos != 0.0 { spos / cpos } else { 0.0 };
                let mut weights: Vec<(usize, f64)> = Vec::with_capacity(cset.len());
                for (&c, &v) in cols.iter().zip(vals) {
                    if c == i || cset.binary_search(&c).is_err() {
                        continue;
                    }
                    let w = if v < 0.0 { -alpha * v / dii } else { -beta * v / dii };
                    weights.push((c, w));
                }
                truncate_weights(&mut weights, params.trunc_tol);
                for (c, w) in weights {
                    if w == 0.0 {
                        continue;
                    }
                    let ci = match coarsening.kind[c] {
                        PointKind::Coarse(ci) => ci,
                        _ => unreachable!("interpolation sets hold coarse points"),
                    };
                    p.add(row_lo + i, coarse_lo + ci, w)?;
                }
            }
        }
    }
    p.assemble(ctx)?;
    Ok(p)
}

/// Drop weights below `tol * max|w|` and rescale the survivors so the
/// positive and negative weight sums are preserved.
fn truncate_weights(weights: &mut Vec<(usize, f64)>, tol: f64) {
    if weights.is_empty() {
        return;
    }
    let wmax = weights.iter().fold(0.0f64, |m, &(_, w)| m.max(w.abs()));
    let cut = tol * wmax;
    let sum = |v: &[(usize, f64)], sign: f64| -> f64 {
        v.iter()
            .map(|&(_, w)| w)
            .filter(|w| w * sign > 0.0)
            .sum()
    };
    let pos_before = sum(weights, 1.0);
    let neg_before = sum(weights, -1.0);
    weights.retain(|&(_, w)| w.abs() >= cut);
    if weights.is_empty() {
        return;
    }
    let pos_after = sum(weights, 1.0);
    let neg_after = sum(weights, -1.0);
    for (_, w) in weights.iter_mut() {
        if *w > 0.0 && pos_after != 0.0 {
            *w *= pos_before / pos_after;
        } else if *w < 0.0 && neg_after != 0.0 {
            *w *= neg_before / neg_after;
        }
    }
}

/// Galerkin triple product `A_coarse = P^T A P`, assembled row-distributed.
/// Remote interpolation rows referenced through the halo columns of `A`
/// are fetched from their owners.
fn galerkin(ctx: &RankCtx, a: &DistMatrix, p: &DistMatrix) -> Result<DistMatrix> {
    let a_csr = a.local_csr()?;
    let p_csr = p.local_csr()?;
    let p_col_map = p.col_map()?.clone();
    let rank = a.row_map().rank();
    let n_owned = a_csr.num_rows;

    let halo = a.halo_columns()?.to_vec();
    let remote_p = p.gather_rows(ctx, &halo)?;

    // interpolation row of a local fine column, with global coarse columns
    let p_row = |c: usize| -> Vec<(usize, f64)> {
        if c < n_owned {
            let (cols, vals) = p_csr.row(c);
            cols.iter()
                .zip(vals)
                .map(|(&lc, &v)| (p_col_map.global_of_local(lc), v))
                .collect()
        } else {
            remote_p[c - n_owned].1.clone()
        }
    };

    let coarse_offsets = p.col_map()?.offsets_arc();
    let coarse_map = Arc::new(IndexMap::new(coarse_offsets, rank));
    let mut ac = DistMatrix::new(coarse_map);
    for i in 0..n_owned {
        let (icols, ivals) = p_csr.row(i);
        if icols.is_empty() {
            continue;
        }
        let (acols, avals) = a_csr.row(i);
        for (&c, &aval) in acols.iter().zip(avals) {
            for (gj, pjv) in p_row(c) {
                for (&lci, &piv) in icols.iter().zip(ivals) {
                    let gi = p_col_map.global_of_local(lci);
                    ac.add(gi, gj, piv * aval * pjv)?;
                }
            }
        }
    }
    ac.assemble(ctx)?;
    Ok(ac)
}

/// Hybrid forward Gauss-Seidel sweeps: owned rows relax in ascending order
/// with in-sweep updates; halo couplings stay frozen at their values from
/// the exchange that opens each sweep.
fn gs_forward(
    ctx: &RankCtx,
    a: &DistMatrix,
    diag: &[f64],
    b: &DistVector,
    x: &mut DistVector,
    sweeps: usize,
) -> Result<()> {
    let csr = a.local_csr()?;
    let n = csr.num_rows;
    for _ in 0..sweeps {
        let mut xt = a.gather_column_values(ctx, x)?;
        for i in 0..n {
            let (cols, vals) = csr.row(i);
            let mut s = b.owned()[i];
            for (&c, &v) in cols.iter().zip(vals) {
                if c != i {
                    s -= v * xt[c];
                }
            }
            let xi = s / diag[i];
            xt[i] = xi;
            x.owned_mut()[i] = xi;
        }
    }
    Ok(())
}

/// Build the hierarchy; collective.
pub fn amg_setup(ctx: &RankCtx, a: DistMatrix, params: AmgParams) -> Result<AmgHierarchy> {
    if !a.is_assembled() {
        return Err(Error::NotAssembled);
    }
    if a.num_global_rows() != a.num_global_cols() {
        return Err(Error::InvalidArgument(
            "AMG needs a square matrix".into(),
        ));
    }
    let mut levels = Vec::new();
    let mut current = a;
    loop {
        let nglobal = current.num_global_rows();
        if nglobal <= params.coarsest_size || levels.len() + 1 >= params.max_levels.max(1) {
            break;
        }
        let coarsening = coarsen(&current, &params)?;
        let counts = ctx.all_gather(coarsening.n_coarse)?;
        let coarse_total: usize = counts.iter().sum();
        if coarse_total == 0 || coarse_total == nglobal {
            break;
        }
        let mut coarse_offsets = Vec::with_capacity(counts.len() + 1);
        coarse_offsets.push(0usize);
        for &c in &counts {
            coarse_offsets.push(coarse_offsets.last().unwrap() + c);
        }
        let p = interpolation_matrix(
            ctx,
            &current,
            &coarsening,
            Arc::new(coarse_offsets),
            &params,
        )?;
        let a_next = galerkin(ctx, &current, &p)?;
        let diag = owned_diagonal(&current)?;
        let pt_local = p.local_csr()?.transpose();
        let coarse_map = a_next.row_map().clone();
        levels.push(AmgLevel {
            a: current,
            diag,
            p,
            pt_local,
            coarse_map,
        });
        current = a_next;
    }

    // redundant dense factorization of the gathered coarsest operator
    let n = current.num_global_rows();
    if n > DENSE_COARSE_CAP {
        return Err(Error::InvalidArgument(format!(
            "coarsest level has {n} rows; coarsening stalled above the direct-solve cap"
        )));
    }
    let csr = current.local_csr()?;
    let col_map = current.col_map()?.clone();
    let row_lo = current.row_map().offsets()[current.row_map().rank()];
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    for l in 0..csr.num_rows {
        let (cols, vals) = csr.row(l);
        for (&c, &v) in cols.iter().zip(vals) {
            triplets.push((row_lo + l, col_map.global_of_local(c), v));
        }
    }
    let gathered = ctx.all_gather(triplets)?;
    let mut dense = vec![0.0; n * n];
    for part in gathered {
        for (r, c, v) in part {
            dense[r * n + c] += v;
        }
    }
    let coarsest_lu = DenseLu::factor(n, dense)?;

    Ok(AmgHierarchy {
        params,
        levels,
        coarsest: current,
        coarsest_lu,
    })
}

fn coarsest_solve(ctx: &RankCtx, h: &AmgHierarchy, b: &DistVector, x: &mut DistVector) -> Result<()> {
    let gathered = ctx.all_gather(b.owned().to_vec())?;
    let full: Vec<f64> = gathered.into_iter().flatten().collect();
    let sol = h.coarsest_lu.solve(&full);
    let map = h.coarsest.row_map();
    let lo = map.offsets()[map.rank()];
    x.owned_mut().copy_from_slice(&sol[lo..lo + map.nlocal()]);
    Ok(())
}

fn vcycle_level(
    ctx: &RankCtx,
    h: &AmgHierarchy,
    level: usize,
    b: &DistVector,
    x: &mut DistVector,
) -> Result<()> {
    if level == h.levels.len() {
        return coarsest_solve(ctx, h, b, x);
    }
    let lvl = &h.levels[level];
    gs_forward(ctx, &lvl.a, &lvl.diag, b, x, h.params.num_sweeps)?;
    let mut r = b.clone();
    lvl.a.spmv(ctx, -1.0, x, 1.0, &mut r)?;
    let bc_owned = lvl.pt_local.mul_vec(r.owned());
    let bc = DistVector::from_owned(Arc::clone(&lvl.coarse_map), bc_owned)?;
    let mut xc = DistVector::zeros(Arc::clone(&lvl.coarse_map));
    vcycle_level(ctx, h, level + 1, &bc, &mut xc)?;
    lvl.p.spmv(ctx, 1.0, &xc, 1.0, x)?;
    gs_forward(ctx, &lvl.a, &lvl.diag, b, x, h.params.num_sweeps)?;
    Ok(())
}

/// One V-cycle improving `x` in place.
pub fn amg_vcycle(
    ctx: &RankCtx,
    h: &AmgHierarchy,
    b: &DistVector,
    x: &mut DistVector,
) -> Result<()> {
    vcycle_level(ctx, h, 0, b, x)
}

/// Full preconditioner application: `maxit` V-cycles from a zero guess.
pub fn amg_solve(
    ctx: &RankCtx,
    h: &AmgHierarchy,
    b: &DistVector,
    x: &mut DistVector,
) -> Result<()> {
    x.fill(0.0);
    for _ in 0..h.params.maxit.max(1) {
        amg_vcycle(ctx, h, b, x)?;
    }
    Ok(())
}

/// [`Precond`] wrapper around a hierarchy.
pub struct AmgPc {
    hierarchy: AmgHierarchy,
}

impl AmgPc {
    /// Build the hierarchy for `a`; collective.
    pub fn setup(ctx: &RankCtx, a: DistMatrix, params: AmgParams) -> Result<Self> {
        Ok(AmgPc {
            hierarchy: amg_setup(ctx, a, params)?,
        })
    }

    pub fn hierarchy(&self) -> &AmgHierarchy {
        &self.hierarchy
    }
}

impl Precond for AmgPc {
    fn apply(&self, ctx: &RankCtx, r: &DistVector, z: &mut DistVector) -> Result<()> {
        amg_solve(ctx, &self.hierarchy, r, z)
    }
}

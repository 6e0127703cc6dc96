//! Incomplete LU factorizations: ILU(0), ILU(k) and ILUT.

use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;
use std::collections::BTreeMap;

/// Fill rule of an incomplete factorization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IluVariant {
    /// Keep the sparsity pattern of `A` (same as `Iluk(0)`).
    Ilu0,
    /// Keep fill of level <= k.
    Iluk(usize),
    /// Drop entries below `tol * ||row||_2` and keep at most `p` fill
    /// entries per row (`p = None` keeps every surviving entry).
    Ilut { p: Option<usize>, tol: f64 },
}

/// Factors `A ~ L U` with `L` unit lower triangular (unit diagonal not
/// stored) and `U` upper triangular including the diagonal.
#[derive(Debug, Clone)]
pub struct IluFactors {
    pub l: CsrMatrix,
    pub u: CsrMatrix,
    pub variant: IluVariant,
}

/// Small pivots are nudged to `sign(d) * max(|d|, PIVOT_FLOOR * ||row||)`.
const PIVOT_FLOOR: f64 = 1e-12;

pub fn ilu0_factor(a: &CsrMatrix) -> Result<IluFactors> {
    ilu_factor(a, IluVariant::Ilu0)
}

pub fn iluk_factor(a: &CsrMatrix, level: usize) -> Result<IluFactors> {
    ilu_factor(a, IluVariant::Iluk(level))
}

pub fn ilut_factor(a: &CsrMatrix, p: Option<usize>, tol: f64) -> Result<IluFactors> {
    ilu_factor(a, IluVariant::Ilut { p, tol })
}

pub fn ilu_factor(a: &CsrMatrix, variant: IluVariant) -> Result<IluFactors> {
    if a.num_rows != a.num_cols {
        return Err(Error::InvalidArgument(format!(
            "ILU needs a square matrix, got {}x{}",
            a.num_rows, a.num_cols
        )));
    }
    match variant {
        IluVariant::Ilu0 => level_fill(a, 0, variant),
        IluVariant::Iluk(k) => level_fill(a, k, variant),
        IluVariant::Ilut { p, tol } => threshold_fill(a, p, tol, variant),
    }
}

fn fix_pivot(d: f64, row_scale: f64, row: usize) -> Result<f64> {
    if row_scale == 0.0 {
        return Err(Error::SingularPivot { row });
    }
    let floor = PIVOT_FLOOR * row_scale;
    if d.abs() >= floor {
        Ok(d)
    } else if d == 0.0 {
        Ok(floor)
    } else {
        Ok(d.signum() * floor)
    }
}

/// Level-of-fill factorization (covers ILU(0) as level 0).
fn level_fill(a: &CsrMatrix, max_level: usize, variant: IluVariant) -> Result<IluFactors> {
    let n = a.num_rows;
    // factored upper rows kept with levels for fill bookkeeping
    let mut urows: Vec<Vec<(usize, f64, usize)>> = Vec::with_capacity(n);
    let mut udiag: Vec<f64> = Vec::with_capacity(n);
    let mut lrows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);

    for i in 0..n {
        let (cols, vals) = a.row(i);
        let row_scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut w: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
        for (&c, &v) in cols.iter().zip(vals) {
            let e = w.entry(c).or_insert((0.0, 0));
            e.0 += v;
        }

        let mut processed = 0usize;
        while let Some((&k, &(wk_raw, levk))) = w.range(processed..i).next() {
            processed = k + 1;
            let wk = wk_raw / udiag[k];
            w.insert(k, (wk, levk));
            for &(j, ukj, levu) in &urows[k] {
                if j <= k {
                    continue;
                }
                let fill_level = levk + levu + 1;
                match w.get_mut(&j) {
                    Some(e) => {
                        e.0 -= wk * ukj;
                        e.1 = e.1.min(fill_level);
                    }
                    None => {
                        if fill_level <= max_level {
                            w.insert(j, (-wk * ukj, fill_level));
                        }
                    }
                }
            }
        }

        let mut lrow = Vec::new();
        let mut urow = Vec::new();
        let mut diag = 0.0;
        for (&c, &(v, lev)) in &w {
            match c.cmp(&i) {
                std::cmp::Ordering::Less => lrow.push((c, v)),
                std::cmp::Ordering::Equal => diag = v,
                std::cmp::Ordering::Greater => urow.push((c, v, lev)),
            }
        }
        udiag.push(fix_pivot(diag, row_scale, i)?);
        urows.push(urow);
        lrows.push(lrow);
    }
    pack(n, lrows, urows, udiag, variant)
}

/// Dual-threshold factorization: drop by `tol * ||row||_2`, cap fill
/// outside the original pattern at the `p` largest entries per row.
fn threshold_fill(
    a: &CsrMatrix,
    p: Option<usize>,
    tol: f64,
    variant: IluVariant,
) -> Result<IluFactors> {
    let n = a.num_rows;
    let mut urows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    let mut udiag: Vec<f64> = Vec::with_capacity(n);
    let mut lrows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);

    for i in 0..n {
        let (cols, vals) = a.row(i);
        let row_scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tau = tol * vals.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut w: BTreeMap<usize, f64> = BTreeMap::new();
        for (&c, &v) in cols.iter().zip(vals) {
            *w.entry(c).or_insert(0.0) += v;
        }
        let original: Vec<usize> = {
            let mut o = cols.to_vec();
            o.sort_unstable();
            o
        };

        let mut processed = 0usize;
        while let Some((&k, &wk_raw)) = w.range(processed..i).next() {
            processed = k + 1;
            let wk = wk_raw / udiag[k];
            if wk.abs() < tau {
                w.remove(&k);
                continue;
            }
            w.insert(k, wk);
            for &(j, ukj) in &urows[k] {
                if j > k {
                    *w.entry(j).or_insert(0.0) -= wk * ukj;
                }
            }
        }

        // keep the diagonal and surviving original-pattern entries; cap
        // fill entries at the p largest magnitudes (ties by column)
        let mut fill: Vec<(usize, f64)> = Vec::new();
        let mut lrow = Vec::new();
        let mut urow = Vec::new();
        let mut diag = 0.0;
        for (&c, &v) in &w {
            if c == i {
                diag = v;
            } else if v.abs() >= tau {
                if original.binary_search(&c).is_ok() {
                    if c < i {
                        lrow.push((c, v));
                    } else {
                        urow.push((c, v));
                    }
                } else {
                    fill.push((c, v));
                }
            }
        }
        if let Some(cap) = p {
            fill.sort_by(|a, b| {
                b.1.abs()
                    .partial_cmp(&a.1.abs())
                    .unwrap()
                    .then(a.0.cmp(&b.0))
            });
            fill.truncate(cap);
            fill.sort_unstable_by_key(|&(c, _)| c);
        }
        for (c, v) in fill {
            if c < i {
                lrow.push((c, v));
            } else {
                urow.push((c, v));
            }
        }
        lrow.sort_unstable_by_key(|&(c, _)| c);
        urow.sort_unstable_by_key(|&(c, _)| c);

        udiag.push(fix_pivot(diag, row_scale, i)?);
        lrows.push(lrow);
        urows.push(urow);
    }
    let urows_lev: Vec<Vec<(usize, f64, usize)>> = urows
        .into_iter()
        .map(|r| r.into_iter().map(|(c, v)| (c, v, 0)).collect())
        .collect();
    pack(n, lrows, urows_lev, udiag, variant)
}

fn pack(
    n: usize,
    lrows: Vec<Vec<(usize, f64)>>,
    urows: Vec<Vec<(usize, f64, usize)>>,
    udiag: Vec<f64>,
    variant: IluVariant,
) -> Result<IluFactors> {
    let mut l_ptr = vec![0usize];
    let mut l_idx = Vec::new();
    let mut l_val = Vec::new();
    for row in &lrows {
        for &(c, v) in row {
            l_idx.push(c);
            l_val.push(v);
        }
        l_ptr.push(l_idx.len());
    }
    let mut u_ptr = vec![0usize];
    let mut u_idx = Vec::new();
    let mut u_val = Vec::new();
    for (i, row) in urows.iter().enumerate() {
        u_idx.push(i);
        u_val.push(udiag[i]);
        for &(c, v, _) in row {
            u_idx.push(c);
            u_val.push(v);
        }
        u_ptr.push(u_idx.len());
    }
    Ok(IluFactors {
        l: CsrMatrix::new(n, n, l_ptr, l_idx, l_val)?,
        u: CsrMatrix::new(n, n, u_ptr, u_idx, u_val)?,
        variant,
    })
}

/// Solve `L U x = b` by forward then backward substitution.
pub fn lu_solve(factors: &IluFactors, b: &[f64]) -> Vec<f64> {
    let mut x = b.to_vec();
    lu_solve_into(factors, &mut x);
    x
}

pub fn lu_solve_into(factors: &IluFactors, x: &mut [f64]) {
    let n = factors.l.num_rows;
    debug_assert_eq!(x.len(), n);
    for i in 0..n {
        let (cols, vals) = factors.l.row(i);
        let mut s = x[i];
        for (&c, &v) in cols.iter().zip(vals) {
            s -= v * x[c];
        }
        x[i] = s;
    }
    for i in (0..n).rev() {
        let (cols, vals) = factors.u.row(i);
        let mut s = x[i];
        let mut diag = 0.0;
        for (&c, &v) in cols.iter().zip(vals) {
            if c == i {
                diag = v;
            } else {
                s -= v * x[c];
            }
        }
        x[i] = s / diag;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::lu_nopivot_dense;

    fn tridiag(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, &t).unwrap()
    }

    #[test]
    fn ilu0_tridiagonal_is_exact_lu() {
        let a = tridiag(3);
        let f = ilu0_factor(&a).unwrap();
        // l21 = -0.5, u22 = 1.5, l32 = -2/3, u33 = 4/3
        assert_eq!(f.l.row(1), (&[0usize][..], &[-0.5][..]));
        assert_eq!(f.u.row(1).1[0], 1.5);
        assert!((f.l.row(2).1[0] + 2.0 / 3.0).abs() < 1e-15);
        assert!((f.u.row(2).1[0] - 4.0 / 3.0).abs() < 1e-15);
        // solve recovers a constructed solution
        let x_true = vec![1.0, -2.0, 0.5];
        let b = a.mul_vec(&x_true);
        let x = lu_solve(&f, &b);
        for (xi, ti) in x.iter().zip(&x_true) {
            assert!((xi - ti).abs() < 1e-12);
        }
    }

    #[test]
    fn diagonal_matrix_any_variant() {
        let a = CsrMatrix::from_triplets(3, 3, &[(0, 0, 2.0), (1, 1, 4.0), (2, 2, -1.0)]).unwrap();
        for variant in [
            IluVariant::Ilu0,
            IluVariant::Iluk(2),
            IluVariant::Ilut { p: None, tol: 1e-3 },
        ] {
            let f = ilu_factor(&a, variant).unwrap();
            assert_eq!(f.l.num_nonzeros(), 0);
            assert_eq!(f.u.to_dense(), a.to_dense());
            assert_eq!(lu_solve(&f, &[2.0, 4.0, -1.0]), vec![1.0, 1.0, 1.0]);
        }
    }

    #[test]
    fn identity_factors_solve_identity() {
        let a = CsrMatrix::identity(4);
        let f = ilu0_factor(&a).unwrap();
        let b = vec![1.0, 2.0, 3.0, 4.0];
        assert_eq!(lu_solve(&f, &b), b);
    }

    #[test]
    fn full_level_equals_dense_lu() {
        // 5-point stencil on a 3x3 grid; level n admits all fill
        let n = 9;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 4.0));
            if i % 3 != 0 {
                t.push((i, i - 1, -1.0));
            }
            if i % 3 != 2 {
                t.push((i, i + 1, -1.0));
            }
            if i >= 3 {
                t.push((i, i - 3, -1.0));
            }
            if i + 3 < n {
                t.push((i, i + 3, -1.0));
            }
        }
        let a = CsrMatrix::from_triplets(n, n, &t).unwrap();
        let f = iluk_factor(&a, n).unwrap();
        let (l_dense, u_dense) = lu_nopivot_dense(n, &a.to_dense()).unwrap();
        let lf = f.l.to_dense();
        let uf = f.u.to_dense();
        for i in 0..n {
            for j in 0..n {
                let l_ref = if i == j { 0.0 } else { l_dense[i * n + j] };
                let got_l = if j < i { lf[i * n + j] } else { 0.0 };
                assert!((got_l - if j < i { l_ref } else { 0.0 }).abs() < 1e-12);
                let got_u = if j >= i { uf[i * n + j] } else { 0.0 };
                let u_ref = if j >= i { u_dense[i * n + j] } else { 0.0 };
                assert!((got_u - u_ref).abs() < 1e-12, "u[{i}][{j}]");
            }
        }
    }

    #[test]
    fn iluk_levels_grow_pattern() {
        let n = 9;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 4.0));
            if i % 3 != 0 {
                t.push((i, i - 1, -1.0));
            }
            if i % 3 != 2 {
                t.push((i, i + 1, -1.0));
            }
            if i >= 3 {
                t.push((i, i - 3, -1.0));
            }
            if i + 3 < n {
                t.push((i, i + 3, -1.0));
            }
        }
        let a = CsrMatrix::from_triplets(n, n, &t).unwrap();
        let f0 = iluk_factor(&a, 0).unwrap();
        let f1 = iluk_factor(&a, 1).unwrap();
        let f2 = iluk_factor(&a, 2).unwrap();
        let nnz = |f: &IluFactors| f.l.num_nonzeros() + f.u.num_nonzeros();
        assert!(nnz(&f0) < nnz(&f1));
        assert!(nnz(&f1) <= nnz(&f2));
        // ILU(0) keeps exactly the pattern of A
        assert_eq!(nnz(&f0), a.num_nonzeros());
    }

    #[test]
    fn ilut_unlimited_keeps_fill_and_caps_apply() {
        let n = 9;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 4.0));
            if i % 3 != 0 {
                t.push((i, i - 1, -1.0));
            }
            if i % 3 != 2 {
                t.push((i, i + 1, -1.0));
            }
            if i >= 3 {
                t.push((i, i - 3, -1.0));
            }
            if i + 3 < n {
                t.push((i, i + 3, -1.0));
            }
        }
        let a = CsrMatrix::from_triplets(n, n, &t).unwrap();
        let f_all = ilut_factor(&a, None, 0.0).unwrap();
        // no dropping at all: equals the dense factorization
        let (l_dense, u_dense) = lu_nopivot_dense(n, &a.to_dense()).unwrap();
        let lf = f_all.l.to_dense();
        let uf = f_all.u.to_dense();
        for i in 0..n {
            for j in 0..i {
                assert!((lf[i * n + j] - l_dense[i * n + j]).abs() < 1e-12);
            }
            for j in i..n {
                assert!((uf[i * n + j] - u_dense[i * n + j]).abs() < 1e-12);
            }
        }
        // p = 0 forbids fill outside the original pattern
        let f0 = ilut_factor(&a, Some(0), 0.0).unwrap();
        assert!(f0.l.num_nonzeros() + f0.u.num_nonzeros() <= a.num_nonzeros());
    }

    #[test]
    fn zero_row_reports_singular_pivot() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0)]).unwrap();
        match ilu0_factor(&a) {
            Err(Error::SingularPivot { row }) => assert_eq!(row, 1),
            other => panic!("expected singular pivot, got {other:?}"),
        }
    }

    #[test]
    fn permuted_diagonal_solves_exactly() {
        // strictly triangular permutation-like system with nonzero diagonal
        let a = CsrMatrix::from_triplets(
            3,
            3,
            &[(0, 0, 2.0), (1, 1, 1.0), (1, 0, 1.0), (2, 2, 4.0), (2, 1, -1.0)],
        )
        .unwrap();
        let f = iluk_factor(&a, 3).unwrap();
        let x_true = vec![0.5, -1.5, 2.0];
        let b = a.mul_vec(&x_true);
        let x = lu_solve(&f, &b);
        for (xi, ti) in x.iter().zip(&x_true) {
            assert!((xi - ti).abs() < 1e-12);
        }
    }
}

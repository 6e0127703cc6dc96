//! Compressed sparse row storage and serial kernels.

use crate::error::{Error, Result};

/// CSR matrix: `row_ptr` (len `num_rows + 1`), `col_idx` and `values`
/// (len `num_nonzeros`).  Row entries may be stored in any column order
/// unless a kernel documents otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub num_rows: usize,
    pub num_cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn new(
        num_rows: usize,
        num_cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_ptr.len() != num_rows + 1
            || row_ptr[0] != 0
            || *row_ptr.last().unwrap() != col_idx.len()
            || col_idx.len() != values.len()
            || row_ptr.windows(2).any(|w| w[1] < w[0])
            || col_idx.iter().any(|&c| c >= num_cols)
        {
            return Err(Error::InvalidArgument("malformed CSR structure".into()));
        }
        Ok(CsrMatrix {
            num_rows,
            num_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn zero(num_rows: usize, num_cols: usize) -> Self {
        CsrMatrix {
            num_rows,
            num_cols,
            row_ptr: vec![0; num_rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            num_rows: n,
            num_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Build from unsorted triplets; duplicate entries sum.
    pub fn from_triplets(
        num_rows: usize,
        num_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); num_rows];
        for &(r, c, v) in triplets {
            if r >= num_rows || c >= num_cols {
                return Err(Error::InvalidArgument(format!(
                    "triplet ({r}, {c}) out of bounds"
                )));
            }
            rows[r].push((c, v));
        }
        let mut row_ptr = Vec::with_capacity(num_rows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in &mut rows {
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
                col_idx.push(c);
                values.push(sum);
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix::new(num_rows, num_cols, row_ptr, col_idx, values)
    }

    pub fn num_nonzeros(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    /// Serial matrix-vector product `y = A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.num_cols);
        let mut y = vec![0.0; self.num_rows];
        for i in 0..self.num_rows {
            let (cols, vals) = self.row(i);
            let mut s = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                s += v * x[c];
            }
            y[i] = s;
        }
        y
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.num_rows];
        for i in 0..self.num_rows.min(self.num_cols) {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                if c == i {
                    d[i] += v;
                }
            }
        }
        d
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.num_cols];
        for &c in &self.col_idx {
            counts[c] += 1;
        }
        let mut row_ptr = Vec::with_capacity(self.num_cols + 1);
        row_ptr.push(0);
        for &c in &counts {
            row_ptr.push(row_ptr.last().unwrap() + c);
        }
        let mut next = row_ptr[..self.num_cols].to_vec();
        let mut col_idx = vec![0usize; self.num_nonzeros()];
        let mut values = vec![0.0; self.num_nonzeros()];
        for i in 0..self.num_rows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                col_idx[next[c]] = i;
                values[next[c]] = v;
                next[c] += 1;
            }
        }
        CsrMatrix {
            num_rows: self.num_cols,
            num_cols: self.num_rows,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Sparse product `self * rhs` with output rows sorted by column.
    pub fn matmul(&self, rhs: &CsrMatrix) -> Result<CsrMatrix> {
        if self.num_cols != rhs.num_rows {
            return Err(Error::InvalidArgument(format!(
                "matmul dimension mismatch: {}x{} times {}x{}",
                self.num_rows, self.num_cols, rhs.num_rows, rhs.num_cols
            )));
        }
        let mut row_ptr = Vec::with_capacity(self.num_rows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        let mut acc: std::collections::BTreeMap<usize, f64> = Default::default();
        for i in 0..self.num_rows {
            acc.clear();
            let (cols, vals) = self.row(i);
            for (&k, &aik) in cols.iter().zip(vals) {
                let (kcols, kvals) = rhs.row(k);
                for (&j, &bkj) in kcols.iter().zip(kvals) {
                    *acc.entry(j).or_insert(0.0) += aik * bkj;
                }
            }
            for (&j, &v) in &acc {
                col_idx.push(j);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Ok(CsrMatrix {
            num_rows: self.num_rows,
            num_cols: rhs.num_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Dense copy, row-major (test and coarse-solve helper).
    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.num_rows * self.num_cols];
        for i in 0..self.num_rows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                d[i * self.num_cols + c] += v;
            }
        }
        d
    }
}

//! Dense LU with partial pivoting, used for coarsest-level solves and as a
//! reference solver in tests.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct DenseLu {
    n: usize,
    lu: Vec<f64>,
    piv: Vec<usize>,
}

impl DenseLu {
    /// Factor a row-major `n x n` matrix.
    pub fn factor(n: usize, mut a: Vec<f64>) -> Result<Self> {
        if a.len() != n * n {
            return Err(Error::InvalidArgument(format!(
                "dense factor expects {} entries, got {}",
                n * n,
                a.len()
            )));
        }
        let mut piv = Vec::with_capacity(n);
        for k in 0..n {
            let mut p = k;
            let mut best = a[k * n + k].abs();
            for i in k + 1..n {
                let v = a[i * n + k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 {
                return Err(Error::SingularMatrix(k));
            }
            piv.push(p);
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
            }
            let pivot = a[k * n + k];
            for i in k + 1..n {
                let m = a[i * n + k] / pivot;
                a[i * n + k] = m;
                for j in k + 1..n {
                    a[i * n + j] -= m * a[k * n + j];
                }
            }
        }
        Ok(DenseLu { n, lu: a, piv })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        debug_assert_eq!(b.len(), self.n);
        let n = self.n;
        let mut x = b.to_vec();
        for k in 0..n {
            x.swap(k, self.piv[k]);
            for i in k + 1..n {
                x[i] -= self.lu[i * n + k] * x[k];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                x[i] -= self.lu[i * n + j] * x[j];
            }
            x[i] /= self.lu[i * n + i];
        }
        x
    }
}

/// Dense no-pivot LU split into unit-lower and upper parts (the oracle that
/// a full-fill incomplete factorization must reproduce).
pub fn lu_nopivot_dense(n: usize, a: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut w = a.to_vec();
    for k in 0..n {
        let pivot = w[k * n + k];
        if pivot == 0.0 {
            return Err(Error::SingularPivot { row: k });
        }
        for i in k + 1..n {
            let m = w[i * n + k] / pivot;
            w[i * n + k] = m;
            for j in k + 1..n {
                w[i * n + j] -= m * w[k * n + j];
            }
        }
    }
    let mut l = vec![0.0; n * n];
    let mut u = vec![0.0; n * n];
    for i in 0..n {
        l[i * n + i] = 1.0;
        for j in 0..n {
            if j < i {
                l[i * n + j] = w[i * n + j];
            } else {
                u[i * n + j] = w[i * n + j];
            }
        }
    }
    Ok((l, u))
}

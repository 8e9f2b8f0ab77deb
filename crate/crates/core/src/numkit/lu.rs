//! LU factorization with partial (row) pivoting.

use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};

/// Pivots below `SINGULAR_RTOL * max_row_norm` are treated as zero.
pub const SINGULAR_RTOL: f64 = 1e-12;

/// `P·M = L·U` with unit-lower `L` and upper `U` packed into one square
/// matrix. `perm[i]` is the row of `M` that ended up in row `i`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LuFactorization {
    lu: Matrix,
    perm: Vec<usize>,
    sign: f64,
}

pub fn lu_factor(m: &Matrix) -> Result<LuFactorization> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "lu_factor needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    if !m.is_finite() {
        return Err(Error::NonFiniteValue("lu_factor input".into()));
    }
    let n = m.rows();
    let max_row_norm = (0..n)
        .map(|i| m.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let threshold = SINGULAR_RTOL * max_row_norm;

    let mut lu = m.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut sign = 1.0;

    for k in 0..n {
        let (p, pivot_abs) = (k..n)
            .map(|i| (i, lu[(i, k)].abs()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot_abs <= threshold || pivot_abs == 0.0 {
            return Err(Error::SingularMatrix {
                column: k,
                pivot: pivot_abs,
            });
        }
        if p != k {
            for j in 0..n {
                let tmp = lu[(k, j)];
                lu[(k, j)] = lu[(p, j)];
                lu[(p, j)] = tmp;
            }
            perm.swap(k, p);
            sign = -sign;
        }
        let pivot = lu[(k, k)];
        for i in (k + 1)..n {
            let factor = lu[(i, k)] / pivot;
            lu[(i, k)] = factor;
            if factor != 0.0 {
                for j in (k + 1)..n {
                    lu[(i, j)] -= factor * lu[(k, j)];
                }
            }
        }
    }
    Ok(LuFactorization { lu, perm, sign })
}

impl LuFactorization {
    pub fn dim(&self) -> usize {
        self.lu.rows()
    }

    pub fn sign(&self) -> f64 {
        self.sign
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    pub fn lower(&self) -> Matrix {
        let n = self.dim();
        let mut l = Matrix::identity(n);
        for i in 0..n {
            for j in 0..i {
                l[(i, j)] = self.lu[(i, j)];
            }
        }
        l
    }

    pub fn upper(&self) -> Matrix {
        let n = self.dim();
        let mut u = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                u[(i, j)] = self.lu[(i, j)];
            }
        }
        u
    }

    /// Rebuilds the original matrix from the factors.
    pub fn reconstruct(&self) -> Matrix {
        let pm = self.lower().matmul(&self.upper()).expect("square factors");
        let n = self.dim();
        let mut m = Matrix::zeros(n, n);
        for (i, &src) in self.perm.iter().enumerate() {
            m.row_mut(src).copy_from_slice(pm.row(i));
        }
        m
    }

    /// Solves `M·X = B`.
    pub fn solve(&self, b: &Matrix) -> Result<Matrix> {
        let n = self.dim();
        if b.rows() != n {
            return Err(Error::DimensionMismatch(format!(
                "solve: factor is {n}x{n}, rhs has {} rows",
                b.rows()
            )));
        }
        let k = b.cols();
        let mut x = Matrix::zeros(n, k);
        for (i, &src) in self.perm.iter().enumerate() {
            x.row_mut(i).copy_from_slice(b.row(src));
        }
        // forward: L y = P b
        for i in 0..n {
            for j in 0..i {
                let l = self.lu[(i, j)];
                if l != 0.0 {
                    for c in 0..k {
                        let v = x[(j, c)];
                        x[(i, c)] -= l * v;
                    }
                }
            }
        }
        // backward: U x = y
        for i in (0..n).rev() {
            for j in (i + 1)..n {
                let u = self.lu[(i, j)];
                if u != 0.0 {
                    for c in 0..k {
                        let v = x[(j, c)];
                        x[(i, c)] -= u * v;
                    }
                }
            }
            let d = self.lu[(i, i)];
            for c in 0..k {
                x[(i, c)] /= d;
            }
        }
        Ok(x)
    }

    /// Solves `Mᵀ·X = B` reusing the same factors.
    pub fn solve_transpose(&self, b: &Matrix) -> Result<Matrix> {
        let n = self.dim();
        if b.rows() != n {
            return Err(Error::DimensionMismatch(format!(
                "solve_transpose: factor is {n}x{n}, rhs has {} rows",
                b.rows()
            )));
        }
        let k = b.cols();
        // Mᵀ = Uᵀ Lᵀ P, so solve Uᵀ w = b, Lᵀ v = w, then x = Pᵀ v.
        let mut w = b.clone();
        for i in 0..n {
            for j in 0..i {
                let u = self.lu[(j, i)];
                if u != 0.0 {
                    for c in 0..k {
                        let v = w[(j, c)];
                        w[(i, c)] -= u * v;
                    }
                }
            }
            let d = self.lu[(i, i)];
            for c in 0..k {
                w[(i, c)] /= d;
            }
        }
        for i in (0..n).rev() {
            for j in (i + 1)..n {
                let l = self.lu[(j, i)];
                if l != 0.0 {
                    for c in 0..k {
                        let v = w[(j, c)];
                        w[(i, c)] -= l * v;
                    }
                }
            }
        }
        let mut x = Matrix::zeros(n, k);
        for (i, &src) in self.perm.iter().enumerate() {
            x.row_mut(src).copy_from_slice(w.row(i));
        }
        Ok(x)
    }

    /// `ln|det M| = Σ ln|uᵢᵢ|`.
    pub fn log_abs_det(&self) -> f64 {
        (0..self.dim()).map(|i| self.lu[(i, i)].abs().ln()).sum()
    }

    pub fn det(&self) -> f64 {
        self.sign * (0..self.dim()).map(|i| self.lu[(i, i)]).product::<f64>()
    }
}

pub fn solve(f: &LuFactorization, b: &Matrix) -> Result<Matrix> {
    f.solve(b)
}

pub fn log_abs_det(f: &LuFactorization) -> f64 {
    f.log_abs_det()
}

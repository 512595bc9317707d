//! Thin dense helpers over `faer` used throughout the crate.
//!
//! Matrices are `faer::Mat<c64>`; vectors crossing module boundaries are
//! plain `Vec<c64>` so callers never need to touch `faer` column types.

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::{c64, Mat, MatRef};
use thiserror::Error;

pub type CMat = Mat<c64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("eigendecomposition did not converge")]
    EigenFailed,
    #[error("singular value decomposition did not converge")]
    SvdFailed,
    #[error("matrix is singular or numerically singular (condition estimate {cond:.3e})")]
    Singular { cond: f64 },
}

#[inline]
pub fn cx(re: f64, im: f64) -> c64 {
    c64::new(re, im)
}

pub const I: c64 = c64 { re: 0.0, im: 1.0 };

/// Euclidean-induced 2-norm (largest singular value).
pub fn norm2(a: MatRef<'_, c64>) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    match a.singular_values() {
        Ok(sv) => sv.first().copied().unwrap_or(0.0),
        // Frobenius norm is an upper bound and never fails.
        Err(_) => a.norm_l2(),
    }
}

/// 2-norm condition number, `inf` for singular input.
pub fn cond2(a: MatRef<'_, c64>) -> Result<f64, LinalgError> {
    if a.nrows() == 0 {
        return Ok(1.0);
    }
    let sv = a.singular_values().map_err(|_| LinalgError::SvdFailed)?;
    let smax = sv[0];
    let smin = *sv.last().unwrap();
    if smin == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(smax / smin)
    }
}

pub fn identity(n: usize) -> CMat {
    Mat::from_fn(n, n, |i, j| if i == j { cx(1.0, 0.0) } else { cx(0.0, 0.0) })
}

pub fn zeros(m: usize, n: usize) -> CMat {
    Mat::from_fn(m, n, |_, _| cx(0.0, 0.0))
}

pub fn diag(d: &[c64]) -> CMat {
    let n = d.len();
    Mat::from_fn(n, n, |i, j| if i == j { d[i] } else { cx(0.0, 0.0) })
}

/// `A * diag(d)`.
pub fn scale_cols(a: MatRef<'_, c64>, d: &[c64]) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * d[j])
}

/// `diag(d) * A`.
pub fn scale_rows(a: MatRef<'_, c64>, d: &[c64]) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| d[i] * a[(i, j)])
}

pub fn matmul(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> CMat {
    a * b
}

pub fn sub(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] - b[(i, j)])
}

pub fn matvec(a: MatRef<'_, c64>, x: &[c64]) -> Vec<c64> {
    debug_assert_eq!(a.ncols(), x.len());
    let mut y = vec![cx(0.0, 0.0); a.nrows()];
    for (j, &xj) in x.iter().enumerate() {
        if xj == cx(0.0, 0.0) {
            continue;
        }
        let col = a.col(j);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += col[i] * xj;
        }
    }
    y
}

pub fn vnorm(x: &[c64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

pub fn vsub(a: &[c64], b: &[c64]) -> Vec<c64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn vadd(a: &[c64], b: &[c64]) -> Vec<c64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn vscale(a: &[c64], s: c64) -> Vec<c64> {
    a.iter().map(|x| x * s).collect()
}

pub fn col_to_vec(m: MatRef<'_, c64>, j: usize) -> Vec<c64> {
    (0..m.nrows()).map(|i| m[(i, j)]).collect()
}

pub fn vec_to_col_mat(x: &[c64]) -> CMat {
    Mat::from_fn(x.len(), 1, |i, _| x[i])
}

/// Dense LU with partial pivoting plus a reusable solve.
pub struct DenseLu {
    lu: PartialPivLu<c64>,
    n: usize,
}

impl DenseLu {
    /// Factor `a`; fails on an exactly zero or non-finite pivot.
    pub fn new(a: MatRef<'_, c64>) -> Result<Self, LinalgError> {
        let n = a.nrows();
        let lu = a.partial_piv_lu();
        let u = lu.U();
        let mut umax = 0.0f64;
        let mut umin = f64::INFINITY;
        for i in 0..n {
            let d = u[(i, i)].norm();
            umax = umax.max(d);
            umin = umin.min(d);
        }
        if n > 0 && (umin == 0.0 || !umin.is_finite() || !umax.is_finite()) {
            return Err(LinalgError::Singular { cond: f64::INFINITY });
        }
        Ok(Self { lu, n })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_vec(&self, b: &[c64]) -> Vec<c64> {
        let rhs = vec_to_col_mat(b);
        let x = self.lu.solve(&rhs);
        col_to_vec(x.as_ref(), 0)
    }

    pub fn solve_mat(&self, b: MatRef<'_, c64>) -> CMat {
        self.lu.solve(b)
    }
}

pub fn inverse(a: MatRef<'_, c64>) -> Result<CMat, LinalgError> {
    let lu = DenseLu::new(a)?;
    Ok(lu.solve_mat(identity(a.nrows()).as_ref()))
}

/// Eigenvalues and right eigenvectors of a general complex matrix.
pub fn eig(a: MatRef<'_, c64>) -> Result<(Vec<c64>, CMat), LinalgError> {
    let n = a.nrows();
    if n == 0 {
        return Ok((Vec::new(), zeros(0, 0)));
    }
    let e = a.eigen().map_err(|_| LinalgError::EigenFailed)?;
    let vals: Vec<c64> = (0..n).map(|i| e.S().column_vector()[i]).collect();
    if vals.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(LinalgError::EigenFailed);
    }
    Ok((vals, e.U().to_owned()))
}

pub fn eigenvalues(a: MatRef<'_, c64>) -> Result<Vec<c64>, LinalgError> {
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    let vals = a.eigenvalues().map_err(|_| LinalgError::EigenFailed)?;
    if vals.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(LinalgError::EigenFailed);
    }
    Ok(vals)
}

/// Copy of the sub-block `rows x cols` selected by index lists.
pub fn select(a: MatRef<'_, c64>, rows: &[usize], cols: &[usize]) -> CMat {
    Mat::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
}

pub fn real_to_complex(a: MatRef<'_, f64>) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| cx(a[(i, j)], 0.0))
}

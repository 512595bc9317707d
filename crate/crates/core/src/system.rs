//! Hyperbolic systems and their characteristic form.

use faer::linalg::solvers::DenseSolveCore;
use faer::Mat;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SystemError {
    #[error("flux matrix is not hyperbolic: eigenvalue {re:.6e}{im:+.6e}i is not real")]
    NotHyperbolic { re: f64, im: f64 },
    #[error("flux matrix is not diagonalizable (transform residual {residual:.3e})")]
    NotDiagonalizable { residual: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("zero block L00 is numerically singular (condition {cond:.3e})")]
    SingularBlock { cond: f64 },
    #[error("no zero characteristics; use the regular assembly")]
    NotSingular,
    #[error("Laplace parameter must satisfy Re(s) >= 0, got {0}")]
    BadLaplace(f64),
    #[error("linear algebra failure: {0}")]
    Linalg(#[from] crate::linalg::LinalgError),
}

/// `q_t + A q_x + sum_j B_j q_{y_j} + C q = f`, one per grid node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicSystem {
    pub n_vars: usize,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<Vec<f64>>>,
    pub c: Vec<Vec<f64>>,
    pub spatial_dim: usize,
}

pub(crate) fn to_mat(rows: &[Vec<f64>]) -> Mat<f64> {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    Mat::from_fn(n, m, |i, j| rows[i][j])
}

fn check_square(name: &str, m: &[Vec<f64>], n: usize) -> Result<(), SystemError> {
    if m.len() != n || m.iter().any(|r| r.len() != n) {
        return Err(SystemError::Dimension(format!("{name} must be {n}x{n}")));
    }
    if m.iter().flatten().any(|v| !v.is_finite()) {
        return Err(SystemError::Dimension(format!("{name} has non-finite entries")));
    }
    Ok(())
}

impl HyperbolicSystem {
    /// Validates shapes and hyperbolicity of `a`.
    pub fn new(
        a: Vec<Vec<f64>>,
        b: Vec<Vec<Vec<f64>>>,
        c: Vec<Vec<f64>>,
        spatial_dim: usize,
    ) -> Result<Self, SystemError> {
        let n = a.len();
        if n == 0 {
            return Err(SystemError::Dimension("empty state".into()));
        }
        if spatial_dim == 0 {
            return Err(SystemError::Dimension("spatial_dim must be >= 1".into()));
        }
        check_square("A", &a, n)?;
        check_square("C", &c, n)?;
        if b.len() != spatial_dim - 1 {
            return Err(SystemError::Dimension(format!(
                "expected {} transverse flux matrices, got {}",
                spatial_dim - 1,
                b.len()
            )));
        }
        for (j, bj) in b.iter().enumerate() {
            check_square(&format!("B[{j}]"), bj, n)?;
        }
        let sys = Self { n_vars: n, a, b, c, spatial_dim };
        characteristic_form(&sys)?;
        Ok(sys)
    }
}

/// `Ã = T A T⁻¹` diagonal, sorted positive, negative, zero.
#[derive(Debug, Clone)]
pub struct CharacteristicForm {
    pub t: Mat<f64>,
    pub t_inv: Mat<f64>,
    pub a_tilde: Vec<f64>,
    pub b_tilde: Vec<Mat<f64>>,
    pub c_tilde: Mat<f64>,
    /// Transformed transverse fluxes before the transform on the right, `T B_j`.
    pub tb: Vec<Mat<f64>>,
    pub n_plus: usize,
    pub n_minus: usize,
    pub n_zero: usize,
}

impl CharacteristicForm {
    pub fn n_vars(&self) -> usize {
        self.a_tilde.len()
    }

    /// Sign of each characteristic speed: +1, -1 or 0.
    pub fn signs(&self) -> Vec<i8> {
        let mut s = vec![1i8; self.n_plus];
        s.extend(std::iter::repeat(-1).take(self.n_minus));
        s.extend(std::iter::repeat(0).take(self.n_zero));
        s
    }

    /// Reconstructs `A = T⁻¹ Ã T`.
    pub fn recover_a(&self) -> Mat<f64> {
        let n = self.n_vars();
        let d = Mat::from_fn(n, n, |i, j| if i == j { self.a_tilde[i] } else { 0.0 });
        &self.t_inv * &d * &self.t
    }
}

const REALNESS_TOL: f64 = 1e-10;

fn mat_norm2(a: &Mat<f64>) -> f64 {
    a.singular_values().ok().and_then(|s| s.first().copied()).unwrap_or_else(|| a.norm_l2())
}

/// Real basis of the eigenspace of `a` for eigenvalue `lam` with dimension `k`,
/// canonicalised so the chosen pivot rows form an identity block.
fn real_eigenspace(a: &Mat<f64>, lam: f64, k: usize) -> Mat<f64> {
    let n = a.nrows();
    let shifted = Mat::from_fn(n, n, |i, j| a[(i, j)] - if i == j { lam } else { 0.0 });
    let svd = shifted.svd().expect("svd of real matrix");
    let v = svd.V();
    let mut q = Mat::from_fn(n, k, |i, j| v[(i, n - k + j)]);
    // Gauss-Jordan with complete pivoting on the columns of q.
    let mut used = vec![false; n];
    for col in 0..k {
        let mut best = (0usize, col, -1.0f64);
        for r in 0..n {
            if used[r] {
                continue;
            }
            for c in col..k {
                if q[(r, c)].abs() > best.2 {
                    best = (r, c, q[(r, c)].abs());
                }
            }
        }
        let (pr, pc, _) = best;
        used[pr] = true;
        if pc != col {
            for i in 0..n {
                let tmp = q[(i, col)];
                q[(i, col)] = q[(i, pc)];
                q[(i, pc)] = tmp;
            }
        }
        let p = q[(pr, col)];
        for i in 0..n {
            q[(i, col)] /= p;
        }
        for c in 0..k {
            if c == col {
                continue;
            }
            let f = q[(pr, c)];
            if f != 0.0 {
                for i in 0..n {
                    let v = q[(i, col)];
                    q[(i, c)] -= f * v;
                }
            }
        }
    }
    // Order columns by their pivot row so a diagonal input maps to the identity.
    let mut piv: Vec<(usize, usize)> = (0..k)
        .map(|c| {
            let r = (0..n)
                .max_by(|&x, &y| q[(x, c)].abs().total_cmp(&q[(y, c)].abs()))
                .unwrap();
            (r, c)
        })
        .collect();
    piv.sort();
    Mat::from_fn(n, k, |i, j| {
        let c = piv[j].1;
        let nrm = (0..n).map(|r| q[(r, c)] * q[(r, c)]).sum::<f64>().sqrt();
        q[(i, c)] / nrm
    })
}

/// Diagonalizes `A` with a real transform and sorts speeds as (+, -, 0).
pub fn characteristic_form(system: &HyperbolicSystem) -> Result<CharacteristicForm, SystemError> {
    let n = system.n_vars;
    let a = to_mat(&system.a);
    let scale = mat_norm2(&a).max(f64::MIN_POSITIVE);
    let vals = a.eigenvalues().map_err(|_| crate::linalg::LinalgError::EigenFailed)?;
    for v in &vals {
        if v.im.abs() > REALNESS_TOL * scale {
            return Err(SystemError::NotHyperbolic { re: v.re, im: v.im });
        }
    }
    let mut re: Vec<f64> = vals.iter().map(|v| v.re).collect();
    re.sort_by(|x, y| y.total_cmp(x));
    let zero_tol = 1e-12 * scale;
    for r in re.iter_mut() {
        if r.abs() <= zero_tol {
            *r = 0.0;
        }
    }
    // Group repeated eigenvalues.
    let group_tol = 1e-8 * scale;
    let mut groups: Vec<(f64, usize)> = Vec::new();
    for &r in &re {
        match groups.last_mut() {
            Some((g, k)) if (r - *g).abs() <= group_tol => {
                *k += 1;
            }
            _ => groups.push((r, 1)),
        }
    }
    let mut cols: Vec<(f64, Vec<f64>)> = Vec::with_capacity(n);
    for &(lam, k) in &groups {
        let basis = real_eigenspace(&a, lam, k);
        for j in 0..k {
            cols.push((lam, (0..n).map(|i| basis[(i, j)]).collect()));
        }
    }
    let key = |v: f64| if v > 0.0 { 0 } else if v < 0.0 { 1 } else { 2 };
    cols.sort_by(|x, y| key(x.0).cmp(&key(y.0)).then(y.0.total_cmp(&x.0)));
    let t_inv = Mat::from_fn(n, n, |i, j| cols[j].1[i]);
    let t = t_inv
        .partial_piv_lu()
        .inverse();
    let a_tilde: Vec<f64> = cols.iter().map(|c| c.0).collect();
    let tat = &t * &a * &t_inv;
    let mut off = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { a_tilde[i] } else { 0.0 };
            off = off.max((tat[(i, j)] - target).abs());
        }
    }
    if !off.is_finite() || off > 1e-8 * scale.max(1.0) {
        return Err(SystemError::NotDiagonalizable { residual: off });
    }
    let b_tilde: Vec<Mat<f64>> = system.b.iter().map(|b| &t * &to_mat(b) * &t_inv).collect();
    let tb: Vec<Mat<f64>> = system.b.iter().map(|b| &t * &to_mat(b)).collect();
    let c_tilde = &t * &to_mat(&system.c) * &t_inv;
    let n_plus = a_tilde.iter().filter(|&&v| v > 0.0).count();
    let n_minus = a_tilde.iter().filter(|&&v| v < 0.0).count();
    Ok(CharacteristicForm {
        t,
        t_inv,
        a_tilde,
        b_tilde,
        c_tilde,
        tb,
        n_plus,
        n_minus,
        n_zero: n - n_plus - n_minus,
    })
}

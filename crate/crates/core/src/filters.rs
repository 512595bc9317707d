//! Exact one-way projection and the OWNS-P / OWNS-R approximations.
//!
//! `F_k = Π_j (α_k − β₊ʲ)/(α_k − β₋ʲ)` is carried in log form so that exact
//! zeros and poles (a β equal to an eigenvalue) survive without overflow.

use faer::{c64, Mat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::band::{BandLu, BandMatrix};
use crate::linalg::{cond2, cx, eigenvalues, inverse, matmul, matvec, norm2, select, sub, CMat, DenseLu, LinalgError, I};
use crate::operator::OperatorM;
use crate::spectral::Spectrum;

/// Relative tolerance for treating `α − β` as an exact zero.
pub const POLE_TOL: f64 = 1e-12;
/// Largest eigenvector-matrix condition number accepted for materialization.
pub const MAX_COND: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilterError {
    #[error("ill-conditioned matrix (cond ≈ {cond:.3e})")]
    IllConditioned { cond: f64 },
    #[error("recursion parameter {beta} collides with eigenvalue {mode}")]
    PoleCollision { mode: usize, beta: c64 },
    #[error("1 + cF vanishes for eigenvalue {mode}")]
    PoleAtEigenvalue { mode: usize },
    #[error("filter solve failed at β = {beta} (cond ≈ {cond:.3e})")]
    SolveFailure { beta: c64, cond: f64 },
    #[error("leading coefficient 1 + c vanishes")]
    DegenerateLeadingCoefficient,
    #[error("{0}")]
    Dimension(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamOrigin {
    Greedy,
    Heuristic,
    MinimalP,
    MinimalR,
    User,
}

/// Recursion parameters `{β₊ʲ, β₋ʲ}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecursionParamSet {
    pub beta_plus: Vec<c64>,
    pub beta_minus: Vec<c64>,
    /// Original index of each pair before reordering.
    pub ordering: Vec<usize>,
    pub origin: ParamOrigin,
}

impl RecursionParamSet {
    pub fn new(beta_plus: Vec<c64>, beta_minus: Vec<c64>, origin: ParamOrigin) -> Result<Self, FilterError> {
        if beta_plus.len() != beta_minus.len() {
            return Err(FilterError::Dimension(format!(
                "β₊ has {} entries, β₋ has {}",
                beta_plus.len(),
                beta_minus.len()
            )));
        }
        let ordering = (0..beta_plus.len()).collect();
        Ok(Self { beta_plus, beta_minus, ordering, origin })
    }

    pub fn n_beta(&self) -> usize {
        self.beta_plus.len()
    }

    /// Checks that no β₋ hits a downstream eigenvalue and no β₊ an upstream one.
    pub fn check_poles(&self, spec: &Spectrum) -> Result<(), FilterError> {
        let f = f_values(&spec.alphas, self);
        for (k, fk) in f.iter().enumerate() {
            let bad = if k < spec.n_plus { fk.zeros < 0 } else { fk.zeros > 0 };
            if bad {
                let fam = if k < spec.n_plus { &self.beta_minus } else { &self.beta_plus };
                let tol = POLE_TOL * scale_of(&spec.alphas, self);
                let beta = fam
                    .iter()
                    .copied()
                    .find(|b| (spec.alphas[k] - b).norm() <= tol)
                    .unwrap_or(spec.alphas[k]);
                return Err(FilterError::PoleCollision { mode: k, beta });
            }
        }
        Ok(())
    }
}

/// A complex number as `0^zeros · exp(log_mag + i·phase)`; `zeros < 0` is a pole.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogVal {
    pub zeros: i32,
    pub log_mag: f64,
    pub phase: f64,
}

impl LogVal {
    pub const ONE: LogVal = LogVal { zeros: 0, log_mag: 0.0, phase: 0.0 };

    pub fn inv(self) -> Self {
        Self { zeros: -self.zeros, log_mag: -self.log_mag, phase: -self.phase }
    }

    pub fn mul(self, o: Self) -> Self {
        Self { zeros: self.zeros + o.zeros, log_mag: self.log_mag + o.log_mag, phase: self.phase + o.phase }
    }

    /// Multiplies by `z`, counting it as an exact zero when `|z| ≤ tol`.
    pub fn mul_c(mut self, z: c64, tol: f64) -> Self {
        if z.norm() <= tol {
            self.zeros += 1;
        } else {
            self.log_mag += z.norm().ln();
            self.phase += z.arg();
        }
        self
    }

    /// `ln |·|`, infinite for exact zeros and poles.
    pub fn ln_abs(self) -> f64 {
        match self.zeros {
            0 => self.log_mag,
            z if z > 0 => f64::NEG_INFINITY,
            _ => f64::INFINITY,
        }
    }

    pub fn abs(self) -> f64 {
        self.ln_abs().exp()
    }

    pub fn value(self) -> c64 {
        match self.zeros {
            0 => c64::from_polar(self.log_mag.exp(), self.phase),
            z if z > 0 => cx(0.0, 0.0),
            _ => cx(f64::INFINITY, f64::INFINITY),
        }
    }
}

fn scale_of(alphas: &[c64], xi: &RecursionParamSet) -> f64 {
    alphas
        .iter()
        .chain(&xi.beta_plus)
        .chain(&xi.beta_minus)
        .map(|z| z.norm())
        .fold(1.0, f64::max)
}

/// `F_k` for every `α_k`, in log form. Pairs with `β₊ʲ = β₋ʲ` contribute exactly 1.
pub fn f_values(alphas: &[c64], xi: &RecursionParamSet) -> Vec<LogVal> {
    let tol = POLE_TOL * scale_of(alphas, xi);
    alphas
        .iter()
        .map(|&a| {
            let mut f = LogVal::ONE;
            for (bp, bm) in xi.beta_plus.iter().zip(&xi.beta_minus) {
                if (bp - bm).norm() <= tol {
                    continue;
                }
                f = f.mul_c(a - bp, tol).mul(LogVal::ONE.mul_c(a - bm, tol).inv());
            }
            f
        })
        .collect()
}

fn v_inverse(spec: &Spectrum) -> Result<CMat, FilterError> {
    if !(spec.cond_v <= MAX_COND) {
        return Err(FilterError::IllConditioned { cond: spec.cond_v });
    }
    Ok(inverse(spec.v.as_ref())?)
}

/// `V diag(d) V⁻¹`.
fn similarity(spec: &Spectrum, vinv: &CMat, d: &[c64]) -> CMat {
    let vd = Mat::from_fn(spec.n(), spec.n(), |i, j| spec.v[(i, j)] * d[j]);
    matmul(vd.as_ref(), vinv.as_ref())
}

/// Exact projection `P = V E V⁻¹` onto the downstream eigenvectors.
pub fn exact_projection(spec: &Spectrum) -> Result<CMat, FilterError> {
    let vinv = v_inverse(spec)?;
    Ok(similarity(spec, &vinv, &e_mask(spec)))
}

fn e_mask(spec: &Spectrum) -> Vec<c64> {
    (0..spec.n())
        .map(|k| if k < spec.n_plus { cx(1.0, 0.0) } else { cx(0.0, 0.0) })
        .collect()
}

/// Row indices of `V` grouped by the sign of the characteristic speed.
pub fn row_partition(spec: &Spectrum) -> Result<(Vec<usize>, Vec<usize>), FilterError> {
    let plus: Vec<usize> = (0..spec.n()).filter(|&i| spec.row_signs[i] > 0).collect();
    let minus: Vec<usize> = (0..spec.n()).filter(|&i| spec.row_signs[i] < 0).collect();
    if plus.len() != spec.n_plus || minus.len() != spec.n_minus {
        return Err(FilterError::Dimension(format!(
            "row partition ({}, {}) does not match mode counts ({}, {})",
            plus.len(),
            minus.len(),
            spec.n_plus,
            spec.n_minus
        )));
    }
    Ok((plus, minus))
}

/// `(V₊₊⁻¹V₊₋, V₋₋⁻¹V₋₊)`.
pub fn coupling_blocks(spec: &Spectrum) -> Result<(CMat, CMat), FilterError> {
    let (pr, mr) = row_partition(spec)?;
    let dc: Vec<usize> = (0..spec.n_plus).collect();
    let uc: Vec<usize> = (spec.n_plus..spec.n()).collect();
    let v = spec.v.as_ref();
    let vpp = DenseLu::new(select(v, &pr, &dc).as_ref())?;
    let vmm = DenseLu::new(select(v, &mr, &uc).as_ref())?;
    let x = vpp.solve_mat(select(v, &pr, &uc).as_ref());
    let y = vmm.solve_mat(select(v, &mr, &dc).as_ref());
    Ok((x, y))
}

/// Materialized OWNS-P approximation.
#[derive(Debug, Clone)]
pub struct FilterOwnsP {
    pub f_diag: Vec<c64>,
    pub f_log: Vec<LogVal>,
    pub r: CMat,
    pub r_inv: CMat,
    pub p_mat: CMat,
    pub e_mask: Vec<u8>,
}

/// `P_Nβ = V R E R⁻¹ V⁻¹` with `R⁻¹ = [[I, F₊₊X F₋₋⁻¹], [F₋₋⁻¹Y F₊₊, I]]`.
pub fn ownsp_matrix(spec: &Spectrum, xi: &RecursionParamSet) -> Result<FilterOwnsP, FilterError> {
    xi.check_poles(spec)?;
    let n = spec.n();
    let np = spec.n_plus;
    let f_log = f_values(&spec.alphas, xi);
    let (x, y) = coupling_blocks(spec)?;
    let mut r_inv = crate::linalg::identity(n);
    for a in 0..np {
        for b in np..n {
            // F_a / F_b, never a pole after check_poles
            let g = f_log[a].mul(f_log[b].inv()).value();
            r_inv[(a, b)] = g * x[(a, b - np)];
            r_inv[(b, a)] = g * y[(b - np, a)];
        }
    }
    let cond_r = cond2(r_inv.as_ref())?;
    if !(cond_r <= MAX_COND) {
        return Err(FilterError::IllConditioned { cond: cond_r });
    }
    let r = inverse(r_inv.as_ref())?;
    let vinv = v_inverse(spec)?;
    let re = Mat::from_fn(n, n, |i, j| if j < np { r[(i, j)] } else { cx(0.0, 0.0) });
    let rer = matmul(re.as_ref(), r_inv.as_ref());
    let p_mat = matmul(matmul(spec.v.as_ref(), rer.as_ref()).as_ref(), vinv.as_ref());
    Ok(FilterOwnsP {
        f_diag: f_log.iter().map(|f| f.value()).collect(),
        f_log,
        r,
        r_inv,
        p_mat,
        e_mask: (0..n).map(|k| u8::from(k < np)).collect(),
    })
}

/// OWNS-P recursive filter as one banded solve over the auxiliary variables
/// `φ^{-Nβ}, …, φ^{Nβ}`; the factorization is reusable across right-hand sides.
pub struct OwnsPFilter {
    n: usize,
    n_plus: usize,
    n_beta: usize,
    lu: BandLu,
    /// `M − iβ₋⁰ I`, applied to the input.
    rhs_op: CMat,
}

impl OwnsPFilter {
    pub fn new(m: &OperatorM, xi: &RecursionParamSet) -> Result<Self, FilterError> {
        let nb = xi.n_beta();
        if nb == 0 {
            return Err(FilterError::Dimension("OWNS-P needs at least one recursion pair".into()));
        }
        let n = m.n();
        let plus = m.plus_rows();
        let minus = m.minus_rows();
        if plus.len() + minus.len() != n {
            return Err(FilterError::Dimension("operator has unreduced zero rows".into()));
        }
        let np = plus.len();
        let total = (2 * nb + 1) * n;
        let kl = np + n - 1;
        let ku = 2 * n - 1 - np;
        let mut band = BandMatrix::zeros(total, kl, ku);
        for (r, &p) in plus.iter().enumerate() {
            band.add(r, p, cx(1.0, 0.0));
        }
        let shifted = |beta: c64, sign: f64, band: &mut BandMatrix, row0: usize, col0: usize| {
            for i in 0..n {
                for j in 0..n {
                    let mut v = m.m[(i, j)];
                    if i == j {
                        v -= I * beta;
                    }
                    if v != cx(0.0, 0.0) {
                        band.add(row0 + i, col0 + j, v * sign);
                    }
                }
            }
        };
        for blk in 0..2 * nb {
            let row0 = np + blk * n;
            let (c_left, c_right) = (blk * n, (blk + 1) * n);
            if blk < nb {
                let j = nb - 1 - blk;
                shifted(xi.beta_plus[j], -1.0, &mut band, row0, c_left);
                shifted(xi.beta_minus[j], 1.0, &mut band, row0, c_right);
            } else {
                let j = blk - nb;
                shifted(xi.beta_plus[j], 1.0, &mut band, row0, c_left);
                shifted(xi.beta_minus[j], -1.0, &mut band, row0, c_right);
            }
        }
        let last = 2 * nb * n;
        for (r, &q) in minus.iter().enumerate() {
            band.add(np + 2 * nb * n + r, last + q, cx(1.0, 0.0));
        }
        let lu = band.factor().map_err(|e| FilterError::SolveFailure {
            beta: xi.beta_minus[0],
            cond: match e {
                LinalgError::Singular { cond } => cond,
                _ => f64::INFINITY,
            },
        })?;
        let rhs_op = Mat::from_fn(n, n, |i, j| m.m[(i, j)] - if i == j { I * xi.beta_minus[0] } else { cx(0.0, 0.0) });
        Ok(Self { n, n_plus: np, n_beta: nb, lu, rhs_op })
    }

    pub fn pivot_ratio(&self) -> f64 {
        self.lu.pivot_ratio()
    }

    pub fn apply(&self, phi: &[c64]) -> Vec<c64> {
        let n = self.n;
        let nb = self.n_beta;
        let mut b = vec![cx(0.0, 0.0); self.lu.dim()];
        let rhs = matvec(self.rhs_op.as_ref(), phi);
        // link block Nβ−1 holds the j = 0 middle equation
        let row0 = self.n_plus + (nb - 1) * n;
        b[row0..row0 + n].copy_from_slice(&rhs);
        self.lu.solve_in_place(&mut b);
        b[nb * n..(nb + 1) * n].to_vec()
    }

    pub fn apply_mat(&self, x: &CMat) -> CMat {
        let cols: Vec<Vec<c64>> = (0..x.ncols())
            .into_par_iter()
            .map(|j| self.apply(&crate::linalg::col_to_vec(x.as_ref(), j)))
            .collect();
        Mat::from_fn(x.nrows(), x.ncols(), |i, j| cols[j][i])
    }
}

/// One-shot OWNS-P application.
pub fn ownsp_apply_filter(m: &OperatorM, xi: &RecursionParamSet, phi: &[c64]) -> Result<Vec<c64>, FilterError> {
    Ok(OwnsPFilter::new(m, xi)?.apply(phi))
}

/// `E_Nβ = (I + cF)⁻¹` per eigenvalue.
pub fn ownsr_eigvals(spec: &Spectrum, xi: &RecursionParamSet, c: c64) -> Result<Vec<c64>, FilterError> {
    ownsr_eigvals_of(&spec.alphas, xi, c)
}

pub fn ownsr_eigvals_of(alphas: &[c64], xi: &RecursionParamSet, c: c64) -> Result<Vec<c64>, FilterError> {
    f_values(alphas, xi)
        .iter()
        .enumerate()
        .map(|(k, f)| {
            if f.zeros > 0 || c == cx(0.0, 0.0) {
                return Ok(cx(1.0, 0.0));
            }
            if f.zeros < 0 {
                return Ok(cx(0.0, 0.0));
            }
            let cf = LogVal::ONE.mul_c(c, 0.0).mul(*f);
            if cf.log_mag > 600.0 {
                return Ok(cf.inv().value() / (cx(1.0, 0.0) + cf.inv().value()));
            }
            let d = cx(1.0, 0.0) + cf.value();
            if d.norm() <= POLE_TOL * (1.0 + cf.value().norm()) {
                return Err(FilterError::PoleAtEigenvalue { mode: k });
            }
            Ok(cx(1.0, 0.0) / d)
        })
        .collect()
}

/// Materialized OWNS-R approximation.
#[derive(Debug, Clone)]
pub struct FilterOwnsR {
    pub c: c64,
    pub e_approx: Vec<c64>,
    pub beta_star: Vec<c64>,
    pub p_mat: CMat,
}

pub fn ownsr_matrix(spec: &Spectrum, xi: &RecursionParamSet, c: c64) -> Result<FilterOwnsR, FilterError> {
    let e = ownsr_eigvals(spec, xi, c)?;
    let vinv = v_inverse(spec)?;
    let p_mat = similarity(spec, &vinv, &e);
    let bs = ownsr_beta_star(xi, c)?;
    Ok(FilterOwnsR { c, e_approx: e, beta_star: bs.roots, p_mat })
}

/// Coefficients (ascending powers) of `Π (x − r)`.
pub fn poly_from_roots(roots: &[c64]) -> Vec<c64> {
    let mut p = vec![cx(1.0, 0.0)];
    for &r in roots {
        let mut q = vec![cx(0.0, 0.0); p.len() + 1];
        for (k, &a) in p.iter().enumerate() {
            q[k + 1] += a;
            q[k] -= a * r;
        }
        p = q;
    }
    p
}

/// Roots of a monic polynomial (ascending coefficients) via its companion matrix.
pub fn monic_roots(coef: &[c64]) -> Result<Vec<c64>, FilterError> {
    let n = coef.len() - 1;
    let comp = Mat::from_fn(n, n, |i, j| {
        if j == n - 1 {
            -coef[i]
        } else if i == j + 1 {
            cx(1.0, 0.0)
        } else {
            cx(0.0, 0.0)
        }
    });
    Ok(eigenvalues(comp.as_ref())?)
}

#[derive(Debug, Clone)]
pub struct BetaStar {
    pub roots: Vec<c64>,
    /// Residual metric over 100 fixed samples in `[-1, 1]²`.
    pub residual: f64,
}

/// Roots `β*` of `(1 + c) Π(α − β*) = Π(α − β₋) + c Π(α − β₊)`; `c = 1` is the usual form.
pub fn ownsr_beta_star(xi: &RecursionParamSet, c: c64) -> Result<BetaStar, FilterError> {
    let nb = xi.n_beta();
    if nb == 0 {
        return Err(FilterError::Dimension("OWNS-R needs at least one recursion pair".into()));
    }
    let lead = cx(1.0, 0.0) + c;
    if lead.norm() <= POLE_TOL {
        return Err(FilterError::DegenerateLeadingCoefficient);
    }
    let pm = poly_from_roots(&xi.beta_minus);
    let pp = poly_from_roots(&xi.beta_plus);
    let q: Vec<c64> = pm.iter().zip(&pp).map(|(a, b)| (a + c * b) / lead).collect();
    debug_assert!((q[nb] - cx(1.0, 0.0)).norm() < 1e-14);
    let roots = monic_roots(&q)?;
    let residual = polynomial_residual_error(xi, &roots, c, 1.0, 100, 0x43);
    Ok(BetaStar { roots, residual })
}

fn prod(z: c64, roots: &[c64]) -> c64 {
    roots.iter().fold(cx(1.0, 0.0), |acc, r| acc * (z - r))
}

/// Max over random samples `z` in `scale·[-1, 1]²` of
/// `|(1+c)Π(z−β*) − Π(z−β₋) − cΠ(z−β₊)| / |Π(z−β₋) − cΠ(z−β₊)|`.
pub fn polynomial_residual_error(
    xi: &RecursionParamSet,
    beta_star: &[c64],
    c: c64,
    scale: f64,
    samples: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let z = cx(rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)) * scale;
        let pm = prod(z, &xi.beta_minus);
        let pp = prod(z, &xi.beta_plus);
        let num = ((cx(1.0, 0.0) + c) * prod(z, beta_star) - pm - c * pp).norm();
        let den = (pm - c * pp).norm();
        worst = worst.max(num / den);
    }
    worst
}

/// Practical OWNS-R application with one cached LU per `β*`.
pub struct OwnsRFilter {
    c: c64,
    m: CMat,
    beta_minus: Vec<c64>,
    lus: Vec<DenseLu>,
    pub beta_star: BetaStar,
}

impl OwnsRFilter {
    pub fn new(m: &OperatorM, xi: &RecursionParamSet, c: c64) -> Result<Self, FilterError> {
        let bs = ownsr_beta_star(xi, c)?;
        Self::with_beta_star(m, xi, c, bs)
    }

    pub fn with_beta_star(m: &OperatorM, xi: &RecursionParamSet, c: c64, bs: BetaStar) -> Result<Self, FilterError> {
        let n = m.n();
        let lus = bs
            .roots
            .iter()
            .map(|&b| {
                let a = Mat::from_fn(n, n, |i, j| m.m[(i, j)] - if i == j { I * b } else { cx(0.0, 0.0) });
                DenseLu::new(a.as_ref()).map_err(|_| FilterError::SolveFailure { beta: b, cond: f64::INFINITY })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { c, m: m.m.clone(), beta_minus: xi.beta_minus.clone(), lus, beta_star: bs })
    }

    pub fn apply(&self, phi: &[c64]) -> Vec<c64> {
        let s = cx(1.0, 0.0) / (cx(1.0, 0.0) + self.c);
        let mut x: Vec<c64> = phi.iter().map(|z| z * s).collect();
        for (lu, &bm) in self.lus.iter().zip(&self.beta_minus) {
            let mut r = matvec(self.m.as_ref(), &x);
            for (ri, xi) in r.iter_mut().zip(&x) {
                *ri -= I * bm * xi;
            }
            x = lu.solve_vec(&r);
        }
        x
    }

    pub fn apply_mat(&self, b: &CMat) -> CMat {
        let s = cx(1.0, 0.0) / (cx(1.0, 0.0) + self.c);
        let mut x = Mat::from_fn(b.nrows(), b.ncols(), |i, j| b[(i, j)] * s);
        for (lu, &bm) in self.lus.iter().zip(&self.beta_minus) {
            let mut r = matmul(self.m.as_ref(), x.as_ref());
            for j in 0..x.ncols() {
                for i in 0..x.nrows() {
                    r[(i, j)] -= I * bm * x[(i, j)];
                }
            }
            x = lu.solve_mat(r.as_ref());
        }
        x
    }
}

pub fn ownsr_apply(m: &OperatorM, xi: &RecursionParamSet, beta_star: &BetaStar, phi: &[c64]) -> Result<Vec<c64>, FilterError> {
    ownsr_apply_c(m, xi, cx(1.0, 0.0), beta_star, phi)
}

pub fn ownsr_apply_c(
    m: &OperatorM,
    xi: &RecursionParamSet,
    c: c64,
    beta_star: &BetaStar,
    phi: &[c64],
) -> Result<Vec<c64>, FilterError> {
    Ok(OwnsRFilter::with_beta_star(m, xi, c, beta_star.clone())?.apply(phi))
}

/// `‖PM − MP‖₂`.
pub fn commutator_norm(p: &CMat, m: &CMat) -> f64 {
    let pm = matmul(p.as_ref(), m.as_ref());
    let mp = matmul(m.as_ref(), p.as_ref());
    norm2(sub(pm.as_ref(), mp.as_ref()).as_ref())
}

/// `‖A² − A‖₂`.
pub fn idempotency_defect(a: &CMat) -> f64 {
    let a2 = matmul(a.as_ref(), a.as_ref());
    norm2(sub(a2.as_ref(), a.as_ref()).as_ref())
}

/// Which approximation a march or study uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FilterKind {
    OwnsP,
    OwnsR {
        #[serde(default = "default_c")]
        c: f64,
    },
}

fn default_c() -> f64 {
    1.0
}

impl FilterKind {
    pub fn name(&self) -> &'static str {
        match self {
            FilterKind::OwnsP => "owns_p",
            FilterKind::OwnsR { .. } => "owns_r",
        }
    }
}

/// Per-station factored filter of either kind.
pub enum StationFilter {
    P(OwnsPFilter),
    R(OwnsRFilter),
}

impl StationFilter {
    pub fn new(kind: FilterKind, m: &OperatorM, xi: &RecursionParamSet) -> Result<Self, FilterError> {
        Ok(match kind {
            FilterKind::OwnsP => StationFilter::P(OwnsPFilter::new(m, xi)?),
            FilterKind::OwnsR { c } => StationFilter::R(OwnsRFilter::new(m, xi, cx(c, 0.0))?),
        })
    }

    pub fn apply(&self, phi: &[c64]) -> Vec<c64> {
        match self {
            StationFilter::P(f) => f.apply(phi),
            StationFilter::R(f) => f.apply(phi),
        }
    }

    pub fn apply_mat(&self, x: &CMat) -> CMat {
        match self {
            StationFilter::P(f) => f.apply_mat(x),
            StationFilter::R(f) => f.apply_mat(x),
        }
    }

    /// Number of dense or banded factorizations behind this filter.
    pub fn factorizations(&self) -> usize {
        match self {
            StationFilter::P(_) => 1,
            StationFilter::R(f) => f.lus.len(),
        }
    }
}

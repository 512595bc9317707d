//! Spectrum of `M`, Briggs classification, and targeted eigenpair updates.

use faer::{c64, Mat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{cond2, cx, eig, eigenvalues, matvec, norm2, vnorm, CMat, DenseLu, LinalgError, I};
use crate::operator::OperatorM;
use crate::system::SystemError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("eigenvalue {index} has |Im α| = {im:.3e} below the threshold at large η")]
    ClassificationAmbiguous { index: usize, im: f64 },
    #[error("nearest-neighbour pairing failed near η = {eta:.3e}")]
    UnresolvedPairing { eta: f64 },
    #[error("Briggs counts ({got_plus}, {got_minus}) disagree with characteristic counts ({want_plus}, {want_minus})")]
    CountMismatch { want_plus: usize, want_minus: usize, got_plus: usize, got_minus: usize },
    #[error("inverse iteration did not converge for shift {re:.6e}{im:+.6e}i")]
    NoConvergence { re: f64, im: f64 },
    #[error("empty shift list")]
    NoShifts,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    System(#[from] SystemError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Downstream,
    Upstream,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Downstream => "downstream",
            Label::Upstream => "upstream",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpectralOptions {
    /// Defaults to `1e3 · max(1, ‖M(s0)‖)`.
    pub eta_large: Option<f64>,
    pub threshold: f64,
    /// Initial number of continuation steps in `ln(1 + η)`.
    pub steps: usize,
    pub max_halvings: usize,
    /// Eigenvalues closer than this (relative to the largest modulus) are
    /// treated as one cluster and may be paired in any order.
    pub cluster_tol: f64,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self { eta_large: None, threshold: 10.0, steps: 24, max_halvings: 30, cluster_tol: 1e-4 }
    }
}

/// Classified eigendecomposition `M V = V diag(iα)`, downstream columns first.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub alphas: Vec<c64>,
    pub v: CMat,
    pub labels: Vec<Label>,
    pub n_plus: usize,
    pub n_minus: usize,
    pub cond_v: f64,
    pub s_used: c64,
    pub eta_used: f64,
    /// Continuation end points, aligned with `alphas`.
    pub alphas_eta: Vec<c64>,
    /// Row partition of `V` (sign of `Ã` per retained row).
    pub row_signs: Vec<i8>,
    /// Dense eigen-solves spent on this spectrum.
    pub eig_calls: usize,
}

impl Spectrum {
    pub fn n(&self) -> usize {
        self.alphas.len()
    }

    pub fn downstream(&self) -> &[c64] {
        &self.alphas[..self.n_plus]
    }

    pub fn upstream(&self) -> &[c64] {
        &self.alphas[self.n_plus..]
    }

    /// Largest eigenvalue modulus, at least 1; sets relative tolerances.
    pub fn scale(&self) -> f64 {
        self.alphas.iter().map(|a| a.norm()).fold(1.0, f64::max)
    }

    /// Builds a spectrum directly from eigenpairs and labels (tests, constructed cases).
    pub fn from_parts(alphas: Vec<c64>, v: CMat, labels: Vec<Label>, row_signs: Vec<i8>) -> Result<Self, SpectralError> {
        let n = alphas.len();
        let mut order: Vec<usize> = (0..n).filter(|&k| labels[k] == Label::Downstream).collect();
        let n_plus = order.len();
        order.extend((0..n).filter(|&k| labels[k] == Label::Upstream));
        let v2 = Mat::from_fn(n, n, |i, j| v[(i, order[j])]);
        let cond_v = cond2(v2.as_ref())?;
        Ok(Self {
            alphas: order.iter().map(|&k| alphas[k]).collect(),
            v: v2,
            labels: order.iter().map(|&k| labels[k]).collect(),
            n_plus,
            n_minus: n - n_plus,
            cond_v,
            s_used: cx(0.0, 0.0),
            eta_used: 0.0,
            alphas_eta: order.iter().map(|&k| alphas[k]).collect(),
            row_signs,
            eig_calls: 0,
        })
    }
}

/// Eigenvalues of `M` in the `α` convention (`λ = iα`).
pub fn alphas_of(m: &CMat) -> Result<Vec<c64>, LinalgError> {
    Ok(eigenvalues(m.as_ref())?.into_iter().map(|l| -I * l).collect())
}

/// Greedy nearest-neighbour match of `from` onto `to`; returns `perm` with
/// `to[perm[i]]` paired to `from[i]`, or `None` if a match is too far relative
/// to the local separation of `from`.
fn match_step(from: &[c64], to: &[c64], rel: f64, cluster_rel: f64) -> Option<Vec<usize>> {
    let n = from.len();
    let scale = from.iter().chain(to).map(|z| z.norm()).fold(f64::MIN_POSITIVE, f64::max);
    let cluster = cluster_rel * scale;
    let mut used = vec![false; n];
    let mut perm = vec![0usize; n];
    for i in 0..n {
        let mut gap = f64::INFINITY;
        for j in 0..n {
            let d = (from[j] - from[i]).norm();
            if d > cluster {
                gap = gap.min(d);
            }
        }
        let mut best = (usize::MAX, f64::INFINITY);
        for (j, &w) in to.iter().enumerate() {
            if used[j] {
                continue;
            }
            let d = (w - from[i]).norm();
            if d < best.1 {
                best = (j, d);
            }
        }
        if best.0 == usize::MAX || (best.1 > cluster && best.1 > rel * gap) {
            return None;
        }
        used[best.0] = true;
        perm[i] = best.0;
    }
    Some(perm)
}

/// Follows each starting eigenvalue along `t ∈ [0, t_end]` with adaptive steps
/// in `ln(1+t)`, comparing eigenvalues scaled by `1/(1+t)` against a secant
/// prediction. Returns the end points aligned with `start` and the number of
/// evaluations of `f`.
pub fn continue_eigenvalues<F>(
    mut f: F,
    start: &[c64],
    t_end: f64,
    opts: &SpectralOptions,
) -> Result<(Vec<c64>, usize), SpectralError>
where
    F: FnMut(f64) -> Result<Vec<c64>, SpectralError>,
{
    let u_end = (1.0 + t_end).ln();
    let du0 = u_end / opts.steps.max(1) as f64;
    let mut du = du0;
    let mut u = 0.0;
    let mut cur: Vec<c64> = start.to_vec();
    // previous scaled positions and the step that led to `cur`
    let mut prev: Option<(Vec<c64>, f64)> = None;
    let mut calls = 0usize;
    let mut halvings = 0usize;
    while u < u_end {
        let u_next = (u + du).min(u_end);
        let step = u_next - u;
        let t_cur = u.exp() - 1.0;
        let t_next = if u_next == u_end { t_end } else { u_next.exp() - 1.0 };
        let next = f(t_next)?;
        calls += 1;
        let zc: Vec<c64> = cur.iter().map(|z| z / (1.0 + t_cur)).collect();
        let pred: Vec<c64> = match &prev {
            Some((zp, dp)) => zc.iter().zip(zp).map(|(c, p)| c + (c - p) * (step / dp)).collect(),
            None => zc.clone(),
        };
        let zn: Vec<c64> = next.iter().map(|z| z / (1.0 + t_next)).collect();
        match match_step(&pred, &zn, 0.3, opts.cluster_tol) {
            Some(perm) => {
                cur = perm.iter().map(|&j| next[j]).collect();
                prev = Some((zc, step));
                u = u_next;
                du = (du * 1.5).min(4.0 * du0);
                halvings = 0;
            }
            None => {
                halvings += 1;
                if halvings > opts.max_halvings {
                    return Err(SpectralError::UnresolvedPairing { eta: t_next });
                }
                du *= 0.5;
            }
        }
    }
    Ok((cur, calls))
}

/// Labels by the sign of `Im α` at large `η` after nearest-neighbour pairing.
pub fn classify_briggs(alphas_s0: &[c64], alphas_eta: &[c64], threshold: f64) -> Result<Vec<Label>, SpectralError> {
    if alphas_s0.len() != alphas_eta.len() {
        return Err(SpectralError::UnresolvedPairing { eta: f64::NAN });
    }
    let perm = match_step(alphas_s0, alphas_eta, f64::INFINITY, 0.0).ok_or(SpectralError::UnresolvedPairing { eta: f64::NAN })?;
    let aligned: Vec<c64> = perm.iter().map(|&j| alphas_eta[j]).collect();
    label_aligned(&aligned, threshold)
}

/// Labels end points that are already aligned with their starting eigenvalues.
pub fn label_aligned(alphas_eta: &[c64], threshold: f64) -> Result<Vec<Label>, SpectralError> {
    alphas_eta
        .iter()
        .enumerate()
        .map(|(i, a)| {
            if a.im >= threshold {
                Ok(Label::Downstream)
            } else if a.im <= -threshold {
                Ok(Label::Upstream)
            } else {
                Err(SpectralError::ClassificationAmbiguous { index: i, im: a.im })
            }
        })
        .collect()
}

/// Unit norm with the first significant entry real and positive.
pub fn normalize_columns(v: &mut CMat) {
    for j in 0..v.ncols() {
        let nrm = (0..v.nrows()).map(|i| v[(i, j)].norm_sqr()).sum::<f64>().sqrt();
        if nrm == 0.0 {
            continue;
        }
        let big = (0..v.nrows()).map(|i| v[(i, j)].norm()).fold(0.0, f64::max);
        let k = (0..v.nrows()).find(|&i| v[(i, j)].norm() > 1e-8 * big).unwrap_or(0);
        let ph = v[(k, j)].conj() / v[(k, j)].norm();
        for i in 0..v.nrows() {
            v[(i, j)] = v[(i, j)] * ph / nrm;
        }
    }
}

/// Dense eigendecomposition at `s0`, classified by continuation to `s0 + η_large`.
pub fn full_spectrum<F>(builder: F, s0: c64, opts: &SpectralOptions) -> Result<Spectrum, SpectralError>
where
    F: Fn(c64) -> Result<OperatorM, SystemError>,
{
    let op0 = builder(s0)?;
    let n = op0.n();
    let (lams, mut v) = eig(op0.m.as_ref())?;
    let alphas0: Vec<c64> = lams.iter().map(|l| -I * l).collect();
    let eta = opts
        .eta_large
        .unwrap_or_else(|| 1e3 * norm2(op0.m.as_ref()).max(1.0));
    let (end, calls) = continue_eigenvalues(
        |t| Ok(alphas_of(&builder(s0 + t)?.m)?),
        &alphas0,
        eta,
        opts,
    )?;
    let labels = label_aligned(&end, opts.threshold)?;
    let got_plus = labels.iter().filter(|&&l| l == Label::Downstream).count();
    let (want_plus, want_minus) = (op0.n_plus(), op0.n_minus());
    if got_plus != want_plus {
        return Err(SpectralError::CountMismatch { want_plus, want_minus, got_plus, got_minus: n - got_plus });
    }
    normalize_columns(&mut v);
    let mut order: Vec<usize> = (0..n).filter(|&k| labels[k] == Label::Downstream).collect();
    order.extend((0..n).filter(|&k| labels[k] == Label::Upstream));
    let vs = Mat::from_fn(n, n, |i, j| v[(i, order[j])]);
    let cond_v = cond2(vs.as_ref())?;
    Ok(Spectrum {
        alphas: order.iter().map(|&k| alphas0[k]).collect(),
        v: vs,
        labels: order.iter().map(|&k| labels[k]).collect(),
        n_plus: got_plus,
        n_minus: n - got_plus,
        cond_v,
        s_used: s0,
        eta_used: eta,
        alphas_eta: order.iter().map(|&k| end[k]).collect(),
        row_signs: op0.row_signs.clone(),
        eig_calls: calls + 1,
    })
}

#[derive(Debug, Clone)]
pub struct NearestOptions {
    pub max_iter: usize,
    /// Residual tolerance relative to `‖M‖ ‖v‖`.
    pub tol: f64,
    pub dense_fallback: bool,
}

impl Default for NearestOptions {
    fn default() -> Self {
        Self { max_iter: 60, tol: 1e-8, dense_fallback: false }
    }
}

#[derive(Debug, Clone)]
pub struct NearestEigenpairs {
    pub alphas: Vec<c64>,
    pub vectors: Vec<Vec<c64>>,
    /// Pairs of shift indices that converged to the same eigenvalue.
    pub duplicates: Vec<(usize, usize)>,
    pub dense_fallbacks: usize,
}

/// Shift-invert iteration on `M - iσI` for each shift `σ`.
pub fn nearest_eigenpairs(m: &CMat, shifts: &[c64], opts: &NearestOptions) -> Result<NearestEigenpairs, SpectralError> {
    if shifts.is_empty() {
        return Err(SpectralError::NoShifts);
    }
    let n = m.nrows();
    let mnorm = norm2(m.as_ref()).max(f64::MIN_POSITIVE);
    let mut alphas = Vec::with_capacity(shifts.len());
    let mut vectors = Vec::with_capacity(shifts.len());
    let mut dense_fallbacks = 0usize;
    let mut dense: Option<(Vec<c64>, CMat)> = None;
    for (idx, &sigma) in shifts.iter().enumerate() {
        match inverse_iteration(m, mnorm, sigma, idx as u64, opts) {
            Some((a, v)) => {
                alphas.push(a);
                vectors.push(v);
            }
            None if opts.dense_fallback => {
                if dense.is_none() {
                    let (l, v) = eig(m.as_ref())?;
                    dense = Some((l.into_iter().map(|x| -I * x).collect(), v));
                }
                let (al, vv) = dense.as_ref().unwrap();
                let k = (0..n)
                    .min_by(|&a, &b| (al[a] - sigma).norm().total_cmp(&(al[b] - sigma).norm()))
                    .unwrap();
                alphas.push(al[k]);
                let mut col: Vec<c64> = (0..n).map(|i| vv[(i, k)]).collect();
                let s = vnorm(&col);
                col.iter_mut().for_each(|z| *z /= s);
                vectors.push(col);
                dense_fallbacks += 1;
            }
            None => return Err(SpectralError::NoConvergence { re: sigma.re, im: sigma.im }),
        }
    }
    let mut duplicates = Vec::new();
    for i in 0..alphas.len() {
        for j in i + 1..alphas.len() {
            let tol = 1e-8 * alphas[i].norm().max(1.0);
            if (alphas[i] - alphas[j]).norm() <= tol {
                duplicates.push((i, j));
            }
        }
    }
    Ok(NearestEigenpairs { alphas, vectors, duplicates, dense_fallbacks })
}

fn shifted_lu(m: &CMat, sigma: c64) -> Option<DenseLu> {
    let n = m.nrows();
    let mut shift = sigma;
    for k in 0..4 {
        let a = Mat::from_fn(n, n, |i, j| m[(i, j)] - if i == j { I * shift } else { cx(0.0, 0.0) });
        if let Ok(f) = DenseLu::new(a.as_ref()) {
            return Some(f);
        }
        // Exactly singular: nudge the shift off the eigenvalue.
        let bump = 1e-10 * (1u64 << (4 * k)) as f64 * sigma.norm().max(1.0);
        shift = sigma + cx(bump, bump);
    }
    None
}

/// Iterations between Rayleigh-quotient shift updates when the fixed shift
/// converges slowly (nearly equidistant eigenvalues).
const REFRESH_EVERY: usize = 12;

fn inverse_iteration(m: &CMat, mnorm: f64, sigma: c64, seed: u64, opts: &NearestOptions) -> Option<(c64, Vec<c64>)> {
    let n = m.nrows();
    let mut lu = shifted_lu(m, sigma)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed ^ seed);
    let mut x: Vec<c64> = (0..n).map(|_| cx(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let s = vnorm(&x);
    x.iter_mut().for_each(|z| *z /= s);
    for it in 1..=opts.max_iter {
        let mut y = lu.solve_vec(&x);
        let s = vnorm(&y);
        if !s.is_finite() || s == 0.0 {
            return None;
        }
        y.iter_mut().for_each(|z| *z /= s);
        let my = matvec(m.as_ref(), &y);
        let lam: c64 = y.iter().zip(&my).map(|(a, b)| a.conj() * b).sum();
        let res: f64 = my.iter().zip(&y).map(|(a, b)| (a - lam * b).norm_sqr()).sum::<f64>().sqrt();
        x = y;
        if res <= opts.tol * mnorm {
            return Some((-I * lam, x));
        }
        if it % REFRESH_EVERY == 0 {
            lu = shifted_lu(m, -I * lam)?;
        }
    }
    None
}

//! Quantitative checks on approximate projections: projection and mode
//! errors, first-order error bounds, a stability report on the filtered
//! operator, the `β*` residual, and a seeded error-study grid.

use std::time::Instant;

use faer::{c64, Mat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::filters::{
    coupling_blocks, exact_projection, f_values, ownsp_matrix, ownsr_beta_star, ownsr_eigvals, ownsr_matrix,
    polynomial_residual_error, FilterError, FilterKind, RecursionParamSet, StationFilter,
};
use crate::linalg::{col_to_vec, cx, eigenvalues, identity, inverse, matmul, matvec, norm2, sub, vnorm, CMat};
use crate::operator::OperatorM;
use crate::param_select::{
    greedy_select, heuristic_select, minimal_set_ownsp, minimal_set_ownsr, objectives, GreedyOptions, HeuristicConfig,
    SelectError,
};
use crate::spectral::{Label, Spectrum};

/// Default number of random trials for [`projection_error`].
pub const PROJECTION_TRIALS: usize = 20;
/// Default `ε̂` in the smallness precondition.
pub const EPS_HAT: f64 = 0.01;

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<c64> {
    (0..n).map(|_| cx(rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0))).collect()
}

/// Max over trials of `‖P̃(V₊ψ₊ + V₋ψ₋) − V₊ψ₊‖ / ‖V₊ψ₊‖`.
pub fn projection_error(p_approx: &CMat, spec: &Spectrum, n_trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.n();
    let mut worst = 0.0f64;
    for _ in 0..n_trials.max(1) {
        let psi = random_vec(&mut rng, n);
        let mut down = vec![cx(0.0, 0.0); n];
        let mut all = vec![cx(0.0, 0.0); n];
        for k in 0..n {
            for i in 0..n {
                let t = spec.v[(i, k)] * psi[k];
                all[i] += t;
                if k < spec.n_plus {
                    down[i] += t;
                }
            }
        }
        let pd = matvec(p_approx.as_ref(), &all);
        let err: Vec<c64> = pd.iter().zip(&down).map(|(a, b)| a - b).collect();
        let den = vnorm(&down);
        if den > 0.0 {
            worst = worst.max(vnorm(&err) / den);
        }
    }
    worst
}

/// `‖P̃v − v‖ / ‖v‖`.
pub fn mode_error(p_approx: &CMat, mode: &[c64]) -> f64 {
    let pv = matvec(p_approx.as_ref(), mode);
    let d: Vec<c64> = pv.iter().zip(mode).map(|(a, b)| a - b).collect();
    vnorm(&d) / vnorm(mode)
}

/// Downstream mode with the largest `−Im α` (the most amplified one).
pub fn designated_mode(spec: &Spectrum) -> Option<usize> {
    (0..spec.n_plus).min_by(|&a, &b| spec.alphas[a].im.total_cmp(&spec.alphas[b].im))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagMethod {
    OwnsP,
    OwnsR,
}

impl DiagMethod {
    pub fn name(self) -> &'static str {
        match self {
            DiagMethod::OwnsP => "owns_p",
            DiagMethod::OwnsR => "owns_r",
        }
    }
}

/// Materialized approximate projector for either method (`c = 1` for OWNS-R).
pub fn approx_projector(spec: &Spectrum, xi: &RecursionParamSet, method: DiagMethod) -> Result<CMat, FilterError> {
    match method {
        DiagMethod::OwnsP => Ok(ownsp_matrix(spec, xi)?.p_mat),
        DiagMethod::OwnsR => Ok(ownsr_matrix(spec, xi, cx(1.0, 0.0))?.p_mat),
    }
}

/// Projector as the practical filter applies it (banded OWNS-P solve, or
/// OWNS-R through its `β*` factorizations), materialized column by column.
pub fn applied_projector(op: &OperatorM, xi: &RecursionParamSet, method: DiagMethod) -> Result<CMat, FilterError> {
    let kind = match method {
        DiagMethod::OwnsP => FilterKind::OwnsP,
        DiagMethod::OwnsR => FilterKind::OwnsR { c: 1.0 },
    };
    Ok(StationFilter::new(kind, op, xi)?.apply_mat(&identity(op.n())))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BoundReport {
    /// First-order bound on `‖P̃ − P‖`.
    pub bound: f64,
    /// First-order bound on `‖P̃M − MP̃‖` (OWNS-P only; OWNS-R commutes).
    pub commutator_bound: Option<f64>,
    pub precondition_ok: bool,
    /// `‖F₊₊‖`, i.e. `max |F_k|` over downstream modes.
    pub f_pp: f64,
    /// `‖F₋₋⁻¹‖`, i.e. `max 1/|F_k|` over upstream modes.
    pub f_mm_inv: f64,
    pub eps: f64,
}

/// Right-hand sides of the first-order error bounds and whether the
/// smallness precondition holds (`ε̂ =` [`EPS_HAT`]).
pub fn bound_values(spec: &Spectrum, xi: &RecursionParamSet, method: DiagMethod) -> Result<BoundReport, FilterError> {
    bound_values_with(spec, xi, method, EPS_HAT, None)
}

/// As [`bound_values`]; `m_norm` enables the OWNS-P commutator bound.
pub fn bound_values_with(
    spec: &Spectrum,
    xi: &RecursionParamSet,
    method: DiagMethod,
    eps_hat: f64,
    m_norm: Option<f64>,
) -> Result<BoundReport, FilterError> {
    let f = f_values(&spec.alphas, xi);
    let f_pp = f[..spec.n_plus].iter().map(|v| v.abs()).fold(0.0, f64::max);
    let f_mm_inv = f[spec.n_plus..].iter().map(|v| v.inv().abs()).fold(0.0, f64::max);
    let vn = norm2(spec.v.as_ref());
    let vinv_n = norm2(inverse(spec.v.as_ref())?.as_ref());
    Ok(match method {
        DiagMethod::OwnsP => {
            let (x, y) = coupling_blocks(spec)?;
            let (xn, yn) = (norm2(x.as_ref()), norm2(y.as_ref()));
            let eps = if xn * yn > 0.0 { eps_hat.min((xn * yn).powf(-0.5)) } else { eps_hat };
            let p = f_pp * f_mm_inv;
            let bound = vn * p * (xn + yn) * vinv_n;
            BoundReport {
                bound,
                commutator_bound: m_norm.map(|mn| 2.0 * bound * mn),
                precondition_ok: p < eps,
                f_pp,
                f_mm_inv,
                eps,
            }
        }
        DiagMethod::OwnsR => {
            let worst = f_pp.max(f_mm_inv);
            BoundReport {
                bound: worst * vn * vinv_n,
                commutator_bound: None,
                precondition_ok: f_pp < eps_hat && f_mm_inv < eps_hat,
                f_pp,
                f_mm_inv,
                eps: eps_hat,
            }
        }
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SurvivingMode {
    pub index: usize,
    pub alpha: c64,
    pub filtered_alpha: c64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub method: DiagMethod,
    /// Eigenvalues `α̃` of the filtered operator (`P̃M v = iα̃ v`).
    pub filtered_alphas: Vec<c64>,
    /// Mode each `α̃` was matched to.
    pub matched: Vec<usize>,
    pub surviving_upstream: Vec<SurvivingMode>,
    /// Growth rates of the two ends of the Briggs test that labelled the modes.
    pub eta_pair: (f64, f64),
    pub tol: f64,
}

impl StabilityReport {
    pub fn is_stable(&self) -> bool {
        self.surviving_upstream.is_empty()
    }
}

/// Spectrum of the filtered operator at the working `s`; upstream modes (by
/// the large-`η` labels already in `spec`) whose filtered eigenvalue keeps
/// `Im α̃ < −tol` are flagged. `tol` defaults to `1e-8·max|α|`.
pub fn filtered_spectrum_check(
    spec: &Spectrum,
    xi: &RecursionParamSet,
    method: DiagMethod,
    tol: Option<f64>,
) -> Result<StabilityReport, FilterError> {
    let tol = tol.unwrap_or(1e-8 * spec.scale());
    let n = spec.n();
    let (filtered, matched): (Vec<c64>, Vec<usize>) = match method {
        DiagMethod::OwnsR => {
            // V E D V⁻¹ shares V, so α̃_k = E_k α_k exactly
            let e = ownsr_eigvals(spec, xi, cx(1.0, 0.0))?;
            ((0..n).map(|k| e[k] * spec.alphas[k]).collect(), (0..n).collect())
        }
        DiagMethod::OwnsP => {
            let p = ownsp_matrix(spec, xi)?.p_mat;
            let pm = matmul(p.as_ref(), filtered_m(spec)?.as_ref());
            let lam = eigenvalues(pm.as_ref())?;
            let at: Vec<c64> = lam.iter().map(|l| l * cx(0.0, -1.0)).collect();
            let idx = match_nearest(&at, &spec.alphas, tol);
            (at, idx)
        }
    };
    let surviving = filtered
        .iter()
        .zip(&matched)
        .filter(|(a, &k)| spec.labels[k] == Label::Upstream && a.im < -tol)
        .map(|(a, &k)| SurvivingMode { index: k, alpha: spec.alphas[k], filtered_alpha: *a })
        .collect();
    Ok(StabilityReport {
        method,
        filtered_alphas: filtered,
        matched,
        surviving_upstream: surviving,
        eta_pair: (spec.s_used.re, spec.s_used.re + spec.eta_used),
        tol,
    })
}

/// `M = V (iD) V⁻¹` rebuilt from the spectrum.
fn filtered_m(spec: &Spectrum) -> Result<CMat, FilterError> {
    let vinv = inverse(spec.v.as_ref())?;
    let vd = Mat::from_fn(spec.n(), spec.n(), |i, j| spec.v[(i, j)] * spec.alphas[j] * cx(0.0, 1.0));
    Ok(matmul(vd.as_ref(), vinv.as_ref()))
}

/// Pairs filtered eigenvalues to modes: the structural zeros of a rank-`N₊`
/// projection go to the upstream modes, the rest by nearest distance.
fn match_nearest(filtered: &[c64], alphas: &[c64], tol: f64) -> Vec<usize> {
    let n = alphas.len();
    let mut used = vec![false; n];
    let mut out = vec![usize::MAX; filtered.len()];
    let mut order: Vec<usize> = (0..filtered.len()).collect();
    order.sort_by(|&a, &b| filtered[b].norm().total_cmp(&filtered[a].norm()));
    for &i in &order {
        let z = filtered[i];
        let pick = (0..n)
            .filter(|&k| !used[k])
            .min_by(|&a, &b| {
                let da = if z.norm() <= tol { alphas[a].norm().recip() } else { (alphas[a] - z).norm() };
                let db = if z.norm() <= tol { alphas[b].norm().recip() } else { (alphas[b] - z).norm() };
                da.total_cmp(&db)
            })
            .unwrap_or(0);
        used[pick] = true;
        out[i] = pick;
    }
    out
}

/// `β*` residual in its verbatim form (samples in `[-1, 1]²`) and scaled to
/// the parameter magnitudes.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BetaStarResidual {
    pub verbatim: f64,
    pub scaled: f64,
}

pub fn beta_star_residual(xi: &RecursionParamSet, n_samples: usize, seed: u64) -> Result<BetaStarResidual, FilterError> {
    let c = cx(1.0, 0.0);
    let bs = ownsr_beta_star(xi, c)?;
    let scale = xi.beta_plus.iter().chain(&xi.beta_minus).map(|b| b.norm()).fold(1.0, f64::max);
    Ok(BetaStarResidual {
        verbatim: polynomial_residual_error(xi, &bs.roots, c, 1.0, n_samples, seed),
        scaled: polynomial_residual_error(xi, &bs.roots, c, scale, n_samples, seed),
    })
}

/// `P̃ᵏ φ`.
pub fn repeated_application(p: &CMat, phi: &[c64], times: usize) -> Vec<c64> {
    let mut x = phi.to_vec();
    for _ in 0..times {
        x = matvec(p.as_ref(), &x);
    }
    x
}

/// Modal coefficients `V⁻¹φ`.
pub fn modal_coefficients(spec: &Spectrum, phi: &[c64]) -> Result<Vec<c64>, FilterError> {
    Ok(matvec(inverse(spec.v.as_ref())?.as_ref(), phi))
}

/// `‖P̃ − P‖ / ‖P‖`.
pub fn relative_projector_error(p_approx: &CMat, spec: &Spectrum) -> Result<f64, FilterError> {
    let p = exact_projection(spec)?;
    Ok(norm2(sub(p_approx.as_ref(), p.as_ref()).as_ref()) / norm2(p.as_ref()).max(f64::MIN_POSITIVE))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selector {
    Greedy,
    Heuristic,
    Minimal,
}

impl Selector {
    pub fn name(self) -> &'static str {
        match self {
            Selector::Greedy => "greedy",
            Selector::Heuristic => "heuristic",
            Selector::Minimal => "minimal",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ErrorStudy {
    pub n_beta_grid: Vec<usize>,
    pub methods: Vec<DiagMethod>,
    pub selectors: Vec<Selector>,
    pub seed: u64,
    pub n_starts: usize,
    pub n_trials: usize,
    pub heuristic: Option<HeuristicConfig>,
    /// Exclude eigenvalues with `Im α` above this from greedy selection.
    pub exclude_im_above: Option<f64>,
    pub residual_samples: usize,
}

impl ErrorStudy {
    pub fn new(n_beta_grid: Vec<usize>, seed: u64) -> Self {
        Self {
            n_beta_grid,
            methods: vec![DiagMethod::OwnsP, DiagMethod::OwnsR],
            selectors: vec![Selector::Greedy],
            seed,
            n_starts: 8,
            n_trials: PROJECTION_TRIALS,
            heuristic: None,
            exclude_im_above: None,
            residual_samples: 100,
        }
    }

    fn validate(&self) -> Result<(), SelectError> {
        if self.n_beta_grid.is_empty() && self.selectors.iter().any(|s| *s != Selector::Minimal) {
            return Err(SelectError::BadConfig("empty n_beta grid".into()));
        }
        if self.n_beta_grid.windows(2).any(|w| w[1] <= w[0]) || self.n_beta_grid.first() == Some(&0) {
            return Err(SelectError::BadConfig("n_beta grid must be positive and strictly increasing".into()));
        }
        if self.selectors.contains(&Selector::Heuristic) && self.heuristic.is_none() {
            return Err(SelectError::BadConfig("heuristic selector needs a heuristic configuration".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyRecord {
    pub n_beta: usize,
    pub selector: Selector,
    pub method: DiagMethod,
    pub j: f64,
    pub proj_err: f64,
    pub mode_err: f64,
    pub bound: f64,
    pub precondition_ok: bool,
    pub beta_star_residual: Option<f64>,
    pub beta_star_residual_scaled: Option<f64>,
    pub wall_ms: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    n_beta: usize,
    selector: Selector,
    method: DiagMethod,
}

/// Runs every `(Nβ, selector, method)` cell in parallel; records come back in
/// grid order and are reproducible from the study seed. With `op`, errors are
/// measured through the practical filters; otherwise through `V E V⁻¹` forms.
pub fn study(spec: &Spectrum, op: Option<&OperatorM>, cfg: &ErrorStudy) -> Result<Vec<StudyRecord>, SelectError> {
    cfg.validate()?;
    let mut cells = Vec::new();
    for &selector in &cfg.selectors {
        let grid: Vec<usize> = match selector {
            Selector::Minimal => vec![0],
            _ => cfg.n_beta_grid.clone(),
        };
        for &n_beta in &grid {
            for &method in &cfg.methods {
                cells.push(Cell { n_beta, selector, method });
            }
        }
    }
    let designated = designated_mode(spec).map(|k| col_to_vec(spec.v.as_ref(), k));
    Ok(cells.par_iter().map(|c| run_cell(spec, op, cfg, *c, designated.as_deref())).collect())
}

fn select_for(spec: &Spectrum, cfg: &ErrorStudy, cell: Cell) -> Result<RecursionParamSet, SelectError> {
    match cell.selector {
        Selector::Greedy => {
            let mut g = GreedyOptions::new(cell.n_beta, cfg.seed);
            g.n_starts = cfg.n_starts;
            g.target = match cell.method {
                DiagMethod::OwnsP => crate::param_select::Objective::OwnsP,
                DiagMethod::OwnsR => crate::param_select::Objective::OwnsR,
            };
            let t = cfg.exclude_im_above;
            greedy_select(spec, &g, &move |a: c64| t.is_some_and(|t| a.im > t))
        }
        Selector::Heuristic => {
            let mut h = cfg.heuristic.clone().expect("validated");
            h.n_beta = cell.n_beta;
            heuristic_select(&h)
        }
        Selector::Minimal => match cell.method {
            DiagMethod::OwnsP => minimal_set_ownsp(spec),
            DiagMethod::OwnsR => minimal_set_ownsr(spec),
        },
    }
}

fn run_cell(spec: &Spectrum, op: Option<&OperatorM>, cfg: &ErrorStudy, cell: Cell, designated: Option<&[c64]>) -> StudyRecord {
    let t0 = Instant::now();
    let mut rec = StudyRecord {
        n_beta: cell.n_beta,
        selector: cell.selector,
        method: cell.method,
        j: f64::NAN,
        proj_err: f64::NAN,
        mode_err: f64::NAN,
        bound: f64::NAN,
        precondition_ok: false,
        beta_star_residual: None,
        beta_star_residual_scaled: None,
        wall_ms: 0.0,
        error: None,
    };
    let res = (|| -> Result<(), String> {
        let xi = select_for(spec, cfg, cell).map_err(|e| e.to_string())?;
        rec.n_beta = xi.n_beta();
        let obj = objectives(spec, &xi).map_err(|e| e.to_string())?;
        rec.j = match cell.method {
            DiagMethod::OwnsP => obj.j_ownsp,
            DiagMethod::OwnsR => obj.j_ownsr,
        };
        let b = bound_values(spec, &xi, cell.method).map_err(|e| e.to_string())?;
        rec.bound = b.bound;
        rec.precondition_ok = b.precondition_ok;
        if cell.method == DiagMethod::OwnsR {
            let r = beta_star_residual(&xi, cfg.residual_samples, 0x43).map_err(|e| e.to_string())?;
            rec.beta_star_residual = Some(r.verbatim);
            rec.beta_star_residual_scaled = Some(r.scaled);
        }
        let p = match op {
            Some(op) => applied_projector(op, &xi, cell.method),
            None => approx_projector(spec, &xi, cell.method),
        }
        .map_err(|e| e.to_string())?;
        rec.proj_err = projection_error(&p, spec, cfg.n_trials, cfg.seed);
        if let Some(v) = designated {
            rec.mode_err = mode_error(&p, v);
        }
        Ok(())
    })();
    if let Err(e) = res {
        log::warn!("study cell {:?} failed: {e}", cell);
        rec.error = Some(e);
    }
    rec.wall_ms = t0.elapsed().as_secs_f64() * 1e3;
    rec
}

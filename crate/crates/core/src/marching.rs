//! Spatial marching of the one-way equation `dφ/dx = P[Mφ + ĝ]` across
//! stations, with recursion-parameter tracking and amplitude reporting.
//!
//! Each station interval is integrated with the trapezoidal form of the
//! implicit midpoint rule on the filtered operator `K = 𝒫 M` (and forcing
//! `𝒫 ĝ`), linearly interpolated between the two end stations. The filter
//! enters only through `K`, so it acts once per step.

use std::sync::Arc;
use std::time::Instant;

use faer::{c64, Mat};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::band::BandMatrix;
use crate::filters::{exact_projection, FilterError, FilterKind, RecursionParamSet, StationFilter};
use crate::linalg::{cx, identity, inverse, matmul, matvec, vnorm, CMat, DenseLu, LinalgError};
use crate::operator::{OperatorM, SemiDiscreteSystem};
use crate::param_select::{greedy_select, objectives, reflect_parameter, GreedyOptions, SelectError};
use crate::spectral::{full_spectrum, nearest_eigenpairs, NearestOptions, SpectralError, SpectralOptions, Spectrum};
use crate::system::SystemError;

#[derive(Debug, Error)]
pub enum MarchError {
    #[error("solution blew up at station {station} (‖φ‖ = {norm:.3e})")]
    BlowUp { station: usize, norm: f64 },
    #[error("amplitude at station {station} is not positive")]
    NonpositiveAmplitude { station: usize },
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Marching coordinate plus an operator factory per station.
pub trait StationModel: Sync {
    fn n_stations(&self) -> usize;
    fn x(&self, i: usize) -> f64;
    fn operator(&self, i: usize, s: c64) -> Result<OperatorM, SystemError>;
}

/// Stations backed by semi-discrete systems (shared when identical).
#[derive(Clone)]
pub struct StationSequence {
    pub x: Vec<f64>,
    pub systems: Vec<Arc<SemiDiscreteSystem>>,
    pub omega_t: Vec<f64>,
    /// Per-station forcing in primitive variables.
    pub forcing: Option<Vec<Vec<c64>>>,
}

impl StationSequence {
    pub fn new(x: Vec<f64>, systems: Vec<Arc<SemiDiscreteSystem>>, omega_t: Vec<f64>) -> Result<Self, MarchError> {
        if x.len() < 2 || x.len() != systems.len() {
            return Err(MarchError::Config("need at least two stations and one system per station".into()));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(MarchError::Config("station coordinates must be strictly increasing".into()));
        }
        let dim = systems[0].n_vars() * systems[0].node_count();
        if systems.iter().any(|s| s.n_vars() * s.node_count() != dim) {
            return Err(MarchError::Config("state dimension changes between stations".into()));
        }
        Ok(Self { x, systems, omega_t, forcing: None })
    }

    /// The same system at every station of `x`.
    pub fn uniform(system: SemiDiscreteSystem, x: Vec<f64>, omega_t: Vec<f64>) -> Result<Self, MarchError> {
        let s = Arc::new(system);
        let systems = vec![s; x.len()];
        Self::new(x, systems, omega_t)
    }
}

impl StationModel for StationSequence {
    fn n_stations(&self) -> usize {
        self.x.len()
    }

    fn x(&self, i: usize) -> f64 {
        self.x[i]
    }

    fn operator(&self, i: usize, s: c64) -> Result<OperatorM, SystemError> {
        let f = self.forcing.as_ref().map(|f| f[i].as_slice());
        let mut op = self.systems[i].assemble(s, &self.omega_t, f)?;
        op.station = Some(i);
        Ok(op)
    }
}

/// Linearly spaced stations on `[x0, x1]`.
pub fn linspace(x0: f64, x1: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| x0 + (x1 - x0) * i as f64 / (n - 1).max(1) as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    Exact,
    OwnsP,
    OwnsR {
        #[serde(default = "one")]
        c: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl Method {
    pub fn filter_kind(self) -> Option<FilterKind> {
        match self {
            Method::Exact => None,
            Method::OwnsP => Some(FilterKind::OwnsP),
            Method::OwnsR { c } => Some(FilterKind::OwnsR { c }),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::OwnsP => "owns_p",
            Method::OwnsR { .. } => "owns_r",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepScheme {
    /// Trapezoidal implicit midpoint on `K = 𝒫M`.
    ImplicitMidpoint {
        #[serde(default = "default_substeps")]
        substeps: usize,
    },
    /// Same, then the filter is applied to the state after every station.
    /// Rejected for OWNS-R, whose repeated application is unstable.
    ImplicitMidpointReproject {
        #[serde(default = "default_substeps")]
        substeps: usize,
    },
}

fn default_substeps() -> usize {
    1
}

impl StepScheme {
    fn substeps(self) -> usize {
        match self {
            StepScheme::ImplicitMidpoint { substeps } | StepScheme::ImplicitMidpointReproject { substeps } => substeps,
        }
    }
}

impl Default for StepScheme {
    fn default() -> Self {
        StepScheme::ImplicitMidpoint { substeps: 1 }
    }
}

#[derive(Debug, Clone)]
pub enum XiStrategy {
    /// One set for every station.
    Fixed(RecursionParamSet),
    /// Greedy at the inlet, then nearest-eigenvalue tracking; re-greedy when
    /// the characteristic counts change.
    Tracked { greedy: GreedyOptions, exclude_im_above: Option<f64> },
    /// Full spectrum and greedy at every station (reference for tracking).
    GreedyEachStation { greedy: GreedyOptions, exclude_im_above: Option<f64> },
}

#[derive(Debug, Clone)]
pub struct MarchConfig {
    pub s: c64,
    pub method: Method,
    pub xi: Option<XiStrategy>,
    pub scheme: StepScheme,
    /// Primitive variable whose max over nodes defines the amplitude.
    pub amp_var: usize,
    pub spectral: SpectralOptions,
    pub project_inlet: bool,
    /// Evaluate objectives at every station (extra spectra, not in the cost log).
    pub record_j: bool,
    pub blowup: f64,
}

impl MarchConfig {
    pub fn new(s: c64, method: Method) -> Self {
        Self {
            s,
            method,
            xi: None,
            scheme: StepScheme::default(),
            amp_var: 0,
            spectral: SpectralOptions::default(),
            project_inlet: true,
            record_j: false,
            blowup: 1e12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RefreshReason {
    Inlet,
    CountChange,
    NoConvergence,
    EveryStation,
}

#[derive(Debug, Clone, Serialize)]
pub struct XiRecord {
    pub station: usize,
    pub xi: Option<RecursionParamSet>,
    pub refresh: Option<RefreshReason>,
    pub duplicates: usize,
    pub j_ownsp: Option<f64>,
    pub j_ownsr: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct CostLog {
    /// Dense eigen-solves, including those inside spectrum classification.
    pub dense_eigs: usize,
    pub full_spectra: usize,
    pub nearest_calls: usize,
    pub factorizations: usize,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MarchResult {
    pub x: Vec<f64>,
    pub states: Vec<Vec<c64>>,
    pub amplitude: Vec<f64>,
    pub n_factor: Option<f64>,
    pub xi_log: Vec<XiRecord>,
    pub cost: CostLog,
    pub station_ms: Vec<f64>,
    pub integrator: String,
}

impl MarchResult {
    /// `max_{x' ≤ x} ln(A(x')/A(x₀))` at every station.
    pub fn running_n_factor(&self) -> Vec<f64> {
        let a0 = self.amplitude[0];
        let mut best = f64::NEG_INFINITY;
        self.amplitude
            .iter()
            .map(|a| {
                best = best.max((a / a0).ln());
                best
            })
            .collect()
    }
}

/// `N = max_x ln(A(x)/A(x₀))`.
pub fn n_factor(amplitudes: &[f64], x_grid: &[f64]) -> Result<f64, MarchError> {
    if amplitudes.is_empty() || amplitudes.len() != x_grid.len() {
        return Err(MarchError::Config("amplitude and grid lengths differ".into()));
    }
    if let Some(i) = amplitudes.iter().position(|a| !(*a > 0.0)) {
        return Err(MarchError::NonpositiveAmplitude { station: i });
    }
    let a0 = amplitudes[0];
    Ok(amplitudes.iter().map(|a| (a / a0).ln()).fold(f64::NEG_INFINITY, f64::max))
}

/// Max over nodes of `|q_var|` for the primitive state of `φ`.
pub fn amplitude(op: &OperatorM, phi: &[c64], var: usize) -> f64 {
    let q = op.to_primitive(phi);
    (0..op.node_count).map(|p| q[p * op.n_vars + var].norm()).fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
pub struct TrackOutcome {
    pub xi: RecursionParamSet,
    pub refresh: Option<RefreshReason>,
    pub duplicates: usize,
    pub spectrum: Option<Spectrum>,
    pub dense_eigs: usize,
}

fn exclusion(t: Option<f64>) -> impl Fn(c64) -> bool + Sync {
    move |a: c64| t.is_some_and(|t| a.im > t)
}

/// Full spectrum plus greedy selection at one station.
pub fn regreedy(
    builder: &(dyn Fn(c64) -> Result<OperatorM, SystemError> + Sync),
    s: c64,
    greedy: &GreedyOptions,
    exclude_im_above: Option<f64>,
    spectral: &SpectralOptions,
) -> Result<(RecursionParamSet, Spectrum), MarchError> {
    let spec = full_spectrum(builder, s, spectral)?;
    let xi = greedy_select(&spec, greedy, &exclusion(exclude_im_above))?;
    Ok((xi, spec))
}

/// One step of parameter tracking: nearest eigenvalues of the new operator if
/// the characteristic counts are unchanged, otherwise a fresh greedy selection.
#[allow(clippy::too_many_arguments)]
pub fn track_params(
    xi_prev: &RecursionParamSet,
    op_new: &OperatorM,
    counts_prev: (usize, usize),
    builder: &(dyn Fn(c64) -> Result<OperatorM, SystemError> + Sync),
    greedy: &GreedyOptions,
    exclude_im_above: Option<f64>,
    spectral: &SpectralOptions,
) -> Result<TrackOutcome, MarchError> {
    let counts_new = (op_new.n_plus(), op_new.n_minus());
    let refresh = |reason| -> Result<TrackOutcome, MarchError> {
        let (xi, spec) = regreedy(builder, op_new.s, greedy, exclude_im_above, spectral)?;
        let dense_eigs = spec.eig_calls;
        Ok(TrackOutcome { xi, refresh: Some(reason), duplicates: 0, spectrum: Some(spec), dense_eigs })
    };
    if counts_new != counts_prev {
        return refresh(RefreshReason::CountChange);
    }
    // fallback-reflected parameters of an empty family are regenerated, not tracked
    let track_plus = counts_new.0 > 0;
    let track_minus = counts_new.1 > 0;
    let mut shifts = Vec::new();
    if track_plus {
        shifts.extend_from_slice(&xi_prev.beta_plus);
    }
    if track_minus {
        shifts.extend_from_slice(&xi_prev.beta_minus);
    }
    let near = match nearest_eigenpairs(&op_new.m, &shifts, &NearestOptions::default()) {
        Ok(r) => r,
        Err(SpectralError::NoConvergence { re, im }) => {
            log::warn!("tracking lost eigenvalue near {re:+.4e}{im:+.4e}i; re-running greedy selection");
            return refresh(RefreshReason::NoConvergence);
        }
        Err(e) => return Err(e.into()),
    };
    let nb = xi_prev.n_beta();
    let tol = crate::filters::POLE_TOL * near.alphas.iter().map(|a| a.norm()).fold(1.0, f64::max);
    let (plus, minus) = match (track_plus, track_minus) {
        (true, true) => (near.alphas[..nb].to_vec(), near.alphas[nb..].to_vec()),
        (true, false) => {
            let p = near.alphas.clone();
            let m = p.iter().map(|b| reflect_parameter(*b, &near.alphas, tol)).collect();
            (p, m)
        }
        (false, true) => {
            let m = near.alphas.clone();
            let p = m.iter().map(|b| reflect_parameter(*b, &near.alphas, tol)).collect();
            (p, m)
        }
        (false, false) => return Err(MarchError::Config("operator has no propagating rows".into())),
    };
    let mut xi = RecursionParamSet::new(plus, minus, xi_prev.origin)?;
    xi.ordering = xi_prev.ordering.clone();
    Ok(TrackOutcome { xi, refresh: None, duplicates: near.duplicates.len(), spectrum: None, dense_eigs: 0 })
}

/// Filtered operator `K = 𝒫M` and forcing `𝒫ĝ` at one station.
struct StationOp {
    op: OperatorM,
    k: CMat,
    h: Vec<c64>,
    filter: Projector,
}

enum Projector {
    Exact(CMat),
    Filter(StationFilter),
}

impl Projector {
    fn apply(&self, x: &[c64]) -> Vec<c64> {
        match self {
            Projector::Exact(p) => matvec(p.as_ref(), x),
            Projector::Filter(f) => f.apply(x),
        }
    }

    fn apply_mat(&self, x: &CMat) -> CMat {
        match self {
            Projector::Exact(p) => matmul(p.as_ref(), x.as_ref()),
            Projector::Filter(f) => f.apply_mat(x),
        }
    }
}

/// Marches `inlet` (characteristic variables of station 0) through all stations.
pub fn march(model: &dyn StationModel, inlet: &[c64], cfg: &MarchConfig) -> Result<MarchResult, MarchError> {
    let t0 = Instant::now();
    let ns = model.n_stations();
    if ns < 2 {
        return Err(MarchError::Config("need at least two stations".into()));
    }
    if let (Method::OwnsR { .. }, StepScheme::ImplicitMidpointReproject { .. }) = (cfg.method, cfg.scheme) {
        return Err(MarchError::Config(
            "OWNS-R must be applied once per step; the reprojecting scheme is not allowed".into(),
        ));
    }
    let substeps = cfg.scheme.substeps();
    if substeps == 0 {
        return Err(MarchError::Config("substeps must be at least 1".into()));
    }
    if inlet.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(MarchError::Config("inlet state is not finite".into()));
    }
    if cfg.method != Method::Exact && cfg.xi.is_none() {
        return Err(MarchError::Config("filtered marches need a recursion-parameter strategy".into()));
    }
    let mut cost = CostLog::default();
    let mut xi_log = Vec::with_capacity(ns);
    let mut station_ms = Vec::with_capacity(ns);
    let mut prev_xi: Option<RecursionParamSet> = None;
    let mut prev_counts = (0usize, 0usize);

    let mut setup = |i: usize, cost: &mut CostLog| -> Result<(StationOp, XiRecord), MarchError> {
        let op = model.operator(i, cfg.s)?;
        if op.n() != inlet.len() {
            return Err(MarchError::Config(format!(
                "inlet has {} entries, station {i} operator has {}",
                inlet.len(),
                op.n()
            )));
        }
        let builder = |s: c64| model.operator(i, s);
        let mut rec = XiRecord { station: i, xi: None, refresh: None, duplicates: 0, j_ownsp: None, j_ownsr: None };
        let mut spec_here: Option<Spectrum> = None;
        let xi = match &cfg.xi {
            None => None,
            Some(XiStrategy::Fixed(x)) => Some(x.clone()),
            Some(XiStrategy::GreedyEachStation { greedy, exclude_im_above }) => {
                let (x, sp) = regreedy(&builder, cfg.s, greedy, *exclude_im_above, &cfg.spectral)?;
                cost.full_spectra += 1;
                cost.dense_eigs += sp.eig_calls;
                rec.refresh = Some(RefreshReason::EveryStation);
                spec_here = Some(sp);
                Some(x)
            }
            Some(XiStrategy::Tracked { greedy, exclude_im_above }) => match &prev_xi {
                None => {
                    let (x, sp) = regreedy(&builder, cfg.s, greedy, *exclude_im_above, &cfg.spectral)?;
                    cost.full_spectra += 1;
                    cost.dense_eigs += sp.eig_calls;
                    rec.refresh = Some(RefreshReason::Inlet);
                    spec_here = Some(sp);
                    Some(x)
                }
                Some(px) => {
                    let t = track_params(px, &op, prev_counts, &builder, greedy, *exclude_im_above, &cfg.spectral)?;
                    cost.nearest_calls += usize::from(t.refresh.is_none() || t.refresh == Some(RefreshReason::NoConvergence));
                    if t.spectrum.is_some() {
                        cost.full_spectra += 1;
                    }
                    cost.dense_eigs += t.dense_eigs;
                    rec.refresh = t.refresh;
                    rec.duplicates = t.duplicates;
                    spec_here = t.spectrum;
                    Some(t.xi)
                }
            },
        };
        let filter = match cfg.method.filter_kind() {
            None => {
                let sp = match spec_here.take() {
                    Some(sp) => sp,
                    None => {
                        let sp = full_spectrum(&builder, cfg.s, &cfg.spectral)?;
                        cost.full_spectra += 1;
                        cost.dense_eigs += sp.eig_calls;
                        sp
                    }
                };
                let p = exact_projection(&sp)?;
                spec_here = Some(sp);
                Projector::Exact(p)
            }
            Some(kind) => {
                let f = StationFilter::new(kind, &op, xi.as_ref().expect("checked above"))?;
                cost.factorizations += f.factorizations();
                Projector::Filter(f)
            }
        };
        if cfg.record_j {
            if let Some(x) = &xi {
                let sp = match spec_here {
                    Some(sp) => sp,
                    None => full_spectrum(&builder, cfg.s, &cfg.spectral)?,
                };
                if let Ok(r) = objectives(&sp, x) {
                    rec.j_ownsp = Some(r.j_ownsp);
                    rec.j_ownsr = Some(r.j_ownsr);
                }
            }
        }
        let k = filter.apply_mat(&op.m);
        let h = filter.apply(&op.g_hat);
        prev_counts = (op.n_plus(), op.n_minus());
        rec.xi = xi.clone();
        prev_xi = xi;
        Ok((StationOp { op, k, h, filter }, rec))
    };

    let ts = Instant::now();
    let (mut cur, rec) = setup(0, &mut cost)?;
    xi_log.push(rec);
    let mut phi = if cfg.project_inlet { cur.filter.apply(inlet) } else { inlet.to_vec() };
    let inlet_norm = vnorm(inlet).max(f64::MIN_POSITIVE);
    let mut states = vec![phi.clone()];
    let mut amp = vec![amplitude(&cur.op, &phi, cfg.amp_var)];
    station_ms.push(ts.elapsed().as_secs_f64() * 1e3);

    for i in 1..ns {
        let ts = Instant::now();
        let (next, rec) = setup(i, &mut cost)?;
        xi_log.push(rec);
        if !same_basis(&cur.op, &next.op) {
            return Err(MarchError::Config(format!(
                "characteristic basis changes between stations {} and {i}; the march needs an x-independent basis",
                i - 1
            )));
        }
        let dx = model.x(i) - model.x(i - 1);
        phi = step_interval(&cur, &next, &phi, dx, substeps, &mut cost)?;
        if let StepScheme::ImplicitMidpointReproject { .. } = cfg.scheme {
            phi = next.filter.apply(&phi);
        }
        let nrm = vnorm(&phi);
        if !(nrm <= cfg.blowup * inlet_norm) {
            return Err(MarchError::BlowUp { station: i, norm: nrm });
        }
        amp.push(amplitude(&next.op, &phi, cfg.amp_var));
        states.push(phi.clone());
        cur = next;
        station_ms.push(ts.elapsed().as_secs_f64() * 1e3);
    }
    let x: Vec<f64> = (0..ns).map(|i| model.x(i)).collect();
    cost.wall_ms = t0.elapsed().as_secs_f64() * 1e3;
    let nf = n_factor(&amp, &x).ok();
    Ok(MarchResult {
        x,
        states,
        amplitude: amp,
        n_factor: nf,
        xi_log,
        cost,
        station_ms,
        integrator: format!("trapezoidal implicit midpoint, {substeps} substep(s) per station, {:?}", cfg.scheme),
    })
}

fn same_basis(a: &OperatorM, b: &OperatorM) -> bool {
    a.active == b.active
        && a.t_inv.iter().zip(&b.t_inv).all(|(x, y)| {
            let scale = x.norm_max().max(1.0);
            (0..x.nrows()).all(|i| (0..x.ncols()).all(|j| (x[(i, j)] - y[(i, j)]).abs() <= 1e-12 * scale))
        })
}

fn step_interval(
    a: &StationOp,
    b: &StationOp,
    phi: &[c64],
    dx: f64,
    substeps: usize,
    cost: &mut CostLog,
) -> Result<Vec<c64>, MarchError> {
    let n = phi.len();
    let h = dx / substeps as f64;
    let constant = a.k == b.k && a.h == b.h;
    let k_at = |th: f64| -> CMat {
        if constant {
            a.k.clone()
        } else {
            Mat::from_fn(n, n, |i, j| a.k[(i, j)] * (1.0 - th) + b.k[(i, j)] * th)
        }
    };
    let g_at = |th: f64| -> Vec<c64> { a.h.iter().zip(&b.h).map(|(x, y)| x * (1.0 - th) + y * th).collect() };
    let lhs = |k: &CMat| Mat::from_fn(n, n, |i, j| if i == j { cx(1.0, 0.0) } else { cx(0.0, 0.0) } - k[(i, j)] * (0.5 * h));
    let mut cached: Option<DenseLu> = None;
    let mut x = phi.to_vec();
    let mut k0 = k_at(0.0);
    let mut g0 = g_at(0.0);
    for j in 0..substeps {
        let th1 = (j + 1) as f64 / substeps as f64;
        let k1 = if constant { k0.clone() } else { k_at(th1) };
        let g1 = g_at(th1);
        let kx = matvec(k0.as_ref(), &x);
        let rhs: Vec<c64> = (0..n).map(|i| x[i] + (kx[i] + g0[i] + g1[i]) * (0.5 * h)).collect();
        if cached.is_none() || !constant {
            cached = Some(DenseLu::new(lhs(&k1).as_ref())?);
            cost.factorizations += 1;
        }
        x = cached.as_ref().unwrap().solve_vec(&rhs);
        k0 = k1;
        g0 = g1;
    }
    Ok(x)
}

/// Result of the two-way consistency harness.
#[derive(Debug, Clone)]
pub struct ConsistencyReport {
    pub rel_err: f64,
    pub forward: Vec<Vec<c64>>,
    pub backward: Vec<Vec<c64>>,
    pub full: Vec<Vec<c64>>,
}

/// Marches the downstream part forward from `a` and the upstream part
/// backward from `b` with the exact projector, and compares their sum with a
/// global solve of `dφ/dx = Mφ + ĝ` under the matching modal end conditions
/// (downstream content of `a` at the inlet, upstream content of `b` at the outlet).
pub fn consistency_check(op: &OperatorM, spec: &Spectrum, a: &[c64], b: &[c64], x: &[f64]) -> Result<ConsistencyReport, MarchError> {
    let n = op.n();
    let np = spec.n_plus;
    let p = exact_projection(spec)?;
    let q = {
        let mut q = identity(n);
        for i in 0..n {
            for j in 0..n {
                q[(i, j)] -= p[(i, j)];
            }
        }
        q
    };
    let kf = matmul(p.as_ref(), op.m.as_ref());
    let kb = matmul(q.as_ref(), op.m.as_ref());
    let hf = matvec(p.as_ref(), &op.g_hat);
    let hb = matvec(q.as_ref(), &op.g_hat);
    let nx = x.len();
    let shifted = |k: &CMat, c: f64| Mat::from_fn(n, n, |i, j| if i == j { cx(1.0, 0.0) } else { cx(0.0, 0.0) } + k[(i, j)] * c);

    let mut forward = vec![matvec(p.as_ref(), a)];
    for s in 1..nx {
        let h = x[s] - x[s - 1];
        let lu = DenseLu::new(shifted(&kf, -0.5 * h).as_ref())?;
        let prev = &forward[s - 1];
        let kx = matvec(shifted(&kf, 0.5 * h).as_ref(), prev);
        let rhs: Vec<c64> = (0..n).map(|i| kx[i] + hf[i] * h).collect();
        forward.push(lu.solve_vec(&rhs));
    }
    let mut backward = vec![vec![cx(0.0, 0.0); n]; nx];
    backward[nx - 1] = matvec(q.as_ref(), b);
    for s in (0..nx - 1).rev() {
        let h = x[s + 1] - x[s];
        let lu = DenseLu::new(shifted(&kb, 0.5 * h).as_ref())?;
        let kx = matvec(shifted(&kb, -0.5 * h).as_ref(), &backward[s + 1]);
        let rhs: Vec<c64> = (0..n).map(|i| kx[i] - hb[i] * h).collect();
        backward[s] = lu.solve_vec(&rhs);
    }

    // global banded solve: W₊φ₀ = W₊a, trapezoid links, W₋φ_K = W₋b
    let w = inverse(spec.v.as_ref())?;
    let total = nx * n;
    let kl = np + n - 1;
    let ku = 2 * n - 1 - np;
    let mut band = BandMatrix::zeros(total, kl, ku);
    let mut rhs = vec![cx(0.0, 0.0); total];
    for r in 0..np {
        for c in 0..n {
            band.add(r, c, w[(r, c)]);
        }
        rhs[r] = (0..n).map(|c| w[(r, c)] * a[c]).sum();
    }
    for s in 0..nx - 1 {
        let h = x[s + 1] - x[s];
        let row0 = np + s * n;
        let lm = shifted(&op.m, -0.5 * h);
        let rm = shifted(&op.m, 0.5 * h);
        for i in 0..n {
            for j in 0..n {
                band.add(row0 + i, (s + 1) * n + j, lm[(i, j)]);
                band.add(row0 + i, s * n + j, -rm[(i, j)]);
            }
            rhs[row0 + i] = op.g_hat[i] * h;
        }
    }
    let last = (nx - 1) * n;
    for r in 0..n - np {
        let row = np + (nx - 1) * n + r;
        for c in 0..n {
            band.add(row, last + c, w[(np + r, c)]);
        }
        rhs[row] = (0..n).map(|c| w[(np + r, c)] * b[c]).sum();
    }
    let sol = band.factor()?.solve(&rhs);
    let full: Vec<Vec<c64>> = (0..nx).map(|s| sol[s * n..(s + 1) * n].to_vec()).collect();
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for s in 0..nx {
        let d: Vec<c64> = (0..n).map(|i| forward[s][i] + backward[s][i] - full[s][i]).collect();
        num = num.max(vnorm(&d));
        den = den.max(vnorm(&full[s]));
    }
    Ok(ConsistencyReport { rel_err: num / den.max(f64::MIN_POSITIVE), forward, backward, full })
}

//! Recursion-parameter selection: objective functions, multi-start greedy
//! selection, minimal exact sets, a heuristic baseline, and reordering.

use faer::c64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filters::{f_values, FilterError, LogVal, ParamOrigin, RecursionParamSet, POLE_TOL};
use crate::linalg::cx;
use crate::spectral::Spectrum;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectError {
    #[error("spectrum has no eigenvalues")]
    EmptySpectrum,
    #[error("exclusion removed every {0} eigenvalue")]
    ExcludedAll(&'static str),
    #[error("downstream eigenvalue {m} coincides with upstream eigenvalue {n}")]
    DegenerateSpectrum { m: usize, n: usize },
    #[error("bad heuristic config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Filter(#[from] FilterError),
}

/// Which error objective a selection minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    #[default]
    OwnsP,
    OwnsR,
}

#[derive(Debug, Clone, Serialize)]
pub struct ObjectiveReport {
    /// `Ĵ₊(α_m) = |F_m|` per downstream mode.
    pub j_plus_per_mode: Vec<f64>,
    /// `Ĵ₋(α_n) = |F_n⁻¹|` per upstream mode.
    pub j_minus_per_mode: Vec<f64>,
    pub j_ownsp: f64,
    pub j_ownsr: f64,
    pub argmax_plus: Option<usize>,
    pub argmax_minus: Option<usize>,
}

impl ObjectiveReport {
    pub fn get(&self, which: Objective) -> f64 {
        match which {
            Objective::OwnsP => self.j_ownsp,
            Objective::OwnsR => self.j_ownsr,
        }
    }
}

/// Index of the largest value; ties go to the lowest index.
fn argmax(v: impl Iterator<Item = (usize, f64)>) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, x) in v {
        if best.is_none_or(|(_, b)| x > b) {
            best = Some((i, x));
        }
    }
    best
}

/// `(J_P, J_R)` from the largest `ln Ĵ₊` and `ln Ĵ₋`; an empty family gives 0.
fn combine(lp: f64, lm: f64) -> (f64, f64) {
    let mp = if lp == f64::NEG_INFINITY { 0.0 } else { lp.exp() };
    let mm = if lm == f64::NEG_INFINITY { 0.0 } else { lm.exp() };
    let p = if lp == f64::NEG_INFINITY || lm == f64::NEG_INFINITY { 0.0 } else { (lp + lm).exp() };
    (p, mp.max(mm))
}

/// Objectives over all modes, evaluated in log space.
pub fn objectives(spec: &Spectrum, xi: &RecursionParamSet) -> Result<ObjectiveReport, SelectError> {
    xi.check_poles(spec)?;
    let f = f_values(&spec.alphas, xi);
    let lp: Vec<f64> = f[..spec.n_plus].iter().map(|v| v.ln_abs()).collect();
    let lm: Vec<f64> = f[spec.n_plus..].iter().map(|v| v.inv().ln_abs()).collect();
    let ap = argmax(lp.iter().copied().enumerate());
    let am = argmax(lm.iter().copied().enumerate());
    let (j_p, j_r) = combine(
        ap.map_or(f64::NEG_INFINITY, |a| a.1),
        am.map_or(f64::NEG_INFINITY, |a| a.1),
    );
    Ok(ObjectiveReport {
        j_plus_per_mode: lp.iter().map(|x| x.exp()).collect(),
        j_minus_per_mode: lm.iter().map(|x| x.exp()).collect(),
        j_ownsp: j_p,
        j_ownsr: j_r,
        argmax_plus: ap.map(|a| a.0),
        argmax_minus: am.map(|a| a.0 + spec.n_plus),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GreedyOptions {
    pub n_beta: usize,
    #[serde(default = "default_starts")]
    pub n_starts: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub target: Objective,
}

fn default_starts() -> usize {
    8
}

impl GreedyOptions {
    pub fn new(n_beta: usize, seed: u64) -> Self {
        Self { n_beta, n_starts: default_starts(), seed, target: Objective::OwnsP }
    }
}

/// Result of one greedy chain, before reordering.
#[derive(Debug, Clone)]
struct Chain {
    plus: Vec<c64>,
    minus: Vec<c64>,
    j: f64,
}

/// Stand-in `β` for an empty family: the conjugate of `b`, pushed off any eigenvalue.
pub fn reflect_parameter(b: c64, alphas: &[c64], tol: f64) -> c64 {
    let mut r = b.conj();
    let step = cx(0.0, -0.1 * b.norm().max(1.0));
    while alphas.iter().any(|a| (a - r).norm() <= tol) {
        r += step;
    }
    r
}

/// Running `ln Ĵ` for a set of modes as pairs are appended.
struct LogJ {
    alphas: Vec<c64>,
    vals: Vec<LogVal>,
    tol: f64,
}

impl LogJ {
    fn new(alphas: Vec<c64>, tol: f64) -> Self {
        let vals = vec![LogVal::ONE; alphas.len()];
        Self { alphas, vals, tol }
    }

    /// `num` is the same-family parameter (zeroing), `den` the opposite one.
    fn push(&mut self, num: c64, den: c64) {
        if (num - den).norm() <= self.tol {
            return;
        }
        for (v, &a) in self.vals.iter_mut().zip(&self.alphas) {
            *v = v.mul_c(a - num, self.tol).mul(LogVal::ONE.mul_c(a - den, self.tol).inv());
        }
    }

    fn max(&self) -> Option<(usize, f64)> {
        argmax(self.vals.iter().map(|v| v.ln_abs()).enumerate())
    }
}

fn run_chain(
    down: &[c64],
    up: &[c64],
    all: &[c64],
    opts: &GreedyOptions,
    chain: u64,
    tol: f64,
) -> Chain {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(chain);
    let mut jp = LogJ::new(down.to_vec(), tol);
    let mut jm = LogJ::new(up.to_vec(), tol);
    let mut plus = Vec::with_capacity(opts.n_beta);
    let mut minus = Vec::with_capacity(opts.n_beta);
    for it in 0..opts.n_beta {
        let bp = if down.is_empty() {
            None
        } else if it == 0 {
            Some(down[rng.gen_range(0..down.len())])
        } else {
            jp.max().map(|(i, _)| down[i])
        };
        let bm = if up.is_empty() {
            None
        } else if it == 0 {
            Some(up[rng.gen_range(0..up.len())])
        } else {
            jm.max().map(|(i, _)| up[i])
        };
        let (bp, bm) = match (bp, bm) {
            (Some(p), Some(m)) => (p, m),
            (Some(p), None) => (p, reflect_parameter(p, all, tol)),
            (None, Some(m)) => (reflect_parameter(m, all, tol), m),
            (None, None) => unreachable!("checked by caller"),
        };
        jp.push(bp, bm);
        jm.push(bm, bp);
        plus.push(bp);
        minus.push(bm);
    }
    let lp = jp.max().map_or(f64::NEG_INFINITY, |a| a.1);
    let lm = jm.max().map_or(f64::NEG_INFINITY, |a| a.1);
    let (j_p, j_r) = combine(lp, lm);
    let j = match opts.target {
        Objective::OwnsP => j_p,
        Objective::OwnsR => j_r,
    };
    Chain { plus, minus, j }
}

/// Multi-start greedy selection. Chains are seeded from `(seed, chain index)`,
/// so a larger `n_starts` only adds chains. Excluded eigenvalues neither enter
/// the set nor drive the argmax.
pub fn greedy_select(
    spec: &Spectrum,
    opts: &GreedyOptions,
    exclude: &(dyn Fn(c64) -> bool + Sync),
) -> Result<RecursionParamSet, SelectError> {
    if spec.n() == 0 {
        return Err(SelectError::EmptySpectrum);
    }
    if opts.n_beta == 0 {
        return Err(SelectError::BadConfig("n_beta must be at least 1".into()));
    }
    let down: Vec<c64> = spec.downstream().iter().copied().filter(|a| !exclude(*a)).collect();
    let up: Vec<c64> = spec.upstream().iter().copied().filter(|a| !exclude(*a)).collect();
    if down.is_empty() && spec.n_plus > 0 {
        return Err(SelectError::ExcludedAll("downstream"));
    }
    if up.is_empty() && spec.n_minus > 0 {
        return Err(SelectError::ExcludedAll("upstream"));
    }
    let tol = POLE_TOL * spec.scale();
    let best = (0..opts.n_starts.max(1) as u64)
        .into_par_iter()
        .map(|k| (k, run_chain(&down, &up, &spec.alphas, opts, k, tol)))
        .min_by(|a, b| a.1.j.total_cmp(&b.1.j).then(a.0.cmp(&b.0)))
        .unwrap()
        .1;
    let xi = RecursionParamSet::new(best.plus, best.minus, ParamOrigin::Greedy)?;
    Ok(order_params(&xi))
}

/// Sorts each family by modulus (stable). Objectives do not depend on the
/// pairing, so the families are sorted independently.
pub fn order_params(xi: &RecursionParamSet) -> RecursionParamSet {
    let sort = |v: &[c64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].norm().total_cmp(&v[b].norm()));
        idx
    };
    let ip = sort(&xi.beta_plus);
    let im = sort(&xi.beta_minus);
    RecursionParamSet {
        beta_plus: ip.iter().map(|&i| xi.beta_plus[i]).collect(),
        beta_minus: im.iter().map(|&i| xi.beta_minus[i]).collect(),
        ordering: ip.iter().map(|&i| xi.ordering.get(i).copied().unwrap_or(i)).collect(),
        origin: xi.origin,
    }
}

fn check_distinct(spec: &Spectrum) -> Result<(), SelectError> {
    let tol = POLE_TOL * spec.scale();
    for (m, a) in spec.downstream().iter().enumerate() {
        for (n, b) in spec.upstream().iter().enumerate() {
            if (a - b).norm() <= tol {
                return Err(SelectError::DegenerateSpectrum { m, n: n + spec.n_plus });
            }
        }
    }
    Ok(())
}

/// Smallest set with `P_Nβ = P`: `Nβ = min(N₊, N₋)`, the smaller family is
/// matched exactly and the other side uses opposing eigenvalues.
pub fn minimal_set_ownsp(spec: &Spectrum) -> Result<RecursionParamSet, SelectError> {
    check_distinct(spec)?;
    let (d, u) = (spec.downstream(), spec.upstream());
    let tol = POLE_TOL * spec.scale();
    let (plus, minus) = if d.is_empty() && u.is_empty() {
        return Err(SelectError::EmptySpectrum);
    } else if u.is_empty() {
        (vec![d[0]], vec![reflect_parameter(d[0], &spec.alphas, tol)])
    } else if d.is_empty() {
        (vec![reflect_parameter(u[0], &spec.alphas, tol)], vec![u[0]])
    } else if d.len() <= u.len() {
        (d.to_vec(), u[..d.len()].to_vec())
    } else {
        (d[..u.len()].to_vec(), u.to_vec())
    };
    Ok(RecursionParamSet::new(plus, minus, ParamOrigin::MinimalP)?)
}

/// Smallest set with `P_Nβ^(R) = P`: `Nβ = max(N₊, N₋)`, every eigenvalue
/// appears in its own family, shorter family padded by repeating its members.
pub fn minimal_set_ownsr(spec: &Spectrum) -> Result<RecursionParamSet, SelectError> {
    check_distinct(spec)?;
    let (d, u) = (spec.downstream(), spec.upstream());
    let nb = d.len().max(u.len());
    if nb == 0 {
        return Err(SelectError::EmptySpectrum);
    }
    let tol = POLE_TOL * spec.scale();
    let fill = |fam: &[c64], other: &[c64]| -> Vec<c64> {
        (0..nb)
            .map(|j| if fam.is_empty() { reflect_parameter(other[j], &spec.alphas, tol) } else { fam[j % fam.len()] })
            .collect()
    };
    Ok(RecursionParamSet::new(fill(d, u), fill(u, d), ParamOrigin::MinimalR)?)
}

/// Baseline placement not fitted to the spectrum:
/// `β±ʲ = center± + anchor±·ratioʲ`, `anchor₋` defaulting to `conj(anchor₊)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeuristicConfig {
    pub n_beta: usize,
    pub anchor_plus: [f64; 2],
    #[serde(default)]
    pub anchor_minus: Option<[f64; 2]>,
    #[serde(default)]
    pub center_plus: [f64; 2],
    #[serde(default)]
    pub center_minus: [f64; 2],
    #[serde(default = "default_ratio")]
    pub ratio: f64,
}

fn default_ratio() -> f64 {
    1.0
}

pub fn heuristic_select(cfg: &HeuristicConfig) -> Result<RecursionParamSet, SelectError> {
    if cfg.n_beta == 0 {
        return Err(SelectError::BadConfig("n_beta must be at least 1".into()));
    }
    if !(cfg.ratio.is_finite() && cfg.ratio > 0.0) {
        return Err(SelectError::BadConfig(format!("ratio must be positive, got {}", cfg.ratio)));
    }
    let c = |v: [f64; 2]| cx(v[0], v[1]);
    let ap = c(cfg.anchor_plus);
    if ap.norm() == 0.0 || !ap.re.is_finite() || !ap.im.is_finite() {
        return Err(SelectError::BadConfig("anchor_plus must be finite and nonzero".into()));
    }
    let am = cfg.anchor_minus.map(c).unwrap_or(ap.conj());
    let gen = |center: c64, anchor: c64| -> Vec<c64> {
        (0..cfg.n_beta).map(|j| center + anchor * cfg.ratio.powi(j as i32)).collect()
    };
    Ok(RecursionParamSet::new(
        gen(c(cfg.center_plus), ap),
        gen(c(cfg.center_minus), am),
        ParamOrigin::Heuristic,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::identity;
    use crate::spectral::Label;

    /// Diagonal spectrum with V = I; rows signed like the labels.
    fn toy(down: &[c64], up: &[c64]) -> Spectrum {
        let alphas: Vec<c64> = down.iter().chain(up).copied().collect();
        let labels: Vec<Label> = down
            .iter()
            .map(|_| Label::Downstream)
            .chain(up.iter().map(|_| Label::Upstream))
            .collect();
        let signs = labels.iter().map(|l| if *l == Label::Downstream { 1 } else { -1 }).collect();
        Spectrum::from_parts(alphas, identity(down.len() + up.len()), labels, signs).unwrap()
    }

    fn sample() -> Spectrum {
        let down: Vec<c64> = (0..6).map(|k| cx(-1.0 - k as f64, 0.1 + 0.3 * k as f64)).collect();
        let up: Vec<c64> = (0..3).map(|k| cx(1.0 + 0.7 * k as f64, -0.2 - 0.5 * k as f64)).collect();
        toy(&down, &up)
    }

    #[test]
    fn zero_factor_is_exact() {
        let sp = sample();
        let xi = RecursionParamSet::new(vec![sp.alphas[2]], vec![cx(5.0, -5.0)], ParamOrigin::User).unwrap();
        let r = objectives(&sp, &xi).unwrap();
        assert_eq!(r.j_plus_per_mode[2], 0.0);
    }

    #[test]
    fn equal_pairs_give_unit_objectives() {
        let sp = sample();
        let b = vec![cx(0.3, 0.3), cx(-7.0, 1.0)];
        let r = objectives(&sp, &RecursionParamSet::new(b.clone(), b, ParamOrigin::User).unwrap()).unwrap();
        assert!(r.j_plus_per_mode.iter().chain(&r.j_minus_per_mode).all(|&x| x == 1.0));
        assert_eq!((r.j_ownsp, r.j_ownsr), (1.0, 1.0));
    }

    #[test]
    fn minimal_sets() {
        let sp = sample();
        let p = minimal_set_ownsp(&sp).unwrap();
        assert_eq!(p.n_beta(), 3);
        assert_eq!(objectives(&sp, &p).unwrap().j_ownsp, 0.0);
        let r = minimal_set_ownsr(&sp).unwrap();
        assert_eq!(r.n_beta(), 6);
        assert_eq!(objectives(&sp, &r).unwrap().j_ownsr, 0.0);
        let small = toy(&[cx(-1.0, 0.2), cx(-2.0, 0.1)], &[cx(1.0, -0.1), cx(2.0, -0.3), cx(3.0, -0.2)]);
        assert_eq!(minimal_set_ownsp(&small).unwrap().n_beta(), 2);
    }

    #[test]
    fn degenerate_spectrum_rejected() {
        let sp = toy(&[cx(-1.0, 0.2), cx(0.5, 0.5)], &[cx(0.5, 0.5)]);
        assert!(matches!(minimal_set_ownsp(&sp), Err(SelectError::DegenerateSpectrum { .. })));
        assert!(matches!(minimal_set_ownsr(&sp), Err(SelectError::DegenerateSpectrum { .. })));
    }

    #[test]
    fn greedy_zeroes_the_smaller_family_then_the_rest() {
        let sp = sample();
        let at_min = greedy_select(&sp, &GreedyOptions::new(3, 1), &|_| false).unwrap();
        assert_eq!(objectives(&sp, &at_min).unwrap().j_ownsp, 0.0);
        let at_max = greedy_select(&sp, &GreedyOptions::new(6, 1), &|_| false).unwrap();
        assert_eq!(objectives(&sp, &at_max).unwrap().j_ownsr, 0.0);
        assert!(at_max.beta_plus.iter().all(|b| sp.downstream().contains(b)));
        assert!(at_max.beta_minus.iter().all(|b| sp.upstream().contains(b)));
    }

    #[test]
    fn greedy_is_deterministic_and_respects_exclusion() {
        let sp = sample();
        let ex = |a: c64| a.im > 1.0;
        let a = greedy_select(&sp, &GreedyOptions::new(4, 9), &ex).unwrap();
        let b = greedy_select(&sp, &GreedyOptions::new(4, 9), &ex).unwrap();
        assert_eq!(a, b);
        assert!(a.beta_plus.iter().all(|z| z.im <= 1.0));
    }

    #[test]
    fn supersonic_fallback_reflects() {
        let sp = toy(&[cx(-1.0, 0.2), cx(-2.0, 0.7)], &[]);
        let xi = greedy_select(&sp, &GreedyOptions::new(2, 0), &|_| false).unwrap();
        for (p, m) in xi.beta_plus.iter().zip(&xi.beta_minus) {
            assert!(sp.alphas.iter().all(|a| (a - m).norm() > 1e-9));
            assert!(xi.beta_plus.contains(&m.conj()) || (m.re - p.re).abs() < 1e-12);
        }
        let r = objectives(&sp, &xi).unwrap();
        assert_eq!(r.j_ownsp, 0.0);
    }

    #[test]
    fn heuristic_generator() {
        let one = HeuristicConfig {
            n_beta: 1,
            anchor_plus: [0.0, 1.0],
            anchor_minus: None,
            center_plus: [0.0, 0.0],
            center_minus: [0.0, 0.0],
            ratio: 1.0,
        };
        let xi = heuristic_select(&one).unwrap();
        assert_eq!((xi.beta_plus[0], xi.beta_minus[0]), (cx(0.0, 1.0), cx(0.0, -1.0)));
        let geo = HeuristicConfig { n_beta: 3, ratio: 2.0, ..one.clone() };
        let xi = heuristic_select(&geo).unwrap();
        assert_eq!(xi.beta_plus, vec![cx(0.0, 1.0), cx(0.0, 2.0), cx(0.0, 4.0)]);
        assert_eq!(xi.beta_minus, vec![cx(0.0, -1.0), cx(0.0, -2.0), cx(0.0, -4.0)]);
        assert!(heuristic_select(&HeuristicConfig { ratio: -1.0, ..one.clone() }).is_err());
        assert!(heuristic_select(&HeuristicConfig { n_beta: 0, ..one }).is_err());
    }

    #[test]
    fn ordering_sorts_by_modulus() {
        let xi = RecursionParamSet::new(
            vec![cx(4.0, 0.0), cx(2.0, 0.0), cx(1.0, 0.0)],
            vec![cx(0.0, -3.0), cx(0.0, -1.0), cx(0.0, -2.0)],
            ParamOrigin::User,
        )
        .unwrap();
        let o = order_params(&xi);
        assert_eq!(o.beta_plus, vec![cx(1.0, 0.0), cx(2.0, 0.0), cx(4.0, 0.0)]);
        assert_eq!(o.beta_minus, vec![cx(0.0, -1.0), cx(0.0, -2.0), cx(0.0, -3.0)]);
        assert_eq!(order_params(&o), o);
    }
}

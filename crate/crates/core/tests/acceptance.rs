//! End-to-end acceptance checks. Runs without the libtest harness so every
//! criterion prints exactly one PASS/FAIL line; any failure exits nonzero.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use owns_core::c64;
use owns_core::diagnostics::*;
use owns_core::filters::*;
use owns_core::linalg::{col_to_vec, cx, matvec, norm2, sub, vnorm, vsub, CMat};
use owns_core::marching::*;
use owns_core::operator::{OperatorM, SemiDiscreteSystem};
use owns_core::param_select::*;
use owns_core::spectral::*;
use owns_core::testbeds::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Working point for the shear-layer checks (ω = 2, n = 64).
const S_SHEAR: c64 = c64 { re: 0.0, im: 2.0 };

struct Outcome {
    pass: bool,
    detail: String,
}

fn shear() -> (SemiDiscreteSystem, OperatorM, Spectrum) {
    let sys = ShearLayer::default().build().unwrap();
    let op = sys.assemble(S_SHEAR, &[0.0], None).unwrap();
    let sp = full_spectrum(|s| sys.assemble(s, &[0.0], None), S_SHEAR, &SpectralOptions::default()).unwrap();
    (sys, op, sp)
}

fn heuristic(n_beta: usize) -> RecursionParamSet {
    heuristic_select(&HeuristicConfig {
        n_beta,
        anchor_plus: [-1.0, 0.3],
        anchor_minus: Some([1.0, -0.3]),
        center_plus: [0.0, 0.0],
        center_minus: [0.0, 0.0],
        ratio: 1.15,
    })
    .unwrap()
}

fn greedy(sp: &Spectrum, n_beta: usize, target: Objective) -> RecursionParamSet {
    let mut g = GreedyOptions::new(n_beta, 1);
    g.target = target;
    greedy_select(sp, &g, &|_| false).unwrap()
}

fn random_c(rng: &mut ChaCha8Rng, re: (f64, f64), im: (f64, f64)) -> c64 {
    cx(rng.gen_range(re.0..re.1), rng.gen_range(im.0..im.1))
}

/// Random set with `β₊` scattered over the downstream region and `β₋` over
/// the upstream one.
fn random_xi(rng: &mut ChaCha8Rng, sp: &Spectrum, max_nb: usize) -> RecursionParamSet {
    loop {
        let nb = rng.gen_range(1..=max_nb);
        let plus = (0..nb).map(|_| random_c(rng, (-10.0, 1.0), (-0.5, 3.0))).collect();
        let minus = (0..nb).map(|_| random_c(rng, (0.5, 10.0), (-3.0, 0.5))).collect();
        let xi = RecursionParamSet::new(plus, minus, ParamOrigin::User).unwrap();
        if xi.check_poles(sp).is_ok() {
            return xi;
        }
    }
}

fn rel(a: &CMat, b: &CMat) -> f64 {
    norm2(sub(a.as_ref(), b.as_ref()).as_ref()) / norm2(b.as_ref()).max(f64::MIN_POSITIVE)
}

fn within(t: Instant, budget: u64) -> (bool, Duration) {
    let e = t.elapsed();
    (e <= Duration::from_secs(budget), e)
}

fn c1_projection_laws() -> Outcome {
    let t = Instant::now();
    let (_, op, sp) = shear();
    let mnorm = norm2(op.m.as_ref());
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut idem, mut comm) = (0.0f64, 0.0f64);
    let mut skipped = 0;
    let mut done = 0;
    while done < 100 {
        let xi = random_xi(&mut rng, &sp, 8);
        match ownsp_matrix(&sp, &xi) {
            Ok(p) => idem = idem.max(idempotency_defect(&p.p_mat) / norm2(p.p_mat.as_ref())),
            Err(FilterError::IllConditioned { .. }) => {
                skipped += 1;
                continue;
            }
            Err(e) => panic!("{e}"),
        }
        let r = ownsr_matrix(&sp, &xi, cx(1.0, 0.0)).unwrap();
        comm = comm.max(commutator_norm(&r.p_mat, &op.m) / (norm2(r.p_mat.as_ref()) * mnorm));
        done += 1;
    }
    let (ok_t, e) = within(t, 60);
    Outcome {
        pass: idem <= 1e-8 && comm <= 1e-8 && ok_t,
        detail: format!(
            "max ‖P²−P‖/‖P‖ = {idem:.2e}, max ‖P⁽ᴿ⁾M−MP⁽ᴿ⁾‖/(‖P⁽ᴿ⁾‖‖M‖) = {comm:.2e} over 100 sets ({skipped} ill-conditioned redrawn), {e:.1?}"
        ),
    }
}

fn c2_minimal_sets() -> Outcome {
    let t = Instant::now();
    let (_, _, sp) = shear();
    let p = exact_projection(&sp).unwrap();
    let ep = rel(&ownsp_matrix(&sp, &minimal_set_ownsp(&sp).unwrap()).unwrap().p_mat, &p);
    let er = rel(&ownsr_matrix(&sp, &minimal_set_ownsr(&sp).unwrap(), cx(1.0, 0.0)).unwrap().p_mat, &p);
    // the OWNS-P set fails under OWNS-R when the upstream family is the larger one
    let rev = reversed_flow(8).unwrap();
    let s = cx(0.0, 1.0);
    let rsp = full_spectrum(|z| rev.assemble(z, &[0.0], None), s, &SpectralOptions::default()).unwrap();
    let xi = minimal_set_ownsp(&rsp).unwrap();
    let e = ownsr_eigvals(&rsp, &xi, cx(1.0, 0.0)).unwrap();
    let up_max = e[rsp.n_plus..].iter().map(|z| z.norm()).fold(0.0, f64::max);
    let (ok_t, el) = within(t, 30);
    Outcome {
        pass: ep <= 1e-8 && er <= 1e-8 && up_max >= 0.01 && rsp.n_plus < rsp.n_minus && ok_t,
        detail: format!(
            "OWNS-P minimal {ep:.2e}, OWNS-R minimal {er:.2e}; OWNS-P set under OWNS-R on reversed flow (N₊={}, N₋={}): max upstream |E| = {up_max:.3}, {el:.1?}",
            rsp.n_plus, rsp.n_minus
        ),
    }
}

fn perturbed(rng: &mut ChaCha8Rng, base: &RecursionParamSet) -> RecursionParamSet {
    let mag = 10f64.powf(rng.gen_range(-7.0..-2.0));
    let mut bump = |b: &c64| b + cx(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * mag;
    let plus = base.beta_plus.iter().map(&mut bump).collect();
    let minus = base.beta_minus.iter().map(&mut bump).collect();
    RecursionParamSet::new(plus, minus, ParamOrigin::User).unwrap()
}

fn c3_error_bounds() -> Outcome {
    let t = Instant::now();
    let (_, op, sp) = shear();
    let p = exact_projection(&sp).unwrap();
    let mnorm = norm2(op.m.as_ref());
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let bases_p: Vec<RecursionParamSet> = (10..=16).map(|nb| greedy(&sp, nb, Objective::OwnsP)).collect();
    let bases_r: Vec<RecursionParamSet> = (16..=28).step_by(3).map(|nb| greedy(&sp, nb, Objective::OwnsR)).collect();
    let (mut held, mut checked, mut worst) = (true, 0usize, 0.0f64);
    for k in 0..50 {
        let method = if k % 2 == 0 { DiagMethod::OwnsP } else { DiagMethod::OwnsR };
        let base = match method {
            DiagMethod::OwnsP => &bases_p[rng.gen_range(0..bases_p.len())],
            DiagMethod::OwnsR => &bases_r[rng.gen_range(0..bases_r.len())],
        };
        let xi = perturbed(&mut rng, base);
        let b = bound_values_with(&sp, &xi, method, EPS_HAT, Some(mnorm)).unwrap();
        if !b.precondition_ok {
            continue;
        }
        checked += 1;
        let pa = approx_projector(&sp, &xi, method).unwrap();
        let err = norm2(sub(pa.as_ref(), p.as_ref()).as_ref());
        worst = worst.max(err / b.bound);
        held &= err <= 1.1 * b.bound;
        if let Some(cb) = b.commutator_bound {
            let c = commutator_norm(&pa, &op.m);
            worst = worst.max(c / cb);
            held &= c <= 1.1 * cb;
        }
    }
    let (ok_t, e) = within(t, 60);
    Outcome {
        pass: held && checked > 0 && ok_t,
        detail: format!("{checked}/50 sets meet the precondition; worst error/bound = {worst:.3}, {e:.1?}"),
    }
}

fn c4_filter_matrix_equivalence() -> Outcome {
    let t = Instant::now();
    let (_, op, sp) = shear();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (mut worst_p, mut worst_r_margin) = (0.0f64, 0.0f64);
    let mut redrawn = 0;
    let mut done = 0;
    while done < 50 {
        let xi = random_xi(&mut rng, &sp, 8);
        let Ok(pm) = ownsp_matrix(&sp, &xi) else {
            redrawn += 1;
            continue;
        };
        let phi: Vec<c64> = (0..sp.n()).map(|_| random_c(&mut rng, (-1.0, 1.0), (-1.0, 1.0))).collect();
        let want = matvec(pm.p_mat.as_ref(), &phi);
        let got = ownsp_apply_filter(&op, &xi, &phi).unwrap();
        worst_p = worst_p.max(vnorm(&vsub(&got, &want)) / vnorm(&want));
        let rm = ownsr_matrix(&sp, &xi, cx(1.0, 0.0)).unwrap();
        let bs = ownsr_beta_star(&xi, cx(1.0, 0.0)).unwrap();
        let want = matvec(rm.p_mat.as_ref(), &phi);
        let got = ownsr_apply(&op, &xi, &bs, &phi).unwrap();
        let err = vnorm(&vsub(&got, &want)) / vnorm(&want);
        worst_r_margin = worst_r_margin.max(err / 1e-8f64.max(10.0 * bs.residual));
        done += 1;
    }
    let (ok_t, e) = within(t, 60);
    Outcome {
        pass: worst_p <= 1e-8 && worst_r_margin <= 1.0 && ok_t,
        detail: format!(
            "OWNS-P max rel diff {worst_p:.2e}; OWNS-R max diff/tolerance {worst_r_margin:.2e} ({redrawn} ill-conditioned redrawn), {e:.1?}"
        ),
    }
}

fn c5_greedy_dominance() -> Outcome {
    let t = Instant::now();
    let (_, _, sp) = shear();
    let nmin = sp.n_plus.min(sp.n_minus);
    let mut dominated = true;
    for nb in 5..=20 {
        let h = objectives(&sp, &heuristic(nb)).unwrap();
        let gp = objectives(&sp, &greedy(&sp, nb, Objective::OwnsP)).unwrap();
        let gr = objectives(&sp, &greedy(&sp, nb, Objective::OwnsR)).unwrap();
        dominated &= gp.j_ownsp <= h.j_ownsp && gr.j_ownsr <= h.j_ownsr;
    }
    let jr1 = objectives(&sp, &greedy(&sp, 1, Objective::OwnsR)).unwrap().j_ownsr;
    let jrn = objectives(&sp, &greedy(&sp, nmin, Objective::OwnsR)).unwrap().j_ownsr;
    let orders = (jr1 / jrn).log10();
    let hr: Vec<f64> = (1..=nmin).map(|nb| objectives(&sp, &heuristic(nb)).unwrap().j_ownsr).collect();
    let h_monotone = hr.windows(2).all(|w| w[1] < w[0]);
    let (ok_t, e) = within(t, 120);
    Outcome {
        pass: dominated && orders >= 6.0 && !h_monotone && ok_t,
        detail: format!(
            "greedy ≤ heuristic for Nβ∈[5,20]: {dominated}; greedy 𝒥⁽ᴿ⁾ {jr1:.2e} → {jrn:.2e} ({orders:.1} orders, Nβ 1→{nmin}); heuristic 𝒥⁽ᴿ⁾ monotone: {h_monotone}, {e:.1?}"
        ),
    }
}

fn c6_machine_zero() -> Outcome {
    let t = Instant::now();
    let (_, op, sp) = shear();
    let nmin = sp.n_plus.min(sp.n_minus);
    let pp = applied_projector(&op, &greedy(&sp, nmin, Objective::OwnsP), DiagMethod::OwnsP).unwrap();
    let ep = projection_error(&pp, &sp, PROJECTION_TRIALS, 6);
    let grid: Vec<usize> = vec![1, 2, 4, 6, 8, 10, 12, 16, 20, 24, 28, 32, 40, 48, 56, 64];
    let er: Vec<f64> = grid
        .iter()
        .map(|&nb| {
            let xi = greedy(&sp, nb, Objective::OwnsR);
            applied_projector(&op, &xi, DiagMethod::OwnsR)
                .map(|p| projection_error(&p, &sp, PROJECTION_TRIALS, 6))
                .unwrap_or(f64::INFINITY)
        })
        .collect();
    let imin = (0..er.len()).min_by(|&a, &b| er[a].total_cmp(&er[b])).unwrap();
    let rises = imin + 1 < er.len() && er[er.len() - 1] > 10.0 * er[imin];
    let big = greedy(&sp, 60, Objective::OwnsR);
    let small = RecursionParamSet::new(big.beta_plus[..10].to_vec(), big.beta_minus[..10].to_vec(), ParamOrigin::User).unwrap();
    let r10 = beta_star_residual(&small, 100, 0x43).unwrap().verbatim;
    let r60 = beta_star_residual(&big, 100, 0x43).unwrap().verbatim;
    let (ok_t, e) = within(t, 120);
    Outcome {
        pass: ep <= 1e-8 && rises && r60 > r10 && ok_t,
        detail: format!(
            "OWNS-P error at Nβ={nmin}: {ep:.2e}; OWNS-R min {:.2e} at Nβ={}, {:.2e} at Nβ={}; β* residual {r10:.2e} (10) vs {r60:.2e} (60), {e:.1?}",
            er[imin],
            grid[imin],
            er[er.len() - 1],
            grid[grid.len() - 1]
        ),
    }
}

fn c7_stability() -> Outcome {
    let t = Instant::now();
    let (_, _, sp) = shear();
    let nb = sp.n_plus.min(sp.n_minus);
    let h = filtered_spectrum_check(&sp, &heuristic(nb), DiagMethod::OwnsR, None).unwrap();
    let g = filtered_spectrum_check(&sp, &greedy(&sp, nb, Objective::OwnsR), DiagMethod::OwnsR, None).unwrap();
    let gp = filtered_spectrum_check(&sp, &greedy(&sp, nb, Objective::OwnsP), DiagMethod::OwnsP, None).unwrap();
    let (ok_t, e) = within(t, 60);
    Outcome {
        pass: !h.surviving_upstream.is_empty() && g.is_stable() && gp.is_stable() && ok_t,
        detail: format!(
            "Nβ={nb}: heuristic OWNS-R flags {}, greedy OWNS-R flags {}, greedy OWNS-P flags {}, {e:.1?}",
            h.surviving_upstream.len(),
            g.surviving_upstream.len(),
            gp.surviving_upstream.len()
        ),
    }
}

fn small_system() -> SemiDiscreteSystem {
    UniformEuler { dim: 2, u: 0.5, a: 1.0, ny: 0, width: 1.0, bc: BcKind::Periodic, scheme: owns_core::grid::Scheme::Central2 }
        .build()
        .unwrap()
}

fn c8_marching_consistency() -> Outcome {
    let t = Instant::now();
    let s = cx(0.0, 0.5);
    let sys = small_system();
    let f = vec![cx(0.3, -0.1), cx(0.0, 0.2), cx(-0.4, 0.0), cx(0.1, 0.1)];
    let op = sys.assemble(s, &[0.5], Some(&f)).unwrap();
    let sp = full_spectrum(|z| sys.assemble(z, &[0.5], Some(&f)), s, &SpectralOptions::default()).unwrap();
    let a = vec![cx(1.0, 0.0), cx(0.0, 0.5), cx(-0.3, 0.0), cx(0.2, 0.2)];
    let b = vec![cx(-0.2, 0.1), cx(0.4, 0.0), cx(0.0, -1.0), cx(0.5, 0.0)];
    let len = 2.0;
    let cons = consistency_check(&op, &sp, &a, &b, &linspace(0.0, len, 50)).unwrap();
    let seq = StationSequence::uniform(small_system(), linspace(0.0, len, 50), vec![0.5]).unwrap();
    let k = (0..sp.n_plus).max_by(|&x, &y| sp.alphas[x].norm().total_cmp(&sp.alphas[y].norm())).unwrap();
    let v = col_to_vec(sp.v.as_ref(), k);
    let mut cfg = MarchConfig::new(s, Method::Exact);
    cfg.scheme = StepScheme::ImplicitMidpoint { substeps: 20 };
    let r = march(&seq, &v, &cfg).unwrap();
    let want: Vec<c64> = v.iter().map(|z| z * (cx(0.0, 1.0) * sp.alphas[k] * len).exp()).collect();
    let modal = vnorm(&vsub(r.states.last().unwrap(), &want)) / vnorm(&want);
    let (ok_t, e) = within(t, 30);
    Outcome {
        pass: cons.rel_err <= 1e-6 && modal <= 1e-6 && ok_t,
        detail: format!("two-way sum vs global solve {:.2e}; modal march vs exp(iαL) {modal:.2e}, {e:.1?}", cons.rel_err),
    }
}

fn c9_tracking() -> Outcome {
    let t = Instant::now();
    let base = ShearLayer { ny: 12, ..Default::default() };
    let (x, systems) = spreading_shear(&base, 50, 10.0, 0.5).unwrap();
    let seq = StationSequence::new(x, systems.into_iter().map(Arc::new).collect(), vec![0.0]).unwrap();
    let sp0 = full_spectrum(|z| seq.operator(0, z), S_SHEAR, &SpectralOptions::default()).unwrap();
    let inlet = col_to_vec(sp0.v.as_ref(), designated_mode(&sp0).unwrap());
    let g = GreedyOptions::new(8, 1);
    let mut cfg = MarchConfig::new(S_SHEAR, Method::OwnsP);
    cfg.amp_var = 1;
    cfg.record_j = true;
    cfg.xi = Some(XiStrategy::Tracked { greedy: g.clone(), exclude_im_above: None });
    let tr = march(&seq, &inlet, &cfg).unwrap();
    cfg.xi = Some(XiStrategy::GreedyEachStation { greedy: g, exclude_im_above: None });
    let ge = march(&seq, &inlet, &cfg).unwrap();
    let ratio = tr
        .xi_log
        .iter()
        .zip(&ge.xi_log)
        .map(|(a, b)| a.j_ownsp.unwrap() / b.j_ownsp.unwrap())
        .fold(0.0, f64::max);
    let savings = ge.cost.dense_eigs as f64 / tr.cost.dense_eigs as f64;

    let (x, systems) = sonic_ramp(8, 0.7, 1.3, 50).unwrap();
    let ramp = StationSequence::new(x, systems.into_iter().map(Arc::new).collect(), vec![0.0]).unwrap();
    let sp = full_spectrum(|z| ramp.operator(0, z), S_SHEAR, &SpectralOptions::default()).unwrap();
    let mut cfg = MarchConfig::new(S_SHEAR, Method::OwnsP);
    cfg.xi = Some(XiStrategy::Tracked { greedy: GreedyOptions::new(2, 1), exclude_im_above: None });
    let r = march(&ramp, &col_to_vec(sp.v.as_ref(), 0), &cfg).unwrap();
    let regreedy = r.xi_log.iter().filter(|x| matches!(x.refresh, Some(f) if f != RefreshReason::Inlet)).count();
    let (ok_t, e) = within(t, 120);
    Outcome {
        pass: ratio <= 10.0 && savings >= 5.0 && regreedy == 1 && ok_t,
        detail: format!(
            "max tracked/greedy 𝒥 = {ratio:.2}; dense eigensolves {} vs {} ({savings:.0}× fewer); re-greedy events on sonic ramp: {regreedy}, {e:.1?}",
            tr.cost.dense_eigs, ge.cost.dense_eigs
        ),
    }
}

fn c10_repeated_application() -> Outcome {
    let t = Instant::now();
    let s = cx(0.0, 0.5);
    let sys = small_system();
    let op = sys.assemble(s, &[0.5], None).unwrap();
    let sp = full_spectrum(|z| sys.assemble(z, &[0.5], None), s, &SpectralOptions::default()).unwrap();
    let ku = sp.n_plus;
    let au = sp.alphas[ku];
    let one = cx(1.0, 0.0);

    // one pair tuned so the upstream mode gets E = 1.05
    let f = one / 1.05 - one;
    let bm = au.conj() + cx(1.0, 0.0);
    let bp = au - f * (au - bm);
    let xi = RecursionParamSet::new(vec![bp], vec![bm], ParamOrigin::User).unwrap();
    let e_u = ownsr_eigvals(&sp, &xi, one).unwrap()[ku];
    let filt = OwnsRFilter::new(&op, &xi, one).unwrap();
    let phi: Vec<c64> = (0..sp.n()).map(|i| sp.v[(i, ku)] + sp.v[(i, 0)]).collect();
    let mut x = phi.clone();
    for _ in 0..50 {
        x = filt.apply(&x);
    }
    let c0 = modal_coefficients(&sp, &phi).unwrap()[ku];
    let c50 = modal_coefficients(&sp, &x).unwrap()[ku];
    let growth = c50.norm() / c0.norm();

    // every downstream mode matched, upstream gain well below one
    let plus: Vec<c64> = sp.downstream().to_vec();
    let minus: Vec<c64> = (0..plus.len()).map(|j| au + cx(0.05 * (j as f64 + 1.0), 0.02)).collect();
    let xi2 = RecursionParamSet::new(plus, minus, ParamOrigin::User).unwrap();
    let e2 = ownsr_eigvals(&sp, &xi2, one).unwrap();
    let up_max = e2[ku..].iter().map(|z| z.norm()).fold(0.0, f64::max);
    let down_ok = e2[..ku].iter().all(|z| (z - one).norm() < 1e-12);
    let filt2 = OwnsRFilter::new(&op, &xi2, one).unwrap();
    let mut y = phi.clone();
    for _ in 0..50 {
        y = filt2.apply(&y);
    }
    let want = matvec(exact_projection(&sp).unwrap().as_ref(), &phi);
    let conv = vnorm(&vsub(&y, &want)) / vnorm(&want);
    let (ok_t, e) = within(t, 10);
    Outcome {
        pass: (e_u.norm() - 1.05).abs() < 1e-9 && growth >= 10.0 && up_max <= 0.9 && down_ok && conv <= 1e-6 && ok_t,
        detail: format!(
            "|E|={:.3} mode grows {growth:.2}× after 50 applications; with max upstream |E|={up_max:.2e}, 50 applications vs exact P: {conv:.2e}, {e:.1?}",
            e_u.norm()
        ),
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("projection laws", c1_projection_laws),
        ("minimal-set exactness", c2_minimal_sets),
        ("error bounds", c3_error_bounds),
        ("filter/matrix equivalence", c4_filter_matrix_equivalence),
        ("greedy dominance", c5_greedy_dominance),
        ("machine-zero convergence", c6_machine_zero),
        ("stability diagnostic", c7_stability),
        ("marching consistency", c8_marching_consistency),
        ("parameter tracking", c9_tracking),
        ("repeated-application blow-up", c10_repeated_application),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str()) || p == &(i + 1).to_string()) {
            continue;
        }
        let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| Outcome {
            pass: false,
            detail: format!(
                "panicked: {}",
                e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default()
            ),
        });
        println!("criterion {:>2} {:<30} {}  {}", i + 1, name, if out.pass { "PASS" } else { "FAIL" }, out.detail);
        failed += usize::from(!out.pass);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

//! The four subcommands. Each writes its files into the output directory and
//! returns a JSON summary for the metadata sidecar.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use owns_core::c64;
use owns_core::diagnostics::{study, DiagMethod, ErrorStudy, Selector};
use owns_core::filters::RecursionParamSet;
use owns_core::io::{write_march_csv, write_spectrum_csv, write_study_csv, XiJson};
use owns_core::marching::{march, MarchConfig, MarchResult, Method, StationModel, StationSequence, XiStrategy};
use owns_core::operator::{OperatorM, SemiDiscreteSystem};
use owns_core::param_select::{
    greedy_select, heuristic_select, minimal_set_ownsp, minimal_set_ownsr, objectives, GreedyOptions, Objective,
};
use owns_core::spectral::{full_spectrum, Label, Spectrum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{MarchSettings, StudyConfig, XiMode};
use crate::error::CliError;

pub struct Run {
    pub cfg: StudyConfig,
    pub out: PathBuf,
    pub seed: u64,
    pub timing: bool,
}

pub struct Outcome {
    pub files: Vec<String>,
    pub summary: Value,
}

impl Run {
    fn create(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        Ok(BufWriter::new(File::create(self.out.join(name))?))
    }

    fn write_json<T: Serialize>(&self, name: &str, v: &T) -> Result<(), CliError> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, v)?;
        use std::io::Write;
        w.write_all(b"\n")?;
        Ok(())
    }

    fn exclude(&self) -> impl Fn(c64) -> bool + Sync {
        let t = self.cfg.selector.exclude_im_above;
        move |a: c64| t.is_some_and(|t| a.im > t)
    }

    fn greedy_options(&self, n_beta: usize, target: Objective) -> GreedyOptions {
        let mut g = GreedyOptions::new(n_beta, self.seed);
        g.n_starts = self.cfg.selector.n_starts;
        g.target = target;
        g
    }
}

fn inlet(cfg: &StudyConfig) -> Result<(SemiDiscreteSystem, Vec<f64>, OperatorM, Spectrum), CliError> {
    let sys = cfg.inlet_system()?;
    let omega = cfg.omega_for(&sys)?;
    let s = cfg.s();
    let op = sys.assemble(s, &omega, None)?;
    let sp = full_spectrum(|z| sys.assemble(z, &omega, None), s, &cfg.spectral.options())?;
    Ok((sys, omega, op, sp))
}

fn spectrum_summary(sp: &Spectrum) -> Value {
    json!({ "n": sp.n(), "n_plus": sp.n_plus, "n_minus": sp.n_minus, "cond_v": sp.cond_v })
}

pub fn cmd_spectrum(run: &Run) -> Result<Outcome, CliError> {
    let (sys, _, _, sp) = inlet(&run.cfg)?;
    write_spectrum_csv(run.create("spectrum.csv")?, &sp)?;
    let (np, nm, n0) = sys.counts();
    let downstream = sp.labels.iter().filter(|l| **l == Label::Downstream).count();
    Ok(Outcome {
        files: vec!["spectrum.csv".into()],
        summary: json!({
            "spectrum": spectrum_summary(&sp),
            "characteristic_counts": { "n_plus": np, "n_minus": nm, "n_zero": n0 },
            "labelled_downstream": downstream,
        }),
    })
}

#[derive(Debug, Clone, Copy)]
struct SelectCell {
    n_beta: usize,
    selector: Selector,
    target: DiagMethod,
}

#[derive(Serialize)]
struct XiEntry {
    n_beta: usize,
    selector: &'static str,
    target: &'static str,
    j_ownsp: f64,
    j_ownsr: f64,
    xi: XiJson,
}

pub fn cmd_select(run: &Run) -> Result<Outcome, CliError> {
    let cfg = &run.cfg;
    if cfg.selectors.iter().any(|s| *s != Selector::Minimal) && cfg.n_beta.is_empty() {
        return Err(CliError::Config("select needs a non-empty n_beta grid".into()));
    }
    if cfg.selectors.contains(&Selector::Heuristic) && cfg.selector.heuristic.is_none() {
        return Err(CliError::Config("heuristic selector needs selector.heuristic".into()));
    }
    let (_, _, _, sp) = inlet(cfg)?;
    let mut cells = Vec::new();
    for &selector in &cfg.selectors {
        match selector {
            Selector::Greedy => {
                for &n_beta in &cfg.n_beta {
                    for &target in &cfg.methods {
                        cells.push(SelectCell { n_beta, selector, target });
                    }
                }
            }
            Selector::Heuristic => {
                for &n_beta in &cfg.n_beta {
                    cells.push(SelectCell { n_beta, selector, target: DiagMethod::OwnsP });
                }
            }
            Selector::Minimal => {
                for &target in &cfg.methods {
                    cells.push(SelectCell { n_beta: 0, selector, target });
                }
            }
        }
    }
    let exclude = run.exclude();
    let entries = cells
        .par_iter()
        .map(|c| -> Result<XiEntry, CliError> {
            let xi = match c.selector {
                Selector::Greedy => {
                    greedy_select(&sp, &run.greedy_options(c.n_beta, StudyConfig::greedy_target(c.target)), &exclude)?
                }
                Selector::Heuristic => {
                    heuristic_select(&cfg.selector.heuristic.as_ref().expect("checked").with_n_beta(c.n_beta))?
                }
                Selector::Minimal => match c.target {
                    DiagMethod::OwnsP => minimal_set_ownsp(&sp)?,
                    DiagMethod::OwnsR => minimal_set_ownsr(&sp)?,
                },
            };
            let obj = objectives(&sp, &xi)?;
            Ok(XiEntry {
                n_beta: xi.n_beta(),
                selector: c.selector.name(),
                target: if c.selector == Selector::Heuristic { "" } else { c.target.name() },
                j_ownsp: obj.j_ownsp,
                j_ownsr: obj.j_ownsr,
                xi: XiJson::from(&xi),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut wr = csv::Writer::from_writer(run.create("objectives.csv")?);
    wr.write_record(["n_beta", "selector", "target", "j_ownsp", "j_ownsr"])?;
    for e in &entries {
        wr.write_record([e.n_beta.to_string(), e.selector.into(), e.target.into(), e.j_ownsp.to_string(), e.j_ownsr.to_string()])?;
    }
    wr.flush()?;
    run.write_json("xi.json", &entries)?;
    Ok(Outcome {
        files: vec!["objectives.csv".into(), "xi.json".into()],
        summary: json!({ "spectrum": spectrum_summary(&sp), "sets": entries.len() }),
    })
}

pub fn cmd_study(run: &Run) -> Result<Outcome, CliError> {
    let cfg = &run.cfg;
    let (_, _, op, sp) = inlet(cfg)?;
    let mut st = ErrorStudy::new(cfg.n_beta.clone(), run.seed);
    st.methods = cfg.methods.clone();
    st.selectors = cfg.selectors.clone();
    st.n_starts = cfg.selector.n_starts;
    st.n_trials = cfg.study.n_trials;
    st.residual_samples = cfg.study.residual_samples;
    st.heuristic = cfg.selector.heuristic.as_ref().map(|h| h.with_n_beta(1));
    st.exclude_im_above = cfg.selector.exclude_im_above;
    let records = study(&sp, cfg.study.practical_filters.then_some(&op), &st)?;
    write_study_csv(run.create("study.csv")?, &records, run.timing)?;
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    Ok(Outcome {
        files: vec!["study.csv".into()],
        summary: json!({ "spectrum": spectrum_summary(&sp), "cells": records.len(), "failed_cells": failed }),
    })
}

fn method_target(m: Method) -> Objective {
    match m {
        Method::OwnsR { .. } => Objective::OwnsR,
        _ => Objective::OwnsP,
    }
}

fn inlet_vector(sp: &Spectrum, m: &MarchSettings) -> Result<Vec<c64>, CliError> {
    let k = match m.inlet_mode {
        Some(k) if k < sp.n() => k,
        Some(k) => return Err(CliError::Config(format!("inlet_mode {k} out of range (spectrum has {})", sp.n()))),
        None => (0..sp.n_plus)
            .min_by(|&a, &b| sp.alphas[a].im.total_cmp(&sp.alphas[b].im))
            .ok_or_else(|| CliError::Config("inlet spectrum has no downstream mode".into()))?,
    };
    Ok((0..sp.n()).map(|i| sp.v[(i, k)]).collect())
}

fn fixed_set(run: &Run, sp: &Spectrum, mode: XiMode, n_beta: usize, target: Objective) -> Result<RecursionParamSet, CliError> {
    Ok(match mode {
        XiMode::HeuristicFixed => heuristic_select(&run.cfg.selector.heuristic.as_ref().expect("validated").with_n_beta(n_beta))?,
        _ => greedy_select(sp, &run.greedy_options(n_beta, target), &run.exclude())?,
    })
}

fn march_config(run: &Run, m: &MarchSettings, sp: &Spectrum, mode: XiMode, n_beta: Option<usize>) -> Result<MarchConfig, CliError> {
    let mut mc = MarchConfig::new(run.cfg.s(), m.method);
    mc.scheme = m.scheme;
    mc.amp_var = m.amp_var;
    mc.spectral = run.cfg.spectral.options();
    mc.project_inlet = m.project_inlet;
    mc.record_j = m.record_j;
    mc.blowup = m.blowup;
    if m.method != Method::Exact {
        let nb = n_beta.expect("validated");
        let target = method_target(m.method);
        let t = run.cfg.selector.exclude_im_above;
        mc.xi = Some(match mode {
            XiMode::Tracked => XiStrategy::Tracked { greedy: run.greedy_options(nb, target), exclude_im_above: t },
            XiMode::GreedyEachStation => {
                XiStrategy::GreedyEachStation { greedy: run.greedy_options(nb, target), exclude_im_above: t }
            }
            XiMode::GreedyFixed | XiMode::HeuristicFixed => XiStrategy::Fixed(fixed_set(run, sp, mode, nb, target)?),
        });
    }
    Ok(mc)
}

pub fn cmd_march(run: &Run) -> Result<Outcome, CliError> {
    let cfg = &run.cfg;
    let m = cfg.march.as_ref().ok_or_else(|| CliError::Config("march needs a `march` section".into()))?;
    let seq = cfg.station_sequence()?;
    let sp = full_spectrum(|z| seq.systems[0].assemble(z, &seq.omega_t, None), cfg.s(), &cfg.spectral.options())?;
    let v0 = inlet_vector(&sp, m)?;
    let mc = march_config(run, m, &sp, m.xi, m.n_beta)?;
    let r = march(&seq, &v0, &mc)?;
    write_march_csv(run.create("march.csv")?, &r, run.timing)?;
    run.write_json("xi_log.json", &r.xi_log)?;
    let mut files = vec!["march.csv".to_string(), "xi_log.json".to_string()];
    let refreshes = r.xi_log.iter().filter(|x| x.refresh.is_some()).count();
    let mut summary = json!({
        "stations": seq.n_stations(),
        "n_factor": r.n_factor,
        "refreshes": refreshes,
        "integrator": r.integrator,
        "cost": r.cost,
    });
    if m.cost_table {
        cost_table(run, m, &seq, &sp, &v0)?;
        files.push("cost.csv".into());
        summary["cost_table"] = json!(true);
    }
    Ok(Outcome { files, summary })
}

struct CostRow {
    n_beta: usize,
    j: f64,
    wall_ms: f64,
}

fn timed_march(run: &Run, m: &MarchSettings, seq: &StationSequence, sp: &Spectrum, v0: &[c64], mode: XiMode, nb: usize) -> Result<CostRow, CliError> {
    let mc = march_config(run, m, sp, mode, Some(nb))?;
    let xi = match &mc.xi {
        Some(XiStrategy::Fixed(xi)) => xi.clone(),
        _ => unreachable!("fixed strategies only"),
    };
    let obj = objectives(sp, &xi)?;
    let j = match method_target(m.method) {
        Objective::OwnsP => obj.j_ownsp,
        Objective::OwnsR => obj.j_ownsr,
    };
    let t0 = Instant::now();
    let _: MarchResult = march(seq, v0, &mc)?;
    Ok(CostRow { n_beta: nb, j, wall_ms: t0.elapsed().as_secs_f64() * 1e3 })
}

/// Fixed greedy versus fixed heuristic sets. For each greedy `Nβ`, the
/// heuristic match is the smallest grid `Nβ` whose objective is no worse;
/// the speed-up compares march wall times at those two sizes.
fn cost_table(run: &Run, m: &MarchSettings, seq: &StationSequence, sp: &Spectrum, v0: &[c64]) -> Result<(), CliError> {
    if m.method == Method::Exact {
        return Err(CliError::Config("cost_table needs a filtered method".into()));
    }
    let grid = &run.cfg.n_beta;
    let mut greedy = Vec::new();
    let mut heur = Vec::new();
    for &nb in grid {
        greedy.push(timed_march(run, m, seq, sp, v0, XiMode::GreedyFixed, nb)?);
        heur.push(timed_march(run, m, seq, sp, v0, XiMode::HeuristicFixed, nb)?);
    }
    let ms = |v: f64| if run.timing { format!("{v:.3}") } else { String::new() };
    let mut wr = csv::Writer::from_writer(run.create("cost.csv")?);
    wr.write_record([
        "n_beta",
        "j_greedy",
        "heuristic_n_beta",
        "j_heuristic",
        "n_beta_ratio",
        "wall_ms",
        "wall_ms_heuristic",
        "speedup",
    ])?;
    for g in &greedy {
        let hit = heur.iter().find(|h| h.j <= g.j);
        let (hn, hj, ratio, hms, speed) = match hit {
            Some(h) => (
                h.n_beta.to_string(),
                h.j.to_string(),
                (h.n_beta as f64 / g.n_beta as f64).to_string(),
                ms(h.wall_ms),
                if run.timing { format!("{:.3}", h.wall_ms / g.wall_ms) } else { String::new() },
            ),
            None => Default::default(),
        };
        wr.write_record([g.n_beta.to_string(), g.j.to_string(), hn, hj, ratio, ms(g.wall_ms), hms, speed])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn ensure_dir(p: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(p)?;
    Ok(())
}

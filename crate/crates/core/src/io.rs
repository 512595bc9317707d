//! CSV and JSON exports. Bodies depend only on the data, so reruns with the
//! same inputs are byte-identical; timing columns are left empty unless asked for.

use std::io::Write;

use faer::c64;
use serde::{Deserialize, Serialize};

use crate::diagnostics::StudyRecord;
use crate::filters::{FilterError, ParamOrigin, RecursionParamSet};
use crate::marching::MarchResult;
use crate::spectral::Spectrum;

pub type IoResult<T> = Result<T, csv::Error>;

fn opt_ms(timing: bool, ms: f64) -> String {
    if timing {
        format!("{ms:.3}")
    } else {
        String::new()
    }
}

fn opt_f(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `index, re_alpha, im_alpha, label, re_alpha_eta, im_alpha_eta`.
pub fn write_spectrum_csv<W: Write>(w: W, spec: &Spectrum) -> IoResult<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["index", "re_alpha", "im_alpha", "label", "re_alpha_eta", "im_alpha_eta"])?;
    for k in 0..spec.n() {
        let (a, e) = (spec.alphas[k], spec.alphas_eta[k]);
        wr.write_record([
            k.to_string(),
            a.re.to_string(),
            a.im.to_string(),
            spec.labels[k].as_str().to_string(),
            e.re.to_string(),
            e.im.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// `j, re_beta_plus, im_beta_plus, re_beta_minus, im_beta_minus, origin`.
pub fn write_xi_csv<W: Write>(w: W, xi: &RecursionParamSet) -> IoResult<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["j", "re_beta_plus", "im_beta_plus", "re_beta_minus", "im_beta_minus", "origin"])?;
    let origin = serde_json::to_value(xi.origin).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
    for j in 0..xi.n_beta() {
        let (p, m) = (xi.beta_plus[j], xi.beta_minus[j]);
        wr.write_record([
            j.to_string(),
            p.re.to_string(),
            p.im.to_string(),
            m.re.to_string(),
            m.im.to_string(),
            origin.clone(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// JSON interchange form of a parameter set.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct XiJson {
    pub beta_plus: Vec<[f64; 2]>,
    pub beta_minus: Vec<[f64; 2]>,
    pub origin: ParamOrigin,
}

impl From<&RecursionParamSet> for XiJson {
    fn from(xi: &RecursionParamSet) -> Self {
        let f = |v: &[c64]| v.iter().map(|z| [z.re, z.im]).collect();
        Self { beta_plus: f(&xi.beta_plus), beta_minus: f(&xi.beta_minus), origin: xi.origin }
    }
}

impl XiJson {
    pub fn to_params(&self) -> Result<RecursionParamSet, FilterError> {
        let f = |v: &[[f64; 2]]| v.iter().map(|z| c64::new(z[0], z[1])).collect();
        RecursionParamSet::new(f(&self.beta_plus), f(&self.beta_minus), self.origin)
    }
}

/// `x, amplitude, n_factor_running, refresh_flag, j_ownsp, j_ownsr, wall_ms`.
pub fn write_march_csv<W: Write>(w: W, r: &MarchResult, timing: bool) -> IoResult<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["x", "amplitude", "n_factor_running", "refresh_flag", "j_ownsp", "j_ownsr", "wall_ms"])?;
    let nf = r.running_n_factor();
    for i in 0..r.x.len() {
        let rec = &r.xi_log[i];
        let flag = rec
            .refresh
            .map(|f| serde_json::to_value(f).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default())
            .unwrap_or_default();
        wr.write_record([
            r.x[i].to_string(),
            r.amplitude[i].to_string(),
            nf[i].to_string(),
            flag,
            opt_f(rec.j_ownsp),
            opt_f(rec.j_ownsr),
            opt_ms(timing, r.station_ms[i]),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// `n_beta, selector, method, J, proj_err, mode_err, bound, precondition_ok,
/// beta_star_residual, wall_ms`, plus the scaled residual and any cell error.
pub fn write_study_csv<W: Write>(w: W, records: &[StudyRecord], timing: bool) -> IoResult<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([
        "n_beta",
        "selector",
        "method",
        "J",
        "proj_err",
        "mode_err",
        "bound",
        "precondition_ok",
        "beta_star_residual",
        "wall_ms",
        "beta_star_residual_scaled",
        "error",
    ])?;
    for r in records {
        wr.write_record([
            r.n_beta.to_string(),
            r.selector.name().to_string(),
            r.method.name().to_string(),
            r.j.to_string(),
            r.proj_err.to_string(),
            r.mode_err.to_string(),
            r.bound.to_string(),
            r.precondition_ok.to_string(),
            opt_f(r.beta_star_residual),
            opt_ms(timing, r.wall_ms),
            opt_f(r.beta_star_residual_scaled),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::cx;

    #[test]
    fn xi_round_trips_through_json() {
        let xi = RecursionParamSet::new(vec![cx(1.0, 2.0)], vec![cx(-1.0, -0.5)], ParamOrigin::Greedy).unwrap();
        let s = serde_json::to_string(&XiJson::from(&xi)).unwrap();
        let back: XiJson = serde_json::from_str(&s).unwrap();
        let y = back.to_params().unwrap();
        assert_eq!(y.beta_plus, xi.beta_plus);
        assert_eq!(y.beta_minus, xi.beta_minus);
        assert!(serde_json::from_str::<XiJson>(r#"{"beta_plus":[],"beta_minus":[],"origin":"user","x":1}"#).is_err());
    }

    #[test]
    fn xi_csv_has_one_row_per_pair() {
        let xi = RecursionParamSet::new(vec![cx(1.0, 2.0), cx(0.5, 0.0)], vec![cx(-1.0, -0.5), cx(0.0, -3.0)], ParamOrigin::User)
            .unwrap();
        let mut buf = Vec::new();
        write_xi_csv(&mut buf, &xi).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1], "0,1,2,-1,-0.5,user");
    }
}

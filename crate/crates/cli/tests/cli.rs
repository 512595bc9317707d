use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_owns"));
    for v in ["OWNS_CONFIG", "OWNS_OUT", "OWNS_SEED", "OWNS_THREADS", "OWNS_TIMING"] {
        c.env_remove(v);
    }
    c
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    p
}

fn run(cmd: &str, cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    bin().arg(cmd).arg("--config").arg(cfg).arg("--out").arg(out).args(extra).output().unwrap()
}

fn error_json(o: &Output) -> Value {
    let err = String::from_utf8_lossy(&o.stderr);
    let line = err.lines().last().expect("error line");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {err}"))
}

fn read_csv(p: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(p).unwrap();
    let head = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect();
    (head, rows)
}

fn col(head: &[String], name: &str) -> usize {
    head.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

fn euler(u: f64, ny: usize) -> Value {
    json!({ "kind": "uniform_euler", "dim": 2, "u": u, "a": 1.0, "ny": ny })
}

fn shear(ny: usize) -> Value {
    json!({ "kind": "shear_layer", "ny": ny, "half_width": 4.0, "u_mid": 0.5, "du": 0.3, "delta": 1.0, "a": 1.0 })
}

fn base(testbed: Value, s: [f64; 2]) -> Value {
    json!({ "schema_version": 1, "testbed": testbed, "s": s })
}

fn metadata(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("metadata.json")).unwrap()).unwrap()
}

#[test]
fn spectrum_of_uniform_euler_matches_characteristic_counts() {
    let d = TempDir::new().unwrap();
    let cfg = write_config(d.path(), "c.json", &base(euler(0.5, 8), [0.0, 1.0]));
    let out = d.path().join("out");
    let o = run("spectrum", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (head, rows) = read_csv(&out.join("spectrum.csv"));
    assert_eq!(rows.len(), 32);
    // subsonic: u+a, u, u > 0 and u-a < 0 at each of 8 nodes
    let lab = col(&head, "label");
    let down = rows.iter().filter(|r| r[lab] == "downstream").count();
    assert_eq!(down, 24);
    assert_eq!(rows.len() - down, 8);
    let m = metadata(&out);
    assert_eq!(m["summary"]["spectrum"]["n_plus"], 24);
    assert_eq!(m["command"], "spectrum");
    assert_eq!(m["outputs"], json!(["spectrum.csv"]));
}

#[test]
fn supersonic_spectrum_is_all_downstream() {
    let d = TempDir::new().unwrap();
    let cfg = write_config(d.path(), "c.json", &base(euler(1.5, 8), [0.0, 1.0]));
    let out = d.path().join("out");
    assert!(run("spectrum", &cfg, &out, &[]).status.success());
    let (head, rows) = read_csv(&out.join("spectrum.csv"));
    let lab = col(&head, "label");
    assert_eq!(rows.len(), 32);
    assert!(rows.iter().all(|r| r[lab] == "downstream"));
}

#[test]
fn empty_grid_is_a_config_error() {
    let d = TempDir::new().unwrap();
    let cfg = write_config(d.path(), "c.json", &base(shear(0), [0.0, 1.0]));
    let o = run("spectrum", &cfg, &d.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_json(&o)["error"], "config");
}

#[test]
fn zero_n_beta_is_a_config_error() {
    let d = TempDir::new().unwrap();
    let mut c = base(euler(0.5, 4), [0.0, 1.0]);
    c["n_beta"] = json!([0]);
    let cfg = write_config(d.path(), "c.json", &c);
    let o = run("select", &cfg, &d.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    let e = error_json(&o);
    assert_eq!(e["error"], "config");
    assert!(e["message"].as_str().unwrap().contains("n_beta"));
}

#[test]
fn missing_version_and_unknown_keys_are_rejected() {
    let d = TempDir::new().unwrap();
    let cfg = write_config(d.path(), "a.json", &json!({ "testbed": euler(0.5, 4), "s": [0.0, 1.0] }));
    let o = run("spectrum", &cfg, &d.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(error_json(&o)["message"].as_str().unwrap().contains("schema_version"));

    let mut c = base(euler(0.5, 4), [0.0, 1.0]);
    c["selector"] = json!({ "seed": 1, "starts": 3 });
    let cfg = write_config(d.path(), "b.json", &c);
    let o = run("spectrum", &cfg, &d.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(error_json(&o)["message"].as_str().unwrap().contains("starts"));

    let mut c = base(euler(0.5, 4), [0.0, 1.0]);
    c["schema_version"] = json!(7);
    let cfg = write_config(d.path(), "c.json", &c);
    assert_eq!(run("spectrum", &cfg, &d.path().join("out"), &[]).status.code(), Some(2));
}

#[test]
fn missing_output_directory_fails_with_json() {
    let d = TempDir::new().unwrap();
    let cfg = write_config(d.path(), "c.json", &base(euler(0.5, 4), [0.0, 1.0]));
    let o = bin().arg("spectrum").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(error_json(&o)["message"].as_str().unwrap().contains("output"));
    let o = bin().arg("spectrum").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_json(&o)["error"], "usage");
}

#[test]
fn toml_configs_are_accepted() {
    let d = TempDir::new().unwrap();
    let p = d.path().join("c.toml");
    std::fs::write(
        &p,
        "schema_version = 1\ns = [0.0, 1.0]\n\n[testbed]\nkind = \"uniform_euler\"\ndim = 2\nu = 0.5\na = 1.0\nny = 4\n",
    )
    .unwrap();
    let out = d.path().join("out");
    assert!(run("spectrum", &p, &out, &[]).status.success());
    assert_eq!(read_csv(&out.join("spectrum.csv")).1.len(), 16);
}

fn select_config(seed: u64) -> Value {
    let mut c = base(euler(0.5, 6), [0.0, 1.0]);
    c["n_beta"] = json!([1, 2, 4]);
    c["selector"] = json!({ "seed": seed, "n_starts": 4 });
    c
}

#[test]
fn select_reruns_are_byte_identical() {
    let d = TempDir::new().unwrap();
    let cfg = write_config(d.path(), "c.json", &select_config(11));
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    assert!(run("select", &cfg, &a, &[]).status.success());
    assert!(run("select", &cfg, &b, &["--threads", "2"]).status.success());
    for f in ["objectives.csv", "xi.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let (_, rows) = read_csv(&a.join("objectives.csv"));
    assert_eq!(rows.len(), 6);
}

#[test]
fn seed_precedence_is_flag_then_env_then_config() {
    let d = TempDir::new().unwrap();
    let cfg = write_config(d.path(), "c.json", &select_config(11));
    let out = d.path().join("o");
    let seed = |o: &Path| metadata(o)["seed"].as_u64().unwrap();
    assert!(run("select", &cfg, &out, &[]).status.success());
    assert_eq!(seed(&out), 11);
    let o = bin()
        .args(["select", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .env("OWNS_SEED", "5")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(seed(&out), 5);
    let o = bin()
        .args(["select", "--seed", "3", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .env("OWNS_SEED", "5")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(seed(&out), 3);
    // output directory from the environment
    let env_out = d.path().join("env_out");
    let o = bin().args(["spectrum", "--config"]).arg(&cfg).env("OWNS_OUT", &env_out).output().unwrap();
    assert!(o.status.success());
    assert!(env_out.join("spectrum.csv").exists());
}

fn shear_study(ny: usize) -> Value {
    let mut c = base(shear(ny), [0.0, 2.0]);
    c["selector"] = json!({
        "seed": 7,
        "n_starts": 8,
        "heuristic": { "anchor_plus": [-1.0, 0.3], "anchor_minus": [1.0, -0.3], "ratio": 1.15 }
    });
    c
}

#[test]
fn greedy_objectives_dominate_heuristic_on_shear() {
    let d = TempDir::new().unwrap();
    let mut c = shear_study(8);
    c["n_beta"] = json!([2, 4, 6, 8]);
    c["selectors"] = json!(["greedy", "heuristic"]);
    let cfg = write_config(d.path(), "c.json", &c);
    let out = d.path().join("o");
    let o = run("select", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (head, rows) = read_csv(&out.join("objectives.csv"));
    let (nb, sel, tg, jp, jr) =
        (col(&head, "n_beta"), col(&head, "selector"), col(&head, "target"), col(&head, "j_ownsp"), col(&head, "j_ownsr"));
    let get = |n: &str, s: &str, t: &str, k: usize| -> f64 {
        rows.iter().find(|r| r[nb] == n && r[sel] == s && r[tg] == t).unwrap()[k].parse().unwrap()
    };
    for n in ["2", "4", "6", "8"] {
        assert!(get(n, "greedy", "owns_p", jp) <= get(n, "heuristic", "", jp));
        assert!(get(n, "greedy", "owns_r", jr) <= get(n, "heuristic", "", jr));
    }
}

#[test]
fn study_reaches_machine_zero_and_respects_bounds() {
    let d = TempDir::new().unwrap();
    let mut c = shear_study(8);
    c["n_beta"] = json!([2, 4, 8, 12, 16]);
    c["selectors"] = json!(["greedy"]);
    let cfg = write_config(d.path(), "c.json", &c);
    let out = d.path().join("o");
    let o = run("study", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = metadata(&out);
    let nmin = m["summary"]["spectrum"]["n_plus"].as_u64().unwrap().min(m["summary"]["spectrum"]["n_minus"].as_u64().unwrap());
    let (head, rows) = read_csv(&out.join("study.csv"));
    assert_eq!(rows.len(), 10);
    let (nb, me, pe, bd, ok, wall) = (
        col(&head, "n_beta"),
        col(&head, "method"),
        col(&head, "proj_err"),
        col(&head, "bound"),
        col(&head, "precondition_ok"),
        col(&head, "wall_ms"),
    );
    let at_min = rows.iter().find(|r| r[me] == "owns_p" && r[nb] == nmin.to_string()).expect("row at min(N+,N-)");
    assert!(at_min[pe].parse::<f64>().unwrap() <= 1e-8, "{at_min:?}");
    for r in &rows {
        assert!(r[wall].is_empty());
        if r[ok] == "true" {
            // exact sets have a zero bound; the measured error sits at rounding level
            let (e, b): (f64, f64) = (r[pe].parse().unwrap(), r[bd].parse().unwrap());
            assert!(e <= b * 1.1 + 1e-12, "{r:?}");
        }
    }
}

#[test]
fn tracked_march_flags_the_count_change() {
    let d = TempDir::new().unwrap();
    let mut c = base(json!({ "kind": "sonic_ramp", "ny": 8, "u0": 0.7, "u1": 1.3, "n_stations": 30 }), [0.0, 2.0]);
    c["selector"] = json!({ "seed": 1, "n_starts": 4 });
    c["march"] = json!({ "method": { "kind": "owns_p" }, "n_beta": 2, "xi": "tracked" });
    let cfg = write_config(d.path(), "c.json", &c);
    let out = d.path().join("o");
    let o = run("march", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (head, rows) = read_csv(&out.join("march.csv"));
    assert_eq!(rows.len(), 30);
    let f = col(&head, "refresh_flag");
    assert_eq!(rows[0][f], "inlet");
    assert_eq!(rows.iter().filter(|r| r[f] == "count_change").count(), 1);
    assert!(out.join("xi_log.json").exists());
}

#[test]
fn constant_coefficient_march_follows_the_mode() {
    let d = TempDir::new().unwrap();
    let mut c = base(euler(0.5, 6), [0.1, 1.0]);
    c["march"] = json!({
        "method": { "kind": "exact" },
        "stations": 50,
        "length": 5.0,
        "scheme": { "kind": "implicit_midpoint", "substeps": 40 }
    });
    let cfg = write_config(d.path(), "c.json", &c);
    let out = d.path().join("o");
    assert!(run("spectrum", &cfg, &out, &[]).status.success());
    let (head, rows) = read_csv(&out.join("spectrum.csv"));
    let (lab, im) = (col(&head, "label"), col(&head, "im_alpha"));
    // default inlet: downstream mode with the smallest Im α
    let im_min = rows.iter().filter(|r| r[lab] == "downstream").map(|r| r[im].parse::<f64>().unwrap()).fold(f64::INFINITY, f64::min);
    let o = run("march", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (head, rows) = read_csv(&out.join("march.csv"));
    let (x, a) = (col(&head, "x"), col(&head, "amplitude"));
    let a0: f64 = rows[0][a].parse().unwrap();
    for r in &rows {
        let xv: f64 = r[x].parse().unwrap();
        let got: f64 = r[a].parse().unwrap();
        let want = a0 * (-im_min * xv).exp();
        assert!((got - want).abs() <= 1e-6 * want, "x={xv}: {got} vs {want}");
    }
}

#[test]
fn cost_table_has_table_structure() {
    let d = TempDir::new().unwrap();
    let mut c = shear_study(8);
    c["n_beta"] = json!([2, 4, 8]);
    c["march"] = json!({ "method": { "kind": "owns_p" }, "n_beta": 4, "xi": "greedy_fixed", "stations": 10, "length": 2.0, "cost_table": true });
    let cfg = write_config(d.path(), "c.json", &c);
    let out = d.path().join("o");
    let o = run("march", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (head, rows) = read_csv(&out.join("cost.csv"));
    for name in ["n_beta", "wall_ms", "speedup"] {
        col(&head, name);
    }
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r[col(&head, "wall_ms")].is_empty()));
    let o = run("march", &cfg, &out, &["--timing"]);
    assert!(o.status.success());
    let (head, rows) = read_csv(&out.join("cost.csv"));
    assert!(rows.iter().all(|r| r[col(&head, "wall_ms")].parse::<f64>().unwrap() >= 0.0));
}

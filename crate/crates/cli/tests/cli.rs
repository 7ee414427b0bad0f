use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cmc_cli::config::ProblemConfig;
use cmc_core::fields::{dump_field, load_field, Weight, WeightedField};
use cmc_core::geometry::build_hyperbolic_disk_patch;
use cmc_core::geometry::mobius::poincare_factor;
use num_complex::Complex64;
use serde_json::Value;
use tempfile::TempDir;

fn cmc(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cmc")).args(args).env("CMC_OUT_DIR", out).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn report(dir: &Path, name: &str) -> Value {
    serde_json::from_slice(&std::fs::read(dir.join(name)).unwrap()).unwrap()
}

fn out_dir(tmp: &TempDir, name: &str) -> PathBuf {
    tmp.path().join(name)
}

#[test]
fn disk_solve_writes_fields_and_report() {
    let tmp = TempDir::new().unwrap();
    let out = out_dir(&tmp, "disk");
    let o = cmc(&out, &["solve", "--n", "32", "--beta", "const:0.3+0.1i"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["u.fld", "f.fld", "b.fld", "alpha.fld", "rho_h.fld", "solution.csv", "report.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let r = report(&out, "report.json");
    assert_eq!(r["status"], "converged");
    assert_eq!(r["lambda"].as_f64(), Some(-1.0));
    assert!(r["residuals"]["r_gauss"].as_f64().unwrap() < 1e-6);
    assert!(r["min_eig"]["value"].as_f64().unwrap() > 0.0);
    assert_eq!(r["exit_code"], 0);
    let csv = std::fs::read_to_string(out.join("solution.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + r["nodes"].as_u64().unwrap() as usize);
}

#[test]
fn torus_obstruction_exits_three_with_hint() {
    let tmp = TempDir::new().unwrap();
    let out = out_dir(&tmp, "torus");
    let o = cmc(&out, &["solve", "--backend", "torus-patch", "--n", "16"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("Gauss–Bonnet"), "{}", stderr(&o));
    assert_eq!(report(&out, "report.json")["status"], "failed");
}

#[test]
fn bolza_solve_with_a_class() {
    let tmp = TempDir::new().unwrap();
    let out = out_dir(&tmp, "bolza");
    let o = cmc(&out, &["solve", "--backend", "bolza", "--n", "48", "--c", "0.5", "--beta", "basis:0:0.1+0i"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = report(&out, "report.json");
    assert_eq!(r["lambda"].as_f64(), Some(-0.75));
    assert!(r["min_eig"]["value"].as_f64().unwrap() > 0.0);
    assert!(r["continuation"]["steps"].as_array().unwrap().len() >= 10);
}

#[test]
fn configuration_errors_exit_two() {
    let tmp = TempDir::new().unwrap();
    let out = out_dir(&tmp, "cfg");
    for args in [
        &["solve", "--c", "1.5"][..],
        &["solve", "--backend", "sphere"],
        &["solve", "--n", "4"],
        &["solve", "--set", "cg_tol=-1"],
        &["solve", "--beta", "basis:0:0.1+0i"],
        &["solve-constrained", "--backend", "bolza", "--n", "32"],
        &["check", "gauss-bonnet", "--backend", "torus-patch"],
        &["check", "mms", "--backend", "bolza"],
        &["sweep", "--axis", "c", "--from", "0", "--to", "1.2", "--steps", "5", "--n", "32"],
    ] {
        let o = cmc(&out, args);
        assert_eq!(code(&o), 2, "{args:?}: {}", stderr(&o));
        assert!(stderr(&o).starts_with("error:") || stderr(&o).contains("error"), "{args:?}");
    }
}

#[test]
fn residual_threshold_exits_four() {
    let tmp = TempDir::new().unwrap();
    let out = out_dir(&tmp, "thr");
    let o = cmc(&out, &["solve", "--n", "32", "--beta", "const:0.3+0.1i", "--set", "max_r_codazzi=0"]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    assert_eq!(report(&out, "report.json")["status"], "residual-threshold");
}

#[test]
fn check_all_on_the_disk_passes() {
    let tmp = TempDir::new().unwrap();
    let out = out_dir(&tmp, "check");
    let o = cmc(&out, &["check", "all", "--n", "64"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let m = report(&out, "manifest.json");
    let checks = m["checks"].as_array().unwrap();
    assert!(checks.len() >= 6 && checks.iter().all(|c| c["pass"] == true), "{m}");
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("PASS")).count(), checks.len());
}

#[test]
fn planted_mutant_fails_the_gradient_check() {
    let tmp = TempDir::new().unwrap();
    let out = out_dir(&tmp, "mutant");
    let o = cmc(&out, &["check", "gradient", "--n", "32", "--mutant", "volume-sign"]);
    assert_eq!(code(&o), 5);
    assert!(stdout(&o).contains("FAIL gradient"));
    assert_eq!(report(&out, "manifest.json")["pass"], false);
}

#[test]
fn sweep_in_c_is_smooth_and_warm_started() {
    let tmp = TempDir::new().unwrap();
    let out = out_dir(&tmp, "sweep");
    let o = cmc(&out, &["sweep", "--axis", "c", "--from", "0", "--to", "0.9", "--steps", "10", "--n", "32", "--beta", "const:0.2+0i"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 10);
    let mut last = f64::NEG_INFINITY;
    for row in &rows {
        assert_eq!(row[3], "converged");
        let lambda: f64 = row[2].parse().unwrap();
        assert!(lambda > last && lambda < 0.0);
        last = lambda;
        assert!(row[9].parse::<f64>().unwrap() > 0.0, "min_eig {row:?}");
    }
}

#[test]
fn beta_scale_sweep_endpoint_matches_a_direct_solve() {
    let tmp = TempDir::new().unwrap();
    let (s, d) = (out_dir(&tmp, "s"), out_dir(&tmp, "d"));
    let base = ["--backend", "bolza", "--n", "32", "--beta", "basis:1:0.3-0.2i"];
    let mut args = vec!["sweep", "--axis", "beta-scale", "--from", "0", "--to", "1", "--steps", "6"];
    args.extend(base);
    assert_eq!(code(&cmc(&s, &args)), 0);
    let mut args = vec!["solve"];
    args.extend(base);
    assert_eq!(code(&cmc(&d, &args)), 0);
    let csv = std::fs::read_to_string(s.join("sweep.csv")).unwrap();
    let last: Vec<&str> = csv.lines().last().unwrap().split(',').collect();
    let energy: f64 = last[5].parse().unwrap();
    let direct = report(&d, "report.json")["energy"]["total"].as_f64().unwrap();
    assert!((energy - direct).abs() < 1e-9 * direct.abs().max(1.0), "{energy} vs {direct}");
}

#[test]
fn config_file_round_trips_through_the_report() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (out_dir(&tmp, "a"), out_dir(&tmp, "b"));
    assert_eq!(code(&cmc(&a, &["solve", "--n", "32", "--c", "0.3", "--beta", "const:0.1-0.2i", "--seed", "9"])), 0);
    let text = report(&a, "report.json")["config"].as_str().unwrap().to_string();
    let parsed = ProblemConfig::parse(&text).unwrap();
    assert_eq!(parsed.canonical(), text);
    let path = tmp.path().join("run.cfg");
    std::fs::write(&path, &text).unwrap();
    assert_eq!(code(&cmc(&b, &["solve", "--config", path.to_str().unwrap()])), 0);
    assert_eq!(std::fs::read(a.join("report.json")).unwrap(), std::fs::read(b.join("report.json")).unwrap());
}

#[test]
fn dumped_class_can_be_reloaded() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (out_dir(&tmp, "a"), out_dir(&tmp, "b"));
    assert_eq!(code(&cmc(&a, &["solve", "--n", "32", "--beta", "const:0.3+0.1i"])), 0);
    let chart = build_hyperbolic_disk_patch(32, 0.5).unwrap();
    let class = WeightedField::from_fn(&chart, "b", Weight::BETA, |z| Complex64::new(0.3, 0.1) * poincare_factor(z).powi(2));
    let path = tmp.path().join("b.fld");
    std::fs::write(&path, dump_field(&class, 32)).unwrap();
    let (back, n) = load_field(&std::fs::read(&path).unwrap()).unwrap();
    assert_eq!((n, back.values), (32, class.values));
    let beta = format!("file:{}", path.display());
    let o = cmc(&b, &["solve", "--n", "32", "--beta", &beta]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (ra, rb) = (report(&a, "report.json"), report(&b, "report.json"));
    let (va, vb) = (ra["volume"].as_f64().unwrap(), rb["volume"].as_f64().unwrap());
    assert!((va - vb).abs() < 1e-12 * va, "{va} vs {vb}");
    assert_eq!(code(&cmc(&b, &["solve", "--n", "48", "--beta", &beta])), 2);
    // B is undefined on Dirichlet nodes, so a solution's B is not a class file
    let o = cmc(&b, &["solve", "--n", "32", "--beta", &format!("file:{}", a.join("b.fld").display())]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("non-finite"), "{}", stderr(&o));
}

#[test]
fn repeated_runs_are_bit_identical() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (out_dir(&tmp, "a"), out_dir(&tmp, "b"));
    let args = ["solve", "--backend", "bolza", "--n", "32", "--beta", "basis:2:0.2+0.1i", "--seed", "3"];
    assert_eq!(code(&cmc(&a, &args)), 0);
    assert_eq!(code(&cmc(&b, &args)), 0);
    for f in ["u.fld", "f.fld", "alpha.fld", "solution.csv", "report.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn info_lists_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let o = cmc(tmp.path(), &["info"]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["exit_codes"].as_array().unwrap().len(), 6);
    assert_eq!(v["backends"][2], "bolza");
}

//! Acceptance criteria 1–10, one PASS/FAIL line each. Runs without the test
//! harness so the lines are always printed; exits non-zero if any fails.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use cmc_core::donaldson::{Problem, Solution, SolveState};
use cmc_core::fields::{bolza_basis, BetaClass, Weight, WeightedField};
use cmc_core::geometry::{build_bolza_octagon, build_flat_torus_patch, build_hyperbolic_disk_patch, Chart};
use cmc_core::solver::{constrained_solve, continuation_solve, dense_min_eig, min_eig_estimate, newton_solve, SolverConfig};
use cmc_core::verify::{self, MmsRecipe};
use cmc_core::{CmcError, DivergenceKind};
use num_complex::Complex64;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn disk(n: usize) -> Arc<Chart> {
    Arc::new(build_hyperbolic_disk_patch(n, 0.5).unwrap())
}

fn bolza(n: usize) -> Arc<Chart> {
    Arc::new(build_bolza_octagon(n).unwrap())
}

fn gaussian_beta(chart: &Chart, amp: Complex64) -> BetaClass {
    let b = WeightedField::from_fn(chart, "b", Weight::BETA, |z| amp * (-z.norm_sqr() / 0.04).exp());
    BetaClass::new(b, "gaussian").unwrap()
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn sup_diff_c(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn err(e: CmcError) -> String {
    e.to_string()
}

fn solve(p: &Problem, config: &SolverConfig) -> Result<Solution, String> {
    if p.beta.is_zero() || !p.chart.backend.is_closed() {
        newton_solve(p, SolveState::zero(&p.chart), config).map_err(err)
    } else {
        continuation_solve(p, config).map(|(s, _)| s).map_err(err)
    }
}

fn ensure(ok: bool, summary: String) -> Outcome {
    if ok {
        Ok(summary)
    } else {
        Err(summary)
    }
}

/// Problems with `λ ≤ −0.1` used by the positivity and continuation criteria.
fn test_matrix() -> Vec<(&'static str, Problem)> {
    let d = disk(32);
    let b = bolza(32);
    let disk_beta = gaussian_beta(&d, c(0.5, 0.25));
    vec![
        ("disk λ=-0.1", Problem::new(d.clone(), disk_beta.clone(), -0.1).unwrap()),
        ("disk λ=-0.6", Problem::new(d.clone(), disk_beta.clone(), -0.6).unwrap()),
        ("disk λ=-1", Problem::new(d.clone(), disk_beta, -1.0).unwrap()),
        ("bolza β=0", Problem::new(b.clone(), BetaClass::zero(&b), -1.0).unwrap()),
        ("bolza basis1", Problem::new(b.clone(), bolza_basis(&b, 1, c(0.3, -0.2)).unwrap(), -1.0).unwrap()),
        ("bolza basis0", Problem::new(b.clone(), bolza_basis(&b, 0, c(0.6, 0.0)).unwrap(), -0.5).unwrap()),
        ("bolza basis2", Problem::new(b.clone(), bolza_basis(&b, 2, c(0.0, 0.4)).unwrap(), -0.25).unwrap()),
    ]
}

fn solver() -> SolverConfig {
    SolverConfig { trace_lanczos_steps: 5, ..SolverConfig::default() }
}

fn variational_consistency() -> Outcome {
    let charts = [("torus", Arc::new(build_flat_torus_patch(16).unwrap())), ("disk", disk(32)), ("bolza", bolza(32))];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, chart) in charts {
        let p = Problem::new(chart.clone(), verify::random_beta(&chart, 3, 0.3).map_err(err)?, -0.7).map_err(err)?;
        let states: Vec<_> = (0..20).map(|i| verify::random_state(&chart, 100 + i, 0.5)).collect();
        let g = verify::check_gradient(&p, &states, 1).map_err(err)?;
        let h = verify::check_hessian(&p, &states, 1).map_err(err)?;
        ok &= g.error < 1e-6 && h.error < 1e-5;
        parts.push(format!("{name}: grad {:.1e}, hess {:.1e}", g.error, h.error));
    }
    ensure(ok, parts.join("; "))
}

fn trivial_solution() -> Outcome {
    let chart = Arc::new(build_hyperbolic_disk_patch(64, 0.5).map_err(err)?);
    let p = Problem::new(chart.clone(), BetaClass::zero(&chart), -1.0).map_err(err)?;
    let sol = newton_solve(&p, SolveState::zero(&chart), &SolverConfig::default()).map_err(err)?;
    let u = sol.state.u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let r = sol.residuals;
    ensure(
        sol.trace.len() <= 6 && u < 1e-8 && r.r_gauss < 1e-8 && r.r_codazzi < 1e-12,
        format!("{} newton steps, |u| {u:.1e}, r_gauss {:.1e}, r_codazzi {:.1e}", sol.trace.len(), r.r_gauss, r.r_codazzi),
    )
}

fn obstruction() -> Outcome {
    let chart = Arc::new(build_flat_torus_patch(16).map_err(err)?);
    let p = Problem::new(chart.clone(), BetaClass::zero(&chart), -1.0).map_err(err)?;
    let mut parts = Vec::new();
    let mut ok = true;
    for precheck in [true, false] {
        let config = SolverConfig { gauss_bonnet_precheck: precheck, ..SolverConfig::default() };
        match newton_solve(&p, SolveState::zero(&chart), &config) {
            Err(CmcError::Diverging { kind, .. }) => {
                ok &= !precheck || kind == DivergenceKind::GaussBonnet;
                ok &= kind != DivergenceKind::NonFinite;
                parts.push(format!("precheck {precheck}: diverging ({kind:?})"));
            }
            other => {
                ok = false;
                parts.push(format!("precheck {precheck}: {:?}", other.map(|s| s.energy.total)));
            }
        }
    }
    ensure(ok, parts.join("; "))
}

fn mms() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    let recipes = [("scalar", MmsRecipe { a: 0.1, b: c(0.0, 0.0) }), ("coupled", MmsRecipe { a: 0.1, b: c(0.05, 0.02) })];
    for (name, recipe) in recipes {
        let errs = verify::mms_convergence(0.5, -1.0, recipe, &[32, 64, 128], &SolverConfig::default()).map_err(err)?;
        let ratios = |f: fn(&verify::MmsError) -> f64| errs.windows(2).map(|w| f(&w[0]) / f(&w[1])).collect::<Vec<_>>();
        let mut ru = ratios(|e| e.u_err);
        if recipe.b != c(0.0, 0.0) {
            ru.extend(ratios(|e| e.b_err));
        }
        ok &= ru.iter().all(|r| (3.5..=4.5).contains(r));
        parts.push(format!("{name} ratios {}", ru.iter().map(|r| format!("{r:.2}")).collect::<Vec<_>>().join(" ")));
    }
    ensure(ok, parts.join("; "))
}

fn positivity() -> Outcome {
    let mut ok = true;
    let mut worst = f64::INFINITY;
    let matrix = test_matrix();
    for (name, p) in &matrix {
        let sol = solve(p, &solver()).map_err(|e| format!("{name}: {e}"))?;
        let est = min_eig_estimate(&sol, 2, 300, 7).map_err(err)?;
        ok &= est.value > 0.0;
        worst = worst.min(est.value);
    }
    let chart = Arc::new(build_hyperbolic_disk_patch(16, 0.5).map_err(err)?);
    let p = Problem::new(chart.clone(), gaussian_beta(&chart, c(0.5, 0.25)), -0.6).map_err(err)?;
    let sol = newton_solve(&p, SolveState::zero(&chart), &SolverConfig::default()).map_err(err)?;
    let dense = dense_min_eig(&p, &sol.state).map_err(err)?;
    let est = min_eig_estimate(&sol, 1, 3 * chart.len(), 7).map_err(err)?;
    let agree = (dense - est.value).abs();
    ok &= agree < 1e-6;
    ensure(
        ok,
        format!("{} problems, smallest min_eig {worst:.4}; n=16 dense {dense:.8} vs lanczos {:.8} ({agree:.1e})", matrix.len(), est.value),
    )
}

fn uniqueness() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    let matrix = test_matrix();
    let mut worst = 0.0f64;
    for (name, p) in &matrix {
        let reference = solve(p, &solver()).map_err(|e| format!("{name}: {e}"))?;
        let mut spread = 0.0f64;
        for seed in 0..5 {
            let init = verify::random_state(&p.chart, 500 + seed, 0.5);
            let sol = newton_solve(p, init, &solver()).map_err(|e| format!("{name} seed {seed}: {e}"))?;
            spread = spread.max(sup_diff(&sol.state.u, &reference.state.u));
        }
        worst = worst.max(spread);
    }
    ok &= worst < 1e-7;
    parts.push(format!("{} problems x 5 starts: u spread {worst:.1e}", matrix.len()));
    let d = disk(32);
    let p = Problem::new(d.clone(), gaussian_beta(&d, c(0.5, 0.25)), -0.6).map_err(err)?;
    let radius = 0.45;
    let psi = move |z: Complex64| c(0.2, 0.1) * (1.0 + z) * cmc_core::fields::bump(z.norm() / radius);
    let g = verify::gauge_invariance_audit(&p, &psi, &solver()).map_err(err)?;
    ok &= g.error < 1e-7;
    parts.push(format!("gauge disk {:.1e}", g.error));
    let b = bolza(32);
    let p = Problem::new(b.clone(), bolza_basis(&b, 1, c(0.3, -0.2)).map_err(err)?, -1.0).map_err(err)?;
    let inner = 0.95 * (0.5 * b.octagon.as_ref().unwrap().inradius).tanh();
    let psi = move |z: Complex64| c(0.2, 0.1) * (1.0 + z) * cmc_core::fields::bump(z.norm() / inner);
    let g = verify::gauge_invariance_audit(&p, &psi, &solver()).map_err(err)?;
    ok &= g.error < 1e-7;
    parts.push(format!("gauge bolza {:.1e}", g.error));
    ensure(ok, parts.join("; "))
}

fn continuation() -> Outcome {
    let matrix = test_matrix();
    let (name, p) = &matrix[5];
    let run = |steps: usize| continuation_solve(p, &SolverConfig { continuation_steps: steps, ..solver() });
    let (a, ta) = run(10).map_err(|e| format!("{name}: {e}"))?;
    let (b, tb) = run(20).map_err(|e| format!("{name}: {e}"))?;
    let reached = [&ta, &tb].iter().all(|t| t.steps.last().map(|s| s.t) == Some(1.0));
    let du = sup_diff(&a.state.u, &b.state.u);
    let df = sup_diff_c(&a.state.f, &b.state.f);
    ensure(reached && du < 1e-8 && df < 1e-8, format!("{name}: reached t=1 {reached}, 10 vs 20 steps: u {du:.1e}, F {df:.1e}"))
}

fn gauss_bonnet() -> Outcome {
    let chart = bolza(48);
    let mut ok = true;
    let mut parts = Vec::new();
    for beta in [BetaClass::zero(&chart), bolza_basis(&chart, 1, c(0.3, -0.2)).map_err(err)?] {
        let label = if beta.is_zero() { "β=0" } else { "β≠0" };
        let sol = solve(&Problem::new(chart.clone(), beta, -1.0).map_err(err)?, &solver())?;
        let mu: Vec<f64> = chart.weights.iter().zip(&sol.state.u).map(|(w, u)| w * (2.0 * u).exp()).collect();
        let total: f64 = mu.iter().zip(&sol.curvature.identity).map(|(m, k)| m * k).sum();
        let rel = (total + 4.0 * PI).abs() / (4.0 * PI);
        ok &= rel < 1e-2;
        parts.push(format!("{label}: ∫K dμ_h = {total:.6} (rel {rel:.1e})"));
    }
    ensure(ok, parts.join("; "))
}

fn constrained() -> Outcome {
    let chart = bolza(48);
    let p = Problem::new(chart.clone(), BetaClass::zero(&chart), -1.0).map_err(err)?;
    let config = SolverConfig::default();
    let (s1, l1) = constrained_solve(&p, 4.0 * PI, &config).map_err(err)?;
    let (s2, l2) = constrained_solve(&p, 8.0 * PI, &config).map_err(err)?;
    let u_dev = s2.state.u.iter().map(|u| (u - 0.5 * 2f64.ln()).abs()).fold(0.0, f64::max);
    let mut cross = 0.0f64;
    for (s, l) in [(&s1, l1), (&s2, l2)] {
        let un = newton_solve(&p.with_lambda(l), SolveState::zero(&chart), &config).map_err(err)?;
        cross = cross.max(sup_diff(&un.state.u, &s.state.u));
    }
    ensure(
        (l1 + 1.0).abs() <= 5e-3 && (l2 + 0.5).abs() <= 5e-3 && u_dev <= 1e-4 && cross < 1e-7,
        format!("T=4π: λ {l1:.6}; T=8π: λ {l2:.6}, |u − ½log2| {u_dev:.1e}; unconstrained at λ: {cross:.1e}"),
    )
}

fn run_cli(out: &Path, args: &[&str]) -> Result<i32, String> {
    let status = Command::new(env!("CARGO_BIN_EXE_cmc"))
        .args(args)
        .env("CMC_OUT_DIR", out)
        .stdout(std::process::Stdio::null())
        .stderr(std::process::Stdio::null())
        .status()
        .map_err(|e| e.to_string())?;
    Ok(status.code().unwrap_or(-1))
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .map(|rd| rd.flatten().map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())).collect())
        .unwrap_or_default();
    v.sort();
    v
}

fn determinism() -> Outcome {
    let commands: [&[&str]; 5] = [
        &["solve", "--n", "32", "--beta", "const:0.3+0.1i", "--seed", "4"],
        &["solve", "--backend", "bolza", "--n", "32", "--c", "0.5", "--beta", "basis:0:0.1+0i", "--seed", "4"],
        &["solve-constrained", "--backend", "bolza", "--n", "32", "--target", "20", "--seed", "4"],
        &["sweep", "--axis", "c", "--from", "0", "--to", "0.9", "--steps", "4", "--n", "32", "--beta", "const:0.2+0i"],
        &["check", "hessian", "--n", "32", "--seed", "4"],
    ];
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut compared = 0;
    for (i, args) in commands.iter().enumerate() {
        let (a, b) = (tmp.path().join(format!("{i}a")), tmp.path().join(format!("{i}b")));
        let (ca, cb) = (run_cli(&a, args)?, run_cli(&b, args)?);
        let (fa, fb) = (files(&a), files(&b));
        if ca != cb || fa.is_empty() || fa != fb {
            return Err(format!("`cmc {}` differs between runs (exit {ca} vs {cb})", args.join(" ")));
        }
        compared += fa.len();
    }
    Ok(format!("{} commands, {compared} artifacts bit-identical", commands.len()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("variational consistency", variational_consistency),
        ("trivial solution", trivial_solution),
        ("obstruction detection", obstruction),
        ("MMS convergence", mms),
        ("Hessian positivity", positivity),
        ("uniqueness and gauge", uniqueness),
        ("continuation robustness", continuation),
        ("Gauss-Bonnet", gauss_bonnet),
        ("constrained solve", constrained),
        ("determinism", determinism),
    ];
    let start = Instant::now();
    let results: Vec<(Outcome, f64)> = std::thread::scope(|s| {
        let handles: Vec<_> = criteria
            .iter()
            .map(|(_, f)| {
                s.spawn(move || {
                    let t = Instant::now();
                    let r = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
                    (r, t.elapsed().as_secs_f64())
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut failures = 0;
    for (i, ((name, _), (r, secs))) in criteria.iter().zip(&results).enumerate() {
        let (tag, text) = match r {
            Ok(t) => ("PASS", t),
            Err(t) => {
                failures += 1;
                ("FAIL", t)
            }
        };
        println!("{tag} {:>2} {name:<24} {text} [{secs:.1}s]", i + 1);
    }
    println!("acceptance: {}/{} passed in {:.1}s", criteria.len() - failures, criteria.len(), start.elapsed().as_secs_f64());
    if failures > 0 {
        std::process::exit(1);
    }
}

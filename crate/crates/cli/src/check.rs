use clap::ValueEnum;
use cmc_core::donaldson::{Problem, SolveState};
use cmc_core::geometry::build_hyperbolic_disk_patch;
use cmc_core::verify::{self, CheckReport, Manifest, MmsRecipe};
use cmc_core::Backend;
use num_complex::Complex64;

use crate::commands::{build_chart, build_problem, gauge_field, solve_problem};
use crate::config::{BackendKind, GaugeSpec, ProblemConfig};
use crate::format::to_json;
use crate::{output_dir, write_file, CliError, EXIT_AUDIT, EXIT_OK};

/// Audit group run by `cmc check`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Which {
    Gradient,
    Hessian,
    Mms,
    Gauge,
    GaussBonnet,
    Bochner,
    All,
}

const RANDOM_STATES: u64 = 20;
const RANDOM_AMPLITUDE: f64 = 0.5;
const MMS_RATIO: f64 = 4.0;
const MMS_RATIO_TOL: f64 = 0.5;

fn mms_recipe() -> MmsRecipe {
    MmsRecipe { a: 0.1, b: Complex64::new(0.05, 0.02) }
}

fn random_states(cfg: &ProblemConfig, problem: &Problem) -> Vec<SolveState> {
    (0..RANDOM_STATES).map(|i| verify::random_state(&problem.chart, cfg.seed + i, RANDOM_AMPLITUDE)).collect()
}

fn failed(name: &str, oracle: &str, tolerance: f64, e: impl std::fmt::Display) -> CheckReport {
    let mut r = CheckReport::new(name, f64::INFINITY, tolerance, oracle);
    r.oracle = format!("{oracle}; failed: {e}");
    r
}

fn gradient(cfg: &ProblemConfig, m: &mut Manifest) -> Result<(), CliError> {
    let chart = build_chart(cfg)?;
    let problem = build_problem(cfg, &chart)?;
    m.push(verify::check_gradient(&problem, &random_states(cfg, &problem), cfg.seed)?);
    Ok(())
}

fn hessian(cfg: &ProblemConfig, m: &mut Manifest) -> Result<(), CliError> {
    let chart = build_chart(cfg)?;
    let problem = build_problem(cfg, &chart)?;
    let states = random_states(cfg, &problem);
    m.push(verify::check_hessian(&problem, &states, cfg.seed)?);
    m.push(verify::check_symmetry(&problem, &states, cfg.seed)?);
    if chart.backend == Backend::TorusPatch {
        return Ok(());
    }
    let problem = if problem.beta.is_zero() {
        let beta = verify::random_beta(&chart, cfg.seed, 0.3)?;
        Problem::new(chart.clone(), beta, problem.lambda)?.with_mutant(cfg.mutant).normalized()
    } else {
        problem
    };
    match solve_problem(&problem, &cfg.solver) {
        Ok((sol, _)) => {
            m.push(verify::hessian_formula_audit(&sol, 4, cfg.seed, verify::HESSIAN_FACTOR_TOL)?);
            m.push(verify::hessian_lower_bound_audit(&sol, 10, cfg.seed)?);
            m.push(verify::positivity_audit(&sol, 200, cfg.lanczos_steps, cfg.seed)?);
        }
        Err(e) => {
            m.push(failed("hessian-factor", "solve for the second-variation audits", verify::HESSIAN_FACTOR_TOL, &e.message));
        }
    }
    Ok(())
}

fn mms(cfg: &ProblemConfig, m: &mut Manifest) -> Result<(), CliError> {
    if cfg.backend != BackendKind::DiskPatch {
        return Err(CliError::config("check mms needs backend disk-patch"));
    }
    build_hyperbolic_disk_patch(cfg.n / 2, cfg.r0)?;
    let ns = [cfg.n / 2, cfg.n, 2 * cfg.n];
    let lambda = cfg.lambda();
    if lambda >= 0.0 {
        return Err(CliError::config(format!("check mms needs lambda = k + c^2 < 0, got {lambda}")));
    }
    let errs = match verify::mms_convergence(cfg.r0, lambda, mms_recipe(), &ns, &cfg.solver) {
        Ok(errs) => errs,
        Err(e) => {
            m.push(failed("mms-u", "manufactured solution", MMS_RATIO_TOL, &e));
            m.push(failed("mms-b", "manufactured solution", MMS_RATIO_TOL, &e));
            return Ok(());
        }
    };
    let field = |name: &str, f: &dyn Fn(&verify::MmsError) -> f64| {
        let ratios: Vec<f64> = errs.windows(2).map(|w| f(&w[0]) / f(&w[1])).collect();
        let error = ratios.iter().map(|r| (r - MMS_RATIO).abs()).fold(0.0, f64::max);
        let mut r = CheckReport::new(name, error, MMS_RATIO_TOL, "error ratio under halving h against 4 (second order)");
        for (e, n) in errs.iter().zip(ns) {
            r = r.detail(&format!("err_n{n}"), f(e));
        }
        for (i, q) in ratios.iter().enumerate() {
            r = r.detail(&format!("ratio_{i}"), *q);
        }
        r
    };
    m.push(field("mms-u", &|e| e.u_err));
    m.push(field("mms-b", &|e| e.b_err));
    Ok(())
}

fn gauge(cfg: &ProblemConfig, m: &mut Manifest) -> Result<(), CliError> {
    let chart = build_chart(cfg)?;
    let w = match cfg.gauge {
        GaugeSpec::Bump(w) => w,
        GaugeSpec::None => Complex64::new(0.2, 0.1),
    };
    let base = ProblemConfig { gauge: GaugeSpec::None, ..cfg.clone() };
    let problem = build_problem(&base, &chart)?;
    let psi0 = gauge_field(&chart, w);
    match verify::gauge_invariance_audit(&problem, &psi0, &cfg.solver) {
        Ok(r) => m.push(r),
        Err(e) => {
            let e = CliError::from(e);
            if e.code != crate::EXIT_DIVERGED {
                return Err(e);
            }
            m.push(failed("gauge", "gauge-shifted class", verify::GAUGE_TOL, &e.message));
        }
    }
    Ok(())
}

fn gauss_bonnet(cfg: &ProblemConfig, m: &mut Manifest) -> Result<(), CliError> {
    if cfg.backend != BackendKind::Bolza {
        return Err(CliError::config("check gauss-bonnet needs a closed genus-2 surface (backend bolza)"));
    }
    let chart = build_chart(cfg)?;
    let problem = build_problem(cfg, &chart)?;
    match solve_problem(&problem, &cfg.solver) {
        Ok((sol, _)) => {
            for r in verify::gauss_bonnet_audit(&sol)? {
                m.push(r);
            }
        }
        Err(e) => m.push(failed("gauss-bonnet", "solve for the curvature integral", verify::GAUSS_BONNET_TOL, &e.message)),
    }
    Ok(())
}

fn bochner(cfg: &ProblemConfig, m: &mut Manifest) -> Result<(), CliError> {
    if cfg.backend == BackendKind::DiskPatch {
        return Err(CliError::config("check bochner needs a closed chart (backend torus-patch or bolza)"));
    }
    let chart = build_chart(cfg)?;
    m.push(verify::bochner_identity_audit(&chart, 3, cfg.seed)?);
    Ok(())
}

fn groups(which: Which, backend: BackendKind) -> Vec<Which> {
    if which != Which::All {
        return vec![which];
    }
    match backend {
        BackendKind::DiskPatch => vec![Which::Gradient, Which::Hessian, Which::Gauge, Which::Mms],
        BackendKind::Bolza => vec![Which::Gradient, Which::Hessian, Which::Gauge, Which::GaussBonnet, Which::Bochner],
        BackendKind::TorusPatch => vec![Which::Gradient, Which::Hessian, Which::Bochner],
    }
}

/// Runs the selected audits, writes `manifest.json` and prints one line per
/// check. Exit code 5 when any check fails.
pub(crate) fn check(cfg: &ProblemConfig, which: Which) -> Result<i32, CliError> {
    let mut manifest = Manifest::new();
    for g in groups(which, cfg.backend) {
        match g {
            Which::Gradient => gradient(cfg, &mut manifest)?,
            Which::Hessian => hessian(cfg, &mut manifest)?,
            Which::Mms => mms(cfg, &mut manifest)?,
            Which::Gauge => gauge(cfg, &mut manifest)?,
            Which::GaussBonnet => gauss_bonnet(cfg, &mut manifest)?,
            Which::Bochner => bochner(cfg, &mut manifest)?,
            Which::All => unreachable!(),
        }
    }
    let dir = output_dir(cfg);
    write_file(&dir, "manifest.json", &to_json(&manifest))?;
    for r in &manifest.checks {
        crate::out!("{} {:<20} error {:.3e} tolerance {:.3e}", if r.pass { "PASS" } else { "FAIL" }, r.name, r.error, r.tolerance);
    }
    crate::out!("manifest    {}", dir.join("manifest.json").display());
    Ok(if manifest.pass { EXIT_OK } else { EXIT_AUDIT })
}

use std::path::Path;
use std::sync::Arc;

use cmc_core::donaldson::{EnergyReport, IterationRecord, Params, Problem, Residuals, Solution, SolveState};
use cmc_core::fields::{bolza_basis, bump, dump_field, load_field, BetaClass, Weight, WeightedField};
use cmc_core::geometry::{build_bolza_octagon, build_flat_torus_patch, build_hyperbolic_disk_patch, Chart};
use cmc_core::solver::{constrained_solve, continuation_solve, min_eig_estimate, newton_solve, ContinuationTrace, SolverConfig};
use cmc_core::verify;
use num_complex::Complex64;
use serde::Serialize;

use crate::config::{BackendKind, BetaSpec, GaugeSpec, ProblemConfig};
use crate::format::{fmt_f64, to_json};
use crate::{output_dir, write_file, Axis, CliError, EXIT_CODES, EXIT_DIVERGED, EXIT_OK, EXIT_RESIDUAL};

pub(crate) fn build_chart(cfg: &ProblemConfig) -> Result<Arc<Chart>, CliError> {
    let chart = match cfg.backend {
        BackendKind::TorusPatch => build_flat_torus_patch(cfg.n)?,
        BackendKind::DiskPatch => build_hyperbolic_disk_patch(cfg.n, cfg.r0)?,
        BackendKind::Bolza => build_bolza_octagon(cfg.n)?,
    };
    Ok(Arc::new(chart))
}

/// Compactly supported `ψ₀(z) = w (1 + z) bump(|z − z₀| / R)` placed away
/// from the chart's boundary or side pairings.
pub(crate) fn gauge_field(chart: &Chart, w: Complex64) -> impl Fn(Complex64) -> Complex64 {
    let (centre, radius) = match &chart.octagon {
        Some(oct) => (Complex64::new(0.0, 0.0), 0.95 * (0.5 * oct.inradius).tanh()),
        None if chart.backend.is_closed() => (Complex64::new(0.5, 0.5), 0.45),
        None => {
            let edge = (0..chart.len()).filter(|&j| !chart.is_free(j)).map(|j| chart.nodes[j].norm()).fold(f64::INFINITY, f64::min);
            (Complex64::new(0.0, 0.0), 0.9 * edge)
        }
    };
    move |z: Complex64| w * (1.0 + z) * bump((z - centre).norm() / radius)
}

pub(crate) fn build_beta(cfg: &ProblemConfig, chart: &Chart) -> Result<BetaClass, CliError> {
    let beta = match &cfg.beta {
        BetaSpec::Zero => BetaClass::zero(chart),
        BetaSpec::Constant(b0) => {
            let values = chart.rho.iter().map(|r| b0 * r * r).collect();
            BetaClass::new(WeightedField::from_values(chart, "b", Weight::BETA, values)?, "const")?
        }
        BetaSpec::File(path) => {
            let bytes = std::fs::read(path).map_err(|e| CliError::config(format!("key 'beta': {}: {e}", path.display())))?;
            let (field, n) = load_field(&bytes).map_err(|e| CliError::config(format!("key 'beta': {}: {e}", path.display())))?;
            if n != chart.n || field.len() != chart.len() {
                return Err(CliError::config(format!(
                    "key 'beta': {} was dumped on a chart with n = {n} ({} nodes), not n = {} ({} nodes)",
                    path.display(),
                    field.len(),
                    chart.n,
                    chart.len()
                )));
            }
            if let Some(j) = field.values.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
                return Err(CliError::config(format!("key 'beta': {} has a non-finite value at node {j}", path.display())));
            }
            let field = WeightedField::from_values(chart, &field.name, field.weight, field.values)?;
            BetaClass::new(field, &format!("file:{}", path.display()))?
        }
        BetaSpec::Basis(k, coeff) => bolza_basis(chart, *k, *coeff)?,
    };
    Ok(match cfg.gauge {
        GaugeSpec::None => beta,
        GaugeSpec::Bump(w) => beta.with_gauge(WeightedField::from_fn(chart, "psi0", Weight::VECTOR, gauge_field(chart, w)))?,
    })
}

/// Validated `λ < 0` problem for the unconstrained commands.
pub(crate) fn build_problem(cfg: &ProblemConfig, chart: &Arc<Chart>) -> Result<Problem, CliError> {
    let params = Params::new(cfg.k, cfg.c).map_err(|e| CliError::config(e.to_string()))?;
    params.require_convex().map_err(|e| CliError::config(e.to_string()))?;
    let beta = build_beta(cfg, chart)?;
    Ok(Problem::from_params(chart.clone(), beta, &params)?.with_mutant(cfg.mutant).normalized())
}

/// Continuation when the class is nonzero, a single Newton solve otherwise.
pub(crate) fn solve_problem(problem: &Problem, solver: &SolverConfig) -> Result<(Solution, Option<ContinuationTrace>), CliError> {
    if problem.beta.is_zero() {
        Ok((newton_solve(problem, SolveState::zero(&problem.chart), solver)?, None))
    } else {
        let (sol, trace) = continuation_solve(problem, solver)?;
        Ok((sol, Some(trace)))
    }
}

#[derive(Serialize)]
struct MinEig {
    value: f64,
    spread: f64,
    residual: f64,
    steps: usize,
}

#[derive(Serialize)]
struct Extremes {
    min: f64,
    max: f64,
}

fn extremes(v: impl Iterator<Item = f64>) -> Extremes {
    let (min, max) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    Extremes { min, max }
}

#[derive(Serialize)]
struct Thresholds {
    r_gauss: f64,
    r_codazzi: f64,
}

#[derive(Serialize)]
struct SolveReport {
    command: &'static str,
    config: String,
    backend: &'static str,
    n: usize,
    nodes: usize,
    area: f64,
    lambda: f64,
    target: Option<f64>,
    status: &'static str,
    energy: EnergyReport,
    residuals: Residuals,
    thresholds: Thresholds,
    /// Total area of `h`.
    volume: f64,
    u: Extremes,
    /// Curvature of `h` from the Gauss equation.
    k_h: Extremes,
    min_eig: MinEig,
    newton: Vec<IterationRecord>,
    continuation: Option<ContinuationTrace>,
    exit_code: i32,
}

#[derive(Serialize)]
struct FailureReport {
    command: &'static str,
    config: String,
    status: &'static str,
    error: String,
    exit_code: i32,
}

fn within_thresholds(cfg: &ProblemConfig, r: &Residuals) -> bool {
    r.r_gauss <= cfg.max_r_gauss && r.r_codazzi <= cfg.max_r_codazzi
}

fn volume(sol: &Solution) -> f64 {
    sol.chart().weights.iter().zip(&sol.state.u).map(|(w, u)| w * (2.0 * u).exp()).sum()
}

fn write_fields(dir: &Path, sol: &Solution) -> Result<(), CliError> {
    let chart = sol.chart();
    let u = WeightedField::real(chart, "u", &sol.state.u)?;
    let rho_h = WeightedField::real(chart, "rho_h", &sol.rho_h)?;
    let fields =
        [("u.fld", &u), ("f.fld", &sol.state.f_field(chart)), ("b.fld", &sol.b_total), ("alpha.fld", &sol.alpha), ("rho_h.fld", &rho_h)];
    for (name, field) in fields {
        write_file(dir, name, &dump_field(field, chart.n))?;
    }
    let mut csv = String::from("x,y,u,f_re,f_im,b_re,b_im,alpha_re,alpha_im,rho_h,k_h\n");
    for j in 0..chart.len() {
        let (z, f, b, a) = (chart.nodes[j], sol.state.f[j], sol.b_total.values[j], sol.alpha.values[j]);
        let row = [z.re, z.im, sol.state.u[j], f.re, f.im, b.re, b.im, a.re, a.im, sol.rho_h[j], sol.curvature.gauss[j]];
        csv.push_str(&row.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(","));
        csv.push('\n');
    }
    write_file(dir, "solution.csv", csv.as_bytes())
}

fn finish_solve(
    cfg: &ProblemConfig,
    command: &'static str,
    sol: &Solution,
    continuation: Option<ContinuationTrace>,
    target: Option<f64>,
) -> Result<i32, CliError> {
    let dir = output_dir(cfg);
    let eig = min_eig_estimate(sol, 2, cfg.lanczos_steps, cfg.seed)?;
    let ok = within_thresholds(cfg, &sol.residuals);
    let exit_code = if ok { EXIT_OK } else { EXIT_RESIDUAL };
    let report = SolveReport {
        command,
        config: cfg.canonical(),
        backend: cfg.backend.as_str(),
        n: cfg.n,
        nodes: sol.chart().len(),
        area: sol.chart().area(),
        lambda: sol.lambda,
        target,
        status: if ok { "converged" } else { "residual-threshold" },
        energy: sol.energy,
        residuals: sol.residuals,
        thresholds: Thresholds { r_gauss: cfg.max_r_gauss, r_codazzi: cfg.max_r_codazzi },
        volume: volume(sol),
        u: extremes(sol.state.u.iter().copied()),
        k_h: extremes(sol.curvature.gauss.iter().copied()),
        min_eig: MinEig { value: eig.value, spread: eig.spread, residual: eig.residual, steps: eig.steps },
        newton: sol.trace.clone(),
        continuation,
        exit_code,
    };
    write_fields(&dir, sol)?;
    write_file(&dir, "report.json", &to_json(&report))?;
    let r = &sol.residuals;
    crate::out!("status      {}", report.status);
    crate::out!("lambda      {}", fmt_f64(sol.lambda));
    crate::out!("newton      {} steps", sol.trace.len());
    crate::out!("energy      {}", fmt_f64(sol.energy.total));
    crate::out!("r_gauss     {:.3e} (fd {:.3e}, threshold {:.1e})", r.r_gauss, r.r_gauss_fd, cfg.max_r_gauss);
    crate::out!("r_codazzi   {:.3e} (fd {:.3e}, threshold {:.1e})", r.r_codazzi, r.r_codazzi_fd, cfg.max_r_codazzi);
    crate::out!("min_eig     {:.6e} (residual {:.1e})", eig.value, eig.residual);
    crate::out!("output      {}", dir.display());
    Ok(exit_code)
}

fn record_failure(cfg: &ProblemConfig, command: &'static str, e: CliError) -> CliError {
    let report = FailureReport { command, config: cfg.canonical(), status: "failed", error: e.message.clone(), exit_code: e.code };
    if e.code == EXIT_DIVERGED {
        if let Err(io) = write_file(&output_dir(cfg), "report.json", &to_json(&report)) {
            return io;
        }
    }
    e
}

pub(crate) fn solve(cfg: &ProblemConfig) -> Result<i32, CliError> {
    let chart = build_chart(cfg)?;
    let problem = build_problem(cfg, &chart)?;
    match solve_problem(&problem, &cfg.solver) {
        Ok((sol, trace)) => finish_solve(cfg, "solve", &sol, trace, None),
        Err(e) => Err(record_failure(cfg, "solve", e)),
    }
}

pub(crate) fn solve_constrained(cfg: &ProblemConfig) -> Result<i32, CliError> {
    let target = cfg.target.ok_or_else(|| CliError::config("solve-constrained needs key 'target' (total area T > 0)"))?;
    let chart = build_chart(cfg)?;
    let beta = build_beta(cfg, &chart)?;
    // λ is the multiplier of the area constraint; the value given here is not used
    let problem = Problem::new(chart, beta, -1.0)?.with_mutant(cfg.mutant).normalized();
    match constrained_solve(&problem, target, &cfg.solver) {
        Ok((sol, _)) => finish_solve(cfg, "solve-constrained", &sol, None, Some(target)),
        Err(e) => Err(record_failure(cfg, "solve-constrained", e.into())),
    }
}

struct Row {
    value: f64,
    lambda: f64,
    outcome: Result<RowData, String>,
}

struct RowData {
    newton: usize,
    energy: f64,
    coupling: f64,
    r_gauss: f64,
    r_codazzi: f64,
    min_eig: f64,
    k_h: Extremes,
    u: Extremes,
    within: bool,
}

pub(crate) fn sweep(cfg: &ProblemConfig, axis: Axis, from: f64, to: f64, steps: usize) -> Result<i32, CliError> {
    if steps < 2 || !from.is_finite() || !to.is_finite() {
        return Err(CliError::config("sweep needs finite --from/--to and --steps >= 2"));
    }
    let values: Vec<f64> = (0..steps).map(|i| from + (to - from) * i as f64 / (steps - 1) as f64).collect();
    let chart = build_chart(cfg)?;
    let base = build_problem(cfg, &chart)?;
    let lambdas: Vec<f64> = match axis {
        Axis::C => values.iter().map(|c| cfg.k as f64 + c * c).collect(),
        Axis::BetaScale => vec![base.lambda; steps],
    };
    if let Some((c, l)) = values.iter().zip(&lambdas).find(|(_, l)| **l >= 0.0) {
        return Err(CliError::config(format!(
            "sweep crosses lambda >= 0 (c = {c} gives lambda = {l}); the functional is convex only for lambda < 0"
        )));
    }
    let mut state = SolveState::zero(&chart);
    let mut rows = Vec::new();
    for (&value, &lambda) in values.iter().zip(&lambdas) {
        let problem = match axis {
            Axis::C => Ok(base.with_lambda(lambda).normalized()),
            Axis::BetaScale => base.with_beta_scale(value).map(Problem::normalized),
        };
        let outcome = problem.and_then(|p| newton_solve(&p, state.clone(), &cfg.solver)).and_then(|sol| {
            let eig = min_eig_estimate(&sol, 1, cfg.lanczos_steps, cfg.seed)?;
            Ok((sol, eig.value))
        });
        let outcome = match outcome {
            Ok((sol, min_eig)) => {
                state = sol.state.clone();
                Ok(RowData {
                    newton: sol.trace.len(),
                    energy: sol.energy.total,
                    coupling: sol.energy.coupling,
                    r_gauss: sol.residuals.r_gauss,
                    r_codazzi: sol.residuals.r_codazzi,
                    min_eig,
                    k_h: extremes(sol.curvature.gauss.iter().copied()),
                    u: extremes(sol.state.u.iter().copied()),
                    within: within_thresholds(cfg, &sol.residuals),
                })
            }
            Err(e) => Err(e.to_string()),
        };
        rows.push(Row { value, lambda, outcome });
    }
    let name = match axis {
        Axis::C => "c",
        Axis::BetaScale => "beta_scale",
    };
    let mut csv =
        format!("index,{name},lambda,status,newton,energy,coupling,r_gauss,r_codazzi,min_eig,k_h_min,k_h_max,u_min,u_max,error\n");
    let mut code = EXIT_OK;
    for (i, row) in rows.iter().enumerate() {
        let head = format!("{i},{},{}", fmt_f64(row.value), fmt_f64(row.lambda));
        match &row.outcome {
            Ok(d) => {
                let status = if d.within { "converged" } else { "residual-threshold" };
                if !d.within && code == EXIT_OK {
                    code = EXIT_RESIDUAL;
                }
                let nums = [d.energy, d.coupling, d.r_gauss, d.r_codazzi, d.min_eig, d.k_h.min, d.k_h.max, d.u.min, d.u.max];
                let nums: Vec<String> = nums.iter().map(|v| fmt_f64(*v)).collect();
                csv.push_str(&format!("{head},{status},{},{},\n", d.newton, nums.join(",")));
            }
            Err(e) => {
                code = EXIT_DIVERGED;
                csv.push_str(&format!("{head},failed,,,,,,,,,,,,\"{}\"\n", e.replace('"', "'")));
            }
        }
    }
    let dir = output_dir(cfg);
    write_file(&dir, "sweep.csv", csv.as_bytes())?;
    crate::out!("{}", csv.trim_end());
    Ok(code)
}

#[derive(Serialize)]
struct Info {
    version: &'static str,
    config_defaults: String,
    solver_defaults: SolverConfig,
    backends: [&'static str; 3],
    beta_specs: [&'static str; 4],
    gauge_specs: [&'static str; 2],
    exit_codes: Vec<(i32, &'static str)>,
    tolerances: Vec<(&'static str, f64)>,
    output_dir_env: &'static str,
}

pub(crate) fn info() -> Result<i32, CliError> {
    let info = Info {
        version: env!("CARGO_PKG_VERSION"),
        config_defaults: ProblemConfig::default().canonical(),
        solver_defaults: SolverConfig::default(),
        backends: ["torus-patch", "disk-patch", "bolza"],
        beta_specs: ["zero", "const:<re>+<im>i", "file:<path>", "basis:<k>:<re>+<im>i"],
        gauge_specs: ["none", "bump:<re>+<im>i"],
        exit_codes: EXIT_CODES.to_vec(),
        tolerances: vec![
            ("gradient", verify::GRADIENT_TOL),
            ("hessian", verify::HESSIAN_TOL),
            ("hessian_symmetry", verify::SYMMETRY_TOL),
            ("hessian_factor", verify::HESSIAN_FACTOR_TOL),
            ("gauge", verify::GAUGE_TOL),
            ("gauss_bonnet", verify::GAUSS_BONNET_TOL),
            ("curvature_routes", verify::ROUTES_TOL),
            ("bochner_flat", verify::BOCHNER_FLAT_TOL),
            ("bochner_constant", verify::BOCHNER_CONSTANT),
        ],
        output_dir_env: crate::OUT_DIR_ENV,
    };
    crate::out!("{}", String::from_utf8(to_json(&info)).expect("json is utf-8").trim_end());
    Ok(EXIT_OK)
}

//! Newton–Krylov minimisation of the functional, continuation in the class
//! representative, the volume-constrained variant, and Hessian spectrum
//! probes.

mod cg;
mod constrained;
mod lanczos;

use serde::{Deserialize, Serialize};

use crate::donaldson::{assemble_solution, functional, functional_change, gradient, IterationRecord, Problem, Solution, SolveState};
use crate::error::{CmcError, DivergenceKind, Result};

pub use cg::{solve_newton_system, CgOutcome};
pub use constrained::constrained_solve;
pub use lanczos::{dense_min_eig, hessian_matrix, min_eig_estimate, MinEigEstimate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Gradient norm target relative to the initial gradient norm.
    pub tol_grad: f64,
    /// Gradient norm accepted outright, relative to `sqrt(area)`.
    pub abs_tol_grad: f64,
    /// Largest final Newton update (sup norm) for convergence.
    pub tol_step: f64,
    pub max_newton: usize,
    pub cg_tol: f64,
    pub cg_max: usize,
    pub armijo: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
    pub continuation_steps: usize,
    /// Smallest continuation increment before giving up.
    pub min_continuation_step: f64,
    /// Refuse closed charts with `∫K dμ ≥ 0` when `λ < 0` before iterating.
    pub gauss_bonnet_precheck: bool,
    /// Lanczos steps for the per-step spectrum probe in continuation traces.
    pub trace_lanczos_steps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol_grad: 1e-10,
            abs_tol_grad: 1e-13,
            tol_step: 1e-7,
            max_newton: 50,
            cg_tol: 1e-8,
            cg_max: 2000,
            armijo: 1e-4,
            backtrack: 0.5,
            max_backtracks: 30,
            continuation_steps: 10,
            min_continuation_step: 1.0 / 4096.0,
            gauss_bonnet_precheck: true,
            trace_lanczos_steps: 200,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tol_grad", self.tol_grad),
            ("abs_tol_grad", self.abs_tol_grad),
            ("tol_step", self.tol_step),
            ("cg_tol", self.cg_tol),
            ("armijo", self.armijo),
            ("backtrack", self.backtrack),
            ("min_continuation_step", self.min_continuation_step),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CmcError::InvalidParams(format!("solver setting {name} = {v} must be positive")));
            }
        }
        if self.backtrack >= 1.0 || self.armijo >= 0.5 {
            return Err(CmcError::InvalidParams("line search needs backtrack < 1 and armijo < 0.5".into()));
        }
        if self.max_newton == 0 || self.cg_max == 0 || self.continuation_steps == 0 || self.max_backtracks == 0 {
            return Err(CmcError::InvalidParams("iteration limits must be positive".into()));
        }
        Ok(())
    }
}

fn gauss_bonnet_precheck(problem: &Problem) -> Result<()> {
    let chart = &problem.chart;
    if !chart.backend.is_closed() || problem.lambda >= 0.0 {
        return Ok(());
    }
    let total: f64 = chart.ext_weights.iter().zip(&chart.ext_curvature).map(|(w, k)| w * k).sum();
    if total >= -1e-12 * chart.area() {
        return Err(CmcError::Diverging {
            kind: DivergenceKind::GaussBonnet,
            detail: format!(
                "closed chart has ∫K dμ = {total:.3e} ≥ 0 but lambda = {} < 0: Gauss–Bonnet forbids a solution, \
                 iterates would collapse the volume (u → -∞)",
                problem.lambda
            ),
        });
    }
    Ok(())
}

/// Relative volume below which an iterate on a closed chart is treated as
/// collapsing.
pub const VOLUME_COLLAPSE: f64 = 1e-8;

/// Multiple of machine epsilon (relative to the functional's term sizes)
/// below which a predicted decrease is indistinguishable from rounding.
pub const ROUNDING_SLOPE: f64 = 64.0;

/// Newton's method with CG inner solves and Armijo backtracking.
pub fn newton_solve(problem: &Problem, init: SolveState, config: &SolverConfig) -> Result<Solution> {
    config.validate()?;
    if config.gauss_bonnet_precheck {
        gauss_bonnet_precheck(problem)?;
    }
    let chart = &problem.chart;
    let w = &chart.weights;
    let mut state = init;
    let mut g = gradient(problem, &state)?;
    let g0 = g.norm(w);
    let floor = config.abs_tol_grad * chart.area().sqrt();
    let mut trace = Vec::new();
    let mut last_update = f64::INFINITY;
    for step in 0..=config.max_newton {
        if chart.backend.is_closed() {
            let vol: f64 = w.iter().zip(&state.u).map(|(w, u)| w * (2.0 * u).exp()).sum();
            if vol < VOLUME_COLLAPSE * chart.area() {
                return Err(CmcError::Diverging {
                    kind: DivergenceKind::GaussBonnet,
                    detail: format!("volume collapse: vol = {vol:.3e} after {step} newton steps (u → -∞)"),
                });
            }
        }
        let gn = g.norm(w);
        let small = gn <= config.tol_grad * g0 || gn <= floor;
        if gn <= floor || (small && last_update <= config.tol_step * (1.0 + sup(&state.u))) {
            return assemble_solution(problem, state, trace);
        }
        if step == config.max_newton {
            return Err(CmcError::MaxIterations { iterations: step, grad_norm: gn });
        }
        let mut rhs = g.clone();
        rhs.scale(-1.0);
        let sol = solve_newton_system(problem, &state, &rhs, config)?;
        let delta = sol.x;
        let slope = g.dot(&delta, w);
        let e = functional(problem, &state)?;
        let magnitude = e.dirichlet.abs() + e.linear.abs() + e.volume.abs() + e.coupling.abs() + e.source.abs();
        if -slope <= ROUNDING_SLOPE * f64::EPSILON * magnitude && last_update <= config.tol_step * (1.0 + sup(&state.u)) {
            // the predicted decrease is below the rounding level of the functional
            return assemble_solution(problem, state, trace);
        }
        let mut s = 1.0;
        let mut accepted = None;
        for _ in 0..=config.max_backtracks {
            match functional_change(problem, &state, &delta, s) {
                Ok(change) if change.is_finite() && change <= config.armijo * s * slope => {
                    accepted = Some(change);
                    break;
                }
                Ok(_) | Err(CmcError::Diverging { kind: DivergenceKind::Guard, .. }) => {}
                Err(e) => return Err(e),
            }
            s *= config.backtrack;
        }
        if accepted.is_none() {
            if small && delta.max_abs() <= config.tol_step * (1.0 + sup(&state.u)) {
                // gradient and full Newton step both within tolerance; no step length resolves a decrease
                return assemble_solution(problem, state, trace);
            }
            // the update would have left the admissible range at every step length
            let probe = state.offset(&delta, 1.0);
            probe.check(chart)?;
            return Err(CmcError::LineSearch { iteration: step, grad_norm: gn });
        }
        state = state.offset(&delta, s);
        last_update = s * delta.max_abs();
        g = gradient(problem, &state)?;
        trace.push(IterationRecord {
            step: step + 1,
            value: functional(problem, &state)?.total,
            grad_norm: g.norm(w),
            step_length: s,
            update_max: last_update,
            cg_iterations: sol.iterations,
        });
    }
    unreachable!("loop returns on its last iteration")
}

fn sup(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationStep {
    pub t: f64,
    pub newton_iterations: usize,
    pub grad_norm: f64,
    /// Smallest Ritz value of the Hessian at the step's solution.
    pub min_eig: f64,
    /// Ritz residual bound of `min_eig`.
    pub min_eig_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ContinuationTrace {
    pub steps: Vec<ContinuationStep>,
    /// Number of times the increment was halved.
    pub halvings: usize,
    /// Rejected targets `t` and the reason.
    pub failures: Vec<(f64, String)>,
}

/// Solves with `t·β` for `t` ramping to 1, warm-starting each step and
/// halving the increment when a step fails.
pub fn continuation_solve(problem: &Problem, config: &SolverConfig) -> Result<(Solution, ContinuationTrace)> {
    config.validate()?;
    let mut trace = ContinuationTrace::default();
    let record = |sol: &Solution, t: f64, trace: &mut ContinuationTrace| -> Result<()> {
        let eig = min_eig_estimate(sol, 1, config.trace_lanczos_steps, 0)?;
        trace.steps.push(ContinuationStep {
            t,
            newton_iterations: sol.trace.len(),
            grad_norm: sol.energy.grad_norm,
            min_eig: eig.value,
            min_eig_residual: eig.residual,
        });
        Ok(())
    };
    if problem.beta.is_zero() {
        let sol = newton_solve(problem, SolveState::zero(&problem.chart), config)?;
        record(&sol, 1.0, &mut trace)?;
        return Ok((sol, trace));
    }
    let mut dt = 1.0 / config.continuation_steps as f64;
    let mut t = 0.0;
    let mut state = SolveState::zero(&problem.chart);
    let mut last = None;
    while t < 1.0 {
        let next = if t + dt > 1.0 - 1e-12 { 1.0 } else { t + dt };
        let attempt = problem.with_beta_scale(next).and_then(|p| newton_solve(&p, state.clone(), config));
        match attempt {
            Ok(sol) => {
                record(&sol, next, &mut trace)?;
                state = sol.state.clone();
                t = next;
                last = Some(sol);
            }
            Err(e @ CmcError::Diverging { kind: DivergenceKind::GaussBonnet, .. }) => return Err(e),
            Err(e @ CmcError::InvalidParams(_)) => return Err(e),
            Err(e) => {
                trace.failures.push((next, e.to_string()));
                dt *= 0.5;
                trace.halvings += 1;
                if dt < config.min_continuation_step {
                    return Err(CmcError::ContinuationStalled { last_t: t });
                }
            }
        }
    }
    let mut sol = last.expect("loop ran at least once");
    // report against the caller's problem (same class, t = 1)
    sol.problem = problem.clone();
    Ok((sol, trace))
}

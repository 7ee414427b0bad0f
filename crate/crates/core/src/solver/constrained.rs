use super::{solve_newton_system, sup, SolverConfig};
use crate::donaldson::{
    assemble_solution, constrained_functional, gradient, volume_gradient, IterationRecord, Perturbation, Problem, Solution, SolveState,
};
use crate::error::{CmcError, Result};

/// Critical point of `𝒟̂` subject to `∫ e^{2u} dμ = T` by Newton on the
/// bordered system
///
/// ```text
/// [ H    -a ] [δ ]   [ -∇𝒟_λ      ]
/// [ -aᵀ   0 ] [δλ] = [ (vol - T)/2 ]      a = ½ ∇vol
/// ```
///
/// eliminated through two CG solves. `problem.lambda` is ignored; the
/// multiplier starts from `∫K dμ / T`.
pub fn constrained_solve(problem: &Problem, target: f64, config: &SolverConfig) -> Result<(Solution, f64)> {
    config.validate()?;
    let chart = &problem.chart;
    if !chart.backend.is_closed() {
        return Err(CmcError::InvalidParams("volume constraint needs a closed chart".into()));
    }
    if !(target > 0.0 && target.is_finite()) {
        return Err(CmcError::InvalidParams(format!("target volume {target} must be positive")));
    }
    let w = &chart.weights;
    let total_k: f64 = chart.ext_weights.iter().zip(&chart.ext_curvature).map(|(w, k)| w * k).sum();
    let mut lambda = total_k / target;
    if lambda >= 0.0 {
        return Err(CmcError::Kkt(format!("∫K dμ = {total_k:.3e} ≥ 0: no negative multiplier exists for this chart")));
    }
    let mut state = SolveState::zero(chart);
    let floor = config.abs_tol_grad * chart.area().sqrt();
    let mut g0 = None;
    let mut last_update = f64::INFINITY;
    let mut trace = Vec::new();
    for step in 0..=config.max_newton {
        let p = problem.with_lambda(lambda);
        let g = gradient(&p, &state)?;
        let (value, vol) = constrained_functional(&p, &state)?;
        let c = vol - target;
        let gn = g.norm(w);
        let g_init = *g0.get_or_insert(gn);
        let feasible = c.abs() <= 1e-12 * target;
        if feasible && (gn <= floor || (gn <= config.tol_grad * g_init && last_update <= config.tol_step * (1.0 + sup(&state.u)))) {
            return Ok((assemble_solution(&p, state, trace)?, lambda));
        }
        if step == config.max_newton {
            return Err(CmcError::MaxIterations { iterations: step, grad_norm: gn });
        }
        let mut a = Perturbation::zero(chart.len());
        a.v = volume_gradient(&p, &state)?.iter().map(|x| 0.5 * x).collect();
        let mut rhs = g.clone();
        rhs.scale(-1.0);
        let s1 = solve_newton_system(&p, &state, &rhs, config).map_err(kkt)?;
        let s2 = solve_newton_system(&p, &state, &a, config).map_err(kkt)?;
        let denom = a.dot(&s2.x, w);
        if !(denom > 0.0) {
            return Err(CmcError::Kkt(format!("Schur complement aᵀH⁻¹a = {denom:e} is not positive")));
        }
        let dl = (-0.5 * c - a.dot(&s1.x, w)) / denom;
        let mut delta = s1.x;
        delta.axpy(dl, &s2.x);
        // damp very long steps; the constraint is exactly quadratic-free in λ
        let mut s = (1.0 / delta.v.iter().map(|x| x.abs()).fold(0.0, f64::max)).min(1.0);
        while state.offset(&delta, s).check(chart).is_err() || lambda + s * dl >= 0.0 {
            s *= config.backtrack;
            if s < 1e-12 {
                return Err(CmcError::Kkt("no admissible step along the Newton direction".into()));
            }
        }
        state = state.offset(&delta, s);
        lambda += s * dl;
        last_update = s * delta.max_abs();
        trace.push(IterationRecord {
            step: step + 1,
            value,
            grad_norm: gn,
            step_length: s,
            update_max: last_update,
            cg_iterations: s1.iterations + s2.iterations,
        });
    }
    unreachable!("loop returns on its last iteration")
}

fn kkt(e: CmcError) -> CmcError {
    match e {
        CmcError::CgBreakdown { rayleigh } => CmcError::Kkt(format!("Hessian block lost positivity (Rayleigh quotient {rayleigh:e})")),
        other => other,
    }
}

use super::SolverConfig;
use crate::donaldson::{hessian_apply, hessian_diagonal, Perturbation, Problem, SolveState};
use crate::error::{CmcError, Result};

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: Perturbation,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned CG for `H x = rhs` in the weighted pairing.
/// A non-positive curvature `pᵀHp` aborts with its Rayleigh quotient.
pub fn solve_newton_system(problem: &Problem, state: &SolveState, rhs: &Perturbation, config: &SolverConfig) -> Result<CgOutcome> {
    let chart = &problem.chart;
    let w = &chart.weights;
    let n = chart.len();
    let (du, df) = hessian_diagonal(problem, state)?;
    let precondition = |r: &Perturbation| {
        let mut z = r.clone();
        for j in 0..n {
            z.v[j] = if du[j] > 0.0 { r.v[j] / du[j] } else { r.v[j] };
            z.psi[j] = if df[j] > 0.0 { r.psi[j] / df[j] } else { r.psi[j] };
        }
        z.mask(chart);
        z
    };
    let mut b = rhs.clone();
    b.mask(chart);
    let bnorm = b.norm(w);
    let mut x = Perturbation::zero(n);
    if bnorm == 0.0 {
        return Ok(CgOutcome { x, iterations: 0, relative_residual: 0.0 });
    }
    let mut r = b;
    let mut z = precondition(&r);
    let mut p = z.clone();
    let mut rz = r.dot(&z, w);
    let mut iterations = 0;
    let mut rel = 1.0;
    while iterations < config.cg_max {
        let mut hp = hessian_apply(problem, state, &p)?;
        hp.mask(chart);
        let php = p.dot(&hp, w);
        let pp = p.dot(&p, w);
        if !(php > 0.0) {
            return Err(CmcError::CgBreakdown { rayleigh: php / pp });
        }
        let alpha = rz / php;
        x.axpy(alpha, &p);
        r.axpy(-alpha, &hp);
        iterations += 1;
        rel = r.norm(w) / bnorm;
        if rel <= config.cg_tol {
            break;
        }
        z = precondition(&r);
        let rz_new = r.dot(&z, w);
        p.scale(rz_new / rz);
        p.axpy(1.0, &z);
        rz = rz_new;
    }
    Ok(CgOutcome { x, iterations, relative_residual: rel })
}

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;

use super::derivatives::{hessian_terms, smooth_direction};
use super::random::random_perturbation;
use super::CheckReport;
use crate::donaldson::{hessian_apply, Problem, Solution};
use crate::error::{CmcError, Result};
use crate::fields::{d_z, d_zbar, BetaClass, Weight, WeightedField};
use crate::geometry::{Backend, Chart};
use crate::solver::{continuation_solve, dense_min_eig, min_eig_estimate, newton_solve, SolverConfig};

pub const GAUGE_TOL: f64 = 1e-7;
pub const GAUSS_BONNET_TOL: f64 = 1e-2;
pub const ROUTES_TOL: f64 = 1e-8;
/// Bochner defect allowed per unit `spacing²` on curved charts.
pub const BOCHNER_CONSTANT: f64 = 4.0;
pub const BOCHNER_FLAT_TOL: f64 = 1e-10;
const AUTOMORPHY_TOL: f64 = 1e-8;

fn sup(it: impl Iterator<Item = f64>) -> f64 {
    it.fold(0.0, f64::max)
}

/// Points where a vector field must satisfy `ψ(γz) = γ'(z) ψ(z)` (or
/// periodicity on the torus), paired with the image point and factor.
fn pairing_samples(chart: &Chart) -> Vec<(Complex64, Complex64, Complex64)> {
    match chart.backend {
        Backend::TorusPatch => {
            let one = Complex64::new(1.0, 0.0);
            (0..16)
                .flat_map(|k| {
                    let t = k as f64 / 16.0;
                    [(Complex64::new(0.0, t), Complex64::new(1.0, t), one), (Complex64::new(t, 0.0), Complex64::new(t, 1.0), one)]
                })
                .collect()
        }
        Backend::Bolza => {
            let oct = chart.octagon.as_ref().expect("bolza chart carries its octagon");
            let mut out = Vec::new();
            for g in &oct.generators {
                let side = oct.sides[g.source_side];
                let ends: Vec<f64> = oct
                    .vertices
                    .iter()
                    .filter(|v| ((*v - side.center).norm() - side.radius).abs() < 1e-9)
                    .map(|v| (v - side.center).arg())
                    .collect();
                if ends.len() != 2 {
                    continue;
                }
                let mut span = ends[1] - ends[0];
                if span > PI {
                    span -= 2.0 * PI;
                } else if span < -PI {
                    span += 2.0 * PI;
                }
                for k in 1..8 {
                    let z = side.center + Complex64::from_polar(side.radius, ends[0] + span * k as f64 / 8.0);
                    out.push((z, g.map.apply(z), g.map.derivative(z)));
                }
            }
            out
        }
        Backend::DiskPatch => Vec::new(),
    }
}

/// Rejects a gauge field that is not a section over the chart: non-periodic
/// on the torus, non-automorphic on the octagon, or nonzero on Dirichlet
/// nodes of the patch.
fn check_gauge_field(chart: &Chart, psi0: &dyn Fn(Complex64) -> Complex64) -> Result<WeightedField> {
    let field = WeightedField::from_fn(chart, "psi0", Weight::VECTOR, psi0);
    let scale = sup(field.values.iter().map(|c| c.norm())).max(f64::MIN_POSITIVE);
    if field.values.iter().any(|c| !c.is_finite()) {
        return Err(CmcError::InvalidParams("gauge field is not finite".into()));
    }
    let defect = match chart.backend {
        Backend::DiskPatch => sup((0..chart.len()).filter(|&j| !chart.is_free(j)).map(|j| field.values[j].norm())),
        _ => sup(pairing_samples(chart).into_iter().map(|(z, w, dg)| (psi0(w) - dg * psi0(z)).norm())),
    };
    if defect > AUTOMORPHY_TOL * scale {
        return Err(CmcError::InvalidParams(format!(
            "gauge field is not compatible with the chart's boundary identifications (defect {defect:.3e})"
        )));
    }
    Ok(field)
}

/// Solves with `b` and with `b + ρ²∂_z̄ψ₀` and compares the gauge-invariant
/// outputs; `F` must shift by exactly `−ψ₀`.
pub fn gauge_invariance_audit(problem: &Problem, psi0: &dyn Fn(Complex64) -> Complex64, config: &SolverConfig) -> Result<CheckReport> {
    let chart = &problem.chart;
    let field = check_gauge_field(chart, psi0)?;
    let shifted = Problem::new(chart.clone(), problem.beta.clone().with_gauge(field.clone())?, problem.lambda)?;
    let (a, _) = continuation_solve(problem, config)?;
    let (b, _) = continuation_solve(&shifted, config)?;
    let free = || (0..chart.len()).filter(|&j| chart.is_free(j));
    let du = sup(free().map(|j| (a.state.u[j] - b.state.u[j]).abs()));
    let dalpha = sup(free().map(|j| (a.alpha.values[j] - b.alpha.values[j]).norm()));
    let dshift = sup(free().map(|j| (b.state.f[j] - a.state.f[j] + field.values[j]).norm()));
    Ok(CheckReport::new("gauge", du.max(dalpha).max(dshift), GAUGE_TOL, "cross-run comparison of gauge-equivalent classes")
        .detail("u", du)
        .detail("alpha", dalpha)
        .detail("f_shift", dshift))
}

/// `∫K(h)dμ_h` by the two curvature routes against `2πχ = −4π`, and the
/// pointwise agreement of the routes.
pub fn gauss_bonnet_audit(sol: &Solution) -> Result<Vec<CheckReport>> {
    let chart = sol.chart();
    if chart.backend != Backend::Bolza {
        return Err(CmcError::InvalidParams("Gauss-Bonnet audit needs the closed genus-2 chart".into()));
    }
    let target = -4.0 * PI;
    let mu_h = |j: usize| chart.weights[j] * (2.0 * sol.state.u[j]).exp();
    let identity: f64 = (0..chart.len()).map(|j| mu_h(j) * sol.curvature.identity[j]).sum();
    let gauss: f64 = (0..chart.len()).map(|j| mu_h(j) * sol.curvature.gauss[j]).sum();
    let err = ((identity - target).abs()).max((gauss - target).abs()) / target.abs();
    let scale = sup(sol.curvature.gauss.iter().map(|k| k.abs())).max(1.0);
    let pointwise = sup(sol.curvature.identity.iter().zip(&sol.curvature.gauss).map(|(a, b)| (a - b).abs())) / scale;
    Ok(vec![
        CheckReport::new("gauss-bonnet", err, GAUSS_BONNET_TOL, "total curvature of h against 2πχ = −4π")
            .detail("identity_route", identity)
            .detail("gauss_route", gauss),
        CheckReport::new("curvature-routes", pointwise, ROUTES_TOL, "pointwise K(h) from the Laplacian identity vs λ − 2|α|²"),
    ])
}

/// `∫|∂̄f|² − ∫|∇'f|² + ½∫K|f|²` for random smooth sections `f` of weight
/// `(−1,0)`, normalised by `∫|∂̄f|² + ∫|∇'f|²`.
pub fn bochner_identity_audit(chart: &Chart, trials: usize, seed: u64) -> Result<CheckReport> {
    if !chart.backend.is_closed() {
        return Err(CmcError::InvalidParams("Bochner audit needs a closed chart".into()));
    }
    let mut worst: f64 = 0.0;
    for t in 0..trials {
        let psi = random_perturbation(chart, seed.wrapping_add(t as u64)).psi;
        let (a, b, c) = bochner_terms(chart, &psi)?;
        if a + b > 0.0 {
            worst = worst.max((a - b + c).abs() / (a + b));
        }
    }
    let h2 = chart.spacing * chart.spacing;
    let (tol, oracle) = if chart.backend == Backend::TorusPatch {
        (BOCHNER_FLAT_TOL, "flat commutation of ∂ and ∂̄")
    } else {
        (BOCHNER_CONSTANT * h2, "integration by parts with curvature, O(h²) defect")
    };
    Ok(CheckReport::new("bochner", worst, tol, oracle).detail("constant", worst / h2))
}

/// `(∫|∂̄f|², ∫|∇'f|², ½∫K|f|²)` in the background metric.
pub(crate) fn bochner_terms(chart: &Chart, psi: &[Complex64]) -> Result<(f64, f64, f64)> {
    let f = WeightedField::from_values(chart, "f", Weight::VECTOR, psi.to_vec())?;
    let dbar = d_zbar(chart, &f)?;
    let lifted: Vec<Complex64> = (0..chart.len()).map(|j| psi[j] * chart.rho[j] * chart.rho[j]).collect();
    let dprime = d_z(chart, &WeightedField::from_values(chart, "rho^2 f", Weight::new(-2, -1), lifted)?)?;
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for j in 0..chart.len() {
        let (w, r2) = (chart.weights[j], chart.rho[j] * chart.rho[j]);
        a += w * dbar.values[j].norm_sqr();
        b += w * (dprime.values[j] / r2).norm_sqr();
        c += 0.5 * w * chart.curvature[j] * r2 * psi[j].norm_sqr();
    }
    Ok((a, b, c))
}

/// Lower bounds for the Hessian quadratic form at a solution with `λ ≤ 0`,
/// `L(κ, c) = 2∫[|∂v|² + 2v²|β|² + ½|∂̄f|² + κ|f|²|β|² − 2|v||β||∂̄f| − c|∂v||f||β|]`.
/// The audit asserts `q ≥ L(½, √2)` and reports the margin of `L(1, 2)`.
pub fn hessian_lower_bound_audit(sol: &Solution, trials: usize, seed: u64) -> Result<CheckReport> {
    let chart = sol.chart();
    let w = &chart.weights;
    let (mut worst, mut strong_margin): (f64, f64) = (0.0, f64::INFINITY);
    let mut proven_margin = f64::INFINITY;
    for i in 0..trials {
        let d = smooth_direction(chart, seed.wrapping_add(i as u64));
        let q = hessian_apply(&sol.problem, &sol.state, &d)?.dot(&d, w);
        let t = hessian_terms(sol, &d)?;
        let bound = |kappa: f64, c: f64| {
            2.0 * (t.dirichlet + 2.0 * t.v_alpha + 0.5 * t.dbar + kappa * t.psi_alpha - 2.0 * t.v_alpha_dbar - c * t.dv_psi_alpha)
        };
        let proven = (q - bound(0.5, 2f64.sqrt())) / q.abs();
        proven_margin = proven_margin.min(proven);
        worst = worst.max(-proven);
        strong_margin = strong_margin.min((q - bound(1.0, 2.0)) / q.abs());
    }
    Ok(CheckReport::new("hessian-lower-bound", worst, 0.0, "term-by-term lower-bound integrand against the exact quadratic form")
        .detail("margin", proven_margin)
        .detail("strong_form_margin", strong_margin))
}

fn min_rayleigh(problem: &Problem, sol: &Solution, trials: usize, seed: u64) -> Result<f64> {
    let w = &sol.chart().weights;
    let mut best = f64::INFINITY;
    for i in 0..trials {
        let d = random_perturbation(sol.chart(), seed.wrapping_add(i as u64));
        let dd = d.dot(&d, w);
        if dd > 0.0 {
            best = best.min(hessian_apply(problem, &sol.state, &d)?.dot(&d, w) / dd);
        }
    }
    Ok(best)
}

/// Smallest Rayleigh quotient over random directions and the Lanczos
/// estimate at a solution; fails if either is negative.
pub fn positivity_audit(sol: &Solution, trials: usize, lanczos_steps: usize, seed: u64) -> Result<CheckReport> {
    let rq = min_rayleigh(&sol.problem, sol, trials, seed)?;
    let est = min_eig_estimate(sol, 2, lanczos_steps, seed)?;
    let lowest = rq.min(est.value);
    Ok(CheckReport::new("positivity", (-lowest).max(0.0), 0.0, "random Rayleigh quotients and a Lanczos estimate")
        .detail("min_rayleigh", rq)
        .detail("lanczos", est.value)
        .detail("lanczos_residual", est.residual))
}

/// Charts up to this size also get a dense eigensolve.
const DENSE_NODES: usize = 400;

/// Solves with `λ = 0` and a class without zeros on the disk patch, then
/// probes the Hessian spectrum.
pub fn lambda_zero_audit(chart: Arc<Chart>, b: Complex64, trials: usize, seed: u64, config: &SolverConfig) -> Result<CheckReport> {
    if chart.backend != Backend::DiskPatch || b == Complex64::new(0.0, 0.0) {
        return Err(CmcError::InvalidParams("λ = 0 audit needs the disk patch and a nonvanishing class".into()));
    }
    let field = WeightedField::from_fn(&chart, "b", Weight::BETA, |z| b * (2.0 / (1.0 - z.norm_sqr())).powi(2));
    let problem = Problem::new(chart.clone(), BetaClass::new(field, "constant")?, 0.0)?;
    let sol = newton_solve(&problem, crate::donaldson::SolveState::zero(&chart), config)?;
    let rq = min_rayleigh(&problem, &sol, trials, seed)?;
    let mut report = CheckReport::new("lambda-zero", (-rq).max(0.0), 0.0, "Rayleigh quotients at λ = 0 with a zero-free class")
        .detail("min_rayleigh", rq);
    if chart.len() <= DENSE_NODES {
        let dense = dense_min_eig(&problem, &sol.state)?;
        report = CheckReport::new("lambda-zero", (-rq.min(dense)).max(0.0), 0.0, "Rayleigh quotients and dense spectrum at λ = 0")
            .detail("min_rayleigh", rq)
            .detail("dense_min_eig", dense);
    }
    Ok(report)
}

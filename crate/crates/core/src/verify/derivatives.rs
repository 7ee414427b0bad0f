use num_complex::Complex64;

use super::random::{envelope, random_perturbation};
use super::CheckReport;
use crate::donaldson::{functional, functional_change, gradient, hessian_apply, laplacian, Perturbation, Problem, Solution, SolveState};
use crate::error::Result;
use crate::fields::{d_z, d_zbar, Weight, WeightedField};
use crate::geometry::{Backend, Chart};

pub const GRADIENT_TOL: f64 = 1e-6;
pub const HESSIAN_TOL: f64 = 1e-5;
pub const SYMMETRY_TOL: f64 = 1e-11;
/// Relative distance of the recovered cross-term factor from 4 at which it
/// becomes closer to the competing factor 2.
pub const HESSIAN_FACTOR_TOL: f64 = 0.25;
/// Step sizes swept by the difference checks; the best one is reported.
pub const STEPS: [f64; 4] = [1e-3, 1e-4, 1e-5, 1e-6];
/// Derivatives below this fraction of the functional's term sizes count as
/// agreeing zeros.
const ZERO_FLOOR: f64 = 1e-9;

fn magnitude(p: &Problem, s: &SolveState) -> Result<f64> {
    let e = functional(p, s)?;
    Ok(e.dirichlet.abs() + e.linear.abs() + e.volume.abs() + e.coupling.abs() + e.source.abs())
}

fn relative(a: f64, b: f64, floor: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale <= floor {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Central differences of the functional against the gradient along seeded
/// random directions, one per state.
pub fn check_gradient(problem: &Problem, states: &[SolveState], seed: u64) -> Result<CheckReport> {
    let w = &problem.chart.weights;
    let mut worst: f64 = 0.0;
    let mut worst_step = STEPS[0];
    for (i, s) in states.iter().enumerate() {
        let d = random_perturbation(&problem.chart, seed.wrapping_add(i as u64));
        let exact = gradient(problem, s)?.dot(&d, w);
        let floor = ZERO_FLOOR * magnitude(problem, s)?;
        let mut best = (f64::INFINITY, STEPS[0]);
        for eps in STEPS {
            let fd = (functional_change(problem, s, &d, eps)? - functional_change(problem, s, &d, -eps)?) / (2.0 * eps);
            let err = relative(fd, exact, floor);
            if err < best.0 {
                best = (err, eps);
            }
        }
        if best.0 >= worst {
            worst = best.0;
            worst_step = best.1;
        }
    }
    Ok(CheckReport::new("gradient", worst, GRADIENT_TOL, "central differences of the functional, best of an ε-sweep")
        .detail("trials", states.len() as f64)
        .detail("step", worst_step))
}

/// Second differences of the functional against the Hessian quadratic form.
pub fn check_hessian(problem: &Problem, states: &[SolveState], seed: u64) -> Result<CheckReport> {
    let w = &problem.chart.weights;
    let mut worst: f64 = 0.0;
    let mut worst_step = STEPS[0];
    for (i, s) in states.iter().enumerate() {
        let d = random_perturbation(&problem.chart, seed.wrapping_add(1000 + i as u64));
        let q = hessian_apply(problem, s, &d)?.dot(&d, w);
        let floor = ZERO_FLOOR * magnitude(problem, s)?;
        let mut best = (f64::INFINITY, STEPS[0]);
        for eps in STEPS {
            let fd = (functional_change(problem, s, &d, eps)? + functional_change(problem, s, &d, -eps)?) / (eps * eps);
            let err = relative(fd, q, floor);
            if err < best.0 {
                best = (err, eps);
            }
        }
        if best.0 >= worst {
            worst = best.0;
            worst_step = best.1;
        }
    }
    Ok(CheckReport::new("hessian", worst, HESSIAN_TOL, "second differences of the functional, best of an ε-sweep")
        .detail("trials", states.len() as f64)
        .detail("step", worst_step))
}

/// `|⟨H d₁, d₂⟩ − ⟨d₁, H d₂⟩|` relative to `‖H d₁‖ ‖d₂‖` over random pairs.
pub fn check_symmetry(problem: &Problem, states: &[SolveState], seed: u64) -> Result<CheckReport> {
    let w = &problem.chart.weights;
    let mut worst: f64 = 0.0;
    for (i, s) in states.iter().enumerate() {
        let d1 = random_perturbation(&problem.chart, seed.wrapping_add(2000 + 2 * i as u64));
        let d2 = random_perturbation(&problem.chart, seed.wrapping_add(2001 + 2 * i as u64));
        let h1 = hessian_apply(problem, s, &d1)?;
        let h2 = hessian_apply(problem, s, &d2)?;
        let defect = (h1.dot(&d2, w) - d1.dot(&h2, w)).abs() / (h1.norm(w) * d2.norm(w)).max(f64::MIN_POSITIVE);
        worst = worst.max(defect);
    }
    Ok(CheckReport::new("hessian-symmetry", worst, SYMMETRY_TOL, "swapped pairings of the Hessian action"))
}

/// Nodal finite-difference ingredients of the critical-point Hessian
/// display, all rebased to the solution metric `h`.
pub(crate) struct HessianTerms {
    /// `∫|∂v|²` with the Dirichlet normalisation `2ρ⁻²|∂_z v|²`.
    pub dirichlet: f64,
    /// `∫ v² K(h) dμ_h`.
    pub curvature: f64,
    /// `∫ v Re⟨α, ∂̄ψ⟩_h dμ_h`.
    pub cross: f64,
    /// `∫ |∂̄ψ|²_h dμ_h`.
    pub dbar: f64,
    /// `∫ |∇'ψ|²_h dμ_h` with `∇'ψ = ρ_h⁻² ∂_z(ρ_h² ψ)`.
    pub dprime: f64,
    /// `∫ |ψ|²_h |α|²_h dμ_h`.
    pub psi_alpha: f64,
    /// `∫ v² |α|²_h dμ_h`.
    pub v_alpha: f64,
    /// `∫ |v| |α|_h |∂̄ψ| dμ_h`.
    pub v_alpha_dbar: f64,
    /// `∫ |∂v| |ψ|_h |α|_h dμ_h`.
    pub dv_psi_alpha: f64,
    /// `∫ v² dμ_h`.
    pub v_sq: f64,
    /// `∫ |ψ|²_h dμ_h`.
    pub psi_sq: f64,
}

pub(crate) fn hessian_terms(sol: &Solution, d: &Perturbation) -> Result<HessianTerms> {
    let chart = sol.chart();
    let u = &sol.state.u;
    let v = WeightedField::real(chart, "v", &d.v)?;
    let psi = WeightedField::from_values(chart, "psi", Weight::VECTOR, d.psi.clone())?;
    let vz = d_z(chart, &v)?;
    let psi_zbar = d_zbar(chart, &psi)?;
    let rho_h2: Vec<f64> = (0..chart.len()).map(|j| chart.rho[j] * chart.rho[j] * (2.0 * u[j]).exp()).collect();
    let weighted: Vec<Complex64> = (0..chart.len()).map(|j| d.psi[j] * rho_h2[j]).collect();
    let dprime = d_z(chart, &WeightedField::from_values(chart, "rho_h^2 psi", Weight::new(-2, -1), weighted)?)?;
    let lap = laplacian(chart, u);
    let mut t = HessianTerms {
        dirichlet: 0.0,
        curvature: 0.0,
        cross: 0.0,
        dbar: 0.0,
        dprime: 0.0,
        psi_alpha: 0.0,
        v_alpha: 0.0,
        v_alpha_dbar: 0.0,
        dv_psi_alpha: 0.0,
        v_sq: 0.0,
        psi_sq: 0.0,
    };
    for j in 0..chart.len() {
        let vals = [vz.values[j], psi_zbar.values[j], dprime.values[j], lap[j].into()];
        if !chart.is_free(j) || vals.iter().any(|c| c.is_nan()) {
            continue;
        }
        // nodal quadrature in h: dμ_h = e^{2u} W
        let r2 = chart.rho[j] * chart.rho[j];
        let mu_h = chart.weights[j] * (2.0 * u[j]).exp();
        let kh = (-2.0 * u[j]).exp() * (chart.curvature[j] - lap[j] / r2);
        let alpha = sol.alpha.values[j];
        let alpha_h = alpha.norm() / rho_h2[j];
        let dv = (2.0 / rho_h2[j]).sqrt() * vz.values[j].norm();
        let psi_h = rho_h2[j].sqrt() * d.psi[j].norm();
        let dbar = psi_zbar.values[j].norm();
        let vj = d.v[j];
        t.dirichlet += mu_h * dv * dv;
        t.curvature += mu_h * vj * vj * kh;
        t.cross += mu_h * vj * (alpha * psi_zbar.values[j]).re / rho_h2[j];
        t.dbar += mu_h * dbar * dbar;
        t.dprime += mu_h * (dprime.values[j] / rho_h2[j]).norm_sqr();
        t.psi_alpha += mu_h * psi_h * psi_h * alpha_h * alpha_h;
        t.v_alpha += mu_h * vj * vj * alpha_h * alpha_h;
        t.v_alpha_dbar += mu_h * vj.abs() * alpha_h * dbar;
        t.dv_psi_alpha += mu_h * dv * psi_h * alpha_h;
        t.v_sq += mu_h * vj * vj;
        t.psi_sq += mu_h * psi_h * psi_h;
    }
    Ok(t)
}

/// Direction of unit order vanishing to second order at the chart edge,
/// so that nodal quadratures of its derivatives need no boundary closure.
pub(crate) fn smooth_direction(chart: &Chart, seed: u64) -> Perturbation {
    let mut d = random_perturbation(chart, seed);
    if chart.backend == Backend::DiskPatch {
        for j in 0..chart.len() {
            let e = envelope(chart, chart.nodes[j]);
            d.v[j] *= e;
            d.psi[j] *= e;
        }
    }
    d
}

/// Compares the exact discrete Hessian at a solution with the critical-point
/// display `2∫[|∂v|² − v²K + c·v Re⟨β,∂f*⟩ + |∂̄f|²]` assembled term by term
/// from nodal differences. Flipping the sign of `ψ` isolates the cross term,
/// so `(q(v,ψ) − q(v,−ψ)) / (4 ∫v Re⟨β,∂f*⟩)` estimates `c` directly; the
/// error is its distance from 4. Both full-display errors are reported.
pub fn hessian_formula_audit(sol: &Solution, trials: usize, seed: u64, tolerance: f64) -> Result<CheckReport> {
    let chart = sol.chart();
    let w = &chart.weights;
    let (mut num, mut den) = (0.0f64, 0.0f64);
    let (mut err4, mut err2) = (0.0f64, 0.0f64);
    for i in 0..trials {
        let d = smooth_direction(chart, seed.wrapping_add(i as u64));
        let mut flipped = d.clone();
        flipped.psi.iter_mut().for_each(|p| *p = -*p);
        let q = hessian_apply(&sol.problem, &sol.state, &d)?.dot(&d, w);
        let q_flipped = hessian_apply(&sol.problem, &sol.state, &flipped)?.dot(&flipped, w);
        let t = hessian_terms(sol, &d)?;
        // least squares over trials: a trial with a vanishing cross term carries no weight
        num += 0.25 * (q - q_flipped) * t.cross;
        den += t.cross * t.cross;
        let display = |c: f64| 2.0 * (t.dirichlet - t.curvature + c * t.cross + t.dbar);
        err4 = err4.max((display(4.0) - q).abs() / q.abs());
        err2 = err2.max((display(2.0) - q).abs() / q.abs());
    }
    let estimate = num / den;
    let err = if estimate.is_finite() { (estimate - 4.0).abs() / 4.0 } else { f64::INFINITY };
    Ok(CheckReport::new("hessian-formula", err, tolerance, "sign-flip isolation of the cross term against its nodal assembly")
        .detail("factor", estimate)
        .detail("factor4_error", err4)
        .detail("factor2_error", err2))
}

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::discrete::gradient_parts;
use super::{functional, EnergyReport, Problem, SolveState};
use crate::error::Result;
use crate::fields::{d_zbar, total_beta, Weight, WeightedField};
use crate::geometry::stencil::{axis_derivative, Axis};
use crate::geometry::{Backend, Chart};

/// One accepted Newton step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub step: usize,
    pub value: f64,
    pub grad_norm: f64,
    pub step_length: f64,
    pub update_max: f64,
    pub cg_iterations: usize,
}

/// Gauss and Codazzi residuals, from the discrete functional and from an
/// independent nodal finite-difference evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// `max |K(h) − λ + 2|α|²_h|` in the discrete (lumped) form.
    pub r_gauss: f64,
    /// `max |∂_z̄ a|` in the discrete form.
    pub r_codazzi: f64,
    pub r_gauss_fd: f64,
    pub r_codazzi_fd: f64,
}

/// Two evaluations of `K(h)` per node: from `K(h) = e^{-2u}(K(g) − Δ_g u)`
/// and from the Gauss equation `λ − 2|α|²_h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureRoutes {
    pub identity: Vec<f64>,
    pub gauss: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub problem: Problem,
    pub state: SolveState,
    pub lambda: f64,
    /// `ρ_h = e^u ρ`.
    pub rho_h: Vec<f64>,
    /// Nodal `B = b + ρ² ∂_z̄ (F + ψ₀)`, weight `(0,2)`.
    pub b_total: WeightedField,
    /// `a = e^{2u} conj(B)`, weight `(2,0)`.
    pub alpha: WeightedField,
    pub energy: EnergyReport,
    pub residuals: Residuals,
    pub curvature: CurvatureRoutes,
    pub trace: Vec<IterationRecord>,
}

impl Solution {
    pub fn chart(&self) -> &Chart {
        &self.problem.chart
    }
}

fn max_free(chart: &Chart, v: impl Iterator<Item = f64>) -> f64 {
    v.enumerate().filter(|(j, x)| chart.is_free(*j) && !x.is_nan()).map(|(_, x)| x.abs()).fold(0.0, f64::max)
}

pub(crate) fn laplacian(chart: &Chart, u: &[f64]) -> Vec<f64> {
    let uc: Vec<Complex64> = u.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    if chart.backend == Backend::TorusPatch {
        return crate::fields::spectral_laplacian(chart, &uc).iter().map(|c| c.re).collect();
    }
    let ext = chart.extend_complex(&uc, Weight::SCALAR);
    let dxx = axis_derivative(chart, &ext, Axis::X, 2);
    let dyy = axis_derivative(chart, &ext, Axis::Y, 2);
    dxx.iter().zip(&dyy).map(|(a, b)| a.re + b.re).collect()
}

/// Residuals and curvature routes of `state` for `problem` (sources, if
/// any, are not part of the residual).
pub fn gauss_codazzi_residuals(problem: &Problem, state: &SolveState) -> Result<(Residuals, CurvatureRoutes)> {
    let base = Problem { source: None, ..problem.clone() };
    let chart = &base.chart;
    let g = gradient_parts(&base, state)?;
    let n = chart.len();
    let em2u: Vec<f64> = state.u.iter().map(|u| (-2.0 * u).exp()).collect();
    let identity: Vec<f64> = (0..n).map(|j| em2u[j] * (g.linear[j] + g.dirichlet[j])).collect();
    let gauss: Vec<f64> = (0..n).map(|j| -em2u[j] * (g.volume[j] + g.coupling[j])).collect();
    let r_gauss = max_free(chart, (0..n).map(|j| identity[j] - gauss[j]));
    let r_codazzi = max_free(chart, (0..n).map(|j| 0.5 * chart.rho[j] * chart.rho[j] * g.f[j].norm()));

    let b = total_beta(chart, &base.beta, &state.f_field(chart))?;
    let lap = laplacian(chart, &state.u);
    let r_gauss_fd = max_free(
        chart,
        (0..n).map(|j| {
            let r2 = chart.rho[j] * chart.rho[j];
            let kh = em2u[j] * (chart.curvature[j] - lap[j] / r2);
            kh - base.lambda + 2.0 * b.values[j].norm_sqr() / (r2 * r2)
        }),
    );
    let alpha = alpha_field(chart, state, &b);
    let da = d_zbar(chart, &alpha)?;
    let r_codazzi_fd = max_free(chart, da.values.iter().map(|v| v.norm()));
    Ok((Residuals { r_gauss, r_codazzi, r_gauss_fd, r_codazzi_fd }, CurvatureRoutes { identity, gauss }))
}

fn alpha_field(chart: &Chart, state: &SolveState, b: &WeightedField) -> WeightedField {
    let values = b.values.iter().zip(&state.u).map(|(b, u)| b.conj() * (2.0 * u).exp()).collect();
    WeightedField::from_values(chart, "alpha", Weight::ALPHA, values).expect("sized to chart")
}

/// Derived metric `h = e^{2u} g`, `α = e^{2u} conj(B)`, energy and
/// residuals for `state`.
pub fn assemble_solution(problem: &Problem, state: SolveState, trace: Vec<IterationRecord>) -> Result<Solution> {
    let chart = &problem.chart;
    let mut energy = functional(problem, &state)?;
    let grad = super::gradient(problem, &state)?;
    energy.grad_norm = grad.norm(&chart.weights);
    let (residuals, curvature) = gauss_codazzi_residuals(problem, &state)?;
    energy.r_gauss = residuals.r_gauss;
    energy.r_codazzi = residuals.r_codazzi;
    let b_total = total_beta(chart, &problem.beta, &state.f_field(chart))?;
    let alpha = alpha_field(chart, &state, &b_total);
    let rho_h = state.u.iter().zip(&chart.rho).map(|(u, r)| u.exp() * r).collect();
    Ok(Solution { problem: problem.clone(), lambda: problem.lambda, state, rho_h, b_total, alpha, energy, residuals, curvature, trace })
}

/// `γ = α_{zz} dz² + c h_{zz̄} dz dz̄ + α_{z̄z̄} dz̄²` component-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondFundamentalForm {
    pub alpha_zz: Vec<Complex64>,
    /// `c · h_{zz̄} = c ρ_h²`.
    pub mixed: Vec<f64>,
    pub alpha_zbar_zbar: Vec<Complex64>,
}

pub fn second_fundamental_form(solution: &Solution, c: f64) -> SecondFundamentalForm {
    SecondFundamentalForm {
        alpha_zz: solution.alpha.values.clone(),
        mixed: solution.rho_h.iter().map(|r| c * r * r).collect(),
        alpha_zbar_zbar: solution.alpha.values.iter().map(|a| a.conj()).collect(),
    }
}

//! The convex functional `𝒟(u, F)` on a chart, its first and second
//! variations, and assembly of `(h, α)` from a critical point.
//!
//! The functional is discretised with linear elements on the chart's
//! triangles and mass-lumped nodal terms:
//!
//! ```text
//! 𝒟 = Σ_i w_i [K_i u_i − (λ/2) e^{2u_i}]
//!   + Σ_T a_T [½|∇u|² + e^{2ū_T} ρ_T^{-2} |B_T|²] + C
//! B_T = b̄_T + ρ_T² ∂_z̄ (F + ψ₀)|_T
//! ```
//!
//! where `i` runs over extended nodes (ghost values are fetched through the
//! chart's automorphy stencils). [`gradient`] and [`hessian_apply`] are the
//! exact first and second derivatives of this sum, reported as densities
//! against the chart's nodal weights.

mod discrete;
mod solution;

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{CmcError, DivergenceKind, Result};
use crate::fields::{BetaClass, Weight, WeightedField};
use crate::geometry::Chart;

pub use discrete::{
    constrained_functional, functional, functional_change, gradient, hessian_apply, hessian_diagonal, normalization_constant,
    volume_gradient,
};
pub(crate) use solution::laplacian;
pub use solution::{
    assemble_solution, gauss_codazzi_residuals, second_fundamental_form, CurvatureRoutes, IterationRecord, Residuals,
    SecondFundamentalForm, Solution,
};

/// Largest admissible `|2u|` before an iterate is declared divergent.
pub const EXP_GUARD: f64 = 50.0;

/// Ambient curvature `k`, mean curvature `c` and `λ = k + c²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub k: i32,
    pub c: f64,
    pub lambda: f64,
    /// Target volume for the constrained problem.
    pub target_volume: Option<f64>,
}

impl Params {
    pub fn new(k: i32, c: f64) -> Result<Params> {
        if !(-1..=1).contains(&k) {
            return Err(CmcError::InvalidParams(format!("k must be -1, 0 or 1, got {k}")));
        }
        if !c.is_finite() {
            return Err(CmcError::InvalidParams(format!("mean curvature c = {c} is not finite")));
        }
        Ok(Params { k, c, lambda: k as f64 + c * c, target_volume: None })
    }

    pub fn with_target_volume(mut self, t: f64) -> Result<Params> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(CmcError::InvalidParams(format!("target volume T = {t} must be positive")));
        }
        self.target_volume = Some(t);
        Ok(self)
    }

    /// Rejects `λ ≥ 0`, where the functional is not convex.
    pub fn require_convex(&self) -> Result<()> {
        if self.lambda >= 0.0 {
            return Err(CmcError::InvalidParams(format!(
                "lambda = k + c^2 = {} must be negative for the unconstrained problem{}",
                self.lambda,
                if self.k == -1 { " (|c| < 1 when k = -1)" } else { "" }
            )));
        }
        Ok(())
    }
}

/// Planted faults used to confirm that the audits detect sign errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Mutant {
    #[default]
    None,
    /// Volume term enters the gradient with the wrong sign.
    VolumeSign,
    /// The `e^{2ū}` coupling derivative enters the `u` gradient negated.
    CouplingSign,
    /// The nodal `-2λ e^{2u}` Hessian term is negated.
    HessianNodalSign,
}

impl std::str::FromStr for Mutant {
    type Err = CmcError;
    fn from_str(s: &str) -> Result<Mutant> {
        match s {
            "none" => Ok(Mutant::None),
            "volume-sign" => Ok(Mutant::VolumeSign),
            "coupling-sign" => Ok(Mutant::CouplingSign),
            "hessian-nodal-sign" => Ok(Mutant::HessianNodalSign),
            other => Err(CmcError::InvalidParams(format!("unknown mutant '{other}'"))),
        }
    }
}

/// Nodal source densities subtracted from the gradient: the functional
/// gains `-Σ W (s_u u + Re(conj(s_F) F))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Source {
    pub s_u: Vec<f64>,
    pub s_f: Vec<Complex64>,
}

/// Everything the discrete functional needs besides the state.
#[derive(Debug, Clone)]
pub struct Problem {
    pub chart: Arc<Chart>,
    pub beta: BetaClass,
    pub lambda: f64,
    /// Normalisation constant `C`.
    pub constant: f64,
    pub source: Option<Source>,
    pub mutant: Mutant,
    /// `b̄_T + ρ_T² ∂_z̄ ψ₀|_T` per triangle.
    beta_tri: Vec<Complex64>,
}

impl Problem {
    pub fn new(chart: Arc<Chart>, beta: BetaClass, lambda: f64) -> Result<Problem> {
        if !lambda.is_finite() {
            return Err(CmcError::InvalidParams("lambda is not finite".into()));
        }
        beta.b.check_chart(&chart)?;
        beta.b.expect_weight(Weight::BETA)?;
        let b_ext = chart.extend_complex(&beta.b.values, Weight::BETA);
        let psi_ext = match &beta.gauge {
            Some(g) => {
                g.check_chart(&chart)?;
                Some(chart.extend_complex(&g.values, Weight::VECTOR))
            }
            None => None,
        };
        let mut beta_tri = Vec::with_capacity(chart.triangles.len());
        for t in &chart.triangles {
            let mean = t.vertices.iter().map(|&i| b_ext[i]).sum::<Complex64>() / 3.0;
            let g = psi_ext.as_ref().map_or(Complex64::new(0.0, 0.0), |p| t.dbar(p) * (t.rho * t.rho));
            beta_tri.push(mean + g);
        }
        Ok(Problem { chart, beta, lambda, constant: 0.0, source: None, mutant: Mutant::None, beta_tri })
    }

    pub fn from_params(chart: Arc<Chart>, beta: BetaClass, params: &Params) -> Result<Problem> {
        Problem::new(chart, beta, params.lambda)
    }

    /// Sets `C` so that the reference state `u = 0, F = 0` has `𝒟 = 0`.
    pub fn normalized(mut self) -> Problem {
        self.constant = normalization_constant(&self);
        self
    }

    pub fn with_constant(mut self, c: f64) -> Problem {
        self.constant = c;
        self
    }

    pub fn with_source(mut self, s: Source) -> Problem {
        self.source = Some(s);
        self
    }

    pub fn with_mutant(mut self, m: Mutant) -> Problem {
        self.mutant = m;
        self
    }

    pub fn with_lambda(&self, lambda: f64) -> Problem {
        Problem { lambda, ..self.clone() }
    }

    /// Same problem with the class representative scaled by `t`.
    pub fn with_beta_scale(&self, t: f64) -> Result<Problem> {
        let mut p = Problem::new(self.chart.clone(), self.beta.scaled(t), self.lambda)?;
        p.constant = self.constant;
        p.source = self.source.clone();
        p.mutant = self.mutant;
        Ok(p)
    }

    pub(crate) fn beta_tri(&self) -> &[Complex64] {
        &self.beta_tri
    }
}

/// The unknowns: log conformal factor `u` and the `(1,0)` component `F`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveState {
    pub u: Vec<f64>,
    pub f: Vec<Complex64>,
}

impl SolveState {
    pub fn zero(chart: &Chart) -> SolveState {
        SolveState { u: vec![0.0; chart.len()], f: vec![Complex64::new(0.0, 0.0); chart.len()] }
    }

    pub fn from_fields(chart: &Chart, u: &WeightedField, f: &WeightedField) -> Result<SolveState> {
        u.expect_weight(Weight::SCALAR)?;
        f.expect_weight(Weight::VECTOR)?;
        u.check_chart(chart)?;
        f.check_chart(chart)?;
        if u.values.iter().any(|v| v.im != 0.0) {
            return Err(CmcError::FieldMismatch("u must be real".into()));
        }
        Ok(SolveState { u: u.re(), f: f.values.clone() })
    }

    pub fn u_field(&self, chart: &Chart) -> WeightedField {
        WeightedField::real(chart, "u", &self.u).expect("state sized to chart")
    }

    pub fn f_field(&self, chart: &Chart) -> WeightedField {
        WeightedField::from_values(chart, "F", Weight::VECTOR, self.f.clone()).expect("state sized to chart")
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// `self + s·d`.
    pub fn offset(&self, d: &Perturbation, s: f64) -> SolveState {
        SolveState {
            u: self.u.iter().zip(&d.v).map(|(a, b)| a + s * b).collect(),
            f: self.f.iter().zip(&d.psi).map(|(a, b)| a + b * s).collect(),
        }
    }

    pub fn check(&self, chart: &Chart) -> Result<()> {
        if self.u.len() != chart.len() || self.f.len() != chart.len() {
            return Err(CmcError::FieldMismatch(format!(
                "state has {}/{} samples, chart has {} nodes",
                self.u.len(),
                self.f.len(),
                chart.len()
            )));
        }
        if self.u.iter().any(|v| !v.is_finite()) || self.f.iter().any(|v| !v.is_finite()) {
            return Err(CmcError::Diverging { kind: DivergenceKind::NonFinite, detail: "non-finite state".into() });
        }
        if let Some(m) = self.u.iter().map(|v| (2.0 * v).abs()).reduce(f64::max) {
            if m > EXP_GUARD {
                return Err(CmcError::Diverging {
                    kind: DivergenceKind::Guard,
                    detail: format!("|2u| reached {m:.3e} (> {EXP_GUARD}); volume collapse or blow-up"),
                });
            }
        }
        Ok(())
    }
}

/// A direction `(v, ψ)` in state space, or a gradient density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub v: Vec<f64>,
    pub psi: Vec<Complex64>,
}

impl Perturbation {
    pub fn zero(n: usize) -> Perturbation {
        Perturbation { v: vec![0.0; n], psi: vec![Complex64::new(0.0, 0.0); n] }
    }

    /// `⟨a, b⟩ = Σ W (v_a v_b + Re(ψ_a conj ψ_b))`.
    pub fn dot(&self, other: &Perturbation, weights: &[f64]) -> f64 {
        let mut s = 0.0;
        for j in 0..weights.len() {
            s += weights[j] * (self.v[j] * other.v[j] + (self.psi[j] * other.psi[j].conj()).re);
        }
        s
    }

    pub fn norm(&self, weights: &[f64]) -> f64 {
        self.dot(self, weights).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.v.iter().map(|x| x.abs()).chain(self.psi.iter().map(|x| x.norm())).fold(0.0, f64::max)
    }

    pub fn axpy(&mut self, s: f64, x: &Perturbation) {
        self.v.iter_mut().zip(&x.v).for_each(|(a, b)| *a += s * b);
        self.psi.iter_mut().zip(&x.psi).for_each(|(a, b)| *a += b * s);
    }

    pub fn scale(&mut self, s: f64) {
        self.v.iter_mut().for_each(|a| *a *= s);
        self.psi.iter_mut().for_each(|a| *a *= s);
    }

    /// Zeroes Dirichlet-boundary entries.
    pub fn mask(&mut self, chart: &Chart) {
        for j in 0..chart.len() {
            if !chart.is_free(j) {
                self.v[j] = 0.0;
                self.psi[j] = Complex64::new(0.0, 0.0);
            }
        }
    }
}

/// Parts of the functional; serialised with the report key names.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub total: f64,
    pub dirichlet: f64,
    pub linear: f64,
    pub volume: f64,
    pub coupling: f64,
    /// Source pairing (zero outside manufactured problems).
    pub source: f64,
    #[serde(rename = "C")]
    pub constant: f64,
    pub grad_norm: f64,
    pub r_gauss: f64,
    pub r_codazzi: f64,
}

#[cfg(test)]
mod tests;

//! Manufactured solutions on the disk patch. The sources are evaluated from
//! closed forms with nested sixth-order central differences, independently
//! of the mesh operators used by the solver.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use crate::donaldson::{Problem, Solution, SolveState, Source};
use crate::error::{CmcError, Result};
use crate::fields::BetaClass;
use crate::geometry::{Backend, Chart, MetricKind};
use crate::solver::{newton_solve, SolverConfig};

/// Closed forms `u* = a sin(kx) sin(ky)` and `F* = b e^{ik(x−y)}` with
/// `k = π / r0`, so that `u*` vanishes on the patch boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MmsRecipe {
    pub a: f64,
    pub b: Complex64,
}

/// Step of the source oracle's difference stencil.
const ORACLE_STEP: f64 = 1e-3;

type Closure<'a, T> = &'a dyn Fn(Complex64) -> T;

/// Sixth-order central difference along `dir`.
fn diff(f: Closure<Complex64>, z: Complex64, dir: Complex64) -> Complex64 {
    const C: [f64; 3] = [45.0 / 60.0, -9.0 / 60.0, 1.0 / 60.0];
    let h = ORACLE_STEP;
    let mut s = Complex64::new(0.0, 0.0);
    for (k, c) in C.iter().enumerate() {
        let t = (k + 1) as f64 * h;
        s += (f(z + dir * t) - f(z - dir * t)) * *c;
    }
    s / h
}

fn dz(f: Closure<Complex64>, z: Complex64) -> Complex64 {
    let i = Complex64::i();
    0.5 * (diff(f, z, 1.0.into()) - i * diff(f, z, i))
}

fn dzbar(f: Closure<Complex64>, z: Complex64) -> Complex64 {
    let i = Complex64::i();
    0.5 * (diff(f, z, 1.0.into()) + i * diff(f, z, i))
}

pub struct MmsCase {
    pub chart: Arc<Chart>,
    pub recipe: MmsRecipe,
    pub lambda: f64,
    pub u_star: Vec<f64>,
    pub f_star: Vec<Complex64>,
    /// Nodal `B* = ρ² ∂_z̄ F*`.
    pub b_star: Vec<Complex64>,
    pub problem: Problem,
}

impl MmsCase {
    /// Zero interior with the Dirichlet trace of `F*` imposed.
    pub fn initial_state(&self) -> SolveState {
        let mut s = SolveState::zero(&self.chart);
        for j in 0..self.chart.len() {
            if !self.chart.is_free(j) {
                s.u[j] = self.u_star[j];
                s.f[j] = self.f_star[j];
            }
        }
        s
    }

    pub fn solve(&self, config: &SolverConfig) -> Result<Solution> {
        newton_solve(&self.problem, self.initial_state(), config)
    }

    /// L∞ errors of `u` over free nodes and of the gauge-invariant `B` on
    /// the inner half of the patch; `b_err_full` extends the latter to all
    /// free nodes, where a boundary layer adds a `log h` factor.
    pub fn errors(&self, sol: &Solution) -> MmsError {
        let c = &self.chart;
        let inner = 0.25 * c.spacing * c.n as f64 + 1e-12;
        let (mut u_err, mut b_err, mut b_err_full): (f64, f64, f64) = (0.0, 0.0, 0.0);
        for j in (0..c.len()).filter(|&j| c.is_free(j)) {
            u_err = u_err.max((sol.state.u[j] - self.u_star[j]).abs());
            let db = (sol.b_total.values[j] - self.b_star[j]).norm();
            if db.is_finite() {
                b_err_full = b_err_full.max(db);
                let z = c.nodes[j];
                if z.re.abs() <= inner && z.im.abs() <= inner {
                    b_err = b_err.max(db);
                }
            }
        }
        MmsError { n: c.n, u_err, b_err, b_err_full }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MmsError {
    pub n: usize,
    pub u_err: f64,
    pub b_err: f64,
    pub b_err_full: f64,
}

/// Builds the source-augmented problem whose exact critical point is the
/// recipe's `(u*, F*)` with `β = 0`.
pub fn make_mms_case(chart: Arc<Chart>, lambda: f64, recipe: MmsRecipe) -> Result<MmsCase> {
    if chart.backend != Backend::DiskPatch || chart.metric != MetricKind::Poincare {
        return Err(CmcError::InvalidParams("manufactured solutions need the hyperbolic disk patch".into()));
    }
    if !(lambda.is_finite() && recipe.a.is_finite() && recipe.b.is_finite()) {
        return Err(CmcError::InvalidParams("non-finite manufactured-solution parameters".into()));
    }
    let r0 = 0.5 * chart.spacing * chart.n as f64;
    let k = PI / r0;
    let (a, b) = (recipe.a, recipe.b);
    let rho = |z: Complex64| 2.0 / (1.0 - z.norm_sqr());
    let u = move |z: Complex64| Complex64::new(a * (k * z.re).sin() * (k * z.im).sin(), 0.0);
    let f = move |z: Complex64| b * Complex64::from_polar(1.0, k * (z.re - z.im));
    let big_b = |z: Complex64| dzbar(&f, z) * rho(z).powi(2);
    let e2u_b = |z: Complex64| big_b(z) * (2.0 * u(z).re).exp();
    // Δ₀ = 4 ∂_z ∂_z̄
    let lap = |z: Complex64| 4.0 * dz(&|w| dzbar(&u, w), z).re;

    let mut s_u = vec![0.0; chart.len()];
    let mut s_f = vec![Complex64::new(0.0, 0.0); chart.len()];
    let (mut u_star, mut f_star, mut b_star) = (Vec::new(), Vec::new(), Vec::new());
    for (j, &z) in chart.nodes.iter().enumerate() {
        let (r, uz) = (rho(z), u(z).re);
        u_star.push(uz);
        f_star.push(f(z));
        let bz = big_b(z);
        b_star.push(bz);
        if chart.is_free(j) {
            let e = (2.0 * uz).exp();
            s_u[j] = -lap(z) / (r * r) - 1.0 + e * (-lambda + 2.0 * bz.norm_sqr() / r.powi(4));
            s_f[j] = -2.0 * dz(&e2u_b, z) / (r * r);
        }
    }
    let problem = Problem::new(chart.clone(), BetaClass::zero(&chart), lambda)?.with_source(Source { s_u, s_f });
    Ok(MmsCase { chart, recipe, lambda, u_star, f_star, b_star, problem })
}

/// Errors of the manufactured solution at each resolution.
pub fn mms_convergence(r0: f64, lambda: f64, recipe: MmsRecipe, ns: &[usize], config: &SolverConfig) -> Result<Vec<MmsError>> {
    ns.iter()
        .map(|&n| {
            let chart = Arc::new(crate::geometry::build_hyperbolic_disk_patch(n, r0)?);
            let case = make_mms_case(chart, lambda, recipe)?;
            let sol = case.solve(config)?;
            Ok(case.errors(&sol))
        })
        .collect()
}

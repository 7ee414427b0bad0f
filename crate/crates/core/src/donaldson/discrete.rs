use num_complex::Complex64;

use super::{EnergyReport, Mutant, Perturbation, Problem, SolveState};
use crate::error::Result;
use crate::fields::Weight;
use crate::geometry::Chart;

struct Extended {
    u: Vec<f64>,
    f: Vec<Complex64>,
    exp2u: Vec<f64>,
}

fn extend(chart: &Chart, state: &SolveState) -> Extended {
    let u = chart.extend_real(&state.u);
    let f = chart.extend_complex(&state.f, Weight::VECTOR);
    let exp2u = u.iter().map(|x| (2.0 * x).exp()).collect();
    Extended { u, f, exp2u }
}

/// Per-triangle data shared by all derivative orders.
struct Element {
    area: f64,
    rho2: f64,
    /// `e^{2ū}`
    e: f64,
    b: Complex64,
}

fn element(p: &Problem, k: usize, x: &Extended) -> Element {
    let t = &p.chart.triangles[k];
    let ubar = t.mean(&x.u);
    let rho2 = t.rho * t.rho;
    Element { area: t.area, rho2, e: (2.0 * ubar).exp(), b: p.beta_tri()[k] + t.dbar(&x.f) * rho2 }
}

/// Gradient pieces on extended nodes, before pull-back.
struct RawGradient {
    dirichlet: Vec<f64>,
    linear: Vec<f64>,
    volume: Vec<f64>,
    coupling: Vec<f64>,
    f: Vec<Complex64>,
}

fn raw_gradient(p: &Problem, x: &Extended) -> RawGradient {
    let c = &p.chart;
    let n = c.ext_len();
    let mut g = RawGradient {
        dirichlet: vec![0.0; n],
        linear: vec![0.0; n],
        volume: vec![0.0; n],
        coupling: vec![0.0; n],
        f: vec![Complex64::new(0.0, 0.0); n],
    };
    for i in 0..n {
        let w = c.ext_weights[i];
        g.linear[i] = w * c.ext_curvature[i];
        g.volume[i] = -p.lambda * w * x.exp2u[i];
    }
    for (k, t) in c.triangles.iter().enumerate() {
        let el = element(p, k, x);
        let (ux, uy) = t.grad(&x.u);
        let cpl = el.area * el.e / el.rho2 * el.b.norm_sqr();
        for m in 0..3 {
            let i = t.vertices[m];
            g.dirichlet[i] += el.area * (ux * t.gx[m] + uy * t.gy[m]);
            g.coupling[i] += 2.0 / 3.0 * cpl;
            g.f[i] += 2.0 * el.area * el.e * el.b * t.dbar_coeff(m).conj();
        }
    }
    match p.mutant {
        Mutant::VolumeSign => g.volume.iter_mut().for_each(|v| *v = -*v),
        Mutant::CouplingSign => g.coupling.iter_mut().for_each(|v| *v = -*v),
        _ => {}
    }
    g
}

fn densities(c: &Chart, ext: &[f64]) -> Vec<f64> {
    let mut out = c.pull_back_real(ext);
    for j in 0..c.len() {
        out[j] = if c.is_free(j) { out[j] / c.weights[j] } else { 0.0 };
    }
    out
}

fn densities_complex(c: &Chart, ext: &[Complex64]) -> Vec<Complex64> {
    let mut out = c.pull_back_complex(ext, Weight::VECTOR);
    for j in 0..c.len() {
        out[j] = if c.is_free(j) { out[j] / c.weights[j] } else { Complex64::new(0.0, 0.0) };
    }
    out
}

/// `u`-gradient split by term, as nodal densities.
pub(crate) struct GradientParts {
    pub dirichlet: Vec<f64>,
    pub linear: Vec<f64>,
    pub volume: Vec<f64>,
    pub coupling: Vec<f64>,
    pub f: Vec<Complex64>,
}

pub(crate) fn gradient_parts(p: &Problem, state: &SolveState) -> Result<GradientParts> {
    state.check(&p.chart)?;
    let g = raw_gradient(p, &extend(&p.chart, state));
    let c = &p.chart;
    Ok(GradientParts {
        dirichlet: densities(c, &g.dirichlet),
        linear: densities(c, &g.linear),
        volume: densities(c, &g.volume),
        coupling: densities(c, &g.coupling),
        f: densities_complex(c, &g.f),
    })
}

/// Evaluates `𝒟` and its parts. `grad_norm` and the residual fields of the
/// report are left at zero; [`super::assemble_solution`] fills them.
pub fn functional(p: &Problem, state: &SolveState) -> Result<EnergyReport> {
    state.check(&p.chart)?;
    let c = &p.chart;
    let x = extend(c, state);
    let (mut linear, mut volume) = (0.0, 0.0);
    for i in 0..c.ext_len() {
        linear += c.ext_weights[i] * c.ext_curvature[i] * x.u[i];
        volume += c.ext_weights[i] * x.exp2u[i];
    }
    volume *= -0.5 * p.lambda;
    let (mut dirichlet, mut coupling) = (0.0, 0.0);
    for (k, t) in c.triangles.iter().enumerate() {
        let el = element(p, k, &x);
        let (ux, uy) = t.grad(&x.u);
        dirichlet += 0.5 * el.area * (ux * ux + uy * uy);
        coupling += el.area * el.e / el.rho2 * el.b.norm_sqr();
    }
    let mut source = 0.0;
    if let Some(s) = &p.source {
        for j in 0..c.len() {
            if c.is_free(j) {
                source -= c.weights[j] * (s.s_u[j] * state.u[j] + (s.s_f[j].conj() * state.f[j]).re);
            }
        }
    }
    Ok(EnergyReport {
        total: dirichlet + linear + volume + coupling + source + p.constant,
        dirichlet,
        linear,
        volume,
        coupling,
        source,
        constant: p.constant,
        grad_norm: 0.0,
        r_gauss: 0.0,
        r_codazzi: 0.0,
    })
}

/// `C` such that `u = 0, F = 0` evaluates to zero.
pub fn normalization_constant(p: &Problem) -> f64 {
    let base = Problem { constant: 0.0, source: None, ..p.clone() };
    -functional(&base, &SolveState::zero(&p.chart)).expect("reference state is admissible").total
}

/// Residual densities `(R_u, R_F)`: the derivative of [`functional`] with
/// respect to nodal values divided by the nodal weights, zero on Dirichlet
/// nodes.
pub fn gradient(p: &Problem, state: &SolveState) -> Result<Perturbation> {
    let g = gradient_parts(p, state)?;
    let mut v: Vec<f64> = (0..g.dirichlet.len()).map(|j| g.dirichlet[j] + g.linear[j] + g.volume[j] + g.coupling[j]).collect();
    let mut psi = g.f;
    if let Some(s) = &p.source {
        for j in 0..v.len() {
            if p.chart.is_free(j) {
                v[j] -= s.s_u[j];
                psi[j] -= s.s_f[j];
            }
        }
    }
    Ok(Perturbation { v, psi })
}

/// Derivative of the gradient along `d`, in the same density convention;
/// self-adjoint for the weighted pairing [`Perturbation::dot`].
pub fn hessian_apply(p: &Problem, state: &SolveState, d: &Perturbation) -> Result<Perturbation> {
    state.check(&p.chart)?;
    let c = &p.chart;
    let x = extend(c, state);
    let v = c.extend_real(&d.v);
    let psi = c.extend_complex(&d.psi, Weight::VECTOR);
    let n = c.ext_len();
    let mut hu = vec![0.0; n];
    let mut hf = vec![Complex64::new(0.0, 0.0); n];
    let nodal_sign = if p.mutant == Mutant::HessianNodalSign { -1.0 } else { 1.0 };
    for i in 0..n {
        hu[i] = nodal_sign * -2.0 * p.lambda * c.ext_weights[i] * x.exp2u[i] * v[i];
    }
    for (k, t) in c.triangles.iter().enumerate() {
        let el = element(p, k, &x);
        let (vx, vy) = t.grad(&v);
        let vbar = t.mean(&v);
        let b1 = t.dbar(&psi) * el.rho2;
        let energy = el.area * el.e / el.rho2;
        let du = 2.0 / 3.0 * energy * (2.0 * vbar * el.b.norm_sqr() + 2.0 * (el.b.conj() * b1).re);
        let df = 2.0 * el.area * el.e * (el.b * (2.0 * vbar) + b1);
        for m in 0..3 {
            let i = t.vertices[m];
            hu[i] += el.area * (vx * t.gx[m] + vy * t.gy[m]) + du;
            hf[i] += df * t.dbar_coeff(m).conj();
        }
    }
    Ok(Perturbation { v: densities(c, &hu), psi: densities_complex(c, &hf) })
}

/// Jacobi diagonal from the direct vertex contributions (ghost couplings
/// ignored), for `u` and for each real component of `F`.
pub fn hessian_diagonal(p: &Problem, state: &SolveState) -> Result<(Vec<f64>, Vec<f64>)> {
    state.check(&p.chart)?;
    let c = &p.chart;
    let x = extend(c, state);
    let nc = c.len();
    let mut du = vec![0.0; nc];
    let mut df = vec![0.0; nc];
    for j in 0..nc {
        du[j] = (-2.0 * p.lambda * c.ext_weights[j] * x.exp2u[j]).max(0.0);
    }
    for (k, t) in c.triangles.iter().enumerate() {
        let el = element(p, k, &x);
        for m in 0..3 {
            let i = t.vertices[m];
            if i >= nc {
                continue;
            }
            du[i] += el.area * (t.gx[m] * t.gx[m] + t.gy[m] * t.gy[m]) + 4.0 / 9.0 * el.area * el.e / el.rho2 * el.b.norm_sqr();
            df[i] += 2.0 * el.area * el.e * el.rho2 * t.dbar_coeff(m).norm_sqr();
        }
    }
    for j in 0..nc {
        du[j] /= c.weights[j];
        df[j] /= c.weights[j];
    }
    Ok((du, df))
}

/// `(𝒟̂, vol)`: the functional without its volume term, and `∫ e^{2u} dμ`.
pub fn constrained_functional(p: &Problem, state: &SolveState) -> Result<(f64, f64)> {
    let e = functional(p, state)?;
    let x = extend(&p.chart, state);
    let vol = p.chart.ext_weights.iter().zip(&x.exp2u).map(|(w, e)| w * e).sum();
    Ok((e.total - e.volume, vol))
}

/// Density of `∂ vol / ∂u`.
pub fn volume_gradient(p: &Problem, state: &SolveState) -> Result<Vec<f64>> {
    state.check(&p.chart)?;
    let x = extend(&p.chart, state);
    let raw: Vec<f64> = p.chart.ext_weights.iter().zip(&x.exp2u).map(|(w, e)| 2.0 * w * e).collect();
    Ok(densities(&p.chart, &raw))
}

/// `𝒟(state + s·d) − 𝒟(state)` evaluated term by term without forming the
/// two totals, so that tiny decrements are resolved.
pub fn functional_change(p: &Problem, state: &SolveState, d: &Perturbation, s: f64) -> Result<f64> {
    let next = state.offset(d, s);
    next.check(&p.chart)?;
    state.check(&p.chart)?;
    let c = &p.chart;
    let x = extend(c, state);
    let xn = extend(c, &next);
    let dv: Vec<f64> = xn.u.iter().zip(&x.u).map(|(a, b)| a - b).collect();
    let mut total = 0.0;
    for i in 0..c.ext_len() {
        let w = c.ext_weights[i];
        total += w * (c.ext_curvature[i] * dv[i] - 0.5 * p.lambda * x.exp2u[i] * (2.0 * dv[i]).exp_m1());
    }
    for (k, t) in c.triangles.iter().enumerate() {
        let (e0, e1) = (element(p, k, &x), element(p, k, &xn));
        let (gx0, gy0) = t.grad(&x.u);
        let (dx, dy) = t.grad(&dv);
        total += 0.5 * t.area * (dx * (2.0 * gx0 + dx) + dy * (2.0 * gy0 + dy));
        let db = e1.b - e0.b;
        let dnorm = (db * (e1.b + e0.b).conj()).re;
        let growth = (2.0 * t.mean(&dv)).exp_m1();
        total += t.area * e0.e / e0.rho2 * (growth * e1.b.norm_sqr() + dnorm);
    }
    if let Some(src) = &p.source {
        for j in 0..c.len() {
            if c.is_free(j) {
                let (du, df) = (next.u[j] - state.u[j], next.f[j] - state.f[j]);
                total -= c.weights[j] * (src.s_u[j] * du + (src.s_f[j].conj() * df).re);
            }
        }
    }
    Ok(total)
}

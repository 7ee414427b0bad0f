use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::fields::{conjugate_dual, pointwise_norm_sq, total_beta};
use crate::geometry::{build_bolza_octagon, build_flat_torus_patch, build_hyperbolic_disk_patch};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn disk(n: usize) -> Arc<Chart> {
    Arc::new(build_hyperbolic_disk_patch(n, 0.5).unwrap())
}

/// Smooth random state: a few low trigonometric modes, zero on Dirichlet nodes.
fn random_state(chart: &Chart, rng: &mut ChaCha8Rng, amp: f64) -> SolveState {
    let modes: Vec<(f64, f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(1..3) as f64,
                rng.gen_range(1..3) as f64,
                rng.gen_range(0.0..6.0),
            )
        })
        .collect();
    let mut s = SolveState::zero(chart);
    for (j, z) in chart.nodes.iter().enumerate() {
        if !chart.is_free(j) {
            continue;
        }
        for &(a, b, kx, ky, ph) in &modes {
            let arg = 2.0 * PI * (kx * z.re + ky * z.im) + ph;
            s.u[j] += amp * a * arg.sin();
            s.f[j] += c(b * arg.cos(), a * (arg * 0.5).sin()) * amp;
        }
    }
    s
}

fn random_beta(chart: &Chart, rng: &mut ChaCha8Rng, amp: f64) -> BetaClass {
    let (a, b) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let w = WeightedField::from_fn(chart, "b", Weight::BETA, |z| c(a + 0.3 * (2.0 * PI * z.re).sin(), b * (2.0 * PI * z.im).cos()) * amp);
    BetaClass::new(w, "random").unwrap()
}

#[test]
fn params_enforce_lambda() {
    let p = Params::new(-1, 0.5).unwrap();
    assert_eq!(p.lambda, -0.75);
    assert!(p.require_convex().is_ok());
    assert!(Params::new(-1, 1.0).unwrap().require_convex().is_err());
    assert!(Params::new(2, 0.0).is_err());
    assert!(Params::new(0, 0.0).unwrap().with_target_volume(-1.0).is_err());
}

#[test]
fn reference_value_is_half_area() {
    let ch = disk(32);
    let p = Problem::new(ch.clone(), BetaClass::zero(&ch), -1.0).unwrap();
    let e = functional(&p, &SolveState::zero(&ch)).unwrap();
    assert!((e.total - ch.area() / 2.0).abs() < 1e-12 * ch.area());
    let sum = e.dirichlet + e.linear + e.volume + e.coupling + e.source + e.constant;
    assert!((e.total - sum).abs() <= 1e-12 * e.total.abs());
}

#[test]
fn normalization_zeroes_reference_and_cancels_in_differences() {
    let ch = disk(24);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let beta = random_beta(&ch, &mut rng, 0.3);
    let p = Problem::new(ch.clone(), beta.clone(), -0.6).unwrap().normalized();
    assert!(functional(&p, &SolveState::zero(&ch)).unwrap().total.abs() < 1e-13);
    let (s1, s2) = (random_state(&ch, &mut rng, 0.2), random_state(&ch, &mut rng, 0.2));
    let q = p.clone().with_constant(17.0);
    let d1 = functional(&p, &s1).unwrap().total - functional(&p, &s2).unwrap().total;
    let d2 = functional(&q, &s1).unwrap().total - functional(&q, &s2).unwrap().total;
    assert!((d1 - d2).abs() < 1e-13 * (1.0 + d1.abs()) * 20.0);
}

/// Second, loop-by-loop coding of the discrete integrand.
fn oracle_value(ch: &Chart, b: &[Complex64], lambda: f64, s: &SolveState) -> f64 {
    let ue = ch.extend_real(&s.u);
    let fe = ch.extend_complex(&s.f, Weight::VECTOR);
    let be = ch.extend_complex(b, Weight::BETA);
    let mut total = 0.0;
    for i in 0..ch.ext_len() {
        total += ch.ext_weights[i] * (ch.ext_curvature[i] * ue[i] - 0.5 * lambda * (2.0 * ue[i]).exp());
    }
    for t in &ch.triangles {
        let [a, bb, cc] = t.vertices;
        let (mut ux, mut uy) = (0.0, 0.0);
        let (mut fx, mut fy) = (c(0.0, 0.0), c(0.0, 0.0));
        for (m, &v) in [a, bb, cc].iter().enumerate() {
            ux += t.gx[m] * ue[v];
            uy += t.gy[m] * ue[v];
            fx += fe[v] * t.gx[m];
            fy += fe[v] * t.gy[m];
        }
        let dbar = (fx + c(0.0, 1.0) * fy) * 0.5;
        let bt = (be[a] + be[bb] + be[cc]) / 3.0 + dbar * t.rho.powi(2);
        let ubar = (ue[a] + ue[bb] + ue[cc]) / 3.0;
        total += t.area * (0.5 * (ux * ux + uy * uy) + (2.0 * ubar).exp() * bt.norm_sqr() / t.rho.powi(2));
    }
    total
}

#[test]
fn functional_matches_independent_integrand() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for ch in [disk(24), Arc::new(build_flat_torus_patch(16).unwrap()), Arc::new(build_bolza_octagon(32).unwrap())] {
        let beta = random_beta(&ch, &mut rng, 0.2);
        let s = random_state(&ch, &mut rng, 0.1);
        let p = Problem::new(ch.clone(), beta.clone(), -0.8).unwrap();
        let got = functional(&p, &s).unwrap().total;
        let want = oracle_value(&ch, &beta.b.values, -0.8, &s);
        assert!((got - want).abs() < 1e-12 * want.abs().max(1.0), "{got} vs {want}");
    }
}

#[test]
fn trivial_disk_state_is_critical() {
    let ch = disk(32);
    let p = Problem::new(ch.clone(), BetaClass::zero(&ch), -1.0).unwrap();
    let g = gradient(&p, &SolveState::zero(&ch)).unwrap();
    assert!(g.max_abs() < 1e-14);
}

#[test]
fn torus_constant_state_has_positive_residual() {
    let ch = Arc::new(build_flat_torus_patch(16).unwrap());
    let p = Problem::new(ch.clone(), BetaClass::zero(&ch), -1.0).unwrap();
    for a in [-2.0, 0.0, 1.5] {
        let mut s = SolveState::zero(&ch);
        s.u.iter_mut().for_each(|u| *u = a);
        let g = gradient(&p, &s).unwrap();
        let want = (2.0 * a).exp();
        assert!(g.v.iter().all(|r| (r - want).abs() < 1e-12 * want));
    }
}

fn directional_check(p: &Problem, s: &SolveState, d: &Perturbation) -> (f64, f64) {
    let w = &p.chart.weights;
    let eps = 1e-4;
    let fd = (functional(p, &s.offset(d, eps)).unwrap().total - functional(p, &s.offset(d, -eps)).unwrap().total) / (2.0 * eps);
    let an = gradient(p, s).unwrap().dot(d, w);
    let e = 1e-3;
    let f0 = functional(p, s).unwrap().total;
    let q_fd = (functional(p, &s.offset(d, e)).unwrap().total - 2.0 * f0 + functional(p, &s.offset(d, -e)).unwrap().total) / (e * e);
    let q = hessian_apply(p, s, d).unwrap().dot(d, w);
    ((fd - an).abs() / an.abs().max(1e-8), (q_fd - q).abs() / q.abs().max(1e-8))
}

#[test]
fn derivatives_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for ch in [disk(24), Arc::new(build_flat_torus_patch(16).unwrap()), Arc::new(build_bolza_octagon(32).unwrap())] {
        for _ in 0..3 {
            let beta = random_beta(&ch, &mut rng, 0.3);
            let p = Problem::new(ch.clone(), beta, -0.7).unwrap();
            let s = random_state(&ch, &mut rng, 0.2);
            let ds = random_state(&ch, &mut rng, 1.0);
            let d = Perturbation { v: ds.u, psi: ds.f };
            let (g, h) = directional_check(&p, &s, &d);
            assert!(g < 1e-6, "{:?} gradient {g}", ch.backend);
            assert!(h < 1e-5, "{:?} hessian {h}", ch.backend);
        }
    }
}

#[test]
fn hessian_is_self_adjoint() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for ch in [disk(24), Arc::new(build_bolza_octagon(32).unwrap())] {
        let p = Problem::new(ch.clone(), random_beta(&ch, &mut rng, 0.3), -0.5).unwrap();
        let s = random_state(&ch, &mut rng, 0.2);
        let (a, b) = (random_state(&ch, &mut rng, 1.0), random_state(&ch, &mut rng, 1.0));
        let (d1, d2) = (Perturbation { v: a.u, psi: a.f }, Perturbation { v: b.u, psi: b.f });
        let w = &ch.weights;
        let x = hessian_apply(&p, &s, &d1).unwrap().dot(&d2, w);
        let y = hessian_apply(&p, &s, &d2).unwrap().dot(&d1, w);
        assert!((x - y).abs() < 1e-11 * x.abs().max(1.0), "{x} {y}");
    }
}

#[test]
fn reference_assembly_is_the_background() {
    let ch = disk(24);
    let p = Problem::new(ch.clone(), BetaClass::zero(&ch), -1.0).unwrap();
    let sol = assemble_solution(&p, SolveState::zero(&ch), Vec::new()).unwrap();
    assert_eq!(sol.rho_h, ch.rho);
    assert!(sol.alpha.values.iter().all(|a| a.is_nan() || a.norm() == 0.0));
    assert!(sol.residuals.r_gauss < 1e-10);
    assert_eq!(sol.residuals.r_codazzi, 0.0);
}

#[test]
fn assembled_alpha_matches_componentwise_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let ch = Arc::new(build_bolza_octagon(32).unwrap());
    let p = Problem::new(ch.clone(), random_beta(&ch, &mut rng, 0.3), -0.5).unwrap();
    let s = random_state(&ch, &mut rng, 0.2);
    let sol = assemble_solution(&p, s.clone(), Vec::new()).unwrap();
    let b = total_beta(&ch, &p.beta, &s.f_field(&ch)).unwrap();
    let dual = conjugate_dual(&b).unwrap();
    let bn = pointwise_norm_sq(&ch, &b);
    for j in 0..ch.len() {
        let want = dual.values[j] * (2.0 * s.u[j]).exp();
        assert!((sol.alpha.values[j] - want).norm() <= 1e-15 * want.norm());
        let r = sol.rho_h[j];
        let ah = sol.alpha.values[j].norm_sqr() / r.powi(4);
        assert!((ah - bn[j]).abs() <= 1e-13 * bn[j].max(1e-300));
    }
    assert!(sol.residuals.r_gauss > 1e-3);
}

#[test]
fn second_fundamental_form_structure() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let ch = disk(24);
    let p = Problem::new(ch.clone(), random_beta(&ch, &mut rng, 0.3), -0.75).unwrap();
    let sol = assemble_solution(&p, random_state(&ch, &mut rng, 0.1), Vec::new()).unwrap();
    let g = second_fundamental_form(&sol, 0.5);
    for j in 0..ch.len() {
        let (a, b) = (g.alpha_zz[j], g.alpha_zbar_zbar[j]);
        assert!(a.re.to_bits() == b.re.to_bits() && a.im.to_bits() == (-b.im).to_bits() || a.is_nan());
        assert_eq!(g.mixed[j] / sol.rho_h[j].powi(2), 0.5);
    }
    let zero =
        assemble_solution(&Problem::new(ch.clone(), BetaClass::zero(&ch), -0.75).unwrap(), SolveState::zero(&ch), Vec::new()).unwrap();
    let g0 = second_fundamental_form(&zero, 0.5);
    assert!(g0.alpha_zz.iter().all(|a| a.is_nan() || a.norm() == 0.0));
}

#[test]
fn constrained_functional_drops_volume_term() {
    let ch = Arc::new(build_bolza_octagon(48).unwrap());
    let p = Problem::new(ch.clone(), BetaClass::zero(&ch), -1.0).unwrap();
    let (dh, vol) = constrained_functional(&p, &SolveState::zero(&ch)).unwrap();
    assert!((vol - 4.0 * PI).abs() < 0.01 * 4.0 * PI);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let s = random_state(&ch, &mut rng, 0.1);
    let e = functional(&p, &s).unwrap();
    let (dh2, vol2) = constrained_functional(&p, &s).unwrap();
    assert_eq!(dh2, e.total - e.volume);
    assert!((e.volume + 0.5 * p.lambda * vol2).abs() < 1e-12 * vol2);
    assert!(dh.is_finite());
}

#[test]
fn recombined_constrained_gradient_matches() {
    // ∇𝒟 = ∇𝒟̂ − (λ/2) ∇vol
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let ch = Arc::new(build_bolza_octagon(32).unwrap());
    let lambda = -0.8;
    let full = Problem::new(ch.clone(), random_beta(&ch, &mut rng, 0.2), lambda).unwrap();
    let hat = full.with_lambda(0.0);
    let s = random_state(&ch, &mut rng, 0.1);
    let (g, gh, gv) = (gradient(&full, &s).unwrap(), gradient(&hat, &s).unwrap(), volume_gradient(&full, &s).unwrap());
    for j in 0..ch.len() {
        let r = gh.v[j] - 0.5 * lambda * gv[j];
        assert!((g.v[j] - r).abs() < 1e-12 * g.v[j].abs().max(1.0));
    }
}

#[test]
fn gauge_shift_is_an_exact_symmetry() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let ch = disk(24);
    let beta = random_beta(&ch, &mut rng, 0.3);
    let psi = random_state(&ch, &mut rng, 0.3).f_field(&ch);
    let p = Problem::new(ch.clone(), beta.clone(), -0.6).unwrap();
    let q = Problem::new(ch.clone(), beta.with_gauge(psi.clone()).unwrap(), -0.6).unwrap();
    let s = random_state(&ch, &mut rng, 0.2);
    let shifted = SolveState { u: s.u.clone(), f: s.f.iter().zip(&psi.values).map(|(a, b)| a - b).collect() };
    let (e1, e2) = (functional(&p, &s).unwrap(), functional(&q, &shifted).unwrap());
    assert!((e1.total - e2.total).abs() < 1e-12 * e1.total.abs());
    let (g1, g2) = (gradient(&p, &s).unwrap(), gradient(&q, &shifted).unwrap());
    let d = Perturbation { v: s.u.clone(), psi: psi.values.clone() };
    let (h1, h2) = (hessian_apply(&p, &s, &d).unwrap(), hessian_apply(&q, &shifted, &d).unwrap());
    let mut diff = g1.clone();
    diff.axpy(-1.0, &g2);
    assert!(diff.max_abs() < 1e-12 * g1.max_abs());
    let mut diff = h1.clone();
    diff.axpy(-1.0, &h2);
    assert!(diff.max_abs() < 1e-12 * h1.max_abs());
    // the normalisation constant moves, differences do not
    assert!((normalization_constant(&p) - normalization_constant(&q)).abs() > 0.0);
}

#[test]
fn guard_and_non_finite_states_are_rejected() {
    let ch = disk(16);
    let p = Problem::new(ch.clone(), BetaClass::zero(&ch), -1.0).unwrap();
    let mut s = SolveState::zero(&ch);
    s.u[0] = 30.0;
    assert!(matches!(functional(&p, &s), Err(crate::CmcError::Diverging { kind: crate::DivergenceKind::Guard, .. })));
    s.u[0] = f64::NAN;
    assert!(matches!(gradient(&p, &s), Err(crate::CmcError::Diverging { kind: crate::DivergenceKind::NonFinite, .. })));
}

#[test]
fn functional_change_matches_totals() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let ch = Arc::new(build_bolza_octagon(32).unwrap());
    let p = Problem::new(ch.clone(), random_beta(&ch, &mut rng, 0.3), -0.5).unwrap();
    let s = random_state(&ch, &mut rng, 0.2);
    let ds = random_state(&ch, &mut rng, 1.0);
    let d = Perturbation { v: ds.u, psi: ds.f };
    for step in [0.3, 1e-3] {
        let direct = functional(&p, &s.offset(&d, step)).unwrap().total - functional(&p, &s).unwrap().total;
        let change = functional_change(&p, &s, &d, step).unwrap();
        assert!((direct - change).abs() < 1e-12 * functional(&p, &s).unwrap().total.abs());
    }
    // linear regime: change / step → directional derivative
    let tiny = 1e-9;
    let slope = gradient(&p, &s).unwrap().dot(&d, &ch.weights);
    let change = functional_change(&p, &s, &d, tiny).unwrap();
    assert!((change / tiny - slope).abs() < 1e-6 * slope.abs());
}

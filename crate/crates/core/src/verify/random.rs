//! Seeded smooth random fields. Every field is a short sum of low
//! trigonometric modes times a chart envelope, so it is resolved on all
//! meshes used in the tests and compatible with the boundary rules.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::donaldson::{Perturbation, SolveState};
use crate::error::Result;
use crate::fields::{bump, BetaClass, Weight, WeightedField};
use crate::geometry::{Backend, Chart};

const MODES: usize = 4;

/// Smooth cutoff adapted to the chart: 1 on the torus, `cos²` vanishing
/// to second order on the disk-patch boundary, and a bump inside the
/// inscribed circle of the octagon (so the field is automorphic).
pub fn envelope(chart: &Chart, z: Complex64) -> f64 {
    match chart.backend {
        Backend::TorusPatch => 1.0,
        Backend::DiskPatch => {
            let r0 = 0.5 * chart.spacing * chart.n as f64;
            let w = |t: f64| (0.5 * PI * (t / r0).clamp(-1.0, 1.0)).cos();
            (w(z.re) * w(z.im)).powi(2)
        }
        Backend::Bolza => {
            let inner = chart.octagon.as_ref().map(|o| (0.5 * o.inradius).tanh()).unwrap_or(0.5);
            bump(z.norm() / (0.95 * inner))
        }
    }
}

fn extent(chart: &Chart) -> f64 {
    match chart.backend {
        Backend::TorusPatch => 1.0,
        _ => chart.spacing * chart.n as f64,
    }
}

struct Modes {
    terms: Vec<(f64, f64, f64, f64)>,
    scale: f64,
}

impl Modes {
    fn draw(rng: &mut ChaCha8Rng, chart: &Chart) -> Modes {
        let terms = (0..MODES)
            .map(|_| {
                let kx = rng.gen_range(-2..=2) as f64;
                let ky = rng.gen_range(-2..=2) as f64;
                (kx, ky, rng.gen_range(0.0..2.0 * PI), rng.gen_range(-1.0..1.0))
            })
            .collect();
        Modes { terms, scale: 2.0 * PI / extent(chart) }
    }

    fn eval(&self, z: Complex64) -> f64 {
        let s: f64 = self.terms.iter().map(|&(kx, ky, ph, c)| c * (self.scale * (kx * z.re + ky * z.im) + ph).cos()).sum();
        s / MODES as f64
    }
}

fn scalar(chart: &Chart, rng: &mut ChaCha8Rng, amp: f64) -> Vec<f64> {
    let m = Modes::draw(rng, chart);
    (0..chart.len()).map(|j| if chart.is_free(j) { amp * m.eval(chart.nodes[j]) * envelope(chart, chart.nodes[j]) } else { 0.0 }).collect()
}

/// Weight `(-1,0)` samples of metric size `amp`.
fn vector(chart: &Chart, rng: &mut ChaCha8Rng, amp: f64) -> Vec<Complex64> {
    let re = scalar(chart, rng, amp);
    let im = scalar(chart, rng, amp);
    (0..chart.len()).map(|j| Complex64::new(re[j], im[j]) / chart.rho[j]).collect()
}

/// Random state with `|u|` and `|F|_g` of order `amp`.
pub fn random_state(chart: &Chart, seed: u64, amp: f64) -> SolveState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    SolveState { u: scalar(chart, &mut rng, amp), f: vector(chart, &mut rng, amp) }
}

/// Random direction of unit order, homogeneous at Dirichlet nodes.
pub fn random_perturbation(chart: &Chart, seed: u64) -> Perturbation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    Perturbation { v: scalar(chart, &mut rng, 1.0), psi: vector(chart, &mut rng, 1.0) }
}

/// Random `(0,2)` representative with `|b|_g` of order `amp`. On the disk
/// patch the envelope is omitted (no boundary condition applies to `b`).
pub fn random_beta(chart: &Chart, seed: u64, amp: f64) -> Result<BetaClass> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5851_f42d_4c95_7f2d);
    let (re, im) = (Modes::draw(&mut rng, chart), Modes::draw(&mut rng, chart));
    let window = |z: Complex64| if chart.backend == Backend::Bolza { envelope(chart, z) } else { 1.0 };
    let values = (0..chart.len())
        .map(|j| {
            let (z, r) = (chart.nodes[j], chart.rho[j]);
            Complex64::new(re.eval(z), im.eval(z)) * (amp * r * r * window(z))
        })
        .collect();
    let b = WeightedField::from_values(chart, "b", Weight::BETA, values)?;
    BetaClass::new(b, &format!("random:{seed}"))
}

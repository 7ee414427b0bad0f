//! Regular hyperbolic octagon with interior
//! angles π/4 and opposite-side pairings (the Bolza surface).
//!
//! Side `k` faces direction `k·π/4`; vertices sit at `k·π/4 + π/8`.
//! Generator `k` translates along direction `k·π/4` by twice the
//! inradius and carries side `k+4` onto side `k`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::mobius::{poincare_factor, Mobius};
use crate::error::{CmcError, Result};

pub const SIDES: usize = 8;
pub const PAIRING_TOL: f64 = 1e-8;

/// A side-pairing isometry of the fundamental octagon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeckTransform {
    pub map: Mobius,
    /// Side carried by the map.
    pub source_side: usize,
    /// Side it lands on.
    pub target_side: usize,
}

/// Euclidean circle carrying a geodesic side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SideCircle {
    pub center: Complex64,
    pub radius: f64,
}

impl SideCircle {
    /// Circle through `p` and `q` orthogonal to the unit circle.
    pub fn through(p: Complex64, q: Complex64) -> SideCircle {
        // 2 Re(c conj(p)) = 1 + |p|^2, same for q.
        let (a11, a12, b1) = (2.0 * p.re, 2.0 * p.im, 1.0 + p.norm_sqr());
        let (a21, a22, b2) = (2.0 * q.re, 2.0 * q.im, 1.0 + q.norm_sqr());
        let det = a11 * a22 - a12 * a21;
        let center = Complex64::new((b1 * a22 - a12 * b2) / det, (a11 * b2 - a21 * b1) / det);
        SideCircle { center, radius: (center.norm_sqr() - 1.0).sqrt() }
    }

    /// Signed amount by which `z` lies on the far side (inside the circle).
    pub fn penetration(&self, z: Complex64) -> f64 {
        self.radius - (z - self.center).norm()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Octagon {
    /// Hyperbolic circumradius.
    pub circumradius: f64,
    /// Hyperbolic distance from the centre to each side.
    pub inradius: f64,
    pub vertices: Vec<Complex64>,
    pub sides: Vec<SideCircle>,
    /// `generators[k]` carries side `(k+4) % 8` onto side `k`.
    pub generators: Vec<DeckTransform>,
}

fn vertex_angle(k: usize) -> f64 {
    k as f64 * PI / 4.0 + PI / 8.0
}

/// Interior angle of the regular octagon with hyperbolic circumradius `r`,
/// measured between the two geodesic arcs meeting at a vertex.
pub fn interior_angle(circumradius: f64) -> f64 {
    let r = (0.5 * circumradius).tanh();
    let v0 = Complex64::from_polar(r, vertex_angle(0));
    let v1 = Complex64::from_polar(r, vertex_angle(1));
    let vm = Complex64::from_polar(r, vertex_angle(7));
    let tangent = |p: Complex64, q: Complex64| {
        let c = SideCircle::through(p, q).center;
        let t = Complex64::new(0.0, 1.0) * (p - c);
        let chord = q - p;
        if t.re * chord.re + t.im * chord.im >= 0.0 {
            t
        } else {
            -t
        }
    };
    let t1 = tangent(v0, v1);
    let t2 = tangent(v0, vm);
    let cos = (t1.re * t2.re + t1.im * t2.im) / (t1.norm() * t2.norm());
    cos.clamp(-1.0, 1.0).acos()
}

impl Octagon {
    /// Solves the closing condition (angle sum 2π at the single vertex
    /// class, i.e. interior angle π/4) for the circumradius by bisection.
    pub fn regular_bolza() -> Result<Octagon> {
        let target = PI / 4.0;
        let (mut lo, mut hi) = (0.1_f64, 6.0_f64);
        if !(interior_angle(lo) > target && interior_angle(hi) < target) {
            return Err(CmcError::InvalidChart("octagon closing condition not bracketed".into()));
        }
        while hi - lo > 1e-13 {
            let mid = 0.5 * (lo + hi);
            if interior_angle(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let circumradius = 0.5 * (lo + hi);
        let r = (0.5 * circumradius).tanh();
        let vertices: Vec<Complex64> = (0..SIDES).map(|k| Complex64::from_polar(r, vertex_angle(k))).collect();
        // side k joins vertices k-1 and k
        let sides: Vec<SideCircle> = (0..SIDES).map(|k| SideCircle::through(vertices[(k + SIDES - 1) % SIDES], vertices[k])).collect();
        let mid = sides[0].center.norm() - sides[0].radius;
        let inradius = 2.0 * mid.atanh();
        let generators = (0..SIDES)
            .map(|k| DeckTransform {
                map: Mobius::translation(k as f64 * PI / 4.0, 2.0 * inradius),
                source_side: (k + 4) % SIDES,
                target_side: k,
            })
            .collect();
        Ok(Octagon { circumradius, inradius, vertices, sides, generators })
    }

    pub fn euclidean_circumradius(&self) -> f64 {
        (0.5 * self.circumradius).tanh()
    }

    pub fn contains(&self, z: Complex64) -> bool {
        z.norm_sqr() < 1.0 && self.sides.iter().all(|s| s.penetration(z) <= 0.0)
    }

    /// Maps `z` into the closed octagon by repeatedly crossing back over the
    /// most violated side. Returns the accumulated map.
    pub fn reduce(&self, z: Complex64) -> Option<(Mobius, Vec<usize>)> {
        let mut m = Mobius::identity();
        let mut w = z;
        let mut word = Vec::new();
        for _ in 0..64 {
            let (k, pen) = self.sides.iter().enumerate().map(|(k, s)| (k, s.penetration(w))).fold((0, f64::NEG_INFINITY), |acc, x| {
                if x.1 > acc.1 {
                    x
                } else {
                    acc
                }
            });
            if pen <= 0.0 {
                return Some((m, word));
            }
            // beyond side k: the generator landing on side k+4 undoes the crossing
            let g = (k + 4) % SIDES;
            m = self.generators[g].map.compose(&m);
            w = m.apply(z);
            word.push(g);
        }
        None
    }
}

/// Result of checking one generator.
#[derive(Debug, Clone, Serialize)]
pub struct PairingCheck {
    pub generator: usize,
    /// Max distance of the mapped source side from the target side circle,
    /// including endpoint mismatch.
    pub side_deviation: f64,
    /// Max `| |γ'| ρ(γz)/ρ(z) - 1 |` over samples.
    pub isometry_defect: f64,
    /// Mismatch between `γ_{k+4}` and `γ_k^{-1}`.
    pub inverse_defect: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairingReport {
    pub generators: Vec<PairingCheck>,
    /// Distance of `g0 g1^-1 g2 g3^-1 g0^-1 g1 g2^-1 g3` from `±I`.
    pub relator_defect: f64,
    pub max_defect: f64,
    pub pass: bool,
}

impl PairingReport {
    pub fn first_failure(&self) -> Option<usize> {
        self.generators.iter().find(|g| !g.pass).map(|g| g.generator)
    }
}

pub fn check_pairings(oct: &Octagon) -> PairingReport {
    let mut generators = Vec::with_capacity(SIDES);
    for (k, g) in oct.generators.iter().enumerate() {
        let src = g.source_side;
        let dst = g.target_side;
        let (a0, a1) = (oct.vertices[(src + SIDES - 1) % SIDES], oct.vertices[src]);
        let (b0, b1) = (oct.vertices[(dst + SIDES - 1) % SIDES], oct.vertices[dst]);
        let circle = oct.sides[src];
        let target = oct.sides[dst];
        // sample along the source arc by angle about the circle centre
        let t0 = (a0 - circle.center).arg();
        let mut t1 = (a1 - circle.center).arg();
        if (t1 - t0).abs() > PI {
            t1 += if t1 < t0 { 2.0 * PI } else { -2.0 * PI };
        }
        let mut side_dev: f64 = 0.0;
        let mut iso: f64 = 0.0;
        for s in 0..=32 {
            let t = t0 + (t1 - t0) * s as f64 / 32.0;
            let z = circle.center + Complex64::from_polar(circle.radius, t);
            let w = g.map.apply(z);
            side_dev = side_dev.max(target.penetration(w).abs());
            let defect = g.map.derivative(z).norm() * poincare_factor(w) / poincare_factor(z) - 1.0;
            iso = iso.max(defect.abs());
        }
        // endpoints land on the endpoints (orientation reversing along the arc)
        let e0 = g.map.apply(a0);
        let e1 = g.map.apply(a1);
        let ends = ((e0 - b1).norm() + (e1 - b0).norm()).min((e0 - b0).norm() + (e1 - b1).norm());
        side_dev = side_dev.max(ends);
        let partner = &oct.generators[(k + 4) % SIDES];
        let inverse_defect = g.map.compose(&partner.map).distance_from_identity();
        let pass = side_dev < PAIRING_TOL && iso < PAIRING_TOL && inverse_defect < PAIRING_TOL;
        generators.push(PairingCheck { generator: k, side_deviation: side_dev, isometry_defect: iso, inverse_defect, pass });
    }
    let g = |k: usize| oct.generators[k].map;
    let gi = |k: usize| oct.generators[k].map.inverse();
    let word = [g(0), gi(1), g(2), gi(3), gi(0), g(1), gi(2), g(3)];
    let relator = word.iter().fold(Mobius::identity(), |acc, m| acc.compose(m));
    let relator_defect = relator.distance_from_identity();
    let max_defect =
        generators.iter().map(|c| c.side_deviation.max(c.isometry_defect).max(c.inverse_defect)).fold(relator_defect, f64::max);
    let pass = generators.iter().all(|c| c.pass) && relator_defect < PAIRING_TOL;
    PairingReport { generators, relator_defect, max_defect, pass }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closing_condition_matches_hyperbolic_trigonometry() {
        let oct = Octagon::regular_bolza().unwrap();
        // cosh R = cot(π/8)^2 for the regular octagon with angles π/4
        let cot = 1.0 / (PI / 8.0).tan();
        assert!((oct.circumradius.cosh() - cot * cot).abs() < 1e-9);
        // tanh d = tanh R cos(π/8)
        let d = (oct.circumradius.tanh() * (PI / 8.0).cos()).atanh();
        assert!((oct.inradius - d).abs() < 1e-9);
    }

    #[test]
    fn pairings_and_relator_hold() {
        let oct = Octagon::regular_bolza().unwrap();
        let report = check_pairings(&oct);
        assert!(report.pass, "{report:?}");
        assert!(report.max_defect < 1e-10);
    }

    #[test]
    fn perturbed_generator_is_named() {
        let mut oct = Octagon::regular_bolza().unwrap();
        oct.generators[3].map = Mobius::translation(3.0 * PI / 4.0 + 1e-3, 2.0 * oct.inradius);
        let report = check_pairings(&oct);
        assert!(!report.pass);
        assert_eq!(report.first_failure(), Some(3));
    }

    #[test]
    fn reduction_lands_inside() {
        let oct = Octagon::regular_bolza().unwrap();
        for k in 0..200 {
            let z = Complex64::from_polar(0.6 + 0.3 * (k as f64 * 0.37).sin().abs(), k as f64 * 0.71);
            let (m, _) = oct.reduce(z).expect("reducible");
            let w = m.apply(z);
            assert!(oct.sides.iter().all(|s| s.penetration(w) <= 1e-12));
        }
    }
}

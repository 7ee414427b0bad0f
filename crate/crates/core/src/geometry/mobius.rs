//! Disk-model Möbius transformations in SU(1,1) normalisation.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// `z -> (a z + b) / (c z + d)`, stored with `|a|^2 - |b|^2 = 1` for disk
/// automorphisms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mobius {
    pub a: Complex64,
    pub b: Complex64,
    pub c: Complex64,
    pub d: Complex64,
}

impl Mobius {
    pub fn identity() -> Self {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        Mobius { a: one, b: zero, c: zero, d: one }
    }

    /// Hyperbolic translation by distance `length` along the diameter at
    /// angle `theta`, moving the origin towards `e^{i theta}`.
    pub fn translation(theta: f64, length: f64) -> Self {
        let ch = (0.5 * length).cosh();
        let sh = (0.5 * length).sinh();
        let b = Complex64::from_polar(sh, theta);
        Mobius { a: Complex64::new(ch, 0.0), b, c: b.conj(), d: Complex64::new(ch, 0.0) }
    }

    pub fn rotation(theta: f64) -> Self {
        let h = Complex64::from_polar(1.0, 0.5 * theta);
        Mobius { a: h, b: Complex64::new(0.0, 0.0), c: Complex64::new(0.0, 0.0), d: h.conj() }
    }

    pub fn apply(&self, z: Complex64) -> Complex64 {
        (self.a * z + self.b) / (self.c * z + self.d)
    }

    /// Complex derivative at `z`; assumes unit determinant.
    pub fn derivative(&self, z: Complex64) -> Complex64 {
        let den = self.c * z + self.d;
        self.det() / (den * den)
    }

    pub fn det(&self) -> Complex64 {
        self.a * self.d - self.b * self.c
    }

    /// `self ∘ other`
    pub fn compose(&self, other: &Mobius) -> Mobius {
        Mobius {
            a: self.a * other.a + self.b * other.c,
            b: self.a * other.b + self.b * other.d,
            c: self.c * other.a + self.d * other.c,
            d: self.c * other.b + self.d * other.d,
        }
    }

    pub fn inverse(&self) -> Mobius {
        let det = self.det();
        Mobius { a: self.d / det, b: -self.b / det, c: -self.c / det, d: self.a / det }
    }

    /// `|a|^2 - |b|^2`, equal to one for a normalised disk automorphism.
    pub fn disk_norm(&self) -> f64 {
        self.a.norm_sqr() - self.b.norm_sqr()
    }

    /// Distance of the coefficient matrix from `±I` after determinant
    /// normalisation (max-abs entry norm).
    pub fn distance_from_identity(&self) -> f64 {
        let s = self.det().sqrt();
        let m = [self.a / s, self.b / s, self.c / s, self.d / s];
        let one = Complex64::new(1.0, 0.0);
        let plus = [(m[0] - one).norm(), m[1].norm(), m[2].norm(), (m[3] - one).norm()];
        let minus = [(m[0] + one).norm(), m[1].norm(), m[2].norm(), (m[3] + one).norm()];
        let pmax = plus.iter().cloned().fold(0.0, f64::max);
        let mmax = minus.iter().cloned().fold(0.0, f64::max);
        pmax.min(mmax)
    }
}

/// Poincaré disk conformal factor `2 / (1 - |z|^2)`.
pub fn poincare_factor(z: Complex64) -> f64 {
    2.0 / (1.0 - z.norm_sqr())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn translation_is_an_isometry() {
        let g = Mobius::translation(0.3, 1.7);
        assert!((g.disk_norm() - 1.0).abs() < 1e-14);
        for k in 0..10 {
            let z = Complex64::from_polar(0.07 * k as f64, 0.9 * k as f64);
            let defect = g.derivative(z).norm() * poincare_factor(g.apply(z)) / poincare_factor(z);
            assert!((defect - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn compose_with_inverse_is_identity() {
        let g = Mobius::translation(1.1, 0.8).compose(&Mobius::rotation(0.4));
        assert!(g.compose(&g.inverse()).distance_from_identity() < 1e-14);
        let z = Complex64::new(0.2, -0.3);
        assert!((g.inverse().apply(g.apply(z)) - z).norm() < 1e-14);
    }
}

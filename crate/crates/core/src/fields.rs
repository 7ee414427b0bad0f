//! Weighted tensor fields on a chart and the nodal complex calculus.
//!
//! A field of weight `(p, q)` stores the coefficient of `dz^p dz̄^q`
//! (negative powers meaning vector slots), e.g. `F` of `f = F ∂_z` has
//! weight `(-1, 0)` and `b` of `β = b dz̄²` has weight `(0, 2)`. With
//! `g_{zz̄} = ρ²` the pointwise norm is `|x|²_g = ρ^{-2(p+q)} |x|²`.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{CmcError, Result};
use crate::geometry::archive::Reader;
use crate::geometry::stencil::{axis_derivative, Axis};
use crate::geometry::{Backend, Chart};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Weight {
    pub p: i32,
    pub q: i32,
}

impl Weight {
    pub const SCALAR: Weight = Weight { p: 0, q: 0 };
    /// `(1,0)` vector field component.
    pub const VECTOR: Weight = Weight { p: -1, q: 0 };
    pub const ONE_FORM: Weight = Weight { p: 0, q: 1 };
    pub const BETA: Weight = Weight { p: 0, q: 2 };
    pub const ALPHA: Weight = Weight { p: 2, q: 0 };

    pub fn new(p: i32, q: i32) -> Weight {
        Weight { p, q }
    }

    fn norm_power(self) -> i32 {
        -2 * (self.p + self.q)
    }
}

impl fmt::Display for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.p, self.q)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedField {
    pub name: String,
    pub weight: Weight,
    /// Real-typed fields keep a zero imaginary part.
    pub real: bool,
    pub chart_hash: u64,
    pub values: Vec<Complex64>,
}

impl WeightedField {
    pub fn from_values(chart: &Chart, name: &str, weight: Weight, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != chart.len() {
            return Err(CmcError::FieldMismatch(format!("field '{name}' has {} samples, chart has {}", values.len(), chart.len())));
        }
        Ok(WeightedField { name: name.into(), weight, real: false, chart_hash: chart.content_hash(), values })
    }

    pub fn real(chart: &Chart, name: &str, values: &[f64]) -> Result<Self> {
        let mut f = Self::from_values(chart, name, Weight::SCALAR, values.iter().map(|&x| Complex64::new(x, 0.0)).collect())?;
        f.real = true;
        Ok(f)
    }

    pub fn from_fn(chart: &Chart, name: &str, weight: Weight, f: impl Fn(Complex64) -> Complex64) -> Self {
        let values = chart.nodes.iter().map(|&z| f(z)).collect();
        WeightedField { name: name.into(), weight, real: false, chart_hash: chart.content_hash(), values }
    }

    pub fn zeros(chart: &Chart, name: &str, weight: Weight) -> Self {
        Self::from_fn(chart, name, weight, |_| Complex64::new(0.0, 0.0))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn re(&self) -> Vec<f64> {
        self.values.iter().map(|c| c.re).collect()
    }

    pub fn expect_weight(&self, w: Weight) -> Result<()> {
        if self.weight != w {
            return Err(CmcError::WeightMismatch { expected: w, found: self.weight });
        }
        Ok(())
    }

    pub fn check_chart(&self, chart: &Chart) -> Result<()> {
        if self.values.len() != chart.len() || self.chart_hash != chart.content_hash() {
            return Err(CmcError::FieldMismatch(format!("field '{}' belongs to a different chart", self.name)));
        }
        Ok(())
    }

    pub fn map(&self, name: &str, f: impl Fn(Complex64) -> Complex64) -> Self {
        WeightedField {
            name: name.into(),
            weight: self.weight,
            real: false,
            chart_hash: self.chart_hash,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scaled(&self, t: f64) -> Self {
        let mut out = self.map(&self.name, |v| v * t);
        out.real = self.real;
        out
    }
}

/// Representative `b` of a `(0,2)` class, optionally modified by the gauge
/// term `ρ² ∂_z̄ ψ₀` (kept symbolic so the modification is exact in the
/// discrete operators).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaClass {
    pub b: WeightedField,
    pub gauge: Option<WeightedField>,
    pub provenance: String,
}

impl BetaClass {
    pub fn new(b: WeightedField, provenance: &str) -> Result<Self> {
        b.expect_weight(Weight::BETA)?;
        Ok(BetaClass { b, gauge: None, provenance: provenance.into() })
    }

    pub fn zero(chart: &Chart) -> Self {
        BetaClass { b: WeightedField::zeros(chart, "b", Weight::BETA), gauge: None, provenance: "zero".into() }
    }

    /// Same class, representative shifted by `ρ² ∂_z̄ ψ₀`.
    pub fn with_gauge(mut self, psi0: WeightedField) -> Result<Self> {
        psi0.expect_weight(Weight::VECTOR)?;
        self.provenance = format!("{} + gauge", self.provenance);
        self.gauge = Some(match self.gauge.take() {
            Some(g) => {
                let vals = g.values.iter().zip(&psi0.values).map(|(a, b)| a + b).collect();
                WeightedField { values: vals, ..g }
            }
            None => psi0,
        });
        Ok(self)
    }

    /// `t·β`, scaling the representative and its gauge part.
    pub fn scaled(&self, t: f64) -> Self {
        BetaClass {
            b: self.b.scaled(t), gauge: self.gauge.as_ref().map(|g| g.scaled(t)), provenance: format!("{} × {t}", self.provenance)
        }
    }

    pub fn is_zero(&self) -> bool {
        self.b.values.iter().all(|v| *v == Complex64::new(0.0, 0.0))
            && self.gauge.as_ref().is_none_or(|g| g.values.iter().all(|v| *v == Complex64::new(0.0, 0.0)))
    }
}

/// Radius (Euclidean, in the disk) of the bump carrying the octagon class
/// representatives; well inside the inscribed circle.
pub const BASIS_BUMP_RADIUS: f64 = 0.55;

/// Smooth bump `exp(1 − 1/(1 − s²))` on `s < 1`.
pub fn bump(s: f64) -> f64 {
    if s >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    }
}

/// Representative `b = coeff · χ(|z|/r) ρ² z̄^{2k}` of a `(0,2)` class on
/// the octagon, `k ∈ {0, 1, 2}`. Odd powers are omitted: the hyperelliptic
/// involution `z ↦ -z` makes them pair trivially with the even
/// holomorphic quadratic differentials.
pub fn bolza_basis(chart: &Chart, k: usize, coeff: Complex64) -> Result<BetaClass> {
    if chart.backend != Backend::Bolza {
        return Err(CmcError::InvalidChart("class basis is defined on the octagon chart".into()));
    }
    if k > 2 {
        return Err(CmcError::InvalidParams(format!("basis index {k} out of range 0..=2")));
    }
    let b = WeightedField::from_fn(chart, &format!("basis{k}"), Weight::BETA, |z| {
        let r = 2.0 / (1.0 - z.norm_sqr());
        coeff * bump(z.norm() / BASIS_BUMP_RADIUS) * r * r * z.conj().powi(2 * k as i32)
    });
    BetaClass::new(b, &format!("basis:{k}:{coeff}"))
}

struct Spectral {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Spectral {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Spectral { n, fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n) }
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let n = self.n;
        let fft = if inverse { &self.inv } else { &self.fwd };
        for row in data.chunks_mut(n) {
            fft.process(row);
        }
        let mut col = vec![Complex64::new(0.0, 0.0); n];
        for i in 0..n {
            for j in 0..n {
                col[j] = data[i + n * j];
            }
            fft.process(&mut col);
            for j in 0..n {
                data[i + n * j] = col[j];
            }
        }
        if inverse {
            let s = 1.0 / (n * n) as f64;
            data.iter_mut().for_each(|v| *v *= s);
        }
    }

    /// Signed wavenumber of bin `k`; `None` for the Nyquist bin.
    fn wavenumber(&self, k: usize) -> Option<f64> {
        let n = self.n;
        if 2 * k == n {
            None
        } else if 2 * k < n {
            Some(k as f64)
        } else {
            Some(k as f64 - n as f64)
        }
    }

    /// Applies the symbol `σ(kx, ky)` (wavenumbers in units of 2π).
    fn apply(&self, values: &[Complex64], symbol: impl Fn(Option<f64>, Option<f64>, f64, f64) -> Complex64) -> Vec<Complex64> {
        let n = self.n;
        let mut data = values.to_vec();
        self.transform(&mut data, false);
        for j in 0..n {
            for i in 0..n {
                let (kx, ky) = (self.wavenumber(i), self.wavenumber(j));
                let nyq = n as f64 / 2.0;
                let fx = kx.unwrap_or(nyq);
                let fy = ky.unwrap_or(nyq);
                data[i + n * j] *= symbol(kx, ky, fx, fy);
            }
        }
        self.transform(&mut data, true);
        data
    }
}

fn two_pi() -> f64 {
    2.0 * std::f64::consts::PI
}

/// Spectral `∂_z` on the periodic unit square (Nyquist modes dropped).
fn spectral_dz(chart: &Chart, v: &[Complex64], bar: bool) -> Vec<Complex64> {
    let sp = Spectral::new(chart.n);
    let sign = if bar { 1.0 } else { -1.0 };
    sp.apply(v, |kx, ky, _, _| {
        let dx = kx.map_or(Complex64::new(0.0, 0.0), |k| Complex64::new(0.0, two_pi() * k));
        let dy = ky.map_or(Complex64::new(0.0, 0.0), |k| Complex64::new(0.0, two_pi() * k));
        0.5 * (dx + Complex64::new(0.0, sign) * dy)
    })
}

/// Spectral `∂²_x + ∂²_y` on the periodic unit square.
pub fn spectral_laplacian(chart: &Chart, v: &[Complex64]) -> Vec<Complex64> {
    let sp = Spectral::new(chart.n);
    sp.apply(v, |_, _, fx, fy| Complex64::new(-(two_pi() * two_pi()) * (fx * fx + fy * fy), 0.0))
}

fn wirtinger(chart: &Chart, field: &WeightedField, bar: bool) -> Vec<Complex64> {
    if chart.backend == Backend::TorusPatch {
        return spectral_dz(chart, &field.values, bar);
    }
    let ext = chart.extend_complex(&field.values, field.weight);
    let dx = axis_derivative(chart, &ext, Axis::X, 1);
    let dy = axis_derivative(chart, &ext, Axis::Y, 1);
    let i = Complex64::new(0.0, if bar { 1.0 } else { -1.0 });
    dx.iter().zip(&dy).map(|(a, b)| 0.5 * (a + i * b)).collect()
}

fn derivative_field(chart: &Chart, field: &WeightedField, bar: bool) -> Result<WeightedField> {
    field.check_chart(chart)?;
    let mut values = wirtinger(chart, field, bar);
    for (j, v) in values.iter_mut().enumerate() {
        if !chart.is_free(j) {
            *v = Complex64::new(f64::NAN, f64::NAN);
        }
    }
    let weight = if bar { Weight::new(field.weight.p, field.weight.q + 1) } else { Weight::new(field.weight.p + 1, field.weight.q) };
    let name = format!("{}_{}", if bar { "dzbar" } else { "dz" }, field.name);
    Ok(WeightedField { name, weight, real: false, chart_hash: field.chart_hash, values })
}

/// `∂_z = ½(∂_x − i∂_y)`; Dirichlet boundary nodes are NaN.
pub fn d_z(chart: &Chart, field: &WeightedField) -> Result<WeightedField> {
    derivative_field(chart, field, false)
}

/// `∂_z̄ = ½(∂_x + i∂_y)`; Dirichlet boundary nodes are NaN.
pub fn d_zbar(chart: &Chart, field: &WeightedField) -> Result<WeightedField> {
    derivative_field(chart, field, true)
}

/// Adjoint of `d_zbar` under the plain quadrature pairing
/// `Σ w x conj(y)` on the flat torus, i.e. `-∂_z`.
pub fn d_zbar_adjoint(chart: &Chart, field: &WeightedField) -> Result<WeightedField> {
    if chart.backend != Backend::TorusPatch || chart.weights.iter().any(|w| *w != chart.weights[0]) {
        return Err(CmcError::InvalidChart("d_zbar_adjoint requires a uniformly weighted periodic chart".into()));
    }
    let dz = d_z(chart, field)?;
    let weight = Weight::new(field.weight.p, field.weight.q - 1);
    Ok(WeightedField { weight, ..dz.map(&format!("dzbar_adj_{}", field.name), |v| -v) })
}

/// `B = b + ρ² ∂_z̄ (F + ψ₀)`, the total `(0,2)` coefficient.
pub fn total_beta(chart: &Chart, beta: &BetaClass, f: &WeightedField) -> Result<WeightedField> {
    f.expect_weight(Weight::VECTOR)?;
    beta.b.expect_weight(Weight::BETA)?;
    let mut shifted = f.clone();
    if let Some(g) = &beta.gauge {
        shifted.values.iter_mut().zip(&g.values).for_each(|(a, b)| *a += b);
    }
    let db = d_zbar(chart, &shifted)?;
    let values = beta.b.values.iter().zip(&db.values).zip(&chart.rho).map(|((b, d), r)| b + d * (r * r)).collect();
    let out = WeightedField { name: "B".into(), weight: Weight::BETA, real: false, chart_hash: f.chart_hash, values };
    debug_assert_eq!(out.weight, Weight::new(db.weight.p + 1, db.weight.q + 1));
    Ok(out)
}

/// `|x|²_g = ρ^{-2(p+q)} |x|²` per node.
pub fn pointwise_norm_sq(chart: &Chart, field: &WeightedField) -> Vec<f64> {
    let k = field.weight.norm_power();
    field.values.iter().zip(&chart.rho).map(|(v, r)| r.powi(k) * v.norm_sqr()).collect()
}

/// `∫ ρ^{-2(p+q)} x conj(y) dμ`.
pub fn inner_product(chart: &Chart, x: &WeightedField, y: &WeightedField) -> Result<Complex64> {
    if x.weight != y.weight {
        return Err(CmcError::WeightMismatch { expected: x.weight, found: y.weight });
    }
    x.check_chart(chart)?;
    y.check_chart(chart)?;
    let k = x.weight.norm_power();
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..chart.len() {
        let v = x.values[j] * y.values[j].conj();
        if v.is_nan() {
            continue;
        }
        acc += v * (chart.weights[j] * chart.rho[j].powi(k));
    }
    Ok(acc)
}

/// Metric conjugate dual between weights `(0,2)` and `(2,0)`: coefficient
/// conjugation.
pub fn conjugate_dual(field: &WeightedField) -> Result<WeightedField> {
    let weight = match field.weight {
        Weight::BETA => Weight::ALPHA,
        Weight::ALPHA => Weight::BETA,
        other => return Err(CmcError::WeightMismatch { expected: Weight::BETA, found: other }),
    };
    Ok(WeightedField {
        name: format!("{}*", field.name),
        weight,
        real: false,
        chart_hash: field.chart_hash,
        values: field.values.iter().map(|v| v.conj()).collect(),
    })
}

pub const FIELD_MAGIC: &[u8; 8] = b"CMCFIELD";
pub const FIELD_VERSION: u32 = 1;

/// Binary dump: magic, version, name (u32 length + UTF-8), weight `p q`
/// (i32), real flag (u32), chart hash (u64), chart `n` (u64), count (u64),
/// then `count` little-endian `(re, im)` f64 pairs in node order.
pub fn dump_field(field: &WeightedField, chart_n: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(48 + field.name.len() + 16 * field.len());
    out.extend_from_slice(FIELD_MAGIC);
    out.extend_from_slice(&FIELD_VERSION.to_le_bytes());
    out.extend_from_slice(&(field.name.len() as u32).to_le_bytes());
    out.extend_from_slice(field.name.as_bytes());
    out.extend_from_slice(&field.weight.p.to_le_bytes());
    out.extend_from_slice(&field.weight.q.to_le_bytes());
    out.extend_from_slice(&(field.real as u32).to_le_bytes());
    out.extend_from_slice(&field.chart_hash.to_le_bytes());
    out.extend_from_slice(&(chart_n as u64).to_le_bytes());
    out.extend_from_slice(&(field.len() as u64).to_le_bytes());
    for v in &field.values {
        out.extend_from_slice(&v.re.to_le_bytes());
        out.extend_from_slice(&v.im.to_le_bytes());
    }
    out
}

/// Inverse of [`dump_field`]; returns the field and the chart `n`.
pub fn load_field(bytes: &[u8]) -> Result<(WeightedField, usize)> {
    let mut r = Reader { bytes, at: 0 };
    if r.take(8)? != FIELD_MAGIC {
        return Err(CmcError::Format("bad field magic".into()));
    }
    let version = r.u32()?;
    if version != FIELD_VERSION {
        return Err(CmcError::Format(format!("unsupported field version {version}")));
    }
    let len = r.u32()? as usize;
    let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|e| CmcError::Format(e.to_string()))?;
    let weight = Weight::new(r.i32()?, r.i32()?);
    let real = r.u32()? != 0;
    let chart_hash = r.u64()?;
    let n = r.u64()? as usize;
    let count = r.u64()? as usize;
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        values.push(Complex64::new(r.f64()?, r.f64()?));
    }
    if r.at != bytes.len() {
        return Err(CmcError::Format("trailing bytes after field payload".into()));
    }
    Ok((WeightedField { name, weight, real, chart_hash, values }, n))
}

/// Plot-ready CSV: `x,y,re,im` per node, 17 significant digits.
pub fn write_field_csv(chart: &Chart, field: &WeightedField, out: &mut impl Write) -> Result<()> {
    writeln!(out, "x,y,re,im")?;
    for (z, v) in chart.nodes.iter().zip(&field.values) {
        writeln!(out, "{:.16e},{:.16e},{:.16e},{:.16e}", z.re, z.im, v.re, v.im)?;
    }
    Ok(())
}

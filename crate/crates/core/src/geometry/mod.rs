//! Discretised background charts.
//!
//! Every chart is a structured grid of nodes carrying the conformal factor
//! `ρ` of `g = ρ²|dz|²`, split into right triangles for the variational
//! terms. Values outside the fundamental domain (periodic wrap, or images
//! under a side pairing on the octagon) are reached through an *extended*
//! node list: chart nodes first, then ghosts whose values are linear
//! combinations of chart values.

pub mod archive;
pub mod mobius;
pub mod octagon;
pub mod quadrature;
pub mod stencil;

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{CmcError, Result};
use crate::fields::Weight;
use mobius::{poincare_factor, Mobius};
use octagon::{check_pairings, Octagon, PairingReport};
use quadrature::Coverage;
use stencil::{axis_derivative, Axis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    TorusPatch,
    DiskPatch,
    Bolza,
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::TorusPatch => "torus-patch",
            Backend::DiskPatch => "disk-patch",
            Backend::Bolza => "bolza",
        }
    }

    pub fn tag(self) -> u32 {
        match self {
            Backend::TorusPatch => 1,
            Backend::DiskPatch => 2,
            Backend::Bolza => 3,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Backend> {
        match tag {
            1 => Some(Backend::TorusPatch),
            2 => Some(Backend::DiskPatch),
            3 => Some(Backend::Bolza),
            _ => None,
        }
    }

    /// Closed surfaces have no boundary data: periodic or automorphic.
    pub fn is_closed(self) -> bool {
        !matches!(self, Backend::DiskPatch)
    }
}

impl std::str::FromStr for Backend {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "torus-patch" => Ok(Backend::TorusPatch),
            "disk-patch" => Ok(Backend::DiskPatch),
            "bolza" => Ok(Backend::Bolza),
            other => Err(format!("unknown backend '{other}'")),
        }
    }
}

/// How `ρ` was specified; analytic metrics carry their exact curvature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    Flat,
    Poincare,
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeRole {
    Free,
    /// Dirichlet node: value prescribed by the state, never updated.
    Fixed,
}

/// Node outside the fundamental domain whose value is pulled back through
/// a deck transformation and interpolated from chart nodes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Ghost {
    pub z: Complex64,
    /// Image of `z` inside the domain.
    pub image: Complex64,
    pub map: Mobius,
    pub word: Vec<usize>,
    /// `γ'(z)` of the reducing map.
    pub jacobian: Complex64,
    /// Interpolation weights on chart nodes for the value at `image`.
    pub stencil: Vec<(usize, f64)>,
    /// Nonnegative bilinear weights used to hand the ghost's quadrature
    /// mass back to chart nodes.
    pub mass: Vec<(usize, f64)>,
}

impl Ghost {
    /// Factor `γ'^p conj(γ')^q` relating the ghost value to the value at
    /// the image for a field of weight `(p, q)`.
    pub fn factor(&self, w: Weight) -> Complex64 {
        self.jacobian.powi(w.p) * self.jacobian.conj().powi(w.q)
    }
}

/// Linear element with constant gradient coefficients.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Triangle {
    /// Extended node indices.
    pub vertices: [usize; 3],
    pub gx: [f64; 3],
    pub gy: [f64; 3],
    /// Euclidean area of the part inside the fundamental domain.
    pub area: f64,
    /// Conformal factor at the element (vertex mean).
    pub rho: f64,
}

impl Triangle {
    /// Coefficient of vertex `k` in `∂_z̄ = ½(∂_x + i∂_y)`.
    pub fn dbar_coeff(&self, k: usize) -> Complex64 {
        Complex64::new(0.5 * self.gx[k], 0.5 * self.gy[k])
    }

    pub fn dbar(&self, ext: &[Complex64]) -> Complex64 {
        (0..3).map(|k| self.dbar_coeff(k) * ext[self.vertices[k]]).sum()
    }

    pub fn dz(&self, ext: &[Complex64]) -> Complex64 {
        (0..3).map(|k| self.dbar_coeff(k).conj() * ext[self.vertices[k]]).sum()
    }

    pub fn grad(&self, ext: &[f64]) -> (f64, f64) {
        let v = self.vertices.map(|i| ext[i]);
        (self.gx[0] * v[0] + self.gx[1] * v[1] + self.gx[2] * v[2], self.gy[0] * v[0] + self.gy[1] * v[1] + self.gy[2] * v[2])
    }

    pub fn mean(&self, ext: &[f64]) -> f64 {
        (ext[self.vertices[0]] + ext[self.vertices[1]] + ext[self.vertices[2]]) / 3.0
    }

    fn from_points(vertices: [usize; 3], p: [Complex64; 3], area: f64, rho: f64) -> Triangle {
        let twice = (p[1] - p[0]).re * (p[2] - p[0]).im - (p[1] - p[0]).im * (p[2] - p[0]).re;
        let mut gx = [0.0; 3];
        let mut gy = [0.0; 3];
        for k in 0..3 {
            let a = p[(k + 1) % 3];
            let b = p[(k + 2) % 3];
            gx[k] = (a.im - b.im) / twice;
            gy[k] = (b.re - a.re) / twice;
        }
        Triangle { vertices, gx, gy, area, rho }
    }
}

/// Structured index over the extended nodes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Grid {
    pub nx: i64,
    pub ny: i64,
    pub origin: Complex64,
    pub periodic: bool,
    pub cells: Vec<Option<usize>>,
    /// Grid position of each extended node.
    pub position: Vec<(i64, i64)>,
}

impl Grid {
    pub fn ext_at(&self, i: i64, j: i64) -> Option<usize> {
        let (i, j) = if self.periodic {
            (i.rem_euclid(self.nx), j.rem_euclid(self.ny))
        } else if i < 0 || j < 0 || i >= self.nx || j >= self.ny {
            return None;
        } else {
            (i, j)
        };
        self.cells[(i + self.nx * j) as usize]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Chart {
    pub backend: Backend,
    /// Resolution parameter the chart was built with.
    pub n: usize,
    pub spacing: f64,
    pub metric: MetricKind,
    pub nodes: Vec<Complex64>,
    pub rho: Vec<f64>,
    /// Quadrature weights for `dμ = ρ² dx dy` on chart nodes.
    pub weights: Vec<f64>,
    /// Euclidean counterpart of `weights`.
    pub euclidean_weights: Vec<f64>,
    pub roles: Vec<NodeRole>,
    /// Background curvature used by the functional.
    pub curvature: Vec<f64>,
    pub ghosts: Vec<Ghost>,
    pub ext_rho: Vec<f64>,
    /// Lumped weights on the extended nodes, before pull-back.
    pub ext_weights: Vec<f64>,
    pub ext_curvature: Vec<f64>,
    pub triangles: Vec<Triangle>,
    pub grid: Grid,
    pub octagon: Option<Octagon>,
}

const MIN_TORUS_N: usize = 8;
const MIN_DISK_N: usize = 16;
const MIN_BOLZA_N: usize = 32;
const CLIP_DEPTH: u32 = 10;
const GHOST_REACH: i64 = 2;
const STENCIL_POINTS: usize = 20;

/// Unit-square periodic chart with `ρ ≡ 1`.
pub fn build_flat_torus_patch(n: usize) -> Result<Chart> {
    torus(n, MetricKind::Flat, &|_| 1.0)
}

/// Unit-square periodic chart with a user conformal factor (must be
/// periodic for the result to be meaningful).
pub fn build_torus_with_factor(n: usize, factor: &dyn Fn(Complex64) -> f64) -> Result<Chart> {
    torus(n, MetricKind::Sampled, factor)
}

/// Square `[-r0, r0]²` in the Poincaré disk with Dirichlet boundary.
pub fn build_hyperbolic_disk_patch(n: usize, r0: f64) -> Result<Chart> {
    disk(n, r0, MetricKind::Poincare, &poincare_factor)
}

/// Disk-patch geometry with a user conformal factor.
pub fn build_disk_patch_with_factor(n: usize, r0: f64, factor: &dyn Fn(Complex64) -> f64) -> Result<Chart> {
    disk(n, r0, MetricKind::Sampled, factor)
}

fn check_rho(z: Complex64, rho: f64) -> Result<()> {
    if !rho.is_finite() || rho <= 0.0 {
        return Err(CmcError::InvalidChart(format!("conformal factor {rho} at {z} is not positive and finite")));
    }
    Ok(())
}

fn torus(n: usize, metric: MetricKind, factor: &dyn Fn(Complex64) -> f64) -> Result<Chart> {
    if n < MIN_TORUS_N || n % 2 == 1 {
        return Err(CmcError::InvalidChart(format!("resolution too small / odd: torus needs even n >= {MIN_TORUS_N}, got {n}")));
    }
    let h = 1.0 / n as f64;
    let ni = n as i64;
    let mut nodes = Vec::with_capacity(n * n);
    let mut position = Vec::with_capacity(n * n);
    let mut cells = Vec::with_capacity(n * n);
    for j in 0..ni {
        for i in 0..ni {
            cells.push(Some(nodes.len()));
            nodes.push(Complex64::new(i as f64 * h, j as f64 * h));
            position.push((i, j));
        }
    }
    let rho: Vec<f64> = nodes.iter().map(|&z| factor(z)).collect();
    for (z, r) in nodes.iter().zip(&rho) {
        check_rho(*z, *r)?;
    }
    let grid = Grid { nx: ni, ny: ni, origin: Complex64::new(0.0, 0.0), periodic: true, cells, position };
    let mut tris = Vec::with_capacity(2 * n * n);
    let mut rho2 = Vec::with_capacity(2 * n * n);
    for j in 0..ni {
        for i in 0..ni {
            let id = |a: i64, b: i64| grid.ext_at(a, b).unwrap();
            let p = |a: i64, b: i64| Complex64::new(a as f64 * h, b as f64 * h);
            for (v, pts) in square_split(i, j, &id, &p) {
                let r = (rho[v[0]] + rho[v[1]] + rho[v[2]]) / 3.0;
                let integral = if metric == MetricKind::Flat {
                    quadrature::area(&pts)
                } else {
                    quadrature::integrate(&pts, &|z| factor(z).powi(2), 2)
                };
                tris.push(Triangle::from_points(v, pts, quadrature::area(&pts), r));
                rho2.push(integral);
            }
        }
    }
    let roles = vec![NodeRole::Free; nodes.len()];
    finish(Backend::TorusPatch, n, h, metric, nodes, rho.clone(), roles, Vec::new(), rho, tris, rho2, grid, None)
}

/// The two triangles of grid square `(i, j)`, split along the main diagonal.
fn square_split(i: i64, j: i64, id: &dyn Fn(i64, i64) -> usize, p: &dyn Fn(i64, i64) -> Complex64) -> [([usize; 3], [Complex64; 3]); 2] {
    [
        ([id(i, j), id(i + 1, j), id(i + 1, j + 1)], [p(i, j), p(i + 1, j), p(i + 1, j + 1)]),
        ([id(i, j), id(i + 1, j + 1), id(i, j + 1)], [p(i, j), p(i + 1, j + 1), p(i, j + 1)]),
    ]
}

fn disk(n: usize, r0: f64, metric: MetricKind, factor: &dyn Fn(Complex64) -> f64) -> Result<Chart> {
    if !(r0 < 1.0) {
        return Err(CmcError::InvalidChart(format!("metric singular at boundary: r0 = {r0} must be < 1")));
    }
    if !(r0 > 0.0 && r0 <= 0.8) {
        return Err(CmcError::InvalidChart(format!("patch radius r0 = {r0} must lie in (0, 0.8]")));
    }
    if n < MIN_DISK_N {
        return Err(CmcError::InvalidChart(format!("resolution too small: disk patch needs n >= {MIN_DISK_N}")));
    }
    let h = 2.0 * r0 / n as f64;
    let side = n as i64 + 1;
    let origin = Complex64::new(-r0, -r0);
    let at = |i: i64, j: i64| origin + Complex64::new(i as f64 * h, j as f64 * h);
    let keep = |i: i64, j: i64| at(i, j).norm_sqr() < 1.0 - 1e-9;
    let mut nodes = Vec::new();
    let mut position = Vec::new();
    let mut cells = vec![None; (side * side) as usize];
    for j in 0..side {
        for i in 0..side {
            if keep(i, j) {
                cells[(i + side * j) as usize] = Some(nodes.len());
                nodes.push(at(i, j));
                position.push((i, j));
            }
        }
    }
    let grid = Grid { nx: side, ny: side, origin, periodic: false, cells, position };
    let rho: Vec<f64> = nodes.iter().map(|&z| factor(z)).collect();
    for (z, r) in nodes.iter().zip(&rho) {
        check_rho(*z, *r)?;
    }
    let roles: Vec<NodeRole> = grid
        .position
        .iter()
        .map(|&(i, j)| {
            let interior = (-1..=1).all(|di| (-1..=1).all(|dj| grid.ext_at(i + di, j + dj).is_some()));
            if interior {
                NodeRole::Free
            } else {
                NodeRole::Fixed
            }
        })
        .collect();
    let mut tris = Vec::new();
    let mut rho2 = Vec::new();
    for j in 0..side - 1 {
        for i in 0..side - 1 {
            let corners = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
            if corners.iter().any(|&(a, b)| grid.ext_at(a, b).is_none()) {
                continue;
            }
            let id = |a: i64, b: i64| grid.ext_at(a, b).unwrap();
            for (v, pts) in square_split(i, j, &id, &at) {
                let r = (rho[v[0]] + rho[v[1]] + rho[v[2]]) / 3.0;
                let integral = quadrature::integrate(&pts, &|z| factor(z).powi(2), 2);
                tris.push(Triangle::from_points(v, pts, quadrature::area(&pts), r));
                rho2.push(integral);
            }
        }
    }
    finish(Backend::DiskPatch, n, h, metric, nodes, rho.clone(), roles, Vec::new(), rho, tris, rho2, grid, None)
}

/// Genus-2 chart: the regular octagon with angles π/4 in the Poincaré disk,
/// opposite sides glued by the deck transformations.
pub fn build_bolza_octagon(n: usize) -> Result<Chart> {
    if n < MIN_BOLZA_N {
        return Err(CmcError::InvalidChart(format!("resolution too small for octagon mesh: need n >= {MIN_BOLZA_N}, got {n}")));
    }
    let oct = Octagon::regular_bolza()?;
    let report = check_pairings(&oct);
    if let Some(g) = report.first_failure() {
        return Err(CmcError::Pairing { generator: g, detail: "construction-time verification".into() });
    }
    let re = oct.euclidean_circumradius();
    let h = 2.0 * re / (n - 1) as f64;
    let pad: i64 = 4;
    let side = n as i64 + 2 * pad;
    let origin = Complex64::new(-re - pad as f64 * h, -re - pad as f64 * h);
    let at = |i: i64, j: i64| origin + Complex64::new(i as f64 * h, j as f64 * h);
    let in_disk = |i: i64, j: i64| at(i, j).norm_sqr() < 1.0 - 1e-9;

    // chart nodes: strictly inside the octagon
    let mut cells = vec![None; (side * side) as usize];
    let mut nodes = Vec::new();
    let mut position = Vec::new();
    for j in 0..side {
        for i in 0..side {
            if oct.contains(at(i, j)) {
                cells[(i + side * j) as usize] = Some(nodes.len());
                nodes.push(at(i, j));
                position.push((i, j));
            }
        }
    }
    let n_chart = nodes.len();

    let classify = |t: &[Complex64; 3]| {
        if oct.sides.iter().any(|s| t.iter().all(|&z| s.penetration(z) > 0.0)) {
            return Coverage::Outside;
        }
        let clear = oct.sides.iter().all(|s| quadrature::distance_to_triangle(s.center, t) >= s.radius);
        if clear && t.iter().all(|z| z.norm_sqr() < 1.0) {
            Coverage::Inside
        } else {
            Coverage::Straddle
        }
    };
    let level = |z: Complex64| oct.sides.iter().map(|s| -s.penetration(z)).fold(f64::INFINITY, f64::min);
    let rho2_fn = |z: Complex64| poincare_factor(z).powi(2);

    // active triangles and the ghost nodes they and the derivative stencils need
    let mut raw = Vec::new();
    let mut ghost_cells = BTreeSet::new();
    for j in 0..side - 1 {
        for i in 0..side - 1 {
            let corners = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
            if corners.iter().any(|&(a, b)| !in_disk(a, b)) {
                continue;
            }
            let tri_ids = [[(i, j), (i + 1, j), (i + 1, j + 1)], [(i, j), (i + 1, j + 1), (i, j + 1)]];
            for ids in tri_ids {
                let pts = ids.map(|(a, b)| at(a, b));
                let (area, rho2) = quadrature::clipped(&pts, &classify, &level, &rho2_fn, CLIP_DEPTH);
                if area > 0.0 {
                    for &(a, b) in &ids {
                        if cells[(a + side * b) as usize].is_none() {
                            ghost_cells.insert((b, a));
                        }
                    }
                    raw.push((ids, pts, area, rho2));
                }
            }
        }
    }
    for &(i, j) in &position {
        for dj in -GHOST_REACH..=GHOST_REACH {
            for di in -GHOST_REACH..=GHOST_REACH {
                let (a, b) = (i + di, j + dj);
                if a >= 0 && b >= 0 && a < side && b < side && cells[(a + side * b) as usize].is_none() {
                    if !in_disk(a, b) {
                        return Err(CmcError::InvalidChart("ghost collar leaves the unit disk".into()));
                    }
                    ghost_cells.insert((b, a));
                }
            }
        }
    }

    let mut ghosts = Vec::with_capacity(ghost_cells.len());
    for &(j, i) in &ghost_cells {
        let z = at(i, j);
        let (map, word) = oct.reduce(z).ok_or_else(|| CmcError::InvalidChart(format!("ghost {z} could not be reduced")))?;
        let image = map.apply(z);
        let stencil = interpolation_stencil(image, h, &nodes, &cells, side, origin)?;
        let mass = mass_stencil(image, h, &cells, n_chart, side, origin, stencil[0].0);
        cells[(i + side * j) as usize] = Some(n_chart + ghosts.len());
        position.push((i, j));
        ghosts.push(Ghost { z, image, jacobian: map.derivative(z), map, word, stencil, mass });
    }
    let grid = Grid { nx: side, ny: side, origin, periodic: false, cells, position };

    let rho: Vec<f64> = nodes.iter().map(|&z| poincare_factor(z)).collect();
    let mut ext_rho = rho.clone();
    ext_rho.extend(ghosts.iter().map(|g| poincare_factor(g.z)));
    let mut tris = Vec::with_capacity(raw.len());
    let mut rho2s = Vec::with_capacity(raw.len());
    for (ids, pts, area, rho2) in raw {
        let v = ids.map(|(a, b)| grid.ext_at(a, b).unwrap());
        let r = (ext_rho[v[0]] + ext_rho[v[1]] + ext_rho[v[2]]) / 3.0;
        tris.push(Triangle::from_points(v, pts, area, r));
        rho2s.push(rho2);
    }
    let roles = vec![NodeRole::Free; n_chart];
    finish(Backend::Bolza, n, h, MetricKind::Poincare, nodes, rho, roles, ghosts, ext_rho, tris, rho2s, grid, Some(oct))
}

/// Least-squares cubic fit through the nearest chart nodes; returns the
/// weights that evaluate the fit at `p`.
fn interpolation_stencil(
    p: Complex64,
    h: f64,
    nodes: &[Complex64],
    cells: &[Option<usize>],
    side: i64,
    origin: Complex64,
) -> Result<Vec<(usize, f64)>> {
    let ci = ((p.re - origin.re) / h).round() as i64;
    let cj = ((p.im - origin.im) / h).round() as i64;
    let mut near = Vec::new();
    for reach in [4_i64, 6, 8] {
        near.clear();
        for j in cj - reach..=cj + reach {
            for i in ci - reach..=ci + reach {
                if i < 0 || j < 0 || i >= side || j >= side {
                    continue;
                }
                if let Some(k) = cells[(i + side * j) as usize] {
                    if k < nodes.len() {
                        near.push(((nodes[k] - p).norm(), k));
                    }
                }
            }
        }
        if near.len() >= STENCIL_POINTS {
            break;
        }
    }
    if near.len() < STENCIL_POINTS {
        return Err(CmcError::InvalidChart(format!("too few interior nodes near ghost image {p}")));
    }
    near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    near.truncate(STENCIL_POINTS);
    let monomials: [(i32, i32); 10] = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2), (3, 0), (2, 1), (1, 2), (0, 3)];
    let a = DMatrix::from_fn(near.len(), monomials.len(), |r, c| {
        let d = (nodes[near[r].1] - p) / h;
        d.re.powi(monomials[c].0) * d.im.powi(monomials[c].1)
    });
    let pinv = a.pseudo_inverse(1e-12).map_err(|e| CmcError::InvalidChart(format!("interpolation fit failed: {e}")))?;
    let row: DVector<f64> = pinv.row(0).transpose();
    Ok(near.iter().zip(row.iter()).map(|(&(_, k), &w)| (k, w)).collect())
}

/// Bilinear weights of the grid cell containing `p`, restricted to chart
/// nodes and renormalised; falls back to `nearest`.
fn mass_stencil(
    p: Complex64,
    h: f64,
    cells: &[Option<usize>],
    n_chart: usize,
    side: i64,
    origin: Complex64,
    nearest: usize,
) -> Vec<(usize, f64)> {
    let x = (p.re - origin.re) / h;
    let y = (p.im - origin.im) / h;
    let (i0, j0) = (x.floor() as i64, y.floor() as i64);
    let (s, t) = (x - i0 as f64, y - j0 as f64);
    let mut out = Vec::with_capacity(4);
    for (di, dj, w) in [(0, 0, (1.0 - s) * (1.0 - t)), (1, 0, s * (1.0 - t)), (0, 1, (1.0 - s) * t), (1, 1, s * t)] {
        let (i, j) = (i0 + di, j0 + dj);
        if i < 0 || j < 0 || i >= side || j >= side || w <= 0.0 {
            continue;
        }
        if let Some(k) = cells[(i + side * j) as usize].filter(|&k| k < n_chart) {
            out.push((k, w));
        }
    }
    let total: f64 = out.iter().map(|e| e.1).sum();
    if total < 0.25 {
        return vec![(nearest, 1.0)];
    }
    out.iter().map(|&(k, w)| (k, w / total)).collect()
}

#[allow(clippy::too_many_arguments)]
fn finish(
    backend: Backend,
    n: usize,
    spacing: f64,
    metric: MetricKind,
    nodes: Vec<Complex64>,
    rho: Vec<f64>,
    roles: Vec<NodeRole>,
    ghosts: Vec<Ghost>,
    ext_rho: Vec<f64>,
    triangles: Vec<Triangle>,
    rho2_integrals: Vec<f64>,
    grid: Grid,
    octagon: Option<Octagon>,
) -> Result<Chart> {
    let ext_len = nodes.len() + ghosts.len();
    let mut ext_weights = vec![0.0; ext_len];
    let mut ext_euclid = vec![0.0; ext_len];
    for (t, &w) in triangles.iter().zip(&rho2_integrals) {
        for &v in &t.vertices {
            ext_weights[v] += w / 3.0;
            ext_euclid[v] += t.area / 3.0;
        }
    }
    let mut chart = Chart {
        backend,
        n,
        spacing,
        metric,
        curvature: vec![0.0; nodes.len()],
        weights: Vec::new(),
        euclidean_weights: Vec::new(),
        nodes,
        rho,
        roles,
        ghosts,
        ext_rho,
        ext_weights,
        ext_curvature: Vec::new(),
        triangles,
        grid,
        octagon,
    };
    chart.weights = chart.pull_back_mass(&chart.ext_weights);
    chart.euclidean_weights = chart.pull_back_mass(&ext_euclid);
    if let Some(j) = chart.weights.iter().position(|&w| !(w > 0.0)) {
        return Err(CmcError::InvalidChart(format!("non-positive quadrature weight at node {j}")));
    }
    chart.curvature = match metric {
        MetricKind::Flat => vec![0.0; chart.len()],
        MetricKind::Poincare => vec![-1.0; chart.len()],
        MetricKind::Sampled => background_curvature(&chart),
    };
    chart.ext_curvature = chart.extend_real(&chart.curvature);
    Ok(chart)
}

impl Chart {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn ext_len(&self) -> usize {
        self.nodes.len() + self.ghosts.len()
    }

    pub fn free_count(&self) -> usize {
        self.roles.iter().filter(|r| **r == NodeRole::Free).count()
    }

    pub fn is_free(&self, j: usize) -> bool {
        self.roles[j] == NodeRole::Free
    }

    pub fn area(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn boundary_spec(&self) -> &'static str {
        match self.backend {
            Backend::TorusPatch => "periodic",
            Backend::DiskPatch => "dirichlet",
            Backend::Bolza => "automorphic",
        }
    }

    pub fn extend_real(&self, v: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.ext_len());
        out.extend_from_slice(v);
        for g in &self.ghosts {
            out.push(g.stencil.iter().map(|&(k, w)| w * v[k]).sum());
        }
        out
    }

    pub fn extend_complex(&self, v: &[Complex64], weight: Weight) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.ext_len());
        out.extend_from_slice(v);
        for g in &self.ghosts {
            let s: Complex64 = g.stencil.iter().map(|&(k, w)| v[k] * w).sum();
            out.push(s * g.factor(weight));
        }
        out
    }

    /// Hands ghost quantities back to chart nodes through the nonnegative
    /// mass stencils.
    pub fn pull_back_mass(&self, ext: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut out = ext[..n].to_vec();
        for (g, &e) in self.ghosts.iter().zip(&ext[n..]) {
            for &(k, w) in &g.mass {
                out[k] += w * e;
            }
        }
        out
    }

    /// Transpose of `extend_real`.
    pub fn pull_back_real(&self, ext: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut out = ext[..n].to_vec();
        for (g, &e) in self.ghosts.iter().zip(&ext[n..]) {
            for &(k, w) in &g.stencil {
                out[k] += w * e;
            }
        }
        out
    }

    /// Adjoint of `extend_complex` for gradients written as
    /// `∂/∂Re + i ∂/∂Im`.
    pub fn pull_back_complex(&self, ext: &[Complex64], weight: Weight) -> Vec<Complex64> {
        let n = self.len();
        let mut out = ext[..n].to_vec();
        for (g, &e) in self.ghosts.iter().zip(&ext[n..]) {
            let e = e * g.factor(weight).conj();
            for &(k, w) in &g.stencil {
                out[k] += e * w;
            }
        }
        out
    }

    /// Quadrature of a density against `dμ`; NaN samples are skipped.
    pub fn integrate(&self, density: &[f64]) -> Result<f64> {
        if density.len() != self.len() {
            return Err(CmcError::FieldMismatch(format!("density has {} samples, chart has {} nodes", density.len(), self.len())));
        }
        Ok(self.weights.iter().zip(density).filter(|(_, d)| !d.is_nan()).map(|(w, d)| w * d).sum())
    }

    /// Distance in grid cells from node `j` to the nearest node of another
    /// kind (ghost or excluded), i.e. to the edge of the domain.
    pub fn cells_from_edge(&self, j: usize) -> i64 {
        let (i0, j0) = self.grid.position[j];
        for r in 1..64_i64 {
            for dj in -r..=r {
                for di in -r..=r {
                    if di.abs().max(dj.abs()) != r {
                        continue;
                    }
                    match self.grid.ext_at(i0 + di, j0 + dj) {
                        Some(k) if k < self.len() && (self.backend.is_closed() || self.is_free(k)) => {}
                        _ => return r,
                    }
                }
            }
        }
        64
    }

    pub fn verify_side_pairings(&self) -> Result<PairingReport> {
        match &self.octagon {
            Some(oct) => Ok(check_pairings(oct)),
            None => Err(CmcError::InvalidChart("not an automorphic chart".into())),
        }
    }

    /// Content hash (FNV-1a over node data) used to tie field dumps to charts.
    pub fn content_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |x: f64| {
            for b in x.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        eat(self.backend.tag() as f64);
        eat(self.n as f64);
        for (z, (r, w)) in self.nodes.iter().zip(self.rho.iter().zip(&self.weights)) {
            eat(z.re);
            eat(z.im);
            eat(*r);
            eat(*w);
        }
        h
    }
}

/// `K(g) = -ρ^{-2} Δ log ρ`, by spectral differentiation on the torus and
/// fourth-order differences elsewhere.
pub fn background_curvature(chart: &Chart) -> Vec<f64> {
    let log_rho: Vec<Complex64> = chart.ext_rho.iter().map(|r| Complex64::new(r.ln(), 0.0)).collect();
    let lap: Vec<f64> = if chart.backend == Backend::TorusPatch {
        crate::fields::spectral_laplacian(chart, &log_rho[..chart.len()]).iter().map(|c| c.re).collect()
    } else {
        let dxx = axis_derivative(chart, &log_rho, Axis::X, 2);
        let dyy = axis_derivative(chart, &log_rho, Axis::Y, 2);
        dxx.iter().zip(&dyy).map(|(a, b)| a.re + b.re).collect()
    };
    lap.iter().zip(&chart.rho).map(|(l, r)| -l / (r * r)).collect()
}

pub use octagon::{DeckTransform, PairingCheck};

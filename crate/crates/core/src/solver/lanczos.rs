use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::donaldson::{hessian_apply, Perturbation, Problem, Solution, SolveState};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinEigEstimate {
    /// Smallest Ritz value over all probes.
    pub value: f64,
    /// Spread of the per-probe estimates.
    pub spread: f64,
    /// Largest Ritz residual bound `|β_m s_m|` among the probes.
    pub residual: f64,
    pub steps: usize,
}

/// Number of eigenvalues of the tridiagonal matrix below `x` (Sturm count).
fn count_below(alphas: &[f64], betas: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut d = 1.0;
    for i in 0..alphas.len() {
        let off = if i == 0 { 0.0 } else { betas[i - 1] * betas[i - 1] };
        d = alphas[i] - x - off / d;
        if d == 0.0 {
            d = -f64::EPSILON * (alphas[i].abs() + x.abs()).max(f64::MIN_POSITIVE);
        }
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

/// Smallest eigenvalue of the Lanczos tridiagonal and its residual bound
/// `|β_m s_m|`, by bisection and inverse iteration.
fn smallest_ritz(alphas: &[f64], betas: &[f64]) -> (f64, f64) {
    let m = alphas.len();
    let off = |i: usize| if i + 1 < m { betas[i].abs() } else { 0.0 };
    let radius = |i: usize| off(i) + if i > 0 { betas[i - 1].abs() } else { 0.0 };
    let mut lo = (0..m).map(|i| alphas[i] - radius(i)).fold(f64::INFINITY, f64::min);
    let mut hi = (0..m).map(|i| alphas[i] + radius(i)).fold(f64::NEG_INFINITY, f64::max);
    let scale = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
    while hi - lo > 4.0 * f64::EPSILON * scale {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if count_below(alphas, betas, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let theta = 0.5 * (lo + hi);
    // inverse iteration with a slightly shifted pivot
    let shift = theta - 8.0 * f64::EPSILON * scale;
    let mut x = vec![1.0; m];
    for _ in 0..3 {
        x = tridiagonal_solve(alphas, betas, shift, &x);
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            break;
        }
        x.iter_mut().for_each(|v| *v /= norm);
    }
    (theta, (betas[m - 1] * x[m - 1]).abs())
}

/// Solves `(T - shift) x = rhs` by Gaussian elimination with partial pivoting.
fn tridiagonal_solve(alphas: &[f64], betas: &[f64], shift: f64, rhs: &[f64]) -> Vec<f64> {
    let m = alphas.len();
    // rows hold (sub, diag, sup, sup2) after pivoting
    let mut a: Vec<[f64; 3]> = (0..m)
        .map(|i| {
            let sub = if i > 0 { betas[i - 1] } else { 0.0 };
            let sup = if i + 1 < m { betas[i] } else { 0.0 };
            [sub, alphas[i] - shift, sup]
        })
        .collect();
    let mut sup2 = vec![0.0; m];
    let mut b = rhs.to_vec();
    for i in 0..m.saturating_sub(1) {
        if a[i + 1][0].abs() > a[i][1].abs() {
            // swap rows i and i+1
            let (r0, r1) = (a[i], a[i + 1]);
            a[i] = [r0[0], r1[0], r1[1]];
            sup2[i] = r1[2];
            a[i + 1] = [0.0, r0[1], r0[2]];
            b.swap(i, i + 1);
            let f = a[i + 1][1] / a[i][1];
            a[i + 1][1] = a[i + 1][2] - f * a[i][2];
            a[i + 1][2] = -f * sup2[i];
            b[i + 1] -= f * b[i];
        } else {
            let piv = if a[i][1] == 0.0 { f64::MIN_POSITIVE } else { a[i][1] };
            a[i][1] = piv;
            let f = a[i + 1][0] / piv;
            a[i + 1][1] -= f * a[i][2];
            b[i + 1] -= f * b[i];
        }
        a[i + 1][0] = 0.0;
    }
    let mut x = vec![0.0; m];
    for i in (0..m).rev() {
        let mut v = b[i];
        if i + 1 < m {
            v -= a[i][2] * x[i + 1];
        }
        if i + 2 < m {
            v -= sup2[i] * x[i + 2];
        }
        let piv = if a[i][1] == 0.0 { f64::MIN_POSITIVE } else { a[i][1] };
        x[i] = v / piv;
    }
    x
}

fn lanczos(problem: &Problem, state: &SolveState, max_steps: usize, seed: u64) -> Result<(f64, f64, usize)> {
    let chart = &problem.chart;
    let w = &chart.weights;
    let n = chart.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = Perturbation::zero(n);
    for j in 0..n {
        q.v[j] = rng.gen_range(-1.0..1.0);
        q.psi[j] = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    }
    q.mask(chart);
    let dim = 3 * chart.free_count();
    let steps = max_steps.min(dim).max(1);
    q.scale(1.0 / q.norm(w));
    let mut basis: Vec<Perturbation> = Vec::with_capacity(steps);
    let (mut alphas, mut betas): (Vec<f64>, Vec<f64>) = (Vec::new(), Vec::new());
    let mut estimate = (f64::INFINITY, f64::INFINITY);
    for m in 0..steps {
        let mut r = hessian_apply(problem, state, &q)?;
        r.mask(chart);
        let alpha = q.dot(&r, w);
        r.axpy(-alpha, &q);
        if let (Some(prev), Some(&b)) = (basis.last(), betas.last()) {
            r.axpy(-b, prev);
        }
        for _ in 0..2 {
            for b in basis.iter().chain(std::iter::once(&q)) {
                let c = b.dot(&r, w);
                r.axpy(-c, b);
            }
        }
        let beta = r.norm(w);
        alphas.push(alpha);
        betas.push(beta);
        basis.push(q);
        let done = m + 1 == steps || beta <= 1e-12 * alpha.abs().max(1.0);
        if done || (m + 1) % 5 == 0 {
            estimate = smallest_ritz(&alphas, &betas);
            if done || estimate.1 <= 1e-11 * estimate.0.abs().max(1e-8) {
                return Ok((estimate.0, estimate.1, m + 1));
            }
        }
        r.scale(1.0 / beta);
        q = r;
    }
    Ok((estimate.0, estimate.1, steps))
}

/// Smallest eigenvalue of the Hessian (in the weighted pairing) at a
/// solution, by Lanczos with full reorthogonalisation from `probes` seeded
/// random starts.
pub fn min_eig_estimate(solution: &Solution, probes: usize, max_steps: usize, seed: u64) -> Result<MinEigEstimate> {
    let mut values = Vec::new();
    let mut residual: f64 = 0.0;
    let mut steps = 0;
    for k in 0..probes.max(1) {
        let (theta, res, m) = lanczos(&solution.problem, &solution.state, max_steps, seed.wrapping_add(k as u64))?;
        values.push(theta);
        residual = residual.max(res);
        steps = steps.max(m);
    }
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(MinEigEstimate { value: lo, spread: hi - lo, residual, steps })
}

/// Dense symmetric matrix of the second variation over the free unknowns
/// `(u_j, Re F_j, Im F_j)`, together with the matching diagonal mass.
pub fn hessian_matrix(problem: &Problem, state: &SolveState) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let chart = &problem.chart;
    let free: Vec<usize> = (0..chart.len()).filter(|&j| chart.is_free(j)).collect();
    let dim = 3 * free.len();
    let mut a = DMatrix::zeros(dim, dim);
    let mut mass = vec![0.0; dim];
    for (col, &j) in free.iter().enumerate() {
        for comp in 0..3 {
            let mut d = Perturbation::zero(chart.len());
            match comp {
                0 => d.v[j] = 1.0,
                1 => d.psi[j] = Complex64::new(1.0, 0.0),
                _ => d.psi[j] = Complex64::new(0.0, 1.0),
            }
            let h = hessian_apply(problem, state, &d)?;
            for (row, &i) in free.iter().enumerate() {
                let wi = chart.weights[i];
                a[(3 * row, 3 * col + comp)] = wi * h.v[i];
                a[(3 * row + 1, 3 * col + comp)] = wi * h.psi[i].re;
                a[(3 * row + 2, 3 * col + comp)] = wi * h.psi[i].im;
            }
            mass[3 * col + comp] = chart.weights[j];
        }
    }
    Ok((a, mass))
}

/// Smallest eigenvalue of `M^{-1/2} A M^{-1/2}` by a dense symmetric
/// eigensolve.
pub fn dense_min_eig(problem: &Problem, state: &SolveState) -> Result<f64> {
    let (a, mass) = hessian_matrix(problem, state)?;
    let s = DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| 0.5 * (a[(i, j)] + a[(j, i)]) / (mass[i] * mass[j]).sqrt());
    Ok(SymmetricEigen::new(s).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tridiagonal_ritz_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for m in [1usize, 2, 7, 40] {
            let alphas: Vec<f64> = (0..m).map(|_| rng.gen_range(-2.0..5.0)).collect();
            let betas: Vec<f64> = (0..m).map(|_| rng.gen_range(0.1..1.5)).collect();
            let t = DMatrix::from_fn(m, m, |i, j| match () {
                _ if i == j => alphas[i],
                _ if i + 1 == j => betas[i],
                _ if j + 1 == i => betas[j],
                _ => 0.0,
            });
            let eig = SymmetricEigen::new(t);
            let (k, want) = eig.eigenvalues.iter().enumerate().fold((0, f64::INFINITY), |a, (i, &v)| if v < a.1 { (i, v) } else { a });
            let want_res = (betas[m - 1] * eig.eigenvectors[(m - 1, k)]).abs();
            let (theta, res) = smallest_ritz(&alphas, &betas);
            assert!((theta - want).abs() < 1e-12, "m={m}: {theta} vs {want}");
            assert!((res - want_res).abs() < 1e-9, "m={m}: {res} vs {want_res}");
        }
    }
}

//! Finite-difference weights and axis derivatives on a chart grid.

use num_complex::Complex64;

use super::Chart;

/// Fornberg weights for the `m`-th derivative at 0 from samples at `offsets`
/// (in grid units).
pub fn fornberg(offsets: &[f64], m: usize) -> Vec<f64> {
    let n = offsets.len();
    let mut c = vec![vec![0.0; m + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = offsets[0];
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = offsets[i];
        for j in 0..i {
            let c3 = offsets[i] - offsets[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[m]).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// Candidate windows, most centred first. First derivatives use five
/// points, second derivatives five centred or six one-sided; all fourth
/// order.
fn windows(order: usize) -> Vec<(i64, usize)> {
    match order {
        1 => vec![(-2, 5), (-1, 5), (-3, 5), (0, 5), (-4, 5)],
        _ => vec![(-2, 5), (-1, 6), (-4, 6), (0, 6), (-5, 6)],
    }
}

/// Derivative of order 1 or 2 along `axis` at every chart node, from values
/// on the extended node set. Nodes without a usable window get NaN.
pub fn axis_derivative(chart: &Chart, ext: &[Complex64], axis: Axis, order: usize) -> Vec<Complex64> {
    let h = chart.spacing;
    let scale = h.powi(order as i32);
    let cands = windows(order);
    let mut out = Vec::with_capacity(chart.len());
    for node in 0..chart.len() {
        let (i, j) = chart.grid.position[node];
        let at = |o: i64| match axis {
            Axis::X => chart.grid.ext_at(i + o, j),
            Axis::Y => chart.grid.ext_at(i, j + o),
        };
        let mut value = Complex64::new(f64::NAN, f64::NAN);
        for &(start, len) in &cands {
            let idx: Option<Vec<usize>> = (0..len as i64).map(|k| at(start + k)).collect();
            if let Some(idx) = idx {
                let offs: Vec<f64> = (0..len as i64).map(|k| (start + k) as f64).collect();
                let w = fornberg(&offs, order);
                value = idx.iter().zip(&w).map(|(&e, &c)| ext[e] * c).sum::<Complex64>() / scale;
                break;
            }
        }
        out.push(value);
    }
    out
}

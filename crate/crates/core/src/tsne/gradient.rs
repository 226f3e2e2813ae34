//! Exact O(n^2) low-dimensional affinities, KL cost and gradient.

use rayon::prelude::*;

use super::Point;

/// Floor applied to `q` inside the KL divergence.
pub const Q_FLOOR: f64 = 1e-12;

#[inline]
fn student_t(a: &Point, b: &Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    1.0 / (1.0 + dx * dx + dy * dy)
}

/// Unnormalized Student-t kernel sums, one partial per row.
fn kernel_total(y: &[Point]) -> f64 {
    let n = y.len();
    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| (0..n).filter(|&j| j != i).map(|j| student_t(&y[i], &y[j])).sum())
        .collect();
    rows.iter().sum()
}

/// Joint low-dimensional affinities `q_ij` as a dense `n x n` matrix.
pub fn student_t_affinities(y: &[Point]) -> Vec<f64> {
    let n = y.len();
    let z = kernel_total(y);
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                q[i * n + j] = student_t(&y[i], &y[j]) / z;
            }
        }
    }
    q
}

/// `sum p log(p / q)` over entries with `p > 0`; `q` is floored at [`Q_FLOOR`].
/// Joint affinity matrices have a zero diagonal, so only off-diagonal pairs
/// contribute.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "KL operands must have the same shape");
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / qi.max(Q_FLOOR)).ln())
        .sum()
}

/// KL cost of layout `y` against the dense joint affinities `p`.
pub fn layout_cost(p: &[f64], y: &[Point]) -> f64 {
    kl_divergence(p, &student_t_affinities(y))
}

/// `dC/dy_i = 4 sum_j (p_ij - q_ij)(y_i - y_j)(1 + |y_i - y_j|^2)^-1`.
pub fn tsne_gradient(p: &[f64], y: &[Point]) -> Vec<Point> {
    exaggerated_gradient(p, y, 1.0)
}

/// [`tsne_gradient`] with `p` multiplied by `exaggeration`.
pub(crate) fn exaggerated_gradient(p: &[f64], y: &[Point], exaggeration: f64) -> Vec<Point> {
    let n = y.len();
    assert_eq!(p.len(), n * n, "P must be n x n");
    let z = kernel_total(y);
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut g = [0.0; 2];
            for j in (0..n).filter(|&j| j != i) {
                let w = student_t(&y[i], &y[j]);
                let mult = (exaggeration * p[i * n + j] - w / z) * w;
                g[0] += mult * (y[i][0] - y[j][0]);
                g[1] += mult * (y[i][1] - y[j][1]);
            }
            [4.0 * g[0], 4.0 * g[1]]
        })
        .collect()
}

//! Gaussian input affinities with per-point bandwidths fitted to a target
//! perplexity.

use super::{Result, TsneError};

/// Perplexity search tolerance, in perplexity units.
pub const PERPLEXITY_TOL: f64 = 1e-5;
const MAX_SEARCH_STEPS: usize = 200;

/// Squared Euclidean distance.
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Perplexity `2^H` of a probability row, ignoring zero entries.
pub fn row_perplexity(row: &[f64]) -> f64 {
    let h: f64 = row
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .sum();
    h.exp2()
}

/// Fills `out` with `exp(-beta * (d - d_min))`, normalized, and returns the
/// resulting perplexity.
fn gaussian_row(dists: &[f64], d_min: f64, beta: f64, out: &mut [f64]) -> f64 {
    let mut sum = 0.0;
    for (o, &d) in out.iter_mut().zip(dists) {
        *o = (-beta * (d - d_min)).exp();
        sum += *o;
    }
    let mut h = 0.0;
    for o in out.iter_mut() {
        *o /= sum;
        if *o > 0.0 {
            h -= *o * o.log2();
        }
    }
    h.exp2()
}

/// Binary search for the precision `beta` that makes the conditional
/// distribution over `dists` (squared distances) reach `perplexity`.
/// Writes the distribution into `out` and returns `beta`.
pub fn fit_row(dists: &[f64], perplexity: f64, out: &mut [f64]) -> f64 {
    let d_min = dists.iter().copied().fold(f64::INFINITY, f64::min);
    // beta = 0 is the uniform row, the largest reachable perplexity.
    if (gaussian_row(dists, d_min, 0.0, out) - perplexity).abs() < PERPLEXITY_TOL {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    let mut beta = 1.0;
    // Scale so that beta = 1 is a sensible starting point regardless of units.
    let spread = dists
        .iter()
        .map(|d| d - d_min)
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let scale = 1.0 / spread;
    for _ in 0..MAX_SEARCH_STEPS {
        let perp = gaussian_row(dists, d_min, beta * scale, out);
        if (perp - perplexity).abs() < PERPLEXITY_TOL {
            break;
        }
        if perp > perplexity {
            lo = beta;
            beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
        } else {
            hi = beta;
            beta = (beta + lo) / 2.0;
        }
    }
    beta * scale
}

fn check_inputs(x: &[Vec<f64>], perplexity: f64) -> Result<()> {
    let n = x.len();
    if n < 4 {
        return Err(TsneError::TooFewPoints(n));
    }
    if !(perplexity >= 1.0) || perplexity > (n - 1) as f64 + PERPLEXITY_TOL {
        return Err(TsneError::PerplexityTooLarge {
            perplexity,
            points: n,
        });
    }
    let dim = x[0].len();
    if x.iter().any(|r| r.len() != dim) {
        return Err(TsneError::ShapeMismatch);
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(TsneError::NonFinite);
    }
    if x.iter().all(|r| r == &x[0]) {
        return Err(TsneError::DegenerateInput);
    }
    Ok(())
}

/// Conditional affinities `p(j|i)` as a dense row-major `n x n` matrix
/// (zero diagonal, rows summing to one).
pub fn conditional_affinities(x: &[Vec<f64>], perplexity: f64) -> Result<Vec<f64>> {
    check_inputs(x, perplexity)?;
    let n = x.len();
    let mut p = vec![0.0; n * n];
    let mut dists = Vec::with_capacity(n - 1);
    let mut row = vec![0.0; n - 1];
    for i in 0..n {
        dists.clear();
        dists.extend((0..n).filter(|&j| j != i).map(|j| sq_dist(&x[i], &x[j])));
        fit_row(&dists, perplexity, &mut row);
        let mut it = row.iter();
        for j in (0..n).filter(|&j| j != i) {
            p[i * n + j] = *it.next().unwrap();
        }
    }
    Ok(p)
}

/// Symmetrized joint affinities `(P_cond + P_cond^T) / 2n`.
pub fn pairwise_affinities(x: &[Vec<f64>], perplexity: f64) -> Result<Vec<f64>> {
    let n = x.len();
    let cond = conditional_affinities(x, perplexity)?;
    let mut p = vec![0.0; n * n];
    let denom = 2.0 * n as f64;
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = (cond[i * n + j] + cond[j * n + i]) / denom;
        }
    }
    Ok(p)
}

/// Symmetric sparse affinity matrix in CSR layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseAffinities {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl SparseAffinities {
    /// Keeps the non-zero off-diagonal entries of a dense `n x n` matrix.
    pub fn from_dense(p: &[f64], n: usize) -> Self {
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let v = p[i * n + j];
                if i != j && v != 0.0 {
                    cols.push(j);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        SparseAffinities { n, row_ptr, cols, vals }
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn total(&self) -> f64 {
        self.vals.iter().sum()
    }
}

/// Exact `k` nearest neighbors by Euclidean distance, as `(index, sq_dist)`
/// sorted ascending (ties by index).
pub fn exact_knn(x: &[Vec<f64>], i: usize, k: usize) -> Vec<(usize, f64)> {
    let mut d: Vec<(usize, f64)> = (0..x.len())
        .filter(|&j| j != i)
        .map(|j| (j, sq_dist(&x[i], &x[j])))
        .collect();
    d.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    d.truncate(k);
    d
}

/// Sparse affinities over the `floor(3 * perplexity)` nearest neighbors of
/// each point, symmetrized and normalized to sum to one.
pub fn sparse_affinities(x: &[Vec<f64>], perplexity: f64) -> Result<SparseAffinities> {
    check_inputs(x, perplexity)?;
    let n = x.len();
    let k = ((3.0 * perplexity).floor() as usize).clamp(1, n - 1);
    // Conditional rows as (col, val) lists.
    let mut cond: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    let mut out = vec![0.0; k];
    for i in 0..n {
        let nn = exact_knn(x, i, k);
        let dists: Vec<f64> = nn.iter().map(|&(_, d)| d).collect();
        fit_row(&dists, perplexity.min(k as f64), &mut out);
        cond.push(nn.iter().map(|&(j, _)| j).zip(out.iter().copied()).collect());
    }
    let mut sym: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); n];
    for (i, row) in cond.iter().enumerate() {
        for &(j, v) in row {
            *sym[i].entry(j).or_default() += v;
            *sym[j].entry(i).or_default() += v;
        }
    }
    let total: f64 = sym.iter().flat_map(|r| r.values()).sum();
    let mut row_ptr = vec![0];
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    for row in sym {
        for (j, v) in row {
            cols.push(j);
            vals.push(v / total);
        }
        row_ptr.push(cols.len());
    }
    Ok(SparseAffinities { n, row_ptr, cols, vals })
}

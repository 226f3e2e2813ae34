//! t-SNE projection of embedding rows to 2D, with an exact O(n^2) variant and
//! a Barnes-Hut variant (sparse kNN attraction, quadtree repulsion).

mod affinity;
mod gradient;
mod quadtree;

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use affinity::{
    conditional_affinities, exact_knn, fit_row, pairwise_affinities, row_perplexity,
    sparse_affinities, sq_dist, SparseAffinities, PERPLEXITY_TOL,
};
pub use gradient::{kl_divergence, layout_cost, student_t_affinities, tsne_gradient, Q_FLOOR};
pub use quadtree::{bh_cost, bh_gradient, QuadTree};

/// A point of the 2D layout.
pub type Point = [f64; 2];

/// Iterations between two recorded KL costs.
pub const COST_EVERY: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TsneError {
    #[error("t-SNE needs at least 4 points, got {0}")]
    TooFewPoints(usize),
    #[error("perplexity {perplexity} is too large for {points} points")]
    PerplexityTooLarge { perplexity: f64, points: usize },
    #[error("all input points are identical")]
    DegenerateInput,
    #[error("input rows have inconsistent lengths or do not match the token list")]
    ShapeMismatch,
    #[error("input contains non-finite values")]
    NonFinite,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("cancelled")]
    Cancelled,
}

pub type Result<T> = std::result::Result<T, TsneError>;

fn default_perplexity() -> f64 {
    30.0
}
fn default_n_iter() -> usize {
    1000
}
fn default_learning_rate() -> f64 {
    200.0
}
fn default_exaggeration() -> f64 {
    12.0
}
fn default_switch() -> usize {
    250
}
fn default_initial_momentum() -> f64 {
    0.5
}
fn default_final_momentum() -> f64 {
    0.8
}
fn default_theta() -> f64 {
    0.5
}

/// Optimizer settings. Every field has a default, so partial JSON objects
/// deserialize.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneConfig {
    #[serde(default = "default_perplexity")]
    pub perplexity: f64,
    #[serde(default = "default_n_iter")]
    pub n_iter: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_exaggeration")]
    pub early_exaggeration: f64,
    /// Iterations run with exaggerated P; the momentum switch happens here too.
    #[serde(default = "default_switch")]
    pub exaggeration_iters: usize,
    #[serde(default = "default_initial_momentum")]
    pub initial_momentum: f64,
    #[serde(default = "default_final_momentum")]
    pub final_momentum: f64,
    /// Barnes-Hut opening threshold; 0 selects the exact algorithm.
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default)]
    pub seed: u64,
    /// Project inputs onto this many principal components first.
    #[serde(default)]
    pub pca_components: Option<usize>,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            perplexity: default_perplexity(),
            n_iter: default_n_iter(),
            learning_rate: default_learning_rate(),
            early_exaggeration: default_exaggeration(),
            exaggeration_iters: default_switch(),
            initial_momentum: default_initial_momentum(),
            final_momentum: default_final_momentum(),
            theta: default_theta(),
            seed: 0,
            pca_components: None,
        }
    }
}

impl TsneConfig {
    /// Checks the settings against a point count, including the requirement
    /// `perplexity < (n - 1) / 3` that leaves room for `3 * perplexity`
    /// neighbors per point.
    pub fn validate(&self, n: usize) -> Result<()> {
        if n < 4 {
            return Err(TsneError::TooFewPoints(n));
        }
        if !(self.perplexity > 0.0) {
            return Err(TsneError::InvalidConfig("perplexity must be positive".into()));
        }
        if 3.0 * self.perplexity >= (n - 1) as f64 {
            return Err(TsneError::PerplexityTooLarge {
                perplexity: self.perplexity,
                points: n,
            });
        }
        if !(self.learning_rate > 0.0) {
            return Err(TsneError::InvalidConfig("learning_rate must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(TsneError::InvalidConfig("theta must lie in [0, 1]".into()));
        }
        if !(self.early_exaggeration > 0.0) {
            return Err(TsneError::InvalidConfig("early_exaggeration must be positive".into()));
        }
        if self.pca_components == Some(0) {
            return Err(TsneError::InvalidConfig("pca_components must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlPoint {
    pub iteration: usize,
    pub kl: f64,
}

/// 2D coordinates per token plus the optimizer record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneLayout {
    pub tokens: Vec<String>,
    pub coords: Vec<Point>,
    pub config: TsneConfig,
    pub kl_history: Vec<KlPoint>,
}

impl TsneLayout {
    /// `token\tx\ty` lines.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (t, c) in self.tokens.iter().zip(&self.coords) {
            out.push_str(&format!("{t}\t{}\t{}\n", c[0], c[1]));
        }
        out
    }
}

/// Live view of a running optimization, safe to read from other threads.
#[derive(Debug, Default)]
pub struct TsneProgress {
    iteration: AtomicUsize,
    history: Mutex<Vec<KlPoint>>,
    cancel: AtomicBool,
}

impl TsneProgress {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn iteration(&self) -> usize {
        self.iteration.load(Ordering::Acquire)
    }

    pub fn history(&self) -> Vec<KlPoint> {
        self.history.lock().unwrap().clone()
    }

    pub fn cancel(&self) {
        self.cancel.store(true, Ordering::Release);
    }
}

enum Affinities {
    Dense(Vec<f64>),
    Sparse(SparseAffinities),
}

/// Exact t-SNE regardless of `config.theta`.
pub fn tsne_embed(x: &[Vec<f64>], tokens: &[String], config: &TsneConfig) -> Result<TsneLayout> {
    run(x, tokens, config, false, None)
}

/// Barnes-Hut t-SNE using `config.theta` (0 makes the tree exact).
pub fn tsne_embed_bh(
    x: &[Vec<f64>],
    tokens: &[String],
    config: &TsneConfig,
) -> Result<TsneLayout> {
    run(x, tokens, config, true, None)
}

/// Picks the variant from `config.theta` (0 = exact) and reports progress.
pub fn embed(
    x: &[Vec<f64>],
    tokens: &[String],
    config: &TsneConfig,
    progress: Option<&TsneProgress>,
) -> Result<TsneLayout> {
    run(x, tokens, config, config.theta > 0.0, progress)
}

fn pca_project(x: &[Vec<f64>], components: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let dim = x[0].len();
    if components >= dim {
        return x.to_vec();
    }
    let mut mean = vec![0.0; dim];
    for row in x {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v / n as f64;
        }
    }
    let centered = nalgebra::DMatrix::from_fn(n, dim, |i, j| x[i][j] - mean[j]);
    let cov = centered.transpose() * &centered / (n as f64);
    let eig = nalgebra::SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    (0..n)
        .map(|i| {
            order[..components]
                .iter()
                .map(|&c| centered.row(i).dot(&eig.eigenvectors.column(c).transpose()))
                .collect()
        })
        .collect()
}

fn run(
    x: &[Vec<f64>],
    tokens: &[String],
    config: &TsneConfig,
    barnes_hut: bool,
    progress: Option<&TsneProgress>,
) -> Result<TsneLayout> {
    let n = x.len();
    if tokens.len() != n {
        return Err(TsneError::ShapeMismatch);
    }
    config.validate(n)?;
    let projected;
    let x = match config.pca_components {
        Some(c) if !x.is_empty() && c < x[0].len() => {
            projected = pca_project(x, c);
            &projected[..]
        }
        _ => x,
    };

    let p = if barnes_hut {
        Affinities::Sparse(sparse_affinities(x, config.perplexity)?)
    } else {
        Affinities::Dense(pairwise_affinities(x, config.perplexity)?)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normal = Normal::new(0.0, 1e-4).unwrap();
    let mut y: Vec<Point> = (0..n)
        .map(|_| [normal.sample(&mut rng), normal.sample(&mut rng)])
        .collect();
    let mut velocity = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut history = Vec::new();

    for iter in 0..config.n_iter {
        if progress.is_some_and(|p| p.cancel.load(Ordering::Acquire)) {
            return Err(TsneError::Cancelled);
        }
        let early = iter < config.exaggeration_iters;
        let exaggeration = if early { config.early_exaggeration } else { 1.0 };
        let momentum = if early {
            config.initial_momentum
        } else {
            config.final_momentum
        };
        let grad = match &p {
            Affinities::Dense(p) => gradient::exaggerated_gradient(p, &y, exaggeration),
            Affinities::Sparse(p) => {
                quadtree::exaggerated_bh_gradient(p, &y, config.theta, exaggeration).0
            }
        };

        // Delta-bar-delta gains: grow where the step keeps its direction.
        for i in 0..n {
            for d in 0..2 {
                let g = &mut gains[i][d];
                if (grad[i][d] > 0.0) != (velocity[i][d] > 0.0) {
                    *g += 0.2;
                } else {
                    *g *= 0.8;
                }
                *g = f64::max(*g, 0.01);
                velocity[i][d] = momentum * velocity[i][d] - config.learning_rate * *g * grad[i][d];
                y[i][d] += velocity[i][d];
            }
        }
        let mut mean = [0.0; 2];
        for pt in &y {
            mean[0] += pt[0] / n as f64;
            mean[1] += pt[1] / n as f64;
        }
        for pt in &mut y {
            pt[0] -= mean[0];
            pt[1] -= mean[1];
        }
        if y.iter().flatten().any(|v| !v.is_finite()) {
            return Err(TsneError::NonFinite);
        }

        let done = iter + 1;
        if done % COST_EVERY == 0 {
            let kl = match &p {
                Affinities::Dense(p) => layout_cost(p, &y),
                Affinities::Sparse(p) => {
                    let tree = QuadTree::build(&y);
                    let z: f64 = (0..n).map(|i| tree.repulsion(i, config.theta).1).sum();
                    bh_cost(p, &y, z)
                }
            };
            let point = KlPoint { iteration: done, kl };
            log::debug!("t-SNE iteration {done}: KL {kl:.6}");
            history.push(point);
            if let Some(progress) = progress {
                progress.history.lock().unwrap().push(point);
            }
        }
        if let Some(progress) = progress {
            progress.iteration.store(done, Ordering::Release);
        }
    }

    Ok(TsneLayout {
        tokens: tokens.to_vec(),
        coords: y,
        config: config.clone(),
        kl_history: history,
    })
}

//! Fixtures shared by the criterion benches.

use embex_core::vstore::{EmbeddingModel, ModelMeta};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn gaussian_model(seed: u64, n: usize, dim: usize) -> EmbeddingModel {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let matrix: Vec<f32> = (0..n * dim).map(|_| r.sample(StandardNormal)).collect();
    let tokens = (0..n).map(|i| format!("w{i}")).collect();
    EmbeddingModel::new(tokens, matrix, ModelMeta::unknown(dim)).unwrap()
}

pub fn gaussian_points(seed: u64, n: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..dim).map(|_| r.sample(StandardNormal)).collect()).collect()
}

pub fn layout(seed: u64, n: usize) -> Vec<[f64; 2]> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| [r.sample(StandardNormal), r.sample(StandardNormal)]).collect()
}

/// Zipf-ish random sentences over `vocab` words.
pub fn corpus(seed: u64, tokens: usize, vocab: usize) -> Vec<Vec<String>> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let words: Vec<String> = (0..vocab).map(|i| format!("t{i}")).collect();
    let mut out = Vec::new();
    let mut left = tokens;
    while left > 0 {
        let len = left.min(20);
        let s = (0..len)
            .map(|_| {
                let u: f64 = r.random();
                words[((vocab as f64).powf(u) as usize - 1).min(vocab - 1)].clone()
            })
            .collect();
        out.push(s);
        left -= len;
    }
    out
}

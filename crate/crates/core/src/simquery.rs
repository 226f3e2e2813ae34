//! Cosine similarity queries over an [`EmbeddingModel`]: nearest neighbors,
//! `A - B + C` analogies with their intermediate vectors, and the
//! frequency-ranked vocabulary prefix.
//!
//! Search is an exact scan over the row-normalized matrix. Results are
//! ordered by descending score, ties broken by ascending token.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vstore::{EmbeddingModel, FeatureKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QueryError {
    #[error("token {0:?} is not in the vocabulary")]
    OutOfVocabulary(String),
    #[error("vectors have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("cosine is undefined for a zero vector")]
    ZeroVector,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("no candidate tokens left after exclusions")]
    NoCandidates,
}

pub type Result<T> = std::result::Result<T, QueryError>;

/// One similarity answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub token: String,
    pub score: f64,
}

/// Total order used for every neighbor list.
pub fn rank_order(a: &Neighbor, b: &Neighbor) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.token.cmp(&b.token))
}

/// Cosine similarity `x·y / (|x| |y|)`, clamped to `[-1, 1]`.
pub fn cosine<T: Copy + Into<f64>>(x: &[T], y: &[T]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(QueryError::LengthMismatch(x.len(), y.len()));
    }
    let (mut dot, mut xx, mut yy) = (0.0f64, 0.0f64, 0.0f64);
    for (&a, &b) in x.iter().zip(y) {
        let (a, b) = (a.into(), b.into());
        dot += a * b;
        xx += a * a;
        yy += b * b;
    }
    if xx == 0.0 || yy == 0.0 {
        return Err(QueryError::ZeroVector);
    }
    Ok((dot / (xx.sqrt() * yy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryOptions {
    /// Retry a missing token in lowercase before reporting it out of vocabulary.
    pub case_fallback: bool,
}

impl Default for QueryOptions {
    fn default() -> Self {
        QueryOptions { case_fallback: true }
    }
}

impl QueryOptions {
    /// Case fallback is on for wordform and lowercased-lemma models, off for
    /// case-sensitive lemma models where capitalization marks named entities.
    pub fn for_model(model: &EmbeddingModel) -> Self {
        QueryOptions {
            case_fallback: model.meta().feature_kind != FeatureKind::LemmaCased,
        }
    }
}

/// Resolves `token` to a row index, optionally retrying its lowercase form.
pub fn resolve(model: &EmbeddingModel, token: &str, opts: QueryOptions) -> Result<usize> {
    if let Some(i) = model.index_of(token) {
        return Ok(i);
    }
    if opts.case_fallback {
        let lower = token.to_lowercase();
        if lower != token {
            if let Some(i) = model.index_of(&lower) {
                return Ok(i);
            }
        }
    }
    Err(QueryError::OutOfVocabulary(token.to_string()))
}

fn unit_vector(v: &[f64]) -> Result<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(QueryError::ZeroVector);
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

/// Heap entry whose `Ord` puts the *worst* ranked neighbor on top.
struct Candidate<'m> {
    score: f64,
    token: &'m str,
    row: usize,
}

impl PartialEq for Candidate<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate<'_> {}
impl PartialOrd for Candidate<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate<'_> {
    // Greater == ranks later.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then_with(|| self.token.cmp(other.token))
    }
}

const PAR_CHUNK: usize = 16_384;

/// Top `k` rows by cosine to the unit vector `query`, skipping zero rows and
/// rows listed in `exclude`. Returns `(row, score)` in rank order.
pub fn scan_top_k(
    model: &EmbeddingModel,
    query: &[f64],
    k: usize,
    exclude: &[usize],
) -> Vec<(usize, f64)> {
    let dim = model.dim();
    let unit = model.unit_rows();
    let scan = |start: usize, rows: &[f64]| -> BinaryHeap<Candidate<'_>> {
        let mut heap = BinaryHeap::with_capacity(k + 1);
        for (off, row) in rows.chunks_exact(dim).enumerate() {
            let i = start + off;
            if unit.zero[i] || exclude.contains(&i) {
                continue;
            }
            let score = row
                .iter()
                .zip(query)
                .map(|(a, b)| a * b)
                .sum::<f64>()
                .clamp(-1.0, 1.0)
                + 0.0; // folds -0.0 so ties compare equal
            let cand = Candidate {
                score,
                token: model.token(i),
                row: i,
            };
            if heap.len() < k {
                heap.push(cand);
            } else if cand < *heap.peek().unwrap() {
                heap.pop();
                heap.push(cand);
            }
        }
        heap
    };

    let heap = if model.len() > PAR_CHUNK {
        unit.data
            .par_chunks(PAR_CHUNK * dim)
            .enumerate()
            .map(|(c, rows)| scan(c * PAR_CHUNK, rows))
            .reduce(BinaryHeap::new, |mut a, b| {
                for cand in b {
                    if a.len() < k {
                        a.push(cand);
                    } else if cand < *a.peek().unwrap() {
                        a.pop();
                        a.push(cand);
                    }
                }
                a
            })
    } else {
        scan(0, &unit.data)
    };
    heap.into_sorted_vec()
        .into_iter()
        .map(|c| (c.row, c.score))
        .collect()
}

fn to_neighbors(model: &EmbeddingModel, hits: Vec<(usize, f64)>) -> Vec<Neighbor> {
    hits.into_iter()
        .map(|(row, score)| Neighbor {
            token: model.token(row).to_string(),
            score,
        })
        .collect()
}

/// Nearest neighbors of an arbitrary query vector.
pub fn nearest_to_vector(
    model: &EmbeddingModel,
    vector: &[f64],
    k: usize,
    exclude: &[usize],
) -> Result<Vec<Neighbor>> {
    if k == 0 {
        return Err(QueryError::InvalidK);
    }
    if vector.len() != model.dim() {
        return Err(QueryError::LengthMismatch(vector.len(), model.dim()));
    }
    let q = unit_vector(vector)?;
    Ok(to_neighbors(model, scan_top_k(model, &q, k, exclude)))
}

/// The `k` tokens most similar to `token`, excluding the token itself.
pub fn top_k_similar(
    model: &EmbeddingModel,
    token: &str,
    k: usize,
    opts: QueryOptions,
) -> Result<Vec<Neighbor>> {
    if k == 0 {
        return Err(QueryError::InvalidK);
    }
    let row = resolve(model, token, opts)?;
    let q = model.unit_row(row).ok_or(QueryError::ZeroVector)?;
    Ok(to_neighbors(model, scan_top_k(model, q, k, &[row])))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenVector {
    pub token: String,
    pub vector: Vec<f64>,
}

/// Every intermediate quantity of an `A - B + C` query answered by `R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalogyTrace {
    pub a: TokenVector,
    pub b: TokenVector,
    pub c: TokenVector,
    pub a_minus_b: Vec<f64>,
    /// `A - B + C`.
    pub query: Vec<f64>,
    pub result: Neighbor,
    pub result_vector: Vec<f64>,
    /// `(A - B + C) - R`.
    pub residual: Vec<f64>,
    pub cos_query_result: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalogyAnswer {
    pub neighbors: Vec<Neighbor>,
    pub trace: AnalogyTrace,
}

fn row_f64(model: &EmbeddingModel, row: usize) -> Vec<f64> {
    model.row(row).iter().map(|&v| f64::from(v)).collect()
}

/// Answers "what is to C as B is to A": the `k` nearest tokens to
/// `vec(a) - vec(b) + vec(c)`, never returning a, b or c themselves.
pub fn analogy(
    model: &EmbeddingModel,
    a: &str,
    b: &str,
    c: &str,
    k: usize,
    opts: QueryOptions,
) -> Result<AnalogyAnswer> {
    if k == 0 {
        return Err(QueryError::InvalidK);
    }
    let rows = [
        resolve(model, a, opts)?,
        resolve(model, b, opts)?,
        resolve(model, c, opts)?,
    ];
    let [va, vb, vc] = rows.map(|r| row_f64(model, r));
    let a_minus_b: Vec<f64> = va.iter().zip(&vb).map(|(x, y)| x - y).collect();
    let query: Vec<f64> = a_minus_b.iter().zip(&vc).map(|(x, y)| x + y).collect();

    let neighbors = nearest_to_vector(model, &query, k, &rows)?;
    let top = neighbors.first().cloned().ok_or(QueryError::NoCandidates)?;
    let result_row = model.index_of(&top.token).expect("neighbor comes from the model");
    let result_vector = row_f64(model, result_row);
    let residual = query.iter().zip(&result_vector).map(|(q, r)| q - r).collect();
    let cos_query_result = cosine(&query, &result_vector)?;

    let tv = |row: usize, vector: Vec<f64>| TokenVector {
        token: model.token(row).to_string(),
        vector,
    };
    let trace = AnalogyTrace {
        a: tv(rows[0], va),
        b: tv(rows[1], vb),
        c: tv(rows[2], vc),
        a_minus_b,
        query,
        result: top,
        result_vector,
        residual,
        cos_query_result,
    };
    Ok(AnalogyAnswer { neighbors, trace })
}

/// Only the trace of [`analogy`] for its top-1 answer.
pub fn vector_trace(
    model: &EmbeddingModel,
    a: &str,
    b: &str,
    c: &str,
    opts: QueryOptions,
) -> Result<AnalogyTrace> {
    analogy(model, a, b, c, 1, opts).map(|ans| ans.trace)
}

/// The first `n` tokens in storage order, i.e. the `n` most frequent.
pub fn top_n_frequent(model: &EmbeddingModel, n: usize) -> Vec<String> {
    model.tokens().iter().take(n).cloned().collect()
}

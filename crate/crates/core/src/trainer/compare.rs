use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::simquery::{self, Neighbor, QueryError, QueryOptions};
use crate::vstore::EmbeddingModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Wordform,
    Lemma,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Wordform => "wordform model",
            Side::Lemma => "lemma model",
        })
    }
}

/// Neighbor lists of one query in two models and their shared tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodComparison {
    pub wf_neighbors: Vec<Neighbor>,
    pub lm_neighbors: Vec<Neighbor>,
    /// Tokens present in both lists, sorted.
    pub overlap: Vec<String>,
}

/// Top-`k` neighbors of `wordform` in `model_wf` and of `lemma` in
/// `model_lm`, intersected by raw string.
pub fn compare_neighborhoods(
    model_wf: &EmbeddingModel,
    model_lm: &EmbeddingModel,
    wordform: &str,
    lemma: &str,
    k: usize,
) -> Result<NeighborhoodComparison, (Side, QueryError)> {
    let wf = simquery::top_k_similar(model_wf, wordform, k, QueryOptions::for_model(model_wf))
        .map_err(|e| (Side::Wordform, e))?;
    let lm = simquery::top_k_similar(model_lm, lemma, k, QueryOptions::for_model(model_lm))
        .map_err(|e| (Side::Lemma, e))?;
    let left: BTreeSet<&str> = wf.iter().map(|n| n.token.as_str()).collect();
    let overlap = lm
        .iter()
        .map(|n| n.token.as_str())
        .filter(|t| left.contains(t))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .map(str::to_string)
        .collect();
    Ok(NeighborhoodComparison {
        wf_neighbors: wf,
        lm_neighbors: lm,
        overlap,
    })
}

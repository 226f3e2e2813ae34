//! Independent oracles and fixture generators shared by the integration and
//! acceptance tests. Nothing here calls into the code paths it checks.

#![allow(dead_code)]

use std::collections::{HashMap, HashSet};

use embex_core::graphx::{SimilarityGraph, MAX_NODES};
use embex_core::trainer::AnnotatedToken;
use embex_core::vstore::{EmbeddingModel, ModelMeta};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random Gaussian model with tokens `w0000..`. When `dup_every > 0`, every
/// `dup_every`-th row copies its predecessor so exact score ties occur.
pub fn random_model(r: &mut ChaCha8Rng, n: usize, dim: usize, dup_every: usize) -> EmbeddingModel {
    let mut rows: Vec<(String, Vec<f32>)> = Vec::with_capacity(n);
    for i in 0..n {
        let row = if dup_every > 0 && i > 0 && i % dup_every == 0 {
            rows[i - 1].1.clone()
        } else {
            (0..dim).map(|_| r.sample::<f32, _>(StandardNormal)).collect()
        };
        // Shuffled names so storage order and lexicographic order differ.
        rows.push((format!("w{:04}", (i * 7919) % 10007), row));
    }
    EmbeddingModel::from_rows(rows, ModelMeta::unknown(dim)).unwrap()
}

pub fn f64_row(m: &EmbeddingModel, i: usize) -> Vec<f64> {
    m.row(i).iter().map(|&v| f64::from(v)).collect()
}

/// Plain cosine, written out independently of the library.
pub fn oracle_cosine(x: &[f64], y: &[f64]) -> f64 {
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let nx: f64 = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let ny: f64 = y.iter().map(|a| a * a).sum::<f64>().sqrt();
    dot / (nx * ny)
}

/// Brute force: score every other non-zero row, fully sort, truncate.
pub fn brute_force_top_k(m: &EmbeddingModel, query: usize, k: usize) -> Vec<(String, f64)> {
    let q = f64_row(m, query);
    let mut all: Vec<(String, f64)> = (0..m.len())
        .filter(|&j| j != query)
        .filter(|&j| m.row(j).iter().any(|&v| v != 0.0))
        .map(|j| (m.token(j).to_string(), oracle_cosine(&q, &f64_row(m, j))))
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

/// Compares a library neighbor list against the oracle: identical tokens in
/// identical order, scores within `1e-9`.
pub fn same_ranking(got: &[embex_core::Neighbor], want: &[(String, f64)]) -> Result<(), String> {
    if got.len() != want.len() {
        return Err(format!("length {} vs {}", got.len(), want.len()));
    }
    for (i, (g, w)) in got.iter().zip(want).enumerate() {
        if g.token != w.0 {
            return Err(format!("rank {i}: {} vs oracle {}", g.token, w.0));
        }
        if (g.score - w.1).abs() > 1e-9 {
            return Err(format!("rank {i}: score {} vs oracle {}", g.score, w.1));
        }
    }
    Ok(())
}

/// A model where `d = a - b + c` holds exactly in f32 arithmetic.
/// Returns the model and the four tokens.
pub fn planted_analogy(r: &mut ChaCha8Rng, n: usize, dim: usize) -> (EmbeddingModel, [String; 4]) {
    let mut rows: Vec<(String, Vec<f32>)> = (0..n)
        .map(|i| {
            (
                format!("t{i}"),
                (0..dim).map(|_| r.sample::<f32, _>(StandardNormal)).collect(),
            )
        })
        .collect();
    let idx: Vec<usize> = rand::seq::index::sample(r, n, 4).into_vec();
    let (a, b, c, d) = (idx[0], idx[1], idx[2], idx[3]);
    let planted: Vec<f32> = (0..dim)
        .map(|k| rows[a].1[k] - rows[b].1[k] + rows[c].1[k])
        .collect();
    rows[d].1 = planted;
    let names = [a, b, c, d].map(|i| rows[i].0.clone());
    (EmbeddingModel::from_rows(rows, ModelMeta::unknown(dim)).unwrap(), names)
}

// ---------------------------------------------------------------- t-SNE

pub fn random_points(r: &mut ChaCha8Rng, n: usize, dim: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| scale * r.sample::<f64, _>(StandardNormal)).collect())
        .collect()
}

/// Random symmetric joint distribution with zero diagonal.
pub fn random_joint(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v: f64 = r.random::<f64>() + 0.01;
            p[i * n + j] = v;
            p[j * n + i] = v;
        }
    }
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
    p
}

/// KL(P || Q(Y)) written from the definition.
pub fn oracle_cost(p: &[f64], y: &[[f64; 2]]) -> f64 {
    let n = y.len();
    let mut w = vec![0.0; n * n];
    let mut z = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let d = (y[i][0] - y[j][0]).powi(2) + (y[i][1] - y[j][1]).powi(2);
                w[i * n + j] = 1.0 / (1.0 + d);
                z += w[i * n + j];
            }
        }
    }
    let mut c = 0.0;
    for k in 0..n * n {
        if p[k] > 0.0 {
            c += p[k] * (p[k] / (w[k] / z)).ln();
        }
    }
    c
}

/// Central finite differences of [`oracle_cost`].
pub fn finite_difference_gradient(p: &[f64], y: &[[f64; 2]], h: f64) -> Vec<[f64; 2]> {
    let mut g = vec![[0.0; 2]; y.len()];
    let mut yy = y.to_vec();
    for i in 0..y.len() {
        for d in 0..2 {
            let orig = yy[i][d];
            yy[i][d] = orig + h;
            let plus = oracle_cost(p, &yy);
            yy[i][d] = orig - h;
            let minus = oracle_cost(p, &yy);
            yy[i][d] = orig;
            g[i][d] = (plus - minus) / (2.0 * h);
        }
    }
    g
}

/// Two Gaussian clusters of `per` points in `dim` dimensions, centers `sep`
/// standard deviations apart. Labels are 0/1.
pub fn two_clusters(r: &mut ChaCha8Rng, per: usize, dim: usize, sep: f64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut x = Vec::new();
    let mut labels = Vec::new();
    for label in 0..2 {
        for _ in 0..per {
            x.push(
                (0..dim)
                    .map(|k| {
                        let center = if k == 0 && label == 1 { sep } else { 0.0 };
                        center + r.sample::<f64, _>(StandardNormal)
                    })
                    .collect(),
            );
            labels.push(label);
        }
    }
    (x, labels)
}

/// Mean silhouette coefficient of a labelled 2D layout.
pub fn silhouette(coords: &[[f64; 2]], labels: &[usize]) -> f64 {
    let n = coords.len();
    let dist = |i: usize, j: usize| {
        ((coords[i][0] - coords[j][0]).powi(2) + (coords[i][1] - coords[j][1]).powi(2)).sqrt()
    };
    let mut total = 0.0;
    for i in 0..n {
        let mut sums = [0.0; 2];
        let mut counts = [0usize; 2];
        for j in (0..n).filter(|&j| j != i) {
            sums[labels[j]] += dist(i, j);
            counts[labels[j]] += 1;
        }
        let own = labels[i];
        let a = sums[own] / counts[own].max(1) as f64;
        let b = sums[1 - own] / counts[1 - own] as f64;
        total += (b - a) / a.max(b);
    }
    total / n as f64
}

/// Fraction of points whose nearest 2D cluster centroid is their own.
pub fn centroid_accuracy(coords: &[[f64; 2]], labels: &[usize]) -> f64 {
    let mut c = [[0.0; 2]; 2];
    let mut cnt = [0.0; 2];
    for (p, &l) in coords.iter().zip(labels) {
        c[l][0] += p[0];
        c[l][1] += p[1];
        cnt[l] += 1.0;
    }
    for l in 0..2 {
        c[l][0] /= cnt[l];
        c[l][1] /= cnt[l];
    }
    let d = |p: &[f64; 2], q: &[f64; 2]| (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
    let ok = coords
        .iter()
        .zip(labels)
        .filter(|(p, &l)| d(p, &c[l]) < d(p, &c[1 - l]))
        .count();
    ok as f64 / coords.len() as f64
}

// ---------------------------------------------------------------- graphs

pub struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    pub fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut x = x;
        while self.parent[x] != root {
            let next = self.parent[x];
            self.parent[x] = root;
            x = next;
        }
        root
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra] = rb;
        }
    }

    pub fn count(&mut self) -> usize {
        let n = self.parent.len();
        (0..n).filter(|&i| self.find(i) == i).count()
    }
}

/// Component count of a token graph via union-find.
pub fn union_find_components(nodes: &[String], edges: &[(String, String)]) -> usize {
    let index: HashMap<&str, usize> = nodes.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let mut uf = UnionFind::new(nodes.len());
    for (a, b) in edges {
        uf.union(index[a.as_str()], index[b.as_str()]);
    }
    uf.count()
}

// ---------------------------------------------------------------- corpora

/// Markov-chain corpus over `states` tokens `s0..`, each with a few distinct
/// successors. Every emission of state 0 is written as `x` or `y` with equal
/// probability, so `x` and `y` share one context distribution.
pub fn planted_twin_corpus(r: &mut ChaCha8Rng, states: usize, tokens: usize) -> Vec<Vec<String>> {
    let successors: Vec<Vec<usize>> = (0..states)
        .map(|_| (0..4).map(|_| r.random_range(0..states)).collect())
        .collect();
    let mut out = Vec::new();
    let mut state = 0usize;
    let mut emitted = 0;
    while emitted < tokens {
        let mut sent = Vec::with_capacity(20);
        for _ in 0..20 {
            let tok = match state {
                0 if r.random::<bool>() => "x".to_string(),
                0 => "y".to_string(),
                s => format!("s{s}"),
            };
            sent.push(tok);
            state = if r.random::<f64>() < 0.1 {
                r.random_range(0..states)
            } else {
                successors[state][r.random_range(0..4)]
            };
        }
        emitted += sent.len();
        out.push(sent);
    }
    out
}

pub const STEMS: [&str; 12] = [
    "manual", "munte", "oraș", "râu", "pădure", "drum", "câmp", "sat", "lac", "zid", "pod", "nor",
];
pub const SUFFIXES: [&str; 5] = ["", "ul", "ului", "ele", "elor"];

/// Annotated toy corpus: each sentence talks about one stem, written in a
/// random inflection, surrounded by that stem's own context words.
pub fn inflection_corpus(r: &mut ChaCha8Rng, sentences: usize) -> Vec<Vec<AnnotatedToken>> {
    let contexts: Vec<Vec<String>> = STEMS
        .iter()
        .enumerate()
        .map(|(i, _)| (0..6).map(|j| format!("ctx{i}x{j}")).collect())
        .collect();
    (0..sentences)
        .map(|_| {
            let s = r.random_range(0..STEMS.len());
            let suffix = SUFFIXES[r.random_range(0..SUFFIXES.len())];
            let mut sent: Vec<AnnotatedToken> = (0..6)
                .map(|_| {
                    let w = contexts[s][r.random_range(0..6)].clone();
                    AnnotatedToken { wordform: w.clone(), lemma: w, pos: "X".into() }
                })
                .collect();
            let at = r.random_range(0..=sent.len());
            sent.insert(
                at,
                AnnotatedToken {
                    wordform: format!("{}{}", STEMS[s], suffix),
                    lemma: STEMS[s].to_string(),
                    pos: "Nc".into(),
                },
            );
            sent
        })
        .collect()
}

/// Inflected (non-bare) variants of `stem` planted by [`inflection_corpus`].
pub fn inflected_variants(stem: &str) -> Vec<String> {
    SUFFIXES.iter().filter(|s| !s.is_empty()).map(|s| format!("{stem}{s}")).collect()
}

/// Renders annotated sentences in the tab-separated corpus format.
pub fn to_annotated_text(corpus: &[Vec<AnnotatedToken>]) -> String {
    let mut out = String::new();
    for sent in corpus {
        for t in sent {
            out.push_str(&format!("{}\t{}\t{}\n", t.wordform, t.lemma, t.pos));
        }
        out.push('\n');
    }
    out
}

/// Checks every structural invariant from the outside and returns the error
/// message of the first violation.
pub fn audit(g: &SimilarityGraph, m: &EmbeddingModel) -> Result<(), String> {
    let tokens: HashSet<&str> = g.nodes().iter().map(|n| n.token.as_str()).collect();
    if tokens.len() != g.nodes().len() {
        return Err("duplicate token".into());
    }
    let mut pairs = HashSet::new();
    for e in g.edges() {
        if !tokens.contains(e.a.as_str()) || !tokens.contains(e.b.as_str()) {
            return Err(format!("edge {}-{} leaves the node set", e.a, e.b));
        }
        let k = if e.a < e.b { (&e.a, &e.b) } else { (&e.b, &e.a) };
        if e.a == e.b || !pairs.insert(k) {
            return Err(format!("self loop or parallel edge {}-{}", e.a, e.b));
        }
        let want = oracle_cosine(
            &f64_row(m, m.index_of(&e.a).unwrap()),
            &f64_row(m, m.index_of(&e.b).unwrap()),
        );
        if (e.weight - want).abs() > 1e-6 || !(-1.0..=1.0).contains(&e.weight) {
            return Err(format!("weight {} vs cosine {want}", e.weight));
        }
    }
    if g.nodes().len() > MAX_NODES {
        return Err("node cap exceeded".into());
    }
    let edges: Vec<(String, String)> = g.edges().iter().map(|e| (e.a.clone(), e.b.clone())).collect();
    let tokens: Vec<String> = g.nodes().iter().map(|n| n.token.clone()).collect();
    let expected = union_find_components(&tokens, &edges);
    if g.connected_components().len() != expected {
        return Err(format!("{} components, oracle {expected}", g.connected_components().len()));
    }
    g.check_invariants()
}

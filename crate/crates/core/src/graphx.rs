//! Interactively grown similarity graphs.
//!
//! A graph starts as a star around a center word and its nearest neighbors.
//! Expanding a node attaches that node's own neighbors; neighbors already in
//! the graph are reused rather than duplicated, which is what produces
//! indirect paths between words that were never queried together.

use std::collections::{HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simquery::{self, QueryError, QueryOptions};
use crate::vstore::EmbeddingModel;

/// Hard ceiling on graph size.
pub const MAX_NODES: usize = 5_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("token {0:?} is not in the vocabulary")]
    OutOfVocabulary(String),
    #[error("token {0:?} is not a node of this graph")]
    NodeNotInGraph(String),
    #[error("expansion would grow the graph past {MAX_NODES} nodes")]
    NodeCapExceeded,
    #[error("n must be at least 1")]
    InvalidN,
    #[error(transparent)]
    Query(QueryError),
}

impl From<QueryError> for GraphError {
    fn from(e: QueryError) -> Self {
        match e {
            QueryError::OutOfVocabulary(t) => GraphError::OutOfVocabulary(t),
            other => GraphError::Query(other),
        }
    }
}

pub type Result<T> = std::result::Result<T, GraphError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub token: String,
    pub is_seed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: String,
    pub b: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Expansion {
    pub token: String,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub model_id: String,
    pub expansions: Vec<Expansion>,
}

/// Wire form: `{nodes: [{token, is_seed}], edges: [{a, b, weight}], provenance}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct GraphWire {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "GraphWire", try_from = "GraphWire")]
pub struct SimilarityGraph {
    nodes: Vec<Node>,
    node_index: HashMap<String, usize>,
    edges: Vec<Edge>,
    edge_keys: HashSet<(usize, usize)>,
    provenance: Provenance,
}

impl From<SimilarityGraph> for GraphWire {
    fn from(g: SimilarityGraph) -> Self {
        GraphWire {
            nodes: g.nodes,
            edges: g.edges,
            provenance: g.provenance,
        }
    }
}

impl TryFrom<GraphWire> for SimilarityGraph {
    type Error = String;

    fn try_from(w: GraphWire) -> std::result::Result<Self, Self::Error> {
        let mut g = SimilarityGraph::new(w.provenance.model_id.clone());
        g.provenance = w.provenance;
        for node in w.nodes {
            if g.node_index.contains_key(&node.token) {
                return Err(format!("duplicate node {:?}", node.token));
            }
            g.push_node(node.token, node.is_seed);
        }
        for e in w.edges {
            let (Some(&a), Some(&b)) = (g.node_index.get(&e.a), g.node_index.get(&e.b)) else {
                return Err(format!("edge {:?}-{:?} references a missing node", e.a, e.b));
            };
            if a == b || !g.edge_keys.insert(key(a, b)) {
                return Err(format!("invalid or duplicate edge {:?}-{:?}", e.a, e.b));
            }
            g.edges.push(e);
        }
        Ok(g)
    }
}

fn key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

impl SimilarityGraph {
    /// An empty graph over the model registered as `model_id`.
    pub fn new(model_id: impl Into<String>) -> Self {
        SimilarityGraph {
            nodes: Vec::new(),
            node_index: HashMap::new(),
            edges: Vec::new(),
            edge_keys: HashSet::new(),
            provenance: Provenance {
                model_id: model_id.into(),
                expansions: Vec::new(),
            },
        }
    }

    /// `center` plus its `n` most similar tokens, one edge to each.
    pub fn build_star(
        model_id: impl Into<String>,
        model: &EmbeddingModel,
        center: &str,
        n: usize,
    ) -> Result<Self> {
        let mut g = SimilarityGraph::new(model_id);
        g.add_word(model, center, n)?;
        Ok(g)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn contains(&self, token: &str) -> bool {
        self.node_index.contains_key(token)
    }

    pub fn node(&self, token: &str) -> Option<&Node> {
        self.node_index.get(token).map(|&i| &self.nodes[i])
    }

    pub fn has_edge(&self, a: &str, b: &str) -> bool {
        match (self.node_index.get(a), self.node_index.get(b)) {
            (Some(&a), Some(&b)) => self.edge_keys.contains(&key(a, b)),
            _ => false,
        }
    }

    fn push_node(&mut self, token: String, is_seed: bool) -> usize {
        let idx = self.nodes.len();
        self.node_index.insert(token.clone(), idx);
        self.nodes.push(Node { token, is_seed });
        idx
    }

    /// Attaches the top-`n` neighbors of `token`, which must already be a node.
    /// Existing neighbors only gain the connecting edge. The graph is left
    /// untouched on error.
    pub fn expand_node(&mut self, model: &EmbeddingModel, token: &str, n: usize) -> Result<()> {
        if n == 0 {
            return Err(GraphError::InvalidN);
        }
        let src = *self
            .node_index
            .get(token)
            .ok_or_else(|| GraphError::NodeNotInGraph(token.to_string()))?;
        if model.index_of(token).is_none() {
            return Err(GraphError::OutOfVocabulary(token.to_string()));
        }
        // Graph tokens are already resolved, so no case folding here.
        let hits = simquery::top_k_similar(model, token, n, QueryOptions { case_fallback: false })?;
        let new_nodes = hits.iter().filter(|h| !self.contains(&h.token)).count();
        if self.nodes.len() + new_nodes > MAX_NODES {
            return Err(GraphError::NodeCapExceeded);
        }
        for hit in hits {
            let dst = match self.node_index.get(&hit.token) {
                Some(&i) => i,
                None => self.push_node(hit.token.clone(), false),
            };
            if self.edge_keys.insert(key(src, dst)) {
                self.edges.push(Edge {
                    a: token.to_string(),
                    b: hit.token,
                    weight: hit.score,
                });
            }
        }
        let exp = Expansion {
            token: token.to_string(),
            n,
        };
        if !self.provenance.expansions.contains(&exp) {
            self.provenance.expansions.push(exp);
        }
        Ok(())
    }

    /// Inserts `token` as a seed (or marks an existing node as one) and, when
    /// `n > 0`, expands it. The token goes through the model's default
    /// lowercase fallback; the resolved vocabulary form becomes the node.
    pub fn add_word(&mut self, model: &EmbeddingModel, token: &str, n: usize) -> Result<()> {
        let row = simquery::resolve(model, token, QueryOptions::for_model(model))?;
        let resolved = model.token(row).to_string();
        if n > 0 {
            // Check the cap before touching anything so failures leave no trace.
            let hits = simquery::top_k_similar(
                model,
                &resolved,
                n,
                QueryOptions { case_fallback: false },
            )?;
            let mut fresh = hits.iter().filter(|h| !self.contains(&h.token)).count();
            if !self.contains(&resolved) {
                fresh += 1;
            }
            if self.nodes.len() + fresh > MAX_NODES {
                return Err(GraphError::NodeCapExceeded);
            }
        } else if !self.contains(&resolved) && self.nodes.len() >= MAX_NODES {
            return Err(GraphError::NodeCapExceeded);
        }
        match self.node_index.get(&resolved) {
            Some(&i) => self.nodes[i].is_seed = true,
            None => {
                self.push_node(resolved.clone(), true);
            }
        }
        if n > 0 {
            self.expand_node(model, &resolved, n)?;
        }
        Ok(())
    }

    /// Connected components as token lists, each in node insertion order;
    /// components are ordered by their earliest node.
    pub fn connected_components(&self) -> Vec<Vec<String>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for &(a, b) in &self.edge_keys {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut out = Vec::new();
        for start in 0..self.nodes.len() {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut members = vec![start];
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                for &v in &adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        members.push(v);
                        queue.push_back(v);
                    }
                }
            }
            members.sort_unstable();
            out.push(members.into_iter().map(|i| self.nodes[i].token.clone()).collect());
        }
        out
    }

    /// Checks the structural invariants; used by tests and after deserializing.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let mut tokens = HashSet::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if !tokens.insert(&n.token) {
                return Err(format!("duplicate node {:?}", n.token));
            }
            if self.node_index.get(&n.token) != Some(&i) {
                return Err(format!("index out of sync for {:?}", n.token));
            }
        }
        let mut pairs = HashSet::new();
        for e in &self.edges {
            let (Some(&a), Some(&b)) = (self.node_index.get(&e.a), self.node_index.get(&e.b))
            else {
                return Err(format!("dangling edge {:?}-{:?}", e.a, e.b));
            };
            if a == b {
                return Err(format!("self loop on {:?}", e.a));
            }
            if !pairs.insert(key(a, b)) {
                return Err(format!("parallel edge {:?}-{:?}", e.a, e.b));
            }
            if !(-1.0..=1.0).contains(&e.weight) {
                return Err(format!("weight {} out of range", e.weight));
            }
        }
        if pairs != self.edge_keys {
            return Err("edge key set out of sync".into());
        }
        Ok(())
    }
}

//! Session graphs. Each graph has its own async mutex so mutations of one
//! graph are serialized without blocking others.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use embex_core::SimilarityGraph;
use tokio::sync::Mutex;

pub type GraphSlot = Arc<Mutex<SimilarityGraph>>;

#[derive(Debug, Default)]
pub struct GraphStore {
    graphs: RwLock<HashMap<String, GraphSlot>>,
    next_id: AtomicU64,
    dir: Option<PathBuf>,
}

impl GraphStore {
    /// In-memory store; graphs vanish with the process.
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Store mirrored to `<dir>/<graph id>.json`; existing files are loaded.
    pub fn persistent(dir: PathBuf) -> std::io::Result<Self> {
        std::fs::create_dir_all(&dir)?;
        let mut graphs = HashMap::new();
        let mut max_id = 0;
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let Some(id) = path.file_stem().and_then(|s| s.to_str()).map(str::to_string) else {
                continue;
            };
            let text = std::fs::read_to_string(&path)?;
            match serde_json::from_str::<SimilarityGraph>(&text) {
                Ok(g) => {
                    if let Some(n) = id.strip_prefix('g').and_then(|n| n.parse::<u64>().ok()) {
                        max_id = max_id.max(n);
                    }
                    graphs.insert(id, Arc::new(Mutex::new(g)));
                }
                Err(e) => log::warn!("skipping {}: {e}", path.display()),
            }
        }
        Ok(GraphStore {
            graphs: RwLock::new(graphs),
            next_id: AtomicU64::new(max_id),
            dir: Some(dir),
        })
    }

    pub fn insert(&self, graph: SimilarityGraph) -> std::io::Result<(String, GraphSlot)> {
        let id = format!("g{}", self.next_id.fetch_add(1, Ordering::Relaxed) + 1);
        self.persist(&id, &graph)?;
        let slot = Arc::new(Mutex::new(graph));
        self.graphs.write().unwrap().insert(id.clone(), Arc::clone(&slot));
        Ok((id, slot))
    }

    pub fn get(&self, id: &str) -> Option<GraphSlot> {
        self.graphs.read().unwrap().get(id).cloned()
    }

    pub fn ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.graphs.read().unwrap().keys().cloned().collect();
        ids.sort();
        ids
    }

    /// Writes the graph file when persistence is on; call with the graph lock held.
    pub fn persist(&self, id: &str, graph: &SimilarityGraph) -> std::io::Result<()> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let tmp = dir.join(format!("{id}.json.tmp"));
        std::fs::write(&tmp, serde_json::to_vec(graph)?)?;
        std::fs::rename(tmp, dir.join(format!("{id}.json")))
    }
}

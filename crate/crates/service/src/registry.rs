//! Model and corpus registries.
//!
//! Startup configuration is a JSON file, either a bare list of model specs or
//! an object `{"models": [...], "corpora": [...]}`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use embex_core::vstore::{self, EmbeddingModel, ModelFormat, ModelMeta, StoreError};
use serde::{Deserialize, Serialize};

/// One entry of `models.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub id: String,
    pub path: PathBuf,
    /// Sidecar location when it is not `<path>.meta.json`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta_path: Option<PathBuf>,
    /// Defaults to binary for `.bin` files and text otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<ModelFormat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub id: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegistryConfig {
    #[serde(default)]
    pub models: Vec<ModelSpec>,
    #[serde(default)]
    pub corpora: Vec<CorpusSpec>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ConfigFile {
    List(Vec<ModelSpec>),
    Full(RegistryConfig),
}

impl RegistryConfig {
    pub fn from_file(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        match serde_json::from_str(&text) {
            Ok(ConfigFile::List(models)) => Ok(RegistryConfig {
                models,
                corpora: Vec::new(),
            }),
            Ok(ConfigFile::Full(cfg)) => Ok(cfg),
            Err(e) => Err(format!("{}: {e}", path.display())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelState {
    Loading,
    Ready,
    Failed,
}

#[derive(Debug, Clone)]
enum Slot {
    Loading,
    Ready(Arc<EmbeddingModel>),
    Failed(String),
}

#[derive(Debug, Clone)]
struct Registered {
    path: String,
    slot: Slot,
}

/// Public view of a registered model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub id: String,
    pub path: String,
    pub state: ModelState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<ModelMeta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Filters of `GET /models`.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
pub struct ModelFilter {
    pub feature_kind: Option<embex_core::FeatureKind>,
    pub dim: Option<usize>,
    pub min_frequency_threshold: Option<u64>,
}

impl ModelFilter {
    fn is_empty(&self) -> bool {
        self.feature_kind.is_none() && self.dim.is_none() && self.min_frequency_threshold.is_none()
    }

    pub fn accepts(&self, entry: &RegistryEntry) -> bool {
        if self.is_empty() {
            return true;
        }
        let Some(meta) = &entry.meta else {
            return false;
        };
        self.feature_kind.is_none_or(|f| meta.feature_kind == f)
            && self.dim.is_none_or(|d| meta.dim == d)
            && self
                .min_frequency_threshold
                .is_none_or(|t| meta.frequency_threshold >= t)
    }
}

pub enum Lookup {
    Ready(Arc<EmbeddingModel>),
    NotReady(ModelState),
    Missing,
}

/// Loads a model and its sidecar and builds the unit matrix so the first
/// query does not pay for it.
pub fn load_model(spec: &ModelSpec) -> Result<EmbeddingModel, StoreError> {
    let format = spec.format.unwrap_or_else(|| ModelFormat::from_path(&spec.path));
    let model = match &spec.meta_path {
        None => vstore::load(&spec.path, format)?,
        Some(meta_path) => {
            let file = std::io::BufReader::new(std::fs::File::open(&spec.path)?);
            let mut m = match format {
                ModelFormat::Text => vstore::read_text(file)?,
                ModelFormat::Binary => vstore::read_binary(file)?,
            };
            let meta: ModelMeta = serde_json::from_str(&std::fs::read_to_string(meta_path)?)
                .map_err(|e| StoreError::BadSidecar {
                    path: meta_path.clone(),
                    reason: e.to_string(),
                })?;
            if meta.dim != m.dim() {
                return Err(StoreError::BadSidecar {
                    path: meta_path.clone(),
                    reason: format!("dim {} does not match the model's {}", meta.dim, m.dim()),
                });
            }
            m = EmbeddingModel::new(m.tokens().to_vec(), m.matrix().to_vec(), meta)?;
            m
        }
    };
    warm(&model);
    Ok(model)
}

pub fn warm(model: &EmbeddingModel) {
    if !model.is_empty() {
        let _ = model.unit_row(0);
    }
}

/// Thread-safe id → model map. Models are immutable once ready.
#[derive(Debug, Default)]
pub struct ModelRegistry {
    models: RwLock<BTreeMap<String, Registered>>,
}

impl ModelRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Reserves `id` in the loading state; false if it is taken.
    pub fn reserve(&self, id: &str, path: &str) -> bool {
        let mut map = self.models.write().unwrap();
        if map.contains_key(id) {
            return false;
        }
        map.insert(
            id.to_string(),
            Registered {
                path: path.to_string(),
                slot: Slot::Loading,
            },
        );
        true
    }

    pub fn set_ready(&self, id: &str, model: Arc<EmbeddingModel>) {
        if let Some(r) = self.models.write().unwrap().get_mut(id) {
            r.slot = Slot::Ready(model);
        }
    }

    pub fn set_failed(&self, id: &str, error: String) {
        if let Some(r) = self.models.write().unwrap().get_mut(id) {
            r.slot = Slot::Failed(error);
        }
    }

    /// Registers an in-memory model directly as ready.
    pub fn insert(&self, id: &str, path: &str, model: EmbeddingModel) -> bool {
        warm(&model);
        if !self.reserve(id, path) {
            return false;
        }
        self.set_ready(id, Arc::new(model));
        true
    }

    /// Synchronously loads a spec, recording failures in the registry.
    pub fn load_spec(&self, spec: &ModelSpec) -> bool {
        if !self.reserve(&spec.id, &spec.path.display().to_string()) {
            return false;
        }
        match load_model(spec) {
            Ok(m) => self.set_ready(&spec.id, Arc::new(m)),
            Err(e) => {
                log::warn!("model {}: {e}", spec.id);
                self.set_failed(&spec.id, e.to_string());
            }
        }
        true
    }

    pub fn get(&self, id: &str) -> Lookup {
        match self.models.read().unwrap().get(id) {
            None => Lookup::Missing,
            Some(r) => match &r.slot {
                Slot::Ready(m) => Lookup::Ready(Arc::clone(m)),
                Slot::Loading => Lookup::NotReady(ModelState::Loading),
                Slot::Failed(_) => Lookup::NotReady(ModelState::Failed),
            },
        }
    }

    pub fn entry(&self, id: &str) -> Option<RegistryEntry> {
        self.models.read().unwrap().get(id).map(|r| view(id, r))
    }

    pub fn entries(&self, filter: &ModelFilter) -> Vec<RegistryEntry> {
        self.models
            .read()
            .unwrap()
            .iter()
            .map(|(id, r)| view(id, r))
            .filter(|e| filter.accepts(e))
            .collect()
    }
}

fn view(id: &str, r: &Registered) -> RegistryEntry {
    let (state, meta, vocab_size, error) = match &r.slot {
        Slot::Loading => (ModelState::Loading, None, None, None),
        Slot::Ready(m) => (ModelState::Ready, Some(m.meta().clone()), Some(m.len()), None),
        Slot::Failed(e) => (ModelState::Failed, None, None, Some(e.clone())),
    };
    RegistryEntry {
        id: id.to_string(),
        path: r.path.clone(),
        state,
        meta,
        vocab_size,
        error,
    }
}

/// Training corpora addressable by id: files on disk or uploaded text.
#[derive(Debug, Default)]
pub struct CorpusStore {
    corpora: RwLock<BTreeMap<String, CorpusSource>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CorpusSource {
    File(PathBuf),
    Inline(Arc<String>),
}

impl CorpusStore {
    pub fn insert(&self, id: &str, source: CorpusSource) -> bool {
        let mut map = self.corpora.write().unwrap();
        if map.contains_key(id) {
            return false;
        }
        map.insert(id.to_string(), source);
        true
    }

    pub fn get(&self, id: &str) -> Option<CorpusSource> {
        self.corpora.read().unwrap().get(id).cloned()
    }

    pub fn ids(&self) -> Vec<String> {
        self.corpora.read().unwrap().keys().cloned().collect()
    }
}

//! Engine for exploring dense word-vector models.
//!
//! - [`vstore`]: word2vec text/binary models with metadata sidecars
//! - [`simquery`]: cosine neighbors, analogies with vector traces
//! - [`tsne`]: exact and Barnes-Hut t-SNE layouts
//! - [`graphx`]: incrementally expanded similarity graphs
//! - [`trainer`]: wordform/lemma feature extraction and SGNS/CBOW training

pub mod graphx;
pub mod simquery;
pub mod trainer;
pub mod tsne;
pub mod vstore;

pub use graphx::{GraphError, SimilarityGraph};
pub use simquery::{AnalogyAnswer, AnalogyTrace, Neighbor, QueryError, QueryOptions};
pub use trainer::{ModelType, TrainConfig, TrainError};
pub use tsne::{TsneConfig, TsneError, TsneLayout};
pub use vstore::{EmbeddingModel, FeatureKind, ModelFormat, ModelInfo, ModelMeta, StoreError};

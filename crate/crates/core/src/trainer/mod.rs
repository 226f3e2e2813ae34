//! Desk-scale word2vec training (skip-gram and CBOW with negative sampling)
//! over wordform or lemma token streams.

mod compare;
mod corpus;
mod vocab;

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vstore::{EmbeddingModel, FeatureKind, ModelMeta};

pub use compare::{compare_neighborhoods, NeighborhoodComparison, Side};
pub use corpus::{extract_tokens, load_corpus, read_annotated, read_plain, AnnotatedToken, Sentence};
pub use vocab::{build_vocab, noise_distribution, Vocab};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("line {0}: expected wordform<TAB>lemma<TAB>pos")]
    MalformedRecord(usize),
    #[error("no token reaches the frequency threshold")]
    EmptyVocab,
    #[error("plain-text corpora only provide the wordform feature, not {0}")]
    PlainCorpusNeedsWordform(FeatureKind),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("cancelled")]
    Cancelled,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelType {
    Cbow,
    #[default]
    Skipgram,
}

impl fmt::Display for ModelType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelType::Cbow => "cbow",
            ModelType::Skipgram => "skipgram",
        })
    }
}

impl FromStr for ModelType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "cbow" => Ok(ModelType::Cbow),
            "skipgram" | "skip-gram" => Ok(ModelType::Skipgram),
            other => Err(format!("unknown model type {other:?} (expected cbow or skipgram)")),
        }
    }
}

fn d_dim() -> usize {
    300
}
fn d_window() -> usize {
    5
}
fn d_min_count() -> u64 {
    5
}
fn d_negatives() -> usize {
    5
}
fn d_epochs() -> usize {
    5
}
fn d_lr() -> f32 {
    0.025
}
fn d_subsample() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default)]
    pub model_type: ModelType,
    #[serde(default = "d_dim")]
    pub dim: usize,
    #[serde(default = "d_window")]
    pub window: usize,
    #[serde(default = "d_min_count")]
    pub min_count: u64,
    #[serde(default = "d_negatives")]
    pub negatives: usize,
    #[serde(default = "d_epochs")]
    pub epochs: usize,
    #[serde(default = "d_lr")]
    pub initial_lr: f32,
    /// Frequent-token subsampling threshold; 0 disables subsampling.
    #[serde(default = "d_subsample")]
    pub subsample_t: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model_type: ModelType::default(),
            dim: d_dim(),
            window: d_window(),
            min_count: d_min_count(),
            negatives: d_negatives(),
            epochs: d_epochs(),
            initial_lr: d_lr(),
            subsample_t: d_subsample(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(TrainError::InvalidConfig(msg.to_string()));
        if self.dim < 2 {
            return bad("dim must be at least 2");
        }
        if self.window == 0 || self.min_count == 0 || self.negatives == 0 || self.epochs == 0 {
            return bad("window, min_count, negatives and epochs must be positive");
        }
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return bad("initial_lr must be positive");
        }
        if !(self.subsample_t >= 0.0 && self.subsample_t.is_finite()) {
            return bad("subsample_t must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainStatus {
    pub epoch: usize,
    pub words_processed: u64,
    pub total_words: u64,
    pub lr: f32,
    /// Mean negative-sampling loss since training started.
    pub mean_loss: f64,
}

/// Shared progress record of a training run.
#[derive(Debug, Default)]
pub struct TrainProgress {
    status: Mutex<TrainStatus>,
    cancel: AtomicBool,
}

impl TrainProgress {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn status(&self) -> TrainStatus {
        self.status.lock().unwrap().clone()
    }

    pub fn cancel(&self) {
        self.cancel.store(true, Ordering::Release);
    }
}

#[inline]
fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

struct Sgns<'a> {
    dim: usize,
    negatives: usize,
    noise_cdf: &'a [f64],
    input: Vec<f32>,
    output: Vec<f32>,
    grad: Vec<f32>,
    loss: f64,
    examples: u64,
}

impl Sgns<'_> {
    fn sample_noise(&self, rng: &mut ChaCha8Rng) -> usize {
        let u: f64 = rng.random();
        self.noise_cdf
            .partition_point(|&c| c <= u)
            .min(self.noise_cdf.len() - 1)
    }

    /// One positive and `negatives` noise updates of `hidden` against the
    /// output vectors. Accumulates the input-side gradient into `self.grad`.
    fn step(&mut self, hidden: &[f32], target: usize, lr: f32, rng: &mut ChaCha8Rng) {
        let d = self.dim;
        self.grad.iter_mut().for_each(|g| *g = 0.0);
        for s in 0..=self.negatives {
            let (word, label) = if s == 0 {
                (target, 1.0f32)
            } else {
                let w = self.sample_noise(rng);
                if w == target {
                    continue;
                }
                (w, 0.0)
            };
            let out = &mut self.output[word * d..(word + 1) * d];
            let f = dot(hidden, out);
            let sig = sigmoid(f);
            self.loss -= f64::from(if label == 1.0 { sig } else { 1.0 - sig }).max(1e-12).ln();
            self.examples += 1;
            let g = (label - sig) * lr;
            for ((acc, o), h) in self.grad.iter_mut().zip(out.iter_mut()).zip(hidden) {
                *acc += g * *o;
                *o += g * h;
            }
        }
    }
}

/// Trains on token sentences with a fresh vocabulary built at
/// `config.min_count`. Windows never cross sentence boundaries.
pub fn train(
    sentences: &[Vec<String>],
    feature: FeatureKind,
    config: &TrainConfig,
) -> Result<EmbeddingModel> {
    train_with_progress(sentences, feature, config, None)
}

pub fn train_with_progress(
    sentences: &[Vec<String>],
    feature: FeatureKind,
    config: &TrainConfig,
    progress: Option<&TrainProgress>,
) -> Result<EmbeddingModel> {
    config.validate()?;
    let vocab = build_vocab(sentences.iter().flatten().map(String::as_str), config.min_count)?;
    let ids: Vec<Vec<usize>> = sentences
        .iter()
        .map(|s| s.iter().filter_map(|t| vocab.index_of(t)).collect())
        .collect();
    let total_words: u64 = vocab.total();
    let v = vocab.len();
    let d = config.dim;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let input: Vec<f32> = (0..v * d)
        .map(|_| (rng.random::<f32>() - 0.5) / d as f32)
        .collect();
    let mut cdf = noise_distribution(vocab.counts());
    let mut acc = 0.0;
    for p in cdf.iter_mut() {
        acc += *p;
        *p = acc;
    }
    let mut sgd = Sgns {
        dim: d,
        negatives: config.negatives,
        noise_cdf: &cdf,
        input,
        output: vec![0.0; v * d],
        grad: vec![0.0; d],
        loss: 0.0,
        examples: 0,
    };

    // word2vec keep probability: (sqrt(c / (t N)) + 1) (t N) / c.
    let keep_prob: Vec<f64> = vocab
        .counts()
        .iter()
        .map(|&c| {
            if config.subsample_t <= 0.0 {
                1.0
            } else {
                let tn = config.subsample_t * total_words as f64;
                ((c as f64 / tn).sqrt() + 1.0) * tn / c as f64
            }
        })
        .collect();

    let budget = (config.epochs as u64 * total_words) as f64;
    let min_lr = config.initial_lr * 1e-4;
    let mut processed: u64 = 0;
    let mut hidden = vec![0.0f32; d];
    let mut kept = Vec::new();
    let mut lr = config.initial_lr;

    let publish = |epoch: usize, processed: u64, lr: f32, sgd: &Sgns| {
        if let Some(p) = progress {
            *p.status.lock().unwrap() = TrainStatus {
                epoch,
                words_processed: processed,
                total_words: total_words * config.epochs as u64,
                lr,
                mean_loss: if sgd.examples == 0 {
                    0.0
                } else {
                    sgd.loss / sgd.examples as f64
                },
            };
        }
    };

    for epoch in 0..config.epochs {
        for sent in &ids {
            if progress.is_some_and(|p| p.cancel.load(Ordering::Acquire)) {
                return Err(TrainError::Cancelled);
            }
            kept.clear();
            for &w in sent {
                if keep_prob[w] >= 1.0 || rng.random::<f64>() < keep_prob[w] {
                    kept.push(w);
                }
            }
            for pos in 0..kept.len() {
                lr = (config.initial_lr * (1.0 - processed as f64 / budget) as f32).max(min_lr);
                let center = kept[pos];
                let b = rng.random_range(1..=config.window);
                let lo = pos.saturating_sub(b);
                let hi = (pos + b).min(kept.len() - 1);
                match config.model_type {
                    ModelType::Skipgram => {
                        for c in (lo..=hi).filter(|&c| c != pos) {
                            hidden.copy_from_slice(&sgd.input[center * d..(center + 1) * d]);
                            sgd.step(&hidden, kept[c], lr, &mut rng);
                            for (x, g) in sgd.input[center * d..(center + 1) * d]
                                .iter_mut()
                                .zip(&sgd.grad)
                            {
                                *x += g;
                            }
                        }
                    }
                    ModelType::Cbow => {
                        let n_ctx = hi - lo;
                        if n_ctx == 0 {
                            continue;
                        }
                        hidden.iter_mut().for_each(|h| *h = 0.0);
                        for c in (lo..=hi).filter(|&c| c != pos) {
                            let w = kept[c];
                            for (h, x) in hidden.iter_mut().zip(&sgd.input[w * d..(w + 1) * d]) {
                                *h += x;
                            }
                        }
                        hidden.iter_mut().for_each(|h| *h /= n_ctx as f32);
                        sgd.step(&hidden, center, lr, &mut rng);
                        for c in (lo..=hi).filter(|&c| c != pos) {
                            let w = kept[c];
                            for (x, g) in sgd.input[w * d..(w + 1) * d].iter_mut().zip(&sgd.grad) {
                                *x += g;
                            }
                        }
                    }
                }
            }
            processed += sent.len() as u64;
        }
        log::debug!(
            "epoch {}: lr {lr:.6}, mean loss {:.4}",
            epoch + 1,
            sgd.loss / sgd.examples.max(1) as f64
        );
        publish(epoch + 1, processed, lr, &sgd);
    }

    let meta = ModelMeta {
        dim: d,
        feature_kind: feature,
        frequency_threshold: config.min_count,
        window: Some(config.window as u32),
        source: format!(
            "{} dim={} window={} min_count={} negatives={} epochs={} lr={} subsample={} seed={}",
            config.model_type,
            d,
            config.window,
            config.min_count,
            config.negatives,
            config.epochs,
            config.initial_lr,
            config.subsample_t,
            config.seed
        ),
    };
    let model = EmbeddingModel::new(vocab.words().to_vec(), sgd.input, meta)
        .expect("trained vocabulary is unique and vectors finite");
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> TrainConfig {
        TrainConfig {
            dim: 8,
            min_count: 1,
            epochs: 2,
            ..Default::default()
        }
    }

    fn corpus() -> Vec<Vec<String>> {
        (0..50)
            .map(|i| {
                (0..8)
                    .map(|j| format!("w{}", (i * 3 + j * 5) % 17))
                    .collect()
            })
            .collect()
    }

    #[test]
    fn config_validation() {
        let mut c = small_config();
        c.dim = 1;
        assert!(matches!(c.validate(), Err(TrainError::InvalidConfig(_))));
        let mut c = small_config();
        c.window = 0;
        assert!(c.validate().is_err());
        let mut c = small_config();
        c.initial_lr = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn metadata_is_recorded() {
        let m = train(&corpus(), FeatureKind::LemmaLower, &small_config()).unwrap();
        assert_eq!(m.meta().feature_kind, FeatureKind::LemmaLower);
        assert_eq!(m.meta().frequency_threshold, 1);
        assert_eq!(m.meta().window, Some(5));
        assert_eq!(m.dim(), 8);
        assert_eq!(m.len(), 17);
    }

    #[test]
    fn cbow_trains_and_is_deterministic() {
        let cfg = TrainConfig {
            model_type: ModelType::Cbow,
            ..small_config()
        };
        let a = train(&corpus(), FeatureKind::Wordform, &cfg).unwrap();
        let b = train(&corpus(), FeatureKind::Wordform, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.matrix().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn empty_vocab_after_threshold() {
        let cfg = TrainConfig {
            min_count: 1000,
            ..small_config()
        };
        assert!(matches!(
            train(&corpus(), FeatureKind::Wordform, &cfg),
            Err(TrainError::EmptyVocab)
        ));
    }

    #[test]
    fn progress_reports_epochs() {
        let p = TrainProgress::new();
        train_with_progress(&corpus(), FeatureKind::Wordform, &small_config(), Some(&p)).unwrap();
        let s = p.status();
        assert_eq!(s.epoch, 2);
        assert_eq!(s.words_processed, s.total_words);
        assert!(s.mean_loss > 0.0);
    }

    #[test]
    fn model_type_strings() {
        assert_eq!("cbow".parse::<ModelType>().unwrap(), ModelType::Cbow);
        assert_eq!("skipgram".parse::<ModelType>().unwrap(), ModelType::Skipgram);
        assert!("glove".parse::<ModelType>().is_err());
    }
}

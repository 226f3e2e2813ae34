use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use embex_core::{FeatureKind, ModelFormat, ModelType};

#[derive(Debug, Parser)]
#[command(name = "embex", version, about = "Explore word-embedding models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print a model's metadata and vocabulary size as key: value lines
    Info(ModelArg),
    /// Print the stored vector of a token
    Vector {
        #[command(flatten)]
        model: ModelArg,
        token: String,
        #[arg(long)]
        json: bool,
    },
    /// Nearest neighbors of a word by cosine similarity
    Similar {
        #[command(flatten)]
        model: ModelArg,
        word: String,
        #[arg(short, default_value_t = 10)]
        k: usize,
        #[arg(long)]
        json: bool,
    },
    /// Solve A - B + C = ?
    Analogy {
        #[command(flatten)]
        model: ModelArg,
        a: String,
        b: String,
        c: String,
        /// Also list the k best candidates
        #[arg(short, default_value_t = 1)]
        k: usize,
        /// Print every intermediate vector and the final cosine
        #[arg(long)]
        trace: bool,
        #[arg(long)]
        json: bool,
    },
    /// Neighbors of a word in a wordform model and a lemma model side by side
    Compare {
        wordform_model: PathBuf,
        lemma_model: PathBuf,
        wordform: String,
        /// Defaults to the wordform
        lemma: Option<String>,
        #[arg(short, default_value_t = 10)]
        k: usize,
        #[arg(long)]
        json: bool,
    },
    /// 2D t-SNE layout of a selection of words
    Tsne(TsneArgs),
    /// Similarity graph around a center word
    Graph(GraphArgs),
    /// Train a model on an annotated or plain corpus
    Train(TrainArgs),
    /// Write the feature tokens of a corpus, one per line
    Prep {
        corpus: PathBuf,
        #[arg(long, value_parser = parse_feature, default_value = "wordform")]
        feature: FeatureKind,
        /// Output file; stdout when absent
        #[arg(short)]
        o: Option<PathBuf>,
    },
    /// Run the HTTP service
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct ModelArg {
    /// word2vec model file (text, or binary when it ends in .bin)
    pub model: PathBuf,
    /// Override the format guessed from the file name
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Text,
    Binary,
}

impl From<FormatArg> for ModelFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Text => ModelFormat::Text,
            FormatArg::Binary => ModelFormat::Binary,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LayoutFormat {
    Json,
    Tsv,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("selection").required(true).args(["top", "similar_to", "tokens"])))]
pub struct TsneArgs {
    #[command(flatten)]
    pub model: ModelArg,
    /// The N most frequent words
    #[arg(long)]
    pub top: Option<usize>,
    /// A word and its -n nearest neighbors
    #[arg(long, requires = "n")]
    pub similar_to: Option<String>,
    #[arg(short, requires = "similar_to")]
    pub n: Option<usize>,
    /// Explicit comma-separated word list
    #[arg(long, value_delimiter = ',')]
    pub tokens: Option<Vec<String>>,
    #[arg(long, default_value_t = 30.0)]
    pub perplexity: f64,
    #[arg(long, default_value_t = 1000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 200.0)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 12.0)]
    pub exaggeration: f64,
    /// Barnes-Hut threshold; 0 runs the exact algorithm
    #[arg(long, default_value_t = 0.5)]
    pub theta: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Reduce inputs to this many principal components first
    #[arg(long)]
    pub pca: Option<usize>,
    /// Output file; stdout when absent
    #[arg(short)]
    pub o: Option<PathBuf>,
    /// Defaults to tsv for .tsv outputs and json otherwise
    #[arg(long, value_enum)]
    pub output_format: Option<LayoutFormat>,
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    #[command(flatten)]
    pub model: ModelArg,
    pub center: String,
    #[arg(short)]
    pub n: usize,
    /// Expand an existing node, as WORD:N; repeatable, applied in order
    #[arg(long = "expand", value_parser = parse_word_n)]
    pub expand: Vec<(String, usize)>,
    /// Add a seed word, as WORD or WORD:N; applied after the expansions
    #[arg(long = "add", value_parser = parse_word_n_opt)]
    pub add: Vec<(String, usize)>,
    #[arg(short)]
    pub o: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    pub corpus: PathBuf,
    #[arg(long, value_parser = parse_feature, default_value = "wordform")]
    pub feature: FeatureKind,
    #[arg(long, value_parser = parse_model_type, default_value = "skipgram")]
    pub model_type: ModelType,
    #[arg(long, default_value_t = 300)]
    pub dim: usize,
    #[arg(long, default_value_t = 5)]
    pub window: usize,
    #[arg(long, default_value_t = 5)]
    pub min_count: u64,
    #[arg(long, default_value_t = 5)]
    pub negatives: usize,
    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.025)]
    pub lr: f32,
    /// Subsampling threshold; 0 disables it
    #[arg(long, default_value_t = 1e-3)]
    pub subsample: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output model; binary when it ends in .bin
    #[arg(short)]
    pub o: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Model registry file (models.json)
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub host: Option<String>,
    #[arg(long)]
    pub port: Option<u16>,
    /// Persist graphs as JSON files in this directory
    #[arg(long)]
    pub graph_dir: Option<PathBuf>,
    /// Save trained models in this directory
    #[arg(long)]
    pub model_dir: Option<PathBuf>,
    /// Concurrent background jobs
    #[arg(long)]
    pub jobs: Option<usize>,
}

fn parse_feature(s: &str) -> Result<FeatureKind, String> {
    s.parse()
}

fn parse_model_type(s: &str) -> Result<ModelType, String> {
    s.parse()
}

fn parse_word_n(s: &str) -> Result<(String, usize), String> {
    let (w, n) = s
        .rsplit_once(':')
        .ok_or_else(|| format!("expected WORD:N, got {s:?}"))?;
    let n = n.parse().map_err(|_| format!("bad count in {s:?}"))?;
    if w.is_empty() {
        return Err(format!("empty word in {s:?}"));
    }
    Ok((w.to_string(), n))
}

fn parse_word_n_opt(s: &str) -> Result<(String, usize), String> {
    match s.rsplit_once(':') {
        Some((_, n)) if n.parse::<usize>().is_ok() => parse_word_n(s),
        _ => Ok((s.to_string(), 0)),
    }
}

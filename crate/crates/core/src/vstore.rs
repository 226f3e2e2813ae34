//! Embedding model storage: word2vec text/binary I/O, metadata sidecars and
//! the lazily built row-normalized matrix used by every similarity query.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("line {0}: wrong number of vector components")]
    DimensionMismatch(usize),
    #[error("duplicate token {0:?}")]
    DuplicateToken(String),
    #[error("line {0}: non-finite vector component")]
    NonFiniteValue(usize),
    #[error("line {0}: unparseable vector component")]
    InvalidNumber(usize),
    #[error("line {0}: token is not valid UTF-8")]
    InvalidToken(usize),
    #[error("header announces {expected} tokens but file holds {found}")]
    VocabSizeMismatch { expected: usize, found: usize },
    #[error("file ends in the middle of a record")]
    TruncatedFile,
    #[error("token {0:?} is not in the vocabulary")]
    OutOfVocabulary(String),
    #[error("metadata sidecar {path}: {reason}")]
    BadSidecar { path: PathBuf, reason: String },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, StoreError>;

/// Which corpus feature a model's tokens were built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    #[default]
    Wordform,
    LemmaCased,
    LemmaLower,
}

impl FeatureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Wordform => "wordform",
            FeatureKind::LemmaCased => "lemma_cased",
            FeatureKind::LemmaLower => "lemma_lower",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "wordform" => Ok(FeatureKind::Wordform),
            "lemma_cased" => Ok(FeatureKind::LemmaCased),
            "lemma_lower" => Ok(FeatureKind::LemmaLower),
            other => Err(format!(
                "unknown feature kind {other:?} (expected wordform, lemma_cased or lemma_lower)"
            )),
        }
    }
}

/// Training provenance carried next to the vectors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub dim: usize,
    #[serde(default)]
    pub feature_kind: FeatureKind,
    #[serde(default)]
    pub frequency_threshold: u64,
    #[serde(default)]
    pub window: Option<u32>,
    #[serde(default)]
    pub source: String,
}

impl ModelMeta {
    /// Metadata for a model whose provenance is unknown.
    pub fn unknown(dim: usize) -> Self {
        ModelMeta {
            dim,
            feature_kind: FeatureKind::Wordform,
            frequency_threshold: 0,
            window: None,
            source: String::new(),
        }
    }
}

/// Summary returned by [`EmbeddingModel::info`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    #[serde(flatten)]
    pub meta: ModelMeta,
    pub vocab_size: usize,
    /// Rows with zero Euclidean norm; they never appear as similarity candidates.
    pub zero_norm_rows: usize,
}

/// Row-normalized copy of a model matrix.
#[derive(Debug, Clone)]
pub(crate) struct UnitRows {
    pub(crate) data: Vec<f64>,
    pub(crate) zero: Vec<bool>,
}

/// A vocabulary plus its dense row-major vector matrix.
///
/// Storage order is treated as descending corpus frequency. Models are
/// immutable once constructed, so they can be shared freely between threads.
#[derive(Debug, Clone)]
pub struct EmbeddingModel {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    matrix: Vec<f32>,
    meta: ModelMeta,
    unit: OnceLock<UnitRows>,
}

impl PartialEq for EmbeddingModel {
    fn eq(&self, other: &Self) -> bool {
        self.tokens == other.tokens && self.meta == other.meta && self.matrix == other.matrix
    }
}

impl EmbeddingModel {
    /// Builds a model from tokens and a row-major matrix.
    pub fn new(tokens: Vec<String>, matrix: Vec<f32>, meta: ModelMeta) -> Result<Self> {
        if meta.dim == 0 {
            return Err(StoreError::InvalidModel("dim must be positive".into()));
        }
        if matrix.len() != tokens.len() * meta.dim {
            return Err(StoreError::InvalidModel(format!(
                "matrix holds {} values, expected {} x {}",
                matrix.len(),
                tokens.len(),
                meta.dim
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(StoreError::InvalidModel("non-finite vector component".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(StoreError::InvalidModel(format!("invalid token {tok:?}")));
            }
            if index.insert(tok.clone(), i).is_some() {
                return Err(StoreError::DuplicateToken(tok.clone()));
            }
        }
        Ok(EmbeddingModel {
            tokens,
            index,
            matrix,
            meta,
            unit: OnceLock::new(),
        })
    }

    /// Convenience constructor from per-token rows.
    pub fn from_rows<S: Into<String>>(
        rows: impl IntoIterator<Item = (S, Vec<f32>)>,
        meta: ModelMeta,
    ) -> Result<Self> {
        let mut tokens = Vec::new();
        let mut matrix = Vec::new();
        for (tok, row) in rows {
            if row.len() != meta.dim {
                return Err(StoreError::InvalidModel(format!(
                    "row of length {} in a {}-dim model",
                    row.len(),
                    meta.dim
                )));
            }
            tokens.push(tok.into());
            matrix.extend_from_slice(&row);
        }
        Self::new(tokens, matrix, meta)
    }

    pub fn dim(&self) -> usize {
        self.meta.dim
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn meta(&self) -> &ModelMeta {
        &self.meta
    }

    pub fn set_meta_source(&mut self, source: impl Into<String>) {
        self.meta.source = source.into();
    }

    /// Tokens in storage (frequency) order.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, row: usize) -> &str {
        &self.tokens[row]
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn row(&self, row: usize) -> &[f32] {
        let d = self.meta.dim;
        &self.matrix[row * d..(row + 1) * d]
    }

    pub fn matrix(&self) -> &[f32] {
        &self.matrix
    }

    /// Exact-match vector lookup. No case folding happens here.
    pub fn lookup(&self, token: &str) -> Result<&[f32]> {
        self.index_of(token)
            .map(|i| self.row(i))
            .ok_or_else(|| StoreError::OutOfVocabulary(token.to_string()))
    }

    pub fn info(&self) -> ModelInfo {
        let zero_norm_rows = self.unit_rows().zero.iter().filter(|z| **z).count();
        ModelInfo {
            meta: self.meta.clone(),
            vocab_size: self.len(),
            zero_norm_rows,
        }
    }

    pub(crate) fn unit_rows(&self) -> &UnitRows {
        self.unit.get_or_init(|| {
            let d = self.meta.dim;
            let mut data = Vec::with_capacity(self.matrix.len());
            let mut zero = Vec::with_capacity(self.tokens.len());
            for row in self.matrix.chunks_exact(d) {
                let norm = row.iter().map(|&v| f64::from(v).powi(2)).sum::<f64>().sqrt();
                if norm == 0.0 {
                    zero.push(true);
                    data.extend(std::iter::repeat_n(0.0, d));
                } else {
                    zero.push(false);
                    data.extend(row.iter().map(|&v| f64::from(v) / norm));
                }
            }
            UnitRows { data, zero }
        })
    }

    /// The unit-length copy of row `row`, or `None` for a zero-norm row.
    pub fn unit_row(&self, row: usize) -> Option<&[f64]> {
        let unit = self.unit_rows();
        if unit.zero[row] {
            None
        } else {
            let d = self.meta.dim;
            Some(&unit.data[row * d..(row + 1) * d])
        }
    }

    pub fn is_zero_row(&self, row: usize) -> bool {
        self.unit_rows().zero[row]
    }
}

/// Path of the JSON metadata sidecar that accompanies `model_path`.
pub fn sidecar_path(model_path: &Path) -> PathBuf {
    let mut name = model_path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

fn read_sidecar(model_path: &Path, dim: usize) -> Result<ModelMeta> {
    let path = sidecar_path(model_path);
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            let mut meta = ModelMeta::unknown(dim);
            meta.source = model_path.display().to_string();
            return Ok(meta);
        }
        Err(e) => return Err(e.into()),
    };
    let meta: ModelMeta = serde_json::from_str(&text).map_err(|e| StoreError::BadSidecar {
        path: path.clone(),
        reason: e.to_string(),
    })?;
    if meta.dim != dim {
        return Err(StoreError::BadSidecar {
            path,
            reason: format!("sidecar says dim {} but vectors have {dim}", meta.dim),
        });
    }
    Ok(meta)
}

fn write_sidecar(model_path: &Path, meta: &ModelMeta) -> Result<()> {
    let json = serde_json::to_string_pretty(meta).expect("metadata serializes");
    std::fs::write(sidecar_path(model_path), json + "\n")?;
    Ok(())
}

fn parse_header(line: &str) -> Result<(usize, usize)> {
    let mut parts = line.split_whitespace();
    let (Some(n), Some(d), None) = (parts.next(), parts.next(), parts.next()) else {
        return Err(StoreError::MalformedHeader(line.trim_end().to_string()));
    };
    let n: usize = n
        .parse()
        .map_err(|_| StoreError::MalformedHeader(line.trim_end().to_string()))?;
    let d: usize = d
        .parse()
        .map_err(|_| StoreError::MalformedHeader(line.trim_end().to_string()))?;
    if d == 0 {
        return Err(StoreError::MalformedHeader("dimension must be positive".into()));
    }
    Ok((n, d))
}

/// Parses word2vec text format from any reader. Metadata defaults to unknown.
pub fn read_text<R: BufRead>(reader: R) -> Result<EmbeddingModel> {
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| StoreError::MalformedHeader("empty file".into()))??;
    let (n, dim) = parse_header(&header)?;

    let mut tokens = Vec::with_capacity(n);
    let mut matrix = Vec::with_capacity(n * dim);
    let mut seen = HashMap::with_capacity(n);
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line?;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else {
            continue;
        };
        let mut count = 0;
        for field in fields {
            count += 1;
            if count > dim {
                return Err(StoreError::DimensionMismatch(line_no));
            }
            let v: f32 = field.parse().map_err(|_| StoreError::InvalidNumber(line_no))?;
            if !v.is_finite() {
                return Err(StoreError::NonFiniteValue(line_no));
            }
            matrix.push(v);
        }
        if count != dim {
            return Err(StoreError::DimensionMismatch(line_no));
        }
        if seen.insert(token.to_string(), tokens.len()).is_some() {
            return Err(StoreError::DuplicateToken(token.to_string()));
        }
        tokens.push(token.to_string());
    }
    if tokens.len() != n {
        return Err(StoreError::VocabSizeMismatch {
            expected: n,
            found: tokens.len(),
        });
    }
    Ok(EmbeddingModel {
        tokens,
        index: seen,
        matrix,
        meta: ModelMeta::unknown(dim),
        unit: OnceLock::new(),
    })
}

/// Parses word2vec binary format: an ASCII header, then per record the token,
/// one space and `dim` little-endian f32 values, optionally followed by `\n`.
pub fn read_binary<R: Read>(reader: R) -> Result<EmbeddingModel> {
    let mut reader = BufReader::new(reader);
    let mut header = Vec::new();
    reader.read_until(b'\n', &mut header)?;
    if header.last() != Some(&b'\n') {
        return Err(if header.is_empty() {
            StoreError::MalformedHeader("empty file".into())
        } else {
            StoreError::TruncatedFile
        });
    }
    let header = std::str::from_utf8(&header)
        .map_err(|_| StoreError::MalformedHeader("header is not ASCII".into()))?;
    let (n, dim) = parse_header(header)?;

    let mut tokens = Vec::with_capacity(n);
    let mut matrix = Vec::with_capacity(n * dim);
    let mut seen = HashMap::with_capacity(n);
    let mut token_buf = Vec::new();
    let mut vec_buf = vec![0u8; dim * 4];
    for record in 0..n {
        // Line numbers are reported as if each record were one line.
        let line_no = record + 2;
        token_buf.clear();
        loop {
            let mut byte = [0u8; 1];
            if reader.read(&mut byte)? == 0 {
                return Err(StoreError::TruncatedFile);
            }
            match byte[0] {
                b' ' => break,
                b'\n' if token_buf.is_empty() => continue,
                b => token_buf.push(b),
            }
        }
        let token = String::from_utf8(token_buf.clone())
            .map_err(|_| StoreError::InvalidToken(line_no))?;
        if token.is_empty() || token.chars().any(char::is_whitespace) {
            return Err(StoreError::InvalidToken(line_no));
        }
        reader.read_exact(&mut vec_buf).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => StoreError::TruncatedFile,
            _ => StoreError::Io(e),
        })?;
        for chunk in vec_buf.chunks_exact(4) {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(StoreError::NonFiniteValue(line_no));
            }
            matrix.push(v);
        }
        if seen.insert(token.clone(), tokens.len()).is_some() {
            return Err(StoreError::DuplicateToken(token));
        }
        tokens.push(token);
    }
    Ok(EmbeddingModel {
        tokens,
        index: seen,
        matrix,
        meta: ModelMeta::unknown(dim),
        unit: OnceLock::new(),
    })
}

/// Writes word2vec text format. Components use the shortest representation
/// that parses back to the same `f32`, so the text round-trip is exact.
pub fn write_text<W: Write>(model: &EmbeddingModel, writer: W) -> io::Result<()> {
    let mut w = BufWriter::new(writer);
    writeln!(w, "{} {}", model.len(), model.dim())?;
    for (i, tok) in model.tokens.iter().enumerate() {
        w.write_all(tok.as_bytes())?;
        for v in model.row(i) {
            write!(w, " {v}")?;
        }
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn write_binary<W: Write>(model: &EmbeddingModel, writer: W) -> io::Result<()> {
    let mut w = BufWriter::new(writer);
    writeln!(w, "{} {}", model.len(), model.dim())?;
    for (i, tok) in model.tokens.iter().enumerate() {
        w.write_all(tok.as_bytes())?;
        w.write_all(b" ")?;
        for v in model.row(i) {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Loads a text-format model and its sidecar metadata (if any).
pub fn load_text(path: impl AsRef<Path>) -> Result<EmbeddingModel> {
    let path = path.as_ref();
    let mut model = read_text(BufReader::new(File::open(path)?))?;
    model.meta = read_sidecar(path, model.dim())?;
    Ok(model)
}

/// Loads a binary-format model and its sidecar metadata (if any).
pub fn load_binary(path: impl AsRef<Path>) -> Result<EmbeddingModel> {
    let path = path.as_ref();
    let mut model = read_binary(File::open(path)?)?;
    model.meta = read_sidecar(path, model.dim())?;
    Ok(model)
}

pub fn save_text(model: &EmbeddingModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_text(model, File::create(path)?)?;
    write_sidecar(path, &model.meta)
}

pub fn save_binary(model: &EmbeddingModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_binary(model, File::create(path)?)?;
    write_sidecar(path, &model.meta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFormat {
    Text,
    Binary,
}

impl ModelFormat {
    /// `.bin` files are binary, everything else is text.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") => ModelFormat::Binary,
            _ => ModelFormat::Text,
        }
    }
}

impl FromStr for ModelFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "text" => Ok(ModelFormat::Text),
            "binary" => Ok(ModelFormat::Binary),
            other => Err(format!("unknown model format {other:?}")),
        }
    }
}

pub fn load(path: impl AsRef<Path>, format: ModelFormat) -> Result<EmbeddingModel> {
    match format {
        ModelFormat::Text => load_text(path),
        ModelFormat::Binary => load_binary(path),
    }
}

pub fn save(model: &EmbeddingModel, path: impl AsRef<Path>, format: ModelFormat) -> Result<()> {
    match format {
        ModelFormat::Text => save_text(model, path),
        ModelFormat::Binary => save_binary(model, path),
    }
}

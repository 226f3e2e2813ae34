mod args;

use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use embex_core::graphx::GraphError;
use embex_core::simquery::{self, AnalogyTrace, QueryError, QueryOptions};
use embex_core::trainer::{self, TrainError};
use embex_core::tsne::{self, TsneError};
use embex_core::vstore::{self, StoreError};
use embex_core::{EmbeddingModel, ModelFormat, SimilarityGraph, TrainConfig, TsneConfig};
use embex_service::api::{select_rows, TsneRequest};
use embex_service::ServiceConfig;
use serde::Serialize;

use args::{Cli, Command, GraphArgs, LayoutFormat, ModelArg, ServeArgs, TrainArgs, TsneArgs};

/// Failure classes and their exit codes.
#[derive(Debug)]
enum Failure {
    /// 1: files that cannot be read, written or parsed.
    Io(String),
    /// 2: well-formed requests the model cannot answer.
    Query(String),
    /// 3: invalid arguments.
    Usage(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Io(_) => 1,
            Failure::Query(_) => 2,
            Failure::Usage(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Io(m) | Failure::Query(m) | Failure::Usage(m) => m,
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::OutOfVocabulary(_) => Failure::Query(e.to_string()),
            other => Failure::Io(other.to_string()),
        }
    }
}

impl From<QueryError> for Failure {
    fn from(e: QueryError) -> Self {
        match e {
            QueryError::InvalidK => Failure::Usage(e.to_string()),
            other => Failure::Query(other.to_string()),
        }
    }
}

impl From<GraphError> for Failure {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::InvalidN => Failure::Usage(e.to_string()),
            GraphError::Query(q) => q.into(),
            other => Failure::Query(other.to_string()),
        }
    }
}

impl From<TsneError> for Failure {
    fn from(e: TsneError) -> Self {
        match e {
            TsneError::DegenerateInput | TsneError::NonFinite | TsneError::Cancelled => {
                Failure::Query(e.to_string())
            }
            other => Failure::Usage(other.to_string()),
        }
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::MalformedRecord(_) | TrainError::Io(_) => Failure::Io(e.to_string()),
            TrainError::Cancelled => Failure::Query(e.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(3),
            };
        }
    };
    let level = if matches!(cli.command, Command::Serve(_)) { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("embex: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Info(m) => info(&m),
        Command::Vector { model, token, json } => vector(&model, &token, json),
        Command::Similar { model, word, k, json } => similar(&model, &word, k, json),
        Command::Analogy { model, a, b, c, k, trace, json } => {
            analogy(&model, [&a, &b, &c], k, trace, json)
        }
        Command::Compare { wordform_model, lemma_model, wordform, lemma, k, json } => {
            compare(&wordform_model, &lemma_model, &wordform, lemma.as_deref(), k, json)
        }
        Command::Tsne(a) => layout(&a),
        Command::Graph(a) => graph(&a),
        Command::Train(a) => train(&a),
        Command::Prep { corpus, feature, o } => prep(&corpus, feature, o.as_deref()),
        Command::Serve(a) => serve(&a),
    }
}

fn load(m: &ModelArg) -> Result<EmbeddingModel> {
    let format = m
        .format
        .map(ModelFormat::from)
        .unwrap_or_else(|| ModelFormat::from_path(&m.model));
    vstore::load(&m.model, format).map_err(|e| Failure::Io(format!("{}: {e}", m.model.display())))
}

fn load_path(path: &Path) -> Result<EmbeddingModel> {
    load(&ModelArg {
        model: path.to_path_buf(),
        format: None,
    })
}

/// Writes to `path`, or stdout when it is `None` or `-`.
fn output(path: Option<&Path>, body: &str) -> Result<()> {
    match path {
        Some(p) if p != Path::new("-") => std::fs::write(p, body)
            .map_err(|e| Failure::Io(format!("{}: {e}", p.display()))),
        _ => {
            let mut out = io::stdout().lock();
            out.write_all(body.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

fn json_line<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string(value).expect("engine types serialize");
    s.push('\n');
    s
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Failure::Usage("k must be at least 1".into()));
    }
    Ok(())
}

fn info(m: &ModelArg) -> Result<()> {
    let model = load(m)?;
    let info = model.info();
    let meta = &info.meta;
    let format = m
        .format
        .map(ModelFormat::from)
        .unwrap_or_else(|| ModelFormat::from_path(&m.model));
    let mut out = String::new();
    let _ = writeln!(out, "path: {}", m.model.display());
    let _ = writeln!(out, "format: {}", if format == ModelFormat::Binary { "binary" } else { "text" });
    let _ = writeln!(out, "vocab_size: {}", info.vocab_size);
    let _ = writeln!(out, "dim: {}", meta.dim);
    let _ = writeln!(out, "feature_kind: {}", meta.feature_kind);
    let _ = writeln!(out, "frequency_threshold: {}", meta.frequency_threshold);
    let window = meta.window.map_or_else(|| "none".to_string(), |w| w.to_string());
    let _ = writeln!(out, "window: {window}");
    let _ = writeln!(out, "source: {}", meta.source);
    let _ = writeln!(out, "zero_norm_rows: {}", info.zero_norm_rows);
    output(None, &out)
}

fn vector(m: &ModelArg, token: &str, json: bool) -> Result<()> {
    let model = load(m)?;
    let row = simquery::resolve(&model, token, QueryOptions::for_model(&model))?;
    let values = model.row(row);
    if json {
        #[derive(Serialize)]
        struct Out<'a> {
            token: &'a str,
            vector: &'a [f32],
        }
        output(None, &json_line(&Out { token: model.token(row), vector: values }))
    } else {
        let nums: Vec<String> = values.iter().map(|v| v.to_string()).collect();
        output(None, &format!("{}\t{}\n", model.token(row), nums.join(" ")))
    }
}

fn neighbor_table(neighbors: &[simquery::Neighbor]) -> String {
    neighbors
        .iter()
        .map(|n| format!("{}\t{:.6}\n", n.token, n.score))
        .collect()
}

fn similar(m: &ModelArg, word: &str, k: usize, json: bool) -> Result<()> {
    check_k(k)?;
    let model = load(m)?;
    let hits = simquery::top_k_similar(&model, word, k, QueryOptions::for_model(&model))?;
    if json {
        output(None, &json_line(&hits))
    } else {
        output(None, &neighbor_table(&hits))
    }
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(" ")
}

fn trace_block(t: &AnalogyTrace) -> String {
    let (a, b, c, r) = (&t.a.token, &t.b.token, &t.c.token, &t.result.token);
    let mut out = String::new();
    let _ = writeln!(out, "{a}\t{}", fmt_vec(&t.a.vector));
    let _ = writeln!(out, "{b}\t{}", fmt_vec(&t.b.vector));
    let _ = writeln!(out, "{c}\t{}", fmt_vec(&t.c.vector));
    let _ = writeln!(out, "{a}-{b}\t{}", fmt_vec(&t.a_minus_b));
    let _ = writeln!(out, "{a}-{b}+{c}\t{}", fmt_vec(&t.query));
    let _ = writeln!(out, "{r}\t{}", fmt_vec(&t.result_vector));
    let _ = writeln!(out, "({a}-{b}+{c})-{r}\t{}", fmt_vec(&t.residual));
    let _ = writeln!(out, "cos({a}-{b}+{c};{r}), {:.6}", t.cos_query_result);
    out
}

fn analogy(m: &ModelArg, [a, b, c]: [&str; 3], k: usize, trace: bool, json: bool) -> Result<()> {
    check_k(k)?;
    let model = load(m)?;
    let ans = simquery::analogy(&model, a, b, c, k, QueryOptions::for_model(&model))?;
    if json {
        return output(None, &json_line(&ans));
    }
    let t = &ans.trace;
    let mut out = format!(
        "{} - {} + {} = {}\n",
        t.a.token, t.b.token, t.c.token, t.result.token
    );
    if k > 1 {
        out.push_str(&neighbor_table(&ans.neighbors));
    }
    if trace {
        out.push_str(&trace_block(t));
    }
    output(None, &out)
}

fn compare(
    wf: &Path,
    lm: &Path,
    wordform: &str,
    lemma: Option<&str>,
    k: usize,
    json: bool,
) -> Result<()> {
    check_k(k)?;
    let (m_wf, m_lm) = (load_path(wf)?, load_path(lm)?);
    let cmp = trainer::compare_neighborhoods(&m_wf, &m_lm, wordform, lemma.unwrap_or(wordform), k)
        .map_err(|(side, e)| Failure::Query(format!("{side}: {e}")))?;
    if json {
        return output(None, &json_line(&cmp));
    }
    let mut out = String::new();
    let rows = cmp.wf_neighbors.len().max(cmp.lm_neighbors.len());
    let cell = |n: Option<&simquery::Neighbor>| {
        n.map_or_else(|| "\t".to_string(), |n| {
            let mark = if cmp.overlap.contains(&n.token) { "*" } else { "" };
            format!("{}{mark}\t{:.6}", n.token, n.score)
        })
    };
    for i in 0..rows {
        let _ = writeln!(
            out,
            "{}\t{}",
            cell(cmp.wf_neighbors.get(i)),
            cell(cmp.lm_neighbors.get(i))
        );
    }
    let _ = writeln!(out, "overlap: {}", cmp.overlap.join(" "));
    output(None, &out)
}

fn layout(a: &TsneArgs) -> Result<()> {
    let model = load(&a.model)?;
    let config = TsneConfig {
        perplexity: a.perplexity,
        n_iter: a.iterations,
        learning_rate: a.learning_rate,
        early_exaggeration: a.exaggeration,
        theta: a.theta,
        seed: a.seed,
        pca_components: a.pca,
        ..TsneConfig::default()
    };
    let request = TsneRequest {
        tokens: a.tokens.clone(),
        top_frequent_n: a.top,
        similar_to: a.similar_to.clone(),
        n: a.n,
        config: config.clone(),
    };
    let rows = select_rows(&model, &request).map_err(|e| {
        if e.status.is_client_error() && e.status.as_u16() != 404 {
            Failure::Usage(e.message)
        } else {
            Failure::Query(e.message)
        }
    })?;
    config.validate(rows.len())?;
    let tokens: Vec<String> = rows.iter().map(|&r| model.token(r).to_string()).collect();
    let x: Vec<Vec<f64>> = rows
        .iter()
        .map(|&r| model.row(r).iter().map(|&v| f64::from(v)).collect())
        .collect();
    let result = tsne::embed(&x, &tokens, &config, None)?;
    let tsv = match a.output_format {
        Some(f) => f == LayoutFormat::Tsv,
        None => a
            .o
            .as_ref()
            .and_then(|p| p.extension())
            .is_some_and(|e| e == "tsv"),
    };
    let body = if tsv { result.to_tsv() } else { json_line(&result) };
    output(a.o.as_deref(), &body)
}

fn graph(a: &GraphArgs) -> Result<()> {
    let model = load(&a.model)?;
    let center = simquery::resolve(&model, &a.center, QueryOptions::for_model(&model))?;
    let id = a.model.model.display().to_string();
    let mut g = SimilarityGraph::build_star(id, &model, model.token(center), a.n)?;
    for (word, n) in &a.expand {
        let row = simquery::resolve(&model, word, QueryOptions::for_model(&model))?;
        g.expand_node(&model, model.token(row), *n)?;
    }
    for (word, n) in &a.add {
        g.add_word(&model, word, *n)?;
    }
    output(a.o.as_deref(), &json_line(&g))
}

fn train(a: &TrainArgs) -> Result<()> {
    let config = TrainConfig {
        model_type: a.model_type,
        dim: a.dim,
        window: a.window,
        min_count: a.min_count,
        negatives: a.negatives,
        epochs: a.epochs,
        initial_lr: a.lr,
        subsample_t: a.subsample,
        seed: a.seed,
    };
    config.validate()?;
    let file = File::open(&a.corpus).map_err(|e| Failure::Io(format!("{}: {e}", a.corpus.display())))?;
    let sentences = trainer::load_corpus(BufReader::new(file), a.feature)?;
    log::info!("training on {} sentences", sentences.len());
    let model = trainer::train(&sentences, a.feature, &config)?;
    let format = a
        .format
        .map(ModelFormat::from)
        .unwrap_or_else(|| ModelFormat::from_path(&a.o));
    vstore::save(&model, &a.o, format)?;
    eprintln!(
        "wrote {} ({} tokens, dim {})",
        a.o.display(),
        model.len(),
        model.dim()
    );
    Ok(())
}

fn prep(corpus: &Path, feature: embex_core::FeatureKind, o: Option<&Path>) -> Result<()> {
    let file = File::open(corpus).map_err(|e| Failure::Io(format!("{}: {e}", corpus.display())))?;
    let sentences = trainer::load_corpus(BufReader::new(file), feature)?;
    let write = |w: &mut dyn Write| -> io::Result<()> {
        for token in sentences.iter().flatten() {
            writeln!(w, "{token}")?;
        }
        w.flush()
    };
    match o {
        Some(p) if p != Path::new("-") => {
            let f = File::create(p).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))?;
            write(&mut BufWriter::new(f))?;
        }
        _ => write(&mut BufWriter::new(io::stdout().lock()))?,
    }
    Ok(())
}

fn serve(a: &ServeArgs) -> Result<()> {
    let mut cfg = ServiceConfig::from_env().map_err(Failure::Usage)?;
    if let Some(h) = &a.host {
        cfg.host = h.clone();
    }
    if let Some(p) = a.port {
        cfg.port = p;
    }
    if let Some(c) = &a.config {
        cfg.models_config = Some(c.clone());
    }
    let set = |dst: &mut Option<PathBuf>, src: &Option<PathBuf>| {
        if src.is_some() {
            dst.clone_from(src);
        }
    };
    set(&mut cfg.graph_dir, &a.graph_dir);
    set(&mut cfg.model_dir, &a.model_dir);
    if let Some(j) = a.jobs {
        cfg.job_workers = j;
    }
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    rt.block_on(embex_service::serve(cfg)).map_err(Failure::Io)
}

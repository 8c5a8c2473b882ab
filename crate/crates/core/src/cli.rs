//! The `spanparse` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 malformed or missing data,
//! 3 numeric failure (a diverged loss or a failed gradient check).

use std::collections::HashSet;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::config::{ConfigError, ConfigFile};
use crate::decoder::cky_decode;
use crate::encoder::vectors::VectorFile;
use crate::encoder::VectorMode;
use crate::evaluation::{bootstrap_significance, default_ignore_labels, labeled_prf};
use crate::gradcheck;
use crate::model::{ParserModel, VectorSource, DEFAULT_HEAD_HIDDEN};
use crate::scorer::ensemble_chart;
use crate::training::{fallback_tree, train, LanguageData, TrainConfig, TrainError, TrainMode};
use crate::treebank::{serialize, TaggedWord, Treebank};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Keys accepted in `--config` files.
const CONFIG_KEYS: &[&str] = &[
    "seed",
    "lang",
    "vectors",
    "mode",
    "batch_size",
    "lr",
    "epochs",
    "models",
    "resamples",
    "ignore_labels",
    "regime",
    "train",
    "dev",
    "output",
    "log",
    "model",
    "layers",
    "d_model",
    "heads",
    "d_ff",
    "dropout",
    "head_hidden",
    "warmup",
    "exponent",
    "eval_every",
    "clip_norm",
    "target_f1",
    "lowercase",
    "word_embeddings",
    "max_len",
    "draws",
];

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => CliError::Data(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::DivergedLoss { .. } => CliError::Numeric(e.to_string()),
            TrainError::InvalidConfig(_) | TrainError::InvalidSampler(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

fn data(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn io(e: std::io::Error) -> CliError {
    CliError::Data(e.to_string())
}

#[derive(Parser, Debug)]
#[command(name = "spanparse", version, about = "Span-based constituency parser")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct Common {
    /// key=value file; flags given on the command line win
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model and write a checkpoint
    Train(TrainArgs),
    /// Parse tokenized sentences, one per line
    Parse(ParseArgs),
    /// Parse with the averaged charts of several models
    Ensemble(ParseArgs),
    /// Labeled bracket scores of predicted trees against gold trees
    Evaluate(EvaluateArgs),
    /// Paired bootstrap test that system A beats system B
    Significance(SignificanceArgs),
    /// Finite-difference check of every autodiff op and the training pipeline
    Gradcheck(GradcheckArgs),
    /// Validate a CTXV1 or static vector file
    InspectVectors(InspectArgs),
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Language codes, comma separated
    #[arg(long)]
    lang: Option<String>,
    /// Training treebanks, one per language
    #[arg(long)]
    train: Option<String>,
    /// Dev treebanks, one per language
    #[arg(long)]
    dev: Option<String>,
    #[arg(long)]
    vectors: Option<PathBuf>,
    /// scratch, static or context
    #[arg(long)]
    mode: Option<VectorMode>,
    /// mono, joint or paired; inferred from the number of languages
    #[arg(long)]
    regime: Option<TrainMode>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    exponent: Option<f64>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    d_model: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    d_ff: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    head_hidden: Option<usize>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    clip_norm: Option<f64>,
    #[arg(long)]
    target_f1: Option<f64>,
    /// Checkpoint path
    #[arg(long)]
    output: Option<PathBuf>,
    /// Training log path (stdout when absent)
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ParseArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Checkpoints to ensemble, comma separated
    #[arg(long)]
    models: Option<String>,
    #[arg(long)]
    lang: Option<String>,
    #[arg(long)]
    vectors: Option<PathBuf>,
    /// Input file (stdin when absent)
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output file (stdout when absent)
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    gold: PathBuf,
    pred: PathBuf,
    /// Root labels ignored when they span the sentence, comma separated
    #[arg(long)]
    ignore_labels: Option<String>,
}

#[derive(Args, Debug)]
struct SignificanceArgs {
    #[command(flatten)]
    common: Common,
    gold: PathBuf,
    pred_a: PathBuf,
    pred_b: PathBuf,
    #[arg(long)]
    resamples: Option<usize>,
    #[arg(long)]
    ignore_labels: Option<String>,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[command(flatten)]
    common: Common,
    /// Random draws per check
    #[arg(long)]
    draws: Option<usize>,
}

#[derive(Args, Debug)]
struct InspectArgs {
    #[command(flatten)]
    common: Common,
    path: PathBuf,
}

/// Settings from the config file plus the echo of everything resolved.
struct Resolved {
    file: ConfigFile,
    echo: Vec<(String, String)>,
}

impl Resolved {
    fn load(common: &Common) -> Result<Self, CliError> {
        let file = match &common.config {
            Some(p) => ConfigFile::read(p)?,
            None => ConfigFile::default(),
        };
        if let Some(k) = file.keys().find(|k| !CONFIG_KEYS.contains(k)) {
            return Err(CliError::Usage(format!("unknown config key {k:?}")));
        }
        Ok(Resolved { file, echo: Vec::new() })
    }

    fn get<T>(&mut self, cli: Option<T>, key: &str) -> Result<Option<T>, CliError>
    where
        T: std::str::FromStr + std::fmt::Display,
        T::Err: std::fmt::Display,
    {
        let v = self.file.resolve(cli, key)?;
        if let Some(v) = &v {
            self.echo.push((key.to_string(), v.to_string()));
        }
        Ok(v)
    }

    fn or<T>(&mut self, cli: Option<T>, key: &str, default: T) -> Result<T, CliError>
    where
        T: std::str::FromStr + std::fmt::Display,
        T::Err: std::fmt::Display,
    {
        match self.file.resolve(cli, key)? {
            Some(v) => {
                self.echo.push((key.to_string(), v.to_string()));
                Ok(v)
            }
            None => {
                self.echo.push((key.to_string(), default.to_string()));
                Ok(default)
            }
        }
    }

    fn seed(&mut self, cli: Option<u64>) -> Result<u64, CliError> {
        Ok(self.file.resolve(cli, "seed")?.unwrap_or(0))
    }

    fn path(&mut self, cli: &Option<PathBuf>, key: &str) -> Result<Option<PathBuf>, CliError> {
        Ok(self
            .get(cli.as_ref().map(|p| p.display().to_string()), key)?
            .map(PathBuf::from))
    }

    fn require<T>(v: Option<T>, key: &str) -> Result<T, CliError> {
        v.ok_or_else(|| CliError::Usage(format!("missing required setting --{}", key.replace('_', "-"))))
    }

    fn emit(&self, command: &str, seed: u64, err: &mut dyn Write) {
        let _ = writeln!(err, "# spanparse {command}");
        for (k, v) in &self.echo {
            let _ = writeln!(err, "# {k}={v}");
        }
        let _ = writeln!(err, "# seed={seed}");
    }
}

fn list(s: &str) -> Vec<String> {
    s.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect()
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I, stdin: &mut dyn Read, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{}", e.render());
                    0
                }
                _ => {
                    let _ = write!(stderr, "{}", e.render());
                    EXIT_USAGE
                }
            };
        }
    };
    let result = match cli.command {
        Command::Train(a) => cmd_train(a, stdout, stderr),
        Command::Parse(a) => cmd_parse(a, false, stdin, stdout, stderr),
        Command::Ensemble(a) => cmd_parse(a, true, stdin, stdout, stderr),
        Command::Evaluate(a) => cmd_evaluate(a, stdout, stderr),
        Command::Significance(a) => cmd_significance(a, stdout, stderr),
        Command::Gradcheck(a) => cmd_gradcheck(a, stdout, stderr),
        Command::InspectVectors(a) => cmd_inspect(a, stdout, stderr),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message());
            e.exit_code()
        }
    }
}

fn read_vectors(path: &Option<PathBuf>) -> Result<VectorSource, CliError> {
    match path {
        None => Ok(VectorSource::None),
        Some(p) => match VectorFile::read(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))? {
            VectorFile::Context(v) => Ok(VectorSource::Context(v)),
            VectorFile::Static(v) => Ok(VectorSource::Static(v)),
        },
    }
}

fn cmd_train(a: TrainArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let mut r = Resolved::load(&a.common)?;
    let seed = r.seed(a.common.seed)?;
    let langs = list(&Resolved::require(r.get(a.lang, "lang")?, "lang")?);
    let train_paths = list(&Resolved::require(r.get(a.train, "train")?, "train")?);
    let dev_paths = r.get(a.dev, "dev")?.map(|d| list(&d));
    if langs.is_empty() || train_paths.len() != langs.len() {
        return Err(CliError::Usage(format!(
            "--train needs one treebank per language ({} languages, {} treebanks)",
            langs.len(),
            train_paths.len()
        )));
    }
    if let Some(d) = &dev_paths {
        if d.len() != langs.len() {
            return Err(CliError::Usage("--dev needs one treebank per language".into()));
        }
    }
    let default_regime = match langs.len() {
        1 => TrainMode::Mono,
        2 => TrainMode::Paired,
        _ => TrainMode::Joint,
    };
    let mut cfg = TrainConfig {
        seed,
        mode: r.or(a.regime, "regime", default_regime)?,
        ..TrainConfig::default()
    };
    let enc = &mut cfg.encoder;
    enc.mode = r.or(a.mode, "mode", enc.mode)?;
    enc.num_layers = r.or(a.layers, "layers", enc.num_layers)?;
    enc.d_model = r.or(a.d_model, "d_model", enc.d_model)?;
    enc.num_heads = r.or(a.heads, "heads", enc.num_heads)?;
    enc.d_ff = r.or(a.d_ff, "d_ff", enc.d_ff)?;
    enc.dropout = r.or(a.dropout, "dropout", enc.dropout)?;
    enc.lowercase = r.or(None, "lowercase", enc.lowercase)?;
    enc.word_embeddings = r.or(None, "word_embeddings", enc.word_embeddings)?;
    enc.max_len = r.or(None, "max_len", enc.max_len)?;
    cfg.head_hidden = r.or(a.head_hidden, "head_hidden", DEFAULT_HEAD_HIDDEN)?;
    cfg.batch_size = r.get(a.batch_size, "batch_size")?;
    cfg.lr = r.get(a.lr, "lr")?;
    cfg.warmup_steps = r.get(a.warmup, "warmup")?;
    cfg.epochs = r.or(a.epochs, "epochs", cfg.epochs)?;
    cfg.exponent = r.or(a.exponent, "exponent", cfg.exponent)?;
    cfg.eval_every = r.or(a.eval_every, "eval_every", cfg.eval_every)?;
    cfg.clip_norm = r.get(a.clip_norm, "clip_norm")?;
    cfg.target_f1 = r.get(a.target_f1, "target_f1")?;
    let vectors_path = r.path(&a.vectors, "vectors")?;
    let output = Resolved::require(r.path(&a.output, "output")?, "output")?;
    let log_path = r.path(&a.log, "log")?;

    let vectors = read_vectors(&vectors_path)?;
    match (&vectors, cfg.encoder.mode) {
        (VectorSource::None, VectorMode::Scratch) => {}
        (VectorSource::Static(v), VectorMode::Static) => cfg.encoder.d_ext = v.dim,
        (VectorSource::Context(v), VectorMode::Context) => cfg.encoder.d_ext = v.d_ext,
        (VectorSource::None, mode) => return Err(CliError::Usage(format!("--mode {mode} needs --vectors"))),
        (_, mode) => return Err(CliError::Usage(format!("vector file kind does not match --mode {mode}"))),
    }
    r.echo.push(("d_ext".into(), cfg.encoder.d_ext.to_string()));
    r.emit("train", seed, stderr);

    let mut languages = Vec::new();
    for (k, code) in langs.iter().enumerate() {
        let train = Treebank::read(code.clone(), &train_paths[k]).map_err(data)?;
        let dev = match &dev_paths {
            Some(d) => Some(Treebank::read(code.clone(), &d[k]).map_err(data)?),
            None => None,
        };
        languages.push(LanguageData {
            code: code.clone(),
            train,
            dev,
        });
    }
    let mut log_sink: Box<dyn Write> = match &log_path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(io)?)),
        None => Box::new(&mut *stdout),
    };
    let mut log_err = None;
    let outcome = train(&cfg, &languages, &vectors, |line| {
        if let Err(e) = writeln!(log_sink, "{line}") {
            log_err.get_or_insert(e);
        }
    });
    log_sink.flush().map_err(io)?;
    drop(log_sink);
    if let Some(e) = log_err {
        return Err(io(e));
    }
    let outcome = outcome?;
    outcome.model.save(&output).map_err(data)?;
    let _ = write!(stderr, "# steps={} epochs={}", outcome.steps, outcome.epochs);
    if let Some(f1) = outcome.best_dev_f1 {
        let _ = write!(stderr, " best_devF1={f1:.2}");
    }
    let _ = writeln!(stderr, " checkpoint={}", output.display());
    Ok(())
}

/// One input line: optional `id<TAB>` prefix, then space-separated tokens.
fn split_line(line: &str, number: usize) -> (String, Vec<String>) {
    let (id, text) = match line.split_once('\t') {
        Some((id, rest)) => (id.trim().to_string(), rest),
        None => (number.to_string(), line),
    };
    (id, text.split_whitespace().map(str::to_string).collect())
}

fn cmd_parse(
    a: ParseArgs,
    ensemble: bool,
    stdin: &mut dyn Read,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<(), CliError> {
    let mut r = Resolved::load(&a.common)?;
    let seed = r.seed(a.common.seed)?;
    let paths: Vec<PathBuf> = if ensemble {
        list(&Resolved::require(r.get(a.models, "models")?, "models")?)
            .into_iter()
            .map(PathBuf::from)
            .collect()
    } else {
        if a.models.is_some() {
            return Err(CliError::Usage("parse takes --model; use ensemble for --models".into()));
        }
        vec![Resolved::require(r.path(&a.model, "model")?, "model")?]
    };
    if paths.is_empty() {
        return Err(CliError::Usage("--models is empty".into()));
    }
    let lang = r.get(a.lang, "lang")?;
    let vectors_path = r.path(&a.vectors, "vectors")?;
    let input = r.path(&a.input, "input")?;
    let output = r.path(&a.output, "output")?;
    r.emit(if ensemble { "ensemble" } else { "parse" }, seed, stderr);

    let models = paths
        .iter()
        .map(|p| ParserModel::load(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display()))))
        .collect::<Result<Vec<_>, _>>()?;
    let lang = match lang {
        Some(l) => l,
        None => match models[0].languages().as_slice() {
            [only] => only.clone(),
            many => return Err(CliError::Usage(format!("--lang required; model has {}", many.join(",")))),
        },
    };
    for (m, p) in models.iter().zip(&paths) {
        m.head(&lang)
            .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
    }
    let vectors = read_vectors(&vectors_path)?;

    let mut text = String::new();
    match &input {
        Some(p) => {
            File::open(p).map_err(io)?.read_to_string(&mut text).map_err(io)?;
        }
        None => {
            stdin.read_to_string(&mut text).map_err(io)?;
        }
    }
    let lines: Vec<&str> = text.lines().collect();
    let results: Vec<(String, Option<String>)> = lines
        .par_iter()
        .enumerate()
        .map(|(k, line)| {
            let (id, words) = split_line(line, k + 1);
            let tagged: Vec<TaggedWord> = words
                .iter()
                .map(|w| TaggedWord {
                    word: w.clone(),
                    tag: "XX".into(),
                })
                .collect();
            let attempt = || -> Result<String, String> {
                if words.is_empty() {
                    return Err("empty sentence".into());
                }
                let mut charts = Vec::with_capacity(models.len());
                for m in &models {
                    let ext = vectors
                        .external(&m.config, &lang, &id, &words)
                        .map_err(|e| e.to_string())?;
                    charts.push(m.chart(&lang, &m.input(&words, ext)).map_err(|e| e.to_string())?);
                }
                let chart = if charts.len() == 1 {
                    charts.pop().unwrap()
                } else {
                    ensemble_chart(&charts).map_err(|e| e.to_string())?
                };
                let tree = cky_decode(&chart)
                    .and_then(|d| d.tree(&tagged))
                    .map_err(|e| e.to_string())?;
                Ok(serialize(&tree))
            };
            match attempt() {
                Ok(s) => (s, None),
                Err(e) => (serialize(&fallback_tree(&tagged)), Some(format!("line {}: {e}; emitting flat tree", k + 1))),
            }
        })
        .collect();

    let mut sink: Box<dyn Write> = match &output {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(io)?)),
        None => Box::new(&mut *stdout),
    };
    for (tree, warning) in results {
        if let Some(w) = warning {
            let _ = writeln!(stderr, "warning: {w}");
        }
        writeln!(sink, "{tree}").map_err(io)?;
    }
    sink.flush().map_err(io)?;
    Ok(())
}

fn ignore_set(r: &mut Resolved, cli: Option<String>) -> Result<HashSet<String>, CliError> {
    let mut default: Vec<String> = default_ignore_labels().into_iter().collect();
    default.sort();
    Ok(list(&r.or(cli, "ignore_labels", default.join(","))?).into_iter().collect())
}

fn read_treebank(path: &PathBuf) -> Result<Treebank, CliError> {
    Treebank::read("eval", path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn cmd_evaluate(a: EvaluateArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let mut r = Resolved::load(&a.common)?;
    let seed = r.seed(a.common.seed)?;
    let ignore = ignore_set(&mut r, a.ignore_labels)?;
    r.emit("evaluate", seed, stderr);
    let gold = read_treebank(&a.gold)?;
    let pred = read_treebank(&a.pred)?;
    let report = labeled_prf(&gold, &pred, &ignore).map_err(data)?;
    writeln!(stdout, "{}", report.summary()).map_err(io)
}

fn cmd_significance(a: SignificanceArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let mut r = Resolved::load(&a.common)?;
    let seed = r.seed(a.common.seed)?;
    let resamples = r.or(a.resamples, "resamples", 10_000usize)?;
    let ignore = ignore_set(&mut r, a.ignore_labels)?;
    r.emit("significance", seed, stderr);
    if resamples == 0 {
        return Err(CliError::Usage("--resamples must be positive".into()));
    }
    let gold = read_treebank(&a.gold)?;
    let pa = read_treebank(&a.pred_a)?;
    let pb = read_treebank(&a.pred_b)?;
    let res = bootstrap_significance(&gold, &pa, &pb, &ignore, resamples, seed).map_err(data)?;
    writeln!(stdout, "{}", res.summary()).map_err(io)
}

fn cmd_gradcheck(a: GradcheckArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let mut r = Resolved::load(&a.common)?;
    let seed = r.seed(a.common.seed)?;
    let draws = r.or(a.draws, "draws", 50usize)?;
    r.emit("gradcheck", seed, stderr);
    if draws == 0 {
        return Err(CliError::Usage("--draws must be positive".into()));
    }
    let results = gradcheck::run_battery(draws, seed).map_err(|e| CliError::Numeric(e.to_string()))?;
    let mut failed = Vec::new();
    for res in &results {
        writeln!(
            stdout,
            "{} {:<20} draws={} coords={} skipped={} max_rel_err={:.3e}",
            if res.passed() { "ok  " } else { "FAIL" },
            res.name,
            res.draws,
            res.coordinates,
            res.skipped,
            res.max_error
        )
        .map_err(io)?;
        if !res.passed() {
            failed.push(res.name.clone());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Numeric(format!("gradient check failed: {}", failed.join(", "))))
    }
}

fn cmd_inspect(a: InspectArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let mut r = Resolved::load(&a.common)?;
    let seed = r.seed(a.common.seed)?;
    r.emit("inspect-vectors", seed, stderr);
    let file = VectorFile::read(&a.path).map_err(|e| CliError::Data(format!("{}: {e}", a.path.display())))?;
    let line = match file {
        VectorFile::Context(v) => {
            let subwords: usize = v.records.iter().map(|r| r.num_subwords()).sum();
            let words: usize = v.records.iter().map(|r| r.num_words()).sum();
            format!(
                "format=CTXV1 count={} dim={} subwords={subwords} words={words}",
                v.len(),
                v.d_ext
            )
        }
        VectorFile::Static(v) => format!("format=static count={} dim={}", v.len(), v.dim),
    };
    writeln!(stdout, "{line}").map_err(io)
}

/// Entry point for the binary.
pub fn main() -> i32 {
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    let mut input = BufReader::new(stdin.lock());
    let mut out = stdout.lock();
    let mut err = stderr.lock();
    let code = run(std::env::args_os(), &mut input, &mut out, &mut err);
    let _ = out.flush();
    code
}

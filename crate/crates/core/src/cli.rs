//! Command-line front end: `train`, `crossval`, `evaluate` and `predict`.
//!
//! Options come from three places, in increasing precedence: built-in
//! defaults, a `key = value` file given with `--config`, and flags. Progress
//! goes to stderr; results go to stdout.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};

use crate::classifier::{load_checkpoint, save_checkpoint, train_with, Features, ModelConfig};
use crate::error::{Error, ErrorKind, Result};
use crate::evaluation::{
    crossval_run, evaluate, parse_grid, render_baseline_table, render_csv, render_table, Aggregate, CrossvalOptions,
};
use crate::recurrent::CellKind;
use crate::text::{build_vocab, load_dataset, load_pretrained_embeddings, HeadlineExample};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "baitnet", version, about = "Clickbait headline classifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one model and write a checkpoint.
    Train(TrainArgs),
    /// Stratified k-fold cross-validation over an (arch, features) grid.
    Crossval(CrossvalArgs),
    /// Score a labelled dataset with a saved model.
    Evaluate(EvaluateArgs),
    /// Classify headlines with a saved model.
    Predict(PredictArgs),
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// `key = value` option file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Random seed; a fresh one is drawn and printed when omitted.
    #[arg(long)]
    seed: Option<u64>,
    /// rnn, gru or lstm.
    #[arg(long)]
    arch: Option<String>,
    /// ce, we or ce+we.
    #[arg(long)]
    features: Option<String>,
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long = "batch-size")]
    batch_size: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    dropout: Option<String>,
    /// Update pretrained word vectors during training.
    #[arg(long = "fine-tune-words")]
    fine_tune_words: bool,
    /// Hold out 10% for validation and stop when it stops improving.
    #[arg(long = "early-stopping")]
    early_stopping: bool,
    /// Any config key, as `key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Labelled headlines, `label<TAB>text` per line.
    #[arg(long)]
    data: PathBuf,
    /// Pretrained vectors in text format.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Checkpoint path to write.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Debug, Args)]
struct CrossvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    /// `all` or a comma list like `lstm:ce+we,gru:we`.
    #[arg(long, default_value = "all")]
    grid: String,
    /// Worker threads over folds; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// mean (per-fold average) or pooled.
    #[arg(long, default_value = "mean")]
    aggregate: String,
    /// Also write the CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// A headline to classify. Repeatable.
    #[arg(long)]
    text: Vec<String>,
    /// File with one headline per line.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long)]
    seed: Option<u64>,
}

/// Stdout and stderr as the commands see them.
pub struct Streams<'a> {
    pub out: &'a mut dyn Write,
    pub err: &'a Mutex<&'a mut (dyn Write + Send)>,
}

impl Streams<'_> {
    fn note(&self, msg: &str) {
        let mut err = self.err.lock().unwrap_or_else(|p| p.into_inner());
        let _ = writeln!(err, "{msg}");
    }
}

/// Runs the tool against the process streams. Returns the exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let mut stderr = io::stderr();
    let err: Mutex<&mut (dyn Write + Send)> = Mutex::new(&mut stderr);
    run_cli_with(argv, &mut Streams { out: &mut out, err: &err })
}

pub fn run_cli_with<I, T>(argv: I, streams: &mut Streams<'_>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind as K;
            let text = e.render().to_string();
            return match e.kind() {
                K::DisplayHelp | K::DisplayVersion => {
                    let _ = write!(streams.out, "{text}");
                    EXIT_OK
                }
                _ => {
                    streams.note(text.trim_end());
                    EXIT_USAGE
                }
            };
        }
    };
    let outcome = match cli.command {
        Command::Train(a) => cmd_train(a, streams),
        Command::Crossval(a) => cmd_crossval(a, streams),
        Command::Evaluate(a) => cmd_evaluate(a, streams),
        Command::Predict(a) => cmd_predict(a, streams),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => {
            streams.note(&format!("error: {e}"));
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e.kind() {
        ErrorKind::Data => EXIT_DATA,
        ErrorKind::Numeric => EXIT_NUMERIC,
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} {} does not exist", path.display())))
    }
}

fn require_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() && !p.is_dir() => {
            Err(Error::Config(format!("directory {} does not exist", p.display())))
        }
        _ => Ok(()),
    }
}

/// Parses a `key = value` option file. Unknown keys and bad values are fatal
/// and name the line. Returns the config and whether the file set a seed.
pub fn parse_config(path: &Path) -> Result<(ModelConfig, bool)> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut cfg = ModelConfig::default();
    let mut seeded = false;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(path, i + 1, "expected `key = value`"))?;
        let key = k.trim();
        match cfg.set(key, v) {
            Ok(true) => seeded |= key == "seed",
            Ok(false) => return Err(Error::parse(path, i + 1, format!("unknown key {key:?}"))),
            Err(msg) => return Err(Error::parse(path, i + 1, msg)),
        }
    }
    Ok((cfg, seeded))
}

fn set_flag(cfg: &mut ModelConfig, key: &str, value: &str) -> Result<()> {
    match cfg.set(key, value) {
        Ok(true) => Ok(()),
        Ok(false) => Err(Error::Config(format!("unknown key {key:?}"))),
        Err(msg) => Err(Error::Config(format!("--{}: {msg}", key.replace('_', "-")))),
    }
}

fn pick_seed(flag: Option<u64>, from_file: Option<u64>, streams: &Streams<'_>) -> u64 {
    match flag.or(from_file) {
        Some(s) => s,
        None => {
            let s = rand::random::<u64>();
            streams.note(&format!("seed: {s}"));
            s
        }
    }
}

fn resolve_config(args: &ModelArgs, streams: &Streams<'_>) -> Result<ModelConfig> {
    let (mut cfg, file_seed) = match &args.config {
        Some(p) => {
            require_file(p, "config file")?;
            let (c, seeded) = parse_config(p)?;
            let s = seeded.then_some(c.seed);
            (c, s)
        }
        None => (ModelConfig::default(), None),
    };
    for entry in &args.set {
        let (k, v) = entry
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {entry:?}")))?;
        set_flag(&mut cfg, k.trim(), v)?;
    }
    let named = [
        ("arch", &args.arch),
        ("features", &args.features),
        ("hidden", &args.hidden),
        ("epochs", &args.epochs),
        ("batch_size", &args.batch_size),
        ("lr", &args.lr),
        ("dropout", &args.dropout),
    ];
    for (key, value) in named {
        if let Some(v) = value {
            set_flag(&mut cfg, key, v)?;
        }
    }
    if args.fine_tune_words {
        cfg.fine_tune_words = true;
    }
    if args.early_stopping {
        cfg.early_stopping = true;
    }
    cfg.seed = pick_seed(args.seed, file_seed, streams);
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_train(a: TrainArgs, s: &mut Streams<'_>) -> Result<()> {
    require_file(&a.data, "dataset")?;
    require_parent(&a.out)?;
    let cfg = resolve_config(&a.model, s)?;
    let needs_words = cfg.features.uses_words();
    match (&a.embeddings, needs_words) {
        (None, true) => {
            return Err(Error::Config(format!("features {} need --embeddings", cfg.features.as_str())))
        }
        (Some(p), true) => require_file(p, "embedding file")?,
        _ => {}
    }

    let data = load_dataset(&a.data)?;
    s.note(&format!("loaded {} headlines from {}", data.len(), a.data.display()));
    let vocab = build_vocab(&data, cfg.min_count)?;
    let words = match (&a.embeddings, needs_words) {
        (Some(p), true) => {
            let t = load_pretrained_embeddings(p, &vocab)?;
            s.note(&format!("word vectors: dim {}, coverage {:.4}", t.dim(), t.coverage()));
            Some(t)
        }
        _ => None,
    };
    let err = s.err;
    let outcome = train_with(&data, &cfg, vocab, words.as_ref(), &mut |e| {
        let mut w = err.lock().unwrap_or_else(|p| p.into_inner());
        let _ = match e.val_loss {
            Some(v) => writeln!(w, "epoch {}: loss {:.6}, validation {:.6}", e.epoch, e.train_loss, v),
            None => writeln!(w, "epoch {}: loss {:.6}", e.epoch, e.train_loss),
        };
    })?;
    save_checkpoint(&outcome.model, &a.out)?;
    s.note(&format!("wrote {}", a.out.display()));

    let out = &mut s.out;
    writeln!(out, "epoch,train_loss,val_loss").map_err(stdout_err)?;
    for e in &outcome.log {
        let val = e.val_loss.map_or(String::new(), |v| format!("{v:.6}"));
        writeln!(out, "{},{:.6},{val}", e.epoch, e.train_loss).map_err(stdout_err)?;
    }
    Ok(())
}

fn stdout_err(e: io::Error) -> Error {
    io_err(Path::new("<stdout>"))(e)
}

fn cmd_crossval(a: CrossvalArgs, s: &mut Streams<'_>) -> Result<()> {
    require_file(&a.data, "dataset")?;
    if let Some(p) = &a.embeddings {
        require_file(p, "embedding file")?;
    }
    if let Some(p) = &a.csv {
        require_parent(p)?;
    }
    let grid = parse_grid(&a.grid)?;
    let aggregate = Aggregate::parse(&a.aggregate)
        .ok_or_else(|| Error::Config(format!("--aggregate must be mean or pooled, got {:?}", a.aggregate)))?;
    let base = resolve_config(&a.model, s)?;
    let needs_words = grid.iter().any(|p| p.features.uses_words());
    if needs_words && a.embeddings.is_none() {
        return Err(Error::Config("the grid uses word features; pass --embeddings".into()));
    }

    let data = load_dataset(&a.data)?;
    s.note(&format!("loaded {} headlines from {}", data.len(), a.data.display()));
    let vocab = build_vocab(&data, base.min_count)?;
    let words = match (&a.embeddings, needs_words) {
        (Some(p), true) => {
            let t = load_pretrained_embeddings(p, &vocab)?;
            s.note(&format!("word vectors: dim {}, coverage {:.4}", t.dim(), t.coverage()));
            Some(t)
        }
        _ => None,
    };
    let opts = CrossvalOptions {
        folds: a.folds,
        seed: base.seed,
        jobs: a.jobs,
        aggregate,
        threshold: 0.5,
    };
    let err = s.err;
    let progress = |msg: &str| {
        let mut w = err.lock().unwrap_or_else(|p| p.into_inner());
        let _ = writeln!(w, "{msg}");
    };
    let result = crossval_run(&data, &grid, &base, &vocab, words.as_ref(), &opts, &progress)?;

    let csv = render_csv(&result);
    let out = &mut s.out;
    write!(out, "{}", render_table(&result)).map_err(stdout_err)?;
    let best = CellKind::Lstm;
    if let Some(c) = result
        .configs
        .iter()
        .filter_map(|(_, r)| r.as_ref().ok())
        .find(|c| c.point.arch == best && c.point.features == Features::CeWe)
    {
        writeln!(out).map_err(stdout_err)?;
        write!(out, "{}", render_baseline_table(&c.point.model_name(), &c.summary)).map_err(stdout_err)?;
    }
    writeln!(out).map_err(stdout_err)?;
    write!(out, "{csv}").map_err(stdout_err)?;
    if let Some(p) = &a.csv {
        fs::write(p, &csv).map_err(io_err(p))?;
        s.note(&format!("wrote {}", p.display()));
    }
    match result.first_error() {
        // The table already shows each failure; keep the first one's kind for the exit code.
        Some(e) => Err(match e.kind() {
            ErrorKind::Numeric => Error::Numeric(format!("at least one configuration failed: {e}")),
            ErrorKind::Data => Error::Data(format!("at least one configuration failed: {e}")),
        }),
        None => Ok(()),
    }
}

fn cmd_evaluate(a: EvaluateArgs, s: &mut Streams<'_>) -> Result<()> {
    require_file(&a.model, "checkpoint")?;
    require_file(&a.data, "dataset")?;
    pick_seed(a.seed, None, s);
    let model = load_checkpoint(&a.model)?;
    let data = load_dataset(&a.data)?;
    let refs: Vec<&HeadlineExample> = data.iter().collect();
    let probs = model.score(&refs)?;
    let labels: Vec<_> = data.iter().map(|e| e.label).collect();
    let r = evaluate(&probs, &labels, a.threshold)?;
    let out = &mut s.out;
    let lines = [
        ("accuracy", r.accuracy),
        ("precision", r.precision),
        ("recall", r.recall),
        ("f1", r.f1),
        ("roc_auc", r.roc_auc.unwrap_or(f64::NAN)),
    ];
    for (k, v) in lines {
        writeln!(out, "{k} {v:.6}").map_err(stdout_err)?;
    }
    writeln!(
        out,
        "tp {}\nfp {}\ntn {}\nfn {}",
        r.true_pos, r.false_pos, r.true_neg, r.false_neg
    )
    .map_err(stdout_err)?;
    Ok(())
}

fn cmd_predict(a: PredictArgs, s: &mut Streams<'_>) -> Result<()> {
    require_file(&a.model, "checkpoint")?;
    if let Some(p) = &a.input {
        require_file(p, "input file")?;
    }
    if !(0.0..=1.0).contains(&a.threshold) {
        return Err(Error::Config(format!("--threshold must be in [0, 1], got {}", a.threshold)));
    }
    pick_seed(a.seed, None, s);
    let mut texts = a.text.clone();
    if let Some(p) = &a.input {
        let body = fs::read_to_string(p).map_err(io_err(p))?;
        texts.extend(body.lines().filter(|l| !l.trim().is_empty()).map(str::to_string));
    }
    if texts.is_empty() {
        return Err(Error::Config("nothing to classify; pass --text or --input".into()));
    }
    let model = load_checkpoint(&a.model)?;
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    let predictions = model.predict(&refs, a.threshold);
    let mut failed = 0;
    for (text, p) in texts.iter().zip(predictions) {
        match p {
            Ok(p) => writeln!(s.out, "{} {:.6}", p.label as u8, p.probability).map_err(stdout_err)?,
            Err(e) => {
                failed += 1;
                writeln!(s.out, "error {e}").map_err(stdout_err)?;
                s.note(&format!("skipped {text:?}: {e}"));
            }
        }
    }
    if failed > 0 {
        s.note(&format!("{failed} of {} headlines could not be classified", texts.len()));
    }
    Ok(())
}

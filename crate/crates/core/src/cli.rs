//! Command-line front end. `run` returns the process exit code: 0 on
//! success, 1 for usage and validation errors, 2 for I/O failures.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::data::{corpus_stats, load_corpus, save_corpus, Event, Label, Vocabulary};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::synth::{generate, SignalMode, SynthSpec};
use crate::tensor::{SeededRng, Tensor, INIT_SCALE};
use crate::train::{
    build_model, cross_validate, evaluate, gradcheck, holdout_split, load_checkpoint,
    save_checkpoint, save_curve, train, GradcheckConfig, TrainConfig,
};
use crate::users::{pretrain, PretrainConfig, UserHistory, UserTable};

#[derive(Debug, Parser)]
#[command(name = "rumor-net", version, about = "Event-level rumor detection", arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print corpus statistics.
    Stats {
        #[arg(long)]
        corpus: PathBuf,
        /// Emit JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Generate a labeled synthetic corpus and its manifest.
    Synth(SynthArgs),
    /// Pretrain author embeddings from posting histories.
    PretrainUsers(PretrainArgs),
    /// Train a model and write a checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a labeled corpus.
    Evaluate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Print the rumor probability and label of each event in a file.
    Predict {
        #[arg(long)]
        ckpt: PathBuf,
        /// JSON-lines file holding the event(s) to classify.
        #[arg(long)]
        event: PathBuf,
    },
    /// Stratified k-fold cross-validation.
    Cv {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        /// Pretrained author table to initialize from.
        #[arg(long)]
        users: Option<PathBuf>,
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Compare analytic gradients with central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    Full,
    Tiny,
}

/// Model and training settings shared by `train` and `cv`.
#[derive(Debug, Args)]
struct ModelArgs {
    /// Flat key=value file; explicit flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of intervals per event (k).
    #[arg(long)]
    intervals: Option<usize>,
    /// Word slots per interval (p).
    #[arg(long)]
    interval_len: Option<usize>,
    #[arg(long)]
    word_dim: Option<usize>,
    /// LSTM hidden size; the author-embedding width follows as twice this.
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    user_dim: Option<usize>,
    /// Number of convolution filters (M).
    #[arg(long)]
    filters: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    min_delta: Option<f64>,
    #[arg(long)]
    no_attention: bool,
    #[arg(long)]
    no_user_context: bool,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Pretrained author table to initialize from.
    #[arg(long)]
    users: Option<PathBuf>,
    /// Keep author rows fixed during training.
    #[arg(long)]
    freeze_users: bool,
    #[arg(long)]
    out_ckpt: PathBuf,
    /// Learning-curve CSV.
    #[arg(long)]
    curve: Option<PathBuf>,
    /// Hold out this share of events (stratified) and report metrics on it.
    #[arg(long)]
    holdout: Option<f64>,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, default_value_t = SynthSpec::default().events)]
    events: usize,
    #[arg(long, default_value = "lexical")]
    mode: SignalMode,
    #[arg(long, default_value_t = SynthSpec::default().strength)]
    strength: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = SynthSpec::default().min_tweets)]
    min_tweets: usize,
    #[arg(long, default_value_t = SynthSpec::default().max_tweets)]
    max_tweets: usize,
    #[arg(long, default_value_t = SynthSpec::default().min_words)]
    min_words: usize,
    #[arg(long, default_value_t = SynthSpec::default().max_words)]
    max_words: usize,
    #[arg(long, default_value_t = SynthSpec::default().vocab_size)]
    vocab_size: usize,
    #[arg(long, default_value_t = SynthSpec::default().signal_tokens)]
    signal_tokens: usize,
    #[arg(long, default_value_t = SynthSpec::default().zipf_exponent)]
    zipf: f64,
    #[arg(long, default_value_t = SynthSpec::default().authors)]
    authors: usize,
    #[arg(long, default_value_t = SynthSpec::default().rumor_authors)]
    rumor_authors: usize,
    /// Also split the corpus: the test share goes to `--test-out` and
    /// the remainder to `--out`.
    #[arg(long, requires = "test_out")]
    test_fraction: Option<f64>,
    #[arg(long, requires = "test_fraction")]
    test_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PretrainArgs {
    /// Corpus whose authors get table rows.
    #[arg(long)]
    corpus: PathBuf,
    /// JSON lines of {"user_id": ..., "posts": [...]}; defaults to each
    /// author's tweets in the corpus.
    #[arg(long)]
    histories: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Embedding width; should equal the model's user_dim.
    #[arg(long, default_value_t = ModelConfig::default().user_dim)]
    dim: usize,
    #[arg(long, default_value_t = PretrainConfig::default().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = PretrainConfig::default().negatives)]
    negatives: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Parses `argv` (program name first) and executes the command.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_io() {
                2
            } else {
                1
            }
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Stats { corpus, json } => {
            let report = corpus_stats(&load_corpus(&corpus)?);
            if json {
                println!("{}", to_json(&report)?);
            } else {
                print!("{report}");
            }
            Ok(())
        }
        Command::Synth(args) => synth(args),
        Command::PretrainUsers(args) => pretrain_users(args),
        Command::Train(args) => train_cmd(args),
        Command::Evaluate { ckpt, corpus, json } => {
            let model = load_checkpoint(&ckpt)?;
            let events = model.prepare_all(&load_corpus(&corpus)?)?;
            let report = evaluate(&model, &events)?;
            if json {
                println!("{}", to_json(&report)?);
            } else {
                println!("{report}");
            }
            Ok(())
        }
        Command::Predict { ckpt, event } => {
            let model = load_checkpoint(&ckpt)?;
            let events = load_corpus(&event)?;
            if events.is_empty() {
                return Err(Error::Data(format!("{} holds no event", event.display())));
            }
            for e in &events {
                let p = model.predict(&model.prepare(e)?)?;
                println!("{}\t{p:.6}\t{}", e.event_id, Label::from_probability(p));
            }
            Ok(())
        }
        Command::Cv {
            corpus,
            folds,
            users,
            json,
            model,
        } => {
            let mut cfg = resolve_config(&model)?;
            cfg.folds = folds;
            cfg.validate()?;
            let events = load_corpus(&corpus)?;
            let pretrained = users.map(UserTable::load).transpose()?;
            let report = cross_validate(&events, &cfg, pretrained.as_ref())?;
            if json {
                println!("{}", to_json(&report)?);
            } else {
                for (i, r) in report.folds.iter().enumerate() {
                    println!("fold {}\n{r}\n", i + 1);
                }
                println!("mean\n{}", report.mean);
            }
            Ok(())
        }
        Command::Gradcheck { seed, json } => {
            let report = gradcheck(&GradcheckConfig::tiny(seed))?;
            if json {
                println!("{}", to_json(&report)?);
            } else {
                print!("{report}");
            }
            let worst = report.max_error();
            if worst < 1e-4 {
                Ok(())
            } else {
                Err(Error::Contract(format!(
                    "gradient check failed: max relative error {worst:.3e}"
                )))
            }
        }
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Data(e.to_string()))
}

fn synth(a: SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        events: a.events,
        min_tweets: a.min_tweets,
        max_tweets: a.max_tweets,
        min_words: a.min_words,
        max_words: a.max_words,
        vocab_size: a.vocab_size,
        signal_tokens: a.signal_tokens,
        zipf_exponent: a.zipf,
        authors: a.authors,
        rumor_authors: a.rumor_authors,
        mode: a.mode,
        strength: a.strength,
        seed: a.seed,
    };
    let (events, manifest) = generate(&spec)?;
    match (a.test_fraction, &a.test_out) {
        (Some(fraction), Some(test_out)) => {
            let labels: Vec<Label> = events.iter().map(|e| e.label).collect();
            let (train_idx, test_idx) = holdout_split(&labels, fraction, a.seed)?;
            let pick = |idx: &[usize]| idx.iter().map(|&i| events[i].clone()).collect::<Vec<_>>();
            save_corpus(&pick(&train_idx), &a.out)?;
            save_corpus(&pick(&test_idx), test_out)?;
            eprintln!(
                "wrote {} training and {} test events",
                train_idx.len(),
                test_idx.len()
            );
        }
        _ => {
            save_corpus(&events, &a.out)?;
            eprintln!("wrote {} events", events.len());
        }
    }
    if let Some(path) = &a.manifest {
        manifest.save(path)?;
    }
    Ok(())
}

#[derive(Deserialize)]
struct HistoryLine {
    user_id: String,
    posts: Vec<String>,
}

fn load_histories(path: &Path) -> Result<Vec<(String, Vec<String>)>> {
    let reader = BufReader::new(std::fs::File::open(path).map_err(Error::at(path))?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let h: HistoryLine = serde_json::from_str(&line).map_err(|e| Error::Line {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push((h.user_id, h.posts));
    }
    Ok(out)
}

fn pretrain_users(a: PretrainArgs) -> Result<()> {
    let corpus = load_corpus(&a.corpus)?;
    let raw: Vec<(String, Vec<String>)> = match &a.histories {
        Some(path) => load_histories(path)?,
        None => {
            let mut by_user: BTreeMap<String, Vec<String>> = BTreeMap::new();
            for t in corpus.iter().flat_map(|e| &e.tweets) {
                by_user.entry(t.user_id.clone()).or_default().push(t.text.clone());
            }
            by_user.into_iter().collect()
        }
    };
    let vocab = Vocabulary::from_tokens(history_tokens(&raw))?;
    let mut ids: BTreeSet<String> = corpus
        .iter()
        .flat_map(|e| e.tweets.iter().map(|t| t.user_id.clone()))
        .collect();
    ids.extend(raw.iter().map(|(u, _)| u.clone()));
    let ids: Vec<String> = ids.into_iter().collect();

    let mut rng = SeededRng::new(a.seed);
    let mut table = UserTable::init(&ids, a.dim, &mut rng)?;
    let mut word_vecs = Tensor::uniform(&[vocab.len(), a.dim], INIT_SCALE, &mut rng).with_grad();
    let histories: Vec<UserHistory> = raw
        .iter()
        .map(|(user, posts)| UserHistory {
            user_id: user.clone(),
            documents: posts.iter().map(|p| vocab.encode(p)).collect(),
        })
        .collect();
    let cfg = PretrainConfig {
        epochs: a.epochs,
        negatives: a.negatives,
        ..PretrainConfig::default()
    };
    let report = pretrain(&mut table, &histories, &mut word_vecs, &cfg, &mut rng)?;
    for (i, loss) in report.epoch_losses.iter().enumerate() {
        eprintln!("epoch {}: loss {loss:.6}", i + 1);
    }
    table.save(&a.out)?;
    println!("{} authors, width {}", table.len(), table.dim());
    Ok(())
}

/// Distinct tokens of all posts in first-seen order.
fn history_tokens(raw: &[(String, Vec<String>)]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for tok in raw.iter().flat_map(|(_, posts)| posts).flat_map(|p| crate::data::tokenize(p)) {
        if seen.insert(tok.clone()) {
            out.push(tok);
        }
    }
    out
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let cfg = resolve_config(&a.model)?;
    let corpus = load_corpus(&a.corpus)?;
    let (train_events, held): (Vec<Event>, Vec<Event>) = match a.holdout {
        Some(fraction) => {
            let labels: Vec<Label> = corpus.iter().map(|e| e.label).collect();
            let (tr, te) = holdout_split(&labels, fraction, cfg.shuffle_seed)?;
            (
                tr.iter().map(|&i| corpus[i].clone()).collect(),
                te.iter().map(|&i| corpus[i].clone()).collect(),
            )
        }
        None => (corpus, Vec::new()),
    };
    let mut pretrained = a.users.as_ref().map(UserTable::load).transpose()?;
    if let Some(p) = pretrained.as_mut() {
        p.trainable = !a.freeze_users;
    }
    let mut model = build_model(&cfg.model, &train_events, pretrained.as_ref())?;
    if a.freeze_users {
        model.users.trainable = false;
    }
    let prepared = model.prepare_all(&train_events)?;
    let outcome = train(&mut model, &prepared, &cfg, |p| {
        log::info!(
            "epoch {}: loss {:.6} accuracy {:.4}",
            p.epoch,
            p.train_loss,
            p.train_accuracy
        );
    })?;
    save_checkpoint(&model, &a.out_ckpt)?;
    if let Some(path) = &a.curve {
        save_curve(&outcome.curve, path)?;
    }
    let last = outcome.curve.last();
    println!(
        "trained {} epochs ({:?}); final loss {}; final accuracy {}",
        outcome.curve.len(),
        outcome.stop,
        last.map_or("n/a".into(), |p| format!("{:.6}", p.train_loss)),
        last.map_or("n/a".into(), |p| format!("{:.4}", p.train_accuracy)),
    );
    if !held.is_empty() {
        let report = evaluate(&model, &model.prepare_all(&held)?)?;
        println!("holdout ({} events)\n{report}", held.len());
    }
    Ok(())
}

const CONFIG_KEYS: &[&str] = &[
    "preset",
    "seed",
    "intervals",
    "interval_len",
    "word_dim",
    "hidden",
    "user_dim",
    "filters",
    "dropout",
    "rho",
    "eps",
    "max_epochs",
    "patience",
    "min_delta",
    "no_attention",
    "no_user_context",
];

/// Reads a flat `key = value` file. Blank lines and `#` comments are
/// ignored; unknown or repeated keys are errors.
fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(Error::at(path))?;
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |message: String| Error::Line {
            line: i + 1,
            message: format!("{}: {message}", path.display()),
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("expected key=value, got {line:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        if !CONFIG_KEYS.contains(&key) {
            return Err(bad(format!("unknown key {key:?}")));
        }
        if map.insert(key.to_string(), value.to_string()).is_some() {
            return Err(bad(format!("key {key:?} given twice")));
        }
    }
    Ok(map)
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

fn preset_config(name: &str) -> Result<ModelConfig> {
    match name {
        "full" => Ok(ModelConfig::default()),
        "tiny" => Ok(ModelConfig::tiny()),
        _ => Err(Error::Config(format!("unknown preset {name:?} (expected full or tiny)"))),
    }
}

/// Preset, then config-file values, then explicit flags.
fn resolve_config(args: &ModelArgs) -> Result<TrainConfig> {
    let file = match &args.config {
        Some(path) => read_config_file(path)?,
        None => BTreeMap::new(),
    };
    let preset = match args.preset {
        Some(Preset::Full) => "full".to_string(),
        Some(Preset::Tiny) => "tiny".to_string(),
        None => file.get("preset").cloned().unwrap_or_else(|| "full".into()),
    };
    let mut m = preset_config(&preset)?;
    let mut patience = None;
    let mut min_delta = None;
    let mut user_dim = None;

    let mut apply = |key: &str, value: &str| -> Result<()> {
        match key {
            "preset" => {}
            "seed" => m.seed = parse_value(key, value)?,
            "intervals" => m.intervals = parse_value(key, value)?,
            "interval_len" => m.interval_len = parse_value(key, value)?,
            "word_dim" => m.word_dim = parse_value(key, value)?,
            "hidden" => m = m.clone().with_hidden(parse_value(key, value)?),
            "user_dim" => user_dim = Some(parse_value(key, value)?),
            "filters" => m.filters = parse_value(key, value)?,
            "dropout" => m.dropout = parse_value(key, value)?,
            "rho" => m.rho = parse_value(key, value)?,
            "eps" => m.eps = parse_value(key, value)?,
            "max_epochs" => m.max_epochs = parse_value(key, value)?,
            "patience" => patience = Some(parse_value(key, value)?),
            "min_delta" => min_delta = Some(parse_value(key, value)?),
            "no_attention" => m.ablation.no_attention = parse_value(key, value)?,
            "no_user_context" => m.ablation.no_user_context = parse_value(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    };
    // hidden first so an explicit user_dim is checked against it
    let ordered = file
        .iter()
        .filter(|(k, _)| k.as_str() == "hidden")
        .chain(file.iter().filter(|(k, _)| k.as_str() != "hidden"));
    for (k, v) in ordered {
        apply(k, v)?;
    }
    let flags: Vec<(&str, Option<String>)> = vec![
        ("hidden", args.hidden.map(|v| v.to_string())),
        ("seed", args.seed.map(|v| v.to_string())),
        ("intervals", args.intervals.map(|v| v.to_string())),
        ("interval_len", args.interval_len.map(|v| v.to_string())),
        ("word_dim", args.word_dim.map(|v| v.to_string())),
        ("user_dim", args.user_dim.map(|v| v.to_string())),
        ("filters", args.filters.map(|v| v.to_string())),
        ("dropout", args.dropout.map(|v| v.to_string())),
        ("rho", args.rho.map(|v| v.to_string())),
        ("eps", args.eps.map(|v| v.to_string())),
        ("max_epochs", args.max_epochs.map(|v| v.to_string())),
        ("patience", args.patience.map(|v| v.to_string())),
        ("min_delta", args.min_delta.map(|v| v.to_string())),
        ("no_attention", args.no_attention.then(|| "true".into())),
        ("no_user_context", args.no_user_context.then(|| "true".into())),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            apply(k, &v)?;
        }
    }
    if let Some(d) = user_dim {
        m.user_dim = d;
    }
    let mut cfg = TrainConfig::new(m);
    if let Some(p) = patience {
        cfg.patience = p;
    }
    if let Some(d) = min_delta {
        cfg.min_delta = d;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model_args(argv: &[&str]) -> ModelArgs {
        let mut full = vec!["rumor-net", "cv", "--corpus", "x"];
        full.extend_from_slice(argv);
        match Cli::try_parse_from(full).unwrap().command {
            Command::Cv { model, .. } => model,
            _ => unreachable!(),
        }
    }

    #[test]
    fn defaults_are_full_scale_values() {
        let cfg = resolve_config(&model_args(&[])).unwrap();
        assert_eq!(cfg.model, ModelConfig::default());
        assert_eq!((cfg.patience, cfg.min_delta), (10, 1e-5));
    }

    #[test]
    fn hidden_derives_user_dim() {
        let cfg = resolve_config(&model_args(&["--hidden", "75"])).unwrap();
        assert_eq!((cfg.model.hidden, cfg.model.user_dim), (75, 150));
        assert!(resolve_config(&model_args(&["--hidden", "75", "--user-dim", "100"])).is_err());
    }

    #[test]
    fn invalid_dropout_rejected() {
        assert!(resolve_config(&model_args(&["--dropout", "1.0"])).is_err());
    }

    #[test]
    fn tiny_preset() {
        let cfg = resolve_config(&model_args(&["--preset", "tiny"])).unwrap();
        assert_eq!(cfg.model, ModelConfig::tiny());
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.cfg");
        std::fs::write(&path, "# comment\npreset = tiny\nhidden = 4\nfilters=3\ndropout = 0.1\n")
            .unwrap();
        let p = path.to_str().unwrap();
        let cfg = resolve_config(&model_args(&["--config", p, "--filters", "5"])).unwrap();
        assert_eq!((cfg.model.hidden, cfg.model.user_dim), (4, 8));
        assert_eq!((cfg.model.filters, cfg.model.dropout), (5, 0.1));
        assert_eq!(cfg.model.intervals, 5);
    }

    #[test]
    fn unknown_file_key_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.cfg");
        std::fs::write(&path, "learning_rate = 0.1\n").unwrap();
        let err = resolve_config(&model_args(&["--config", path.to_str().unwrap()])).unwrap_err();
        assert!(err.to_string().contains("unknown key"), "{err}");
        assert!(!err.is_io());
    }
}

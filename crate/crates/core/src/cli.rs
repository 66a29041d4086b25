//! Command-line front end: `gen`, `train`, `eval`, `attn` and `gradcheck`.
//!
//! `train`, `eval` and `attn` share one flat run configuration. Values come
//! from the key table defaults, then the `--config` file (`key = value` lines,
//! `#` comments), then `--key value` flags.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Arg, ArgAction, ArgMatches, Command};
use serde_json::json;

use crate::data::csvio::{export_dataset, load_csv_dataset, MANIFEST_NAME};
use crate::data::synth::{
    gen_actions, gen_extrapolation, gen_interpolation, gen_keyframe, ActionSpec, ExtrapolationSpec, InterpolationSpec,
    KeyframeSpec,
};
use crate::data::{SequenceDataset, TaskKind};
use crate::error::Error;
use crate::gradcheck::GRAD_TOL;
use crate::layers::Activation;
use crate::metrics::{attention_report, evaluate, export_attention_csv, export_heatmap, median};
use crate::model::{load_model, save_model, AttentionKind, Model, ModelConfig, ModelKind};
use crate::rng::Rng;
use crate::suite::run_suite;
use crate::tensor::fmt_f64;
use crate::train::{train, EarlyStop, LossKind, OptimizerKind, TrainConfig, TrainHistory};

pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_DATA: i32 = 4;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(String),
    Data(String),
    Runtime(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Data(_) => EXIT_DATA,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    /// Single-line JSON written to standard error.
    pub fn to_json(&self) -> String {
        let (kind, detail) = match self {
            CliError::Usage(d) => ("usage", d),
            CliError::Config(d) => ("config", d),
            CliError::Data(d) => ("data", d),
            CliError::Runtime(d) => ("runtime", d),
        };
        json!({"error": kind, "detail": detail}).to_string()
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if e.is_data_error() {
            CliError::Data(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn data_err(e: Error) -> CliError {
    CliError::Data(e.to_string())
}

/// Run configuration keys: name, default, help.
pub const RUN_KEYS: &[(&str, &str, &str)] = &[
    ("data", "", "training dataset: manifest.json or its directory"),
    ("test_data", "", "evaluation dataset for eval/attn (default: data)"),
    ("out", "", "output directory"),
    ("checkpoint", "auto", "checkpoint to evaluate (auto: <out>/checkpoint.json)"),
    ("model", "auto", "autoencoder | classifier (auto: from dataset targets)"),
    ("attention", "temporal", "temporal | feed_forward"),
    ("g", "16", "latent width"),
    ("m", "auto", "output length (auto: from dataset)"),
    ("attention_hidden", "auto", "feed-forward scorer hidden width (auto: g)"),
    ("encoder_activation", "tanh", "linear | tanh | relu"),
    ("decoder_activation", "linear", "autoencoder head: linear | tanh | relu"),
    ("mask", "auto", "true | false (auto: true for classifiers)"),
    ("batch_size", "8", "mini-batch size"),
    ("max_epochs", "50", "maximum epochs"),
    ("learning_rate", "0.001", "optimizer step size"),
    ("optimizer", "adam", "sgd | adam"),
    ("adam_beta1", "0.9", "adam first-moment decay"),
    ("adam_beta2", "0.999", "adam second-moment decay"),
    ("adam_eps", "1e-8", "adam denominator guard"),
    ("loss", "auto", "mse | cross_entropy (auto: from model)"),
    ("sparsity_lambda", "0", "weight of the negative squared attention penalty"),
    ("early_stop", "false", "true | false"),
    ("early_stop_min_delta", "0.01", "smallest validation improvement that counts"),
    ("early_stop_patience", "10", "epochs of small improvement before stopping"),
    ("seed", "0", "initialisation, split and shuffle seed"),
    ("validation_fraction", "0.1", "share of training data held out for validation"),
    ("record_time", "false", "write wall-clock seconds to history.csv"),
    ("horizons", "", "comma-separated output-frame offsets for eval"),
    ("attn_limit", "0", "sequences exported by attn (0: all)"),
];

/// Fully resolved run configuration, one value per key in [`RUN_KEYS`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn defaults() -> Self {
        Self {
            values: RUN_KEYS.iter().map(|(k, v, _)| (k.to_string(), v.to_string())).collect(),
        }
    }

    /// Applies `key = value` lines. Unknown or repeated keys are errors.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> CliResult<()> {
        let mut seen = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Config(format!("{origin}:{}: expected `key = value`", i + 1)));
            };
            let key = key.trim();
            if let Some(first) = seen.insert(key.to_string(), i + 1) {
                return Err(CliError::Config(format!(
                    "{origin}:{}: key {key:?} already set on line {first}",
                    i + 1
                )));
            }
            self.set(key, value.trim())
                .map_err(|_| CliError::Config(format!("{origin}:{}: unknown key {key:?}", i + 1)))?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.to_string();
                Ok(())
            }
            None => Err(CliError::Config(format!("unknown key {key:?}"))),
        }
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).expect("key from RUN_KEYS")
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> CliResult<T> {
        let v = self.get(key);
        v.parse()
            .map_err(|_| CliError::Config(format!("key {key}: cannot parse {v:?}")))
    }

    fn auto_or<T: std::str::FromStr>(&self, key: &str) -> CliResult<Option<T>> {
        if self.get(key) == "auto" {
            Ok(None)
        } else {
            self.parse(key).map(Some)
        }
    }

    fn path(&self, key: &str) -> CliResult<PathBuf> {
        match self.get(key) {
            "" => Err(CliError::Config(format!("key {key} is required"))),
            v => Ok(PathBuf::from(v)),
        }
    }

    fn activation(&self, key: &str) -> CliResult<Activation> {
        Activation::parse(self.get(key))
            .map_err(|e| CliError::Config(format!("key {key}: {e}")))
    }

    /// `key = value` lines in table order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, _, _) in RUN_KEYS {
            let _ = writeln!(out, "{k} = {}", self.get(k));
        }
        out
    }

    pub fn horizons(&self) -> CliResult<Vec<usize>> {
        self.get("horizons")
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|_| CliError::Config(format!("key horizons: cannot parse {s:?}")))
            })
            .collect()
    }

    /// Model configuration for a dataset, filling `auto` values from it.
    pub fn model_config(&self, data: &SequenceDataset) -> CliResult<ModelConfig> {
        let kind = match self.get("model") {
            "auto" => match data.kind() {
                TaskKind::Classification => ModelKind::Classifier,
                TaskKind::Sequence => ModelKind::Autoencoder,
            },
            "autoencoder" => ModelKind::Autoencoder,
            "classifier" => ModelKind::Classifier,
            other => return Err(CliError::Config(format!("key model: unknown model {other:?}"))),
        };
        let g: usize = self.parse("g")?;
        let mut cfg = match kind {
            ModelKind::Autoencoder => {
                let m = self.auto_or("m")?.unwrap_or(data.m);
                let mut cfg = ModelConfig::autoencoder(data.n, m, data.f, g);
                cfg.decoder_activation = self.activation("decoder_activation")?;
                cfg
            }
            ModelKind::Classifier => ModelConfig::classifier(data.n, data.f, g, data.num_classes),
        };
        cfg.attention = match self.get("attention") {
            "temporal" => AttentionKind::Temporal,
            "feed_forward" => AttentionKind::FeedForward,
            other => return Err(CliError::Config(format!("key attention: unknown attention {other:?}"))),
        };
        cfg.attention_hidden = self.auto_or("attention_hidden")?.unwrap_or(g);
        cfg.encoder_activation = self.activation("encoder_activation")?;
        if let Some(mask) = self.auto_or("mask")? {
            cfg.mask_enabled = mask;
        }
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn train_config(&self, model: &ModelConfig) -> CliResult<TrainConfig> {
        let optimizer = match self.get("optimizer") {
            "sgd" => OptimizerKind::Sgd,
            "adam" => OptimizerKind::Adam {
                beta1: self.parse("adam_beta1")?,
                beta2: self.parse("adam_beta2")?,
                eps: self.parse("adam_eps")?,
            },
            other => return Err(CliError::Config(format!("key optimizer: unknown optimizer {other:?}"))),
        };
        let loss = match self.get("loss") {
            "auto" => match model.kind {
                ModelKind::Autoencoder => LossKind::Mse,
                ModelKind::Classifier => LossKind::CrossEntropy,
            },
            "mse" => LossKind::Mse,
            "cross_entropy" => LossKind::CrossEntropy,
            other => return Err(CliError::Config(format!("key loss: unknown loss {other:?}"))),
        };
        let early_stop = if self.parse::<bool>("early_stop")? {
            Some(EarlyStop {
                min_delta: self.parse("early_stop_min_delta")?,
                patience: self.parse("early_stop_patience")?,
            })
        } else {
            None
        };
        let cfg = TrainConfig {
            batch_size: self.parse("batch_size")?,
            max_epochs: self.parse("max_epochs")?,
            learning_rate: self.parse("learning_rate")?,
            optimizer,
            loss,
            sparsity_lambda: self.parse("sparsity_lambda")?,
            early_stop,
            seed: self.parse("seed")?,
            validation_fraction: self.parse("validation_fraction")?,
            record_time: self.parse("record_time")?,
        };
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }
}

fn run_command(name: &'static str, about: &'static str) -> Command {
    let mut cmd = Command::new(name).about(about).arg(
        Arg::new("config")
            .long("config")
            .value_name("FILE")
            .help("flat `key = value` run configuration"),
    );
    for (key, default, help) in RUN_KEYS {
        let help = if default.is_empty() {
            help.to_string()
        } else {
            format!("{help} [default: {default}]")
        };
        cmd = cmd.arg(Arg::new(*key).long(*key).value_name("VALUE").help(help));
    }
    cmd
}

fn gen_command() -> Command {
    let opt = |name: &'static str, help: &'static str| Arg::new(name).long(name).value_name("VALUE").help(help);
    Command::new("gen")
        .about("Generate a synthetic dataset as CSV files plus manifest.json")
        .arg(
            Arg::new("task")
                .long("task")
                .required(true)
                .value_parser(["interpolation", "extrapolation", "keyframe", "actions"])
                .help("dataset family"),
        )
        .arg(opt("seed", "generator seed [default: 0]"))
        .arg(opt("count", "training sequences").required(true))
        .arg(opt(
            "test_count",
            "extra held-out sequences; when > 0 writes <out>/train and <out>/test [default: 0]",
        ))
        .arg(opt("out", "output directory").required(true))
        .arg(opt("f", "feature width (task default when omitted)"))
        .arg(opt("n", "sequence length for interpolation/actions"))
}

fn cli() -> Command {
    Command::new("tempattn")
        .about("Temporal contextual attention: synthetic data, training, evaluation and attention export")
        .subcommand_required(true)
        .subcommand(gen_command())
        .subcommand(run_command("train", "Train a model; writes checkpoint.json, history.csv, resolved.cfg"))
        .subcommand(run_command(
            "eval",
            "Evaluate a checkpoint; writes report.json plus confusion/horizon CSVs",
        ))
        .subcommand(run_command(
            "attn",
            "Export attention matrices as CSV and PGM heatmaps with an entropy summary",
        ))
        .subcommand(
            Command::new("gradcheck")
                .about("Finite-difference gradient suite; exit 0 iff every case is below 1e-6")
                .arg(
                    Arg::new("seed")
                        .long("seed")
                        .value_name("SEED")
                        .value_parser(clap::value_parser!(u64))
                        .help("run one seed (default: seeds 0..seeds)"),
                )
                .arg(
                    Arg::new("seeds")
                        .long("seeds")
                        .value_name("COUNT")
                        .value_parser(clap::value_parser!(u64))
                        .default_value("10")
                        .help("number of seeds when --seed is absent"),
                )
                .arg(Arg::new("quiet").long("quiet").action(ArgAction::SetTrue).help("print only the summary")),
        )
}

/// Entry point; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let matches = match cli().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let err = CliError::Usage(e.kind().to_string() + ": " + first_line(&e.to_string()));
            eprintln!("{}", err.to_json());
            return err.code();
        }
    };
    let result = match matches.subcommand() {
        Some(("gen", m)) => cmd_gen(m),
        Some(("train", m)) => resolve(m).and_then(|c| cmd_train(&c)),
        Some(("eval", m)) => resolve(m).and_then(|c| cmd_eval(&c)),
        Some(("attn", m)) => resolve(m).and_then(|c| cmd_attn(&c)),
        Some(("gradcheck", m)) => cmd_gradcheck(m),
        _ => Err(CliError::Usage("missing subcommand".into())),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.code()
        }
    }
}

fn first_line(s: &str) -> &str {
    s.lines().next().unwrap_or("").trim_start_matches("error: ")
}

/// Defaults, then the config file, then flags.
pub fn resolve(m: &ArgMatches) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::defaults();
    if let Some(path) = m.get_one::<String>("config") {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {path}: {e}")))?;
        cfg.apply_text(&text, path)?;
    }
    for (key, _, _) in RUN_KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v)?;
        }
    }
    Ok(cfg)
}

fn gen_arg<T: std::str::FromStr>(m: &ArgMatches, key: &str) -> CliResult<Option<T>> {
    m.get_one::<String>(key)
        .map(|v| {
            v.parse()
                .map_err(|_| CliError::Usage(format!("--{key}: cannot parse {v:?}")))
        })
        .transpose()
}

fn cmd_gen(m: &ArgMatches) -> CliResult<i32> {
    let task = m.get_one::<String>("task").expect("required").as_str();
    let seed: u64 = gen_arg(m, "seed")?.unwrap_or(0);
    let count: usize = gen_arg(m, "count")?.expect("required");
    let test_count: usize = gen_arg(m, "test_count")?.unwrap_or(0);
    let out = PathBuf::from(m.get_one::<String>("out").expect("required"));
    let f: Option<usize> = gen_arg(m, "f")?;
    let n: Option<usize> = gen_arg(m, "n")?;
    let total = count + test_count;
    let invalid = |e: Error| CliError::Usage(e.to_string());
    let ds = match task {
        "interpolation" => {
            let d = InterpolationSpec::default();
            let spec = InterpolationSpec {
                f: f.unwrap_or(d.f),
                n: n.unwrap_or(d.n),
                ..d
            };
            gen_interpolation(seed, total, &spec).map_err(invalid)?
        }
        "extrapolation" => {
            let d = ExtrapolationSpec::default();
            gen_extrapolation(seed, total, &ExtrapolationSpec { f: f.unwrap_or(d.f), ..d }).map_err(invalid)?
        }
        "keyframe" => {
            let d = KeyframeSpec::default();
            gen_keyframe(seed, total, &KeyframeSpec { f: f.unwrap_or(d.f), ..d }).map_err(invalid)?
        }
        "actions" => {
            let d = ActionSpec::default();
            let spec = ActionSpec {
                f: f.unwrap_or(d.f),
                n: n.unwrap_or(d.n),
                ..d
            };
            gen_actions(seed, total, &spec).map_err(invalid)?
        }
        other => return Err(CliError::Usage(format!("unknown task {other:?}"))),
    };
    if test_count == 0 {
        export_dataset(&ds, &out)?;
    } else {
        let (train, test) = ds.split_tail(test_count);
        export_dataset(&train, &out.join("train"))?;
        export_dataset(&test, &out.join("test"))?;
    }
    Ok(0)
}

fn manifest_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(MANIFEST_NAME)
    } else {
        p.to_path_buf()
    }
}

fn load_data(cfg: &RunConfig, key: &str) -> CliResult<SequenceDataset> {
    let path = cfg.path(key)?;
    load_csv_dataset(&manifest_path(&path)).map_err(data_err)
}

fn eval_data(cfg: &RunConfig) -> CliResult<SequenceDataset> {
    if cfg.get("test_data").is_empty() {
        load_data(cfg, "data")
    } else {
        load_data(cfg, "test_data")
    }
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// Builds, trains and returns the model plus its history.
pub fn train_from_config(cfg: &RunConfig, data: &SequenceDataset) -> CliResult<(Model, TrainHistory)> {
    let model_cfg = cfg.model_config(data)?;
    let train_cfg = cfg.train_config(&model_cfg)?;
    let model = Model::init(model_cfg, &mut Rng::new(train_cfg.seed)).map_err(|e| CliError::Config(e.to_string()))?;
    train(model, data, &train_cfg).map_err(|e| match e {
        Error::InvalidArgument(msg) => CliError::Data(msg),
        other => CliError::Runtime(other.to_string()),
    })
}

fn cmd_train(cfg: &RunConfig) -> CliResult<i32> {
    let out = cfg.path("out")?;
    let data = load_data(cfg, "data")?;
    let (model, history) = train_from_config(cfg, &data)?;
    create_dir(&out)?;
    save_model(&model, &out.join("checkpoint.json"))?;
    write_file(&out.join("history.csv"), &history.to_csv())?;
    write_file(&out.join("resolved.cfg"), &cfg.to_text())?;
    let last = history.epochs.last();
    println!(
        "{}",
        json!({
            "epochs": history.epochs.len(),
            "best_epoch": history.best_epoch,
            "stopped_early": history.stopped_early,
            "final_val_loss": last.map(|e| e.val_loss),
        })
    );
    Ok(0)
}

fn checkpoint_path(cfg: &RunConfig) -> CliResult<PathBuf> {
    match cfg.get("checkpoint") {
        "auto" => Ok(cfg.path("out")?.join("checkpoint.json")),
        p => Ok(PathBuf::from(p)),
    }
}

fn load_checkpoint(cfg: &RunConfig) -> CliResult<Model> {
    load_model(&checkpoint_path(cfg)?).map_err(data_err)
}

fn cmd_eval(cfg: &RunConfig) -> CliResult<i32> {
    let out = cfg.path("out")?;
    let model = load_checkpoint(cfg)?;
    let data = eval_data(cfg)?;
    let report = evaluate(&model, &data, &cfg.horizons()?).map_err(|e| match e {
        Error::InvalidArgument(msg) => CliError::Data(msg),
        other => other.into(),
    })?;
    create_dir(&out)?;
    let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_file(&out.join("report.json"), &(text + "\n"))?;
    if let Some(confusion) = &report.confusion {
        let mut csv = String::from("true\\predicted");
        for k in 0..confusion.len() {
            let _ = write!(csv, ",{k}");
        }
        csv.push('\n');
        for (k, row) in confusion.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(usize::to_string).collect();
            let _ = writeln!(csv, "{k},{}", cells.join(","));
        }
        write_file(&out.join("confusion.csv"), &csv)?;
    }
    if let (Some(h), Some(mse)) = (&report.horizons, &report.horizon_mse) {
        let mut csv = String::from("horizon,mse,baseline_mse\n");
        for (i, (h, v)) in h.iter().zip(mse).enumerate() {
            let base = report
                .baseline_horizon_mse
                .as_ref()
                .map(|b| fmt_f64(b[i]))
                .unwrap_or_default();
            let _ = writeln!(csv, "{h},{},{base}", fmt_f64(*v));
        }
        write_file(&out.join("horizons.csv"), &csv)?;
    }
    write_file(&out.join("resolved.cfg"), &cfg.to_text())?;
    println!("{}", serde_json::to_string(&report).map_err(|e| CliError::Runtime(e.to_string()))?);
    Ok(0)
}

fn cmd_attn(cfg: &RunConfig) -> CliResult<i32> {
    let out = cfg.path("out")?;
    let model = load_checkpoint(cfg)?;
    let mut data = eval_data(cfg)?;
    let limit: usize = cfg.parse("attn_limit")?;
    if limit > 0 && limit < data.len() {
        data.samples.truncate(limit);
    }
    let report = attention_report(&model, &data).map_err(|e| match e {
        Error::InvalidArgument(msg) => CliError::Data(msg),
        other => other.into(),
    })?;
    let dir = out.join("attn");
    create_dir(&dir)?;
    let mut entropy_csv = String::from("sequence,row,entropy,argmax,hit\n");
    for (i, a) in report.attention.iter().enumerate() {
        export_attention_csv(a, &dir.join(format!("seq_{i}.csv")))?;
        export_heatmap(a, &dir.join(format!("seq_{i}.pgm")))?;
        for (r, (h, arg)) in report.row_entropies[i].iter().zip(&report.argmax_locations[i]).enumerate() {
            let hit = report
                .detection_hits
                .as_ref()
                .map(|hits| hits[i].to_string())
                .unwrap_or_default();
            let _ = writeln!(entropy_csv, "{i},{r},{},{arg},{hit}", fmt_f64(*h));
        }
    }
    write_file(&dir.join("entropy.csv"), &entropy_csv)?;
    let entropies = report.all_entropies();
    let summary = json!({
        "sequences": report.attention.len(),
        "median_entropy": median(&entropies),
        "mean_entropy": entropies.iter().sum::<f64>() / entropies.len().max(1) as f64,
        "detection_accuracy": report.detection_accuracy(),
    });
    let text = serde_json::to_string_pretty(&summary).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_file(&dir.join("summary.json"), &(text + "\n"))?;
    write_file(&out.join("resolved.cfg"), &cfg.to_text())?;
    println!("{summary}");
    Ok(0)
}

fn cmd_gradcheck(m: &ArgMatches) -> CliResult<i32> {
    let seeds: Vec<u64> = match m.get_one::<u64>("seed") {
        Some(&s) => vec![s],
        None => (0..*m.get_one::<u64>("seeds").expect("defaulted")).collect(),
    };
    let quiet = m.get_flag("quiet");
    let mut worst: BTreeMap<String, f64> = BTreeMap::new();
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    for seed in seeds {
        for entry in run_suite(seed)? {
            let err = entry.report.max_rel_err;
            if !quiet {
                let _ = writeln!(
                    lock,
                    "seed {seed} {:<36} max_rel_err {err:.3e} checked {} kinks {}",
                    entry.name, entry.report.checked, entry.report.skipped_kinks
                );
            }
            let w = worst.entry(entry.name).or_insert(0.0);
            *w = w.max(err);
        }
    }
    let mut ok = true;
    for (name, err) in &worst {
        let pass = *err < GRAD_TOL;
        ok &= pass;
        let _ = writeln!(lock, "{:<36} {err:.3e} {}", name, if pass { "PASS" } else { "FAIL" });
    }
    Ok(if ok { 0 } else { EXIT_RUNTIME })
}

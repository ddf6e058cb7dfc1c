//! Command-line driver: `train` one model or `compare` several on one split.
//!
//! Options may also come from a `key = value` file given with `--config`;
//! flags on the command line override file values. Every run writes into its
//! output directory:
//!
//! - `epochs.jsonl`: one JSON record per epoch, then a final `summary` record
//! - `summary.csv`: `model,rmse,seconds,epochs,...` header plus one row
//! - `run.conf`: every consumed option, loadable again with `--config`
//! - `best.ckpt`: parameters of the best validation epoch
//!
//! Files are written under temporary names and renamed once the run
//! completes. A failed run leaves only a `FAILED` marker with the error.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::baselines::{train_adam_with, train_sgd_with, FirstOrderConfig};
use crate::checkpoint;
use crate::dataset::{compact_ids, load_ratings, split, DatasetSplit, Separator, SplitRatios};
use crate::error::{Error, Result};
use crate::metrics::rmse_with_clamp;
use crate::model::{Hyperparams, ParamVector};
use crate::sam::SamMode;
use crate::trainer::{train_sslf_with, EpochRecord, StopReason, TrainReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Sslf,
    Sgd,
    Adam,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Sslf => "sslf",
            ModelKind::Sgd => "sgd",
            ModelKind::Adam => "adam",
        })
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "sslf",
    version,
    about = "Sharpness-aware Hessian-free latent factor models for sparse rating data",
    args_override_self = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one model and write its artifacts.
    Train(TrainArgs),
    /// Train several models on one split and print a comparison table.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// key = value option file; command-line flags override it
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Ratings file (user, item, rating[, timestamp] per line)
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Field separator: auto, colons (::), tab, comma
    #[arg(long)]
    pub format: Option<Separator>,
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
    /// Latent dimension
    #[arg(long)]
    pub f: Option<usize>,
    /// L2 coefficient (defaults: 0.05 for sslf, 0.02 for sgd/adam)
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Initial damping
    #[arg(long)]
    pub gamma: Option<f64>,
    /// SAM radius (0 disables)
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub sam_mode: Option<SamMode>,
    /// CG relative residual tolerance
    #[arg(long)]
    pub cg_tol: Option<f64>,
    #[arg(long)]
    pub cg_abs_tol: Option<f64>,
    #[arg(long)]
    pub cg_max_iters: Option<usize>,
    /// Warm-start CG from the previous update
    #[arg(long)]
    pub warm_start: bool,
    /// Keep damping fixed at --gamma
    #[arg(long)]
    pub fixed_damping: bool,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub init_low: Option<f64>,
    #[arg(long)]
    pub init_high: Option<f64>,
    /// Learning rate for sgd/adam
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub adam_beta1: Option<f64>,
    #[arg(long)]
    pub adam_beta2: Option<f64>,
    #[arg(long)]
    pub adam_eps: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// train,validation,test ratios
    #[arg(long)]
    pub split: Option<SplitRatios>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores)
    #[arg(long)]
    pub workers: Option<usize>,
    /// Clamp predictions to the training rating range before RMSE
    #[arg(long)]
    pub clamp_predictions: bool,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    /// Comma-separated models, in table order
    #[arg(long, value_enum, value_delimiter = ',', default_value = "sslf,sgd,adam")]
    pub models: Vec<ModelKind>,
    /// Per-run option files; when given, one row per file instead of --models
    #[arg(long = "run", value_name = "FILE")]
    pub runs: Vec<PathBuf>,
    #[command(flatten)]
    pub shared: TrainArgs,
}

/// Fully resolved configuration of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: PathBuf,
    pub format: Separator,
    pub split: SplitRatios,
    pub seed: u64,
    pub model: ModelKind,
    pub hyperparams: Hyperparams,
    pub first_order: FirstOrderConfig,
    pub out: PathBuf,
    pub workers: Option<usize>,
    pub clamp_predictions: bool,
}

impl RunConfig {
    pub fn new(data: impl Into<PathBuf>, model: ModelKind, out: impl Into<PathBuf>) -> Self {
        Self {
            data: data.into(),
            format: Separator::Auto,
            split: SplitRatios::default(),
            seed: 42,
            model,
            hyperparams: Hyperparams::default(),
            first_order: FirstOrderConfig::default(),
            out: out.into(),
            workers: None,
            clamp_predictions: false,
        }
    }

    /// Resolve flags against defaults and validate them.
    pub fn from_args(args: &TrainArgs) -> Result<Self> {
        let data = args
            .data
            .clone()
            .ok_or_else(|| Error::Config("--data is required".into()))?;
        let model = args.model.unwrap_or(ModelKind::Sslf);
        let out = args.out.clone().unwrap_or_else(|| PathBuf::from("sslf-out"));
        let mut cfg = RunConfig::new(data, model, out);

        cfg.format = args.format.unwrap_or_default();
        cfg.split = args.split.unwrap_or_default();
        cfg.seed = args.seed.unwrap_or(cfg.seed);
        cfg.workers = args.workers;
        cfg.clamp_predictions = args.clamp_predictions;

        let hp = &mut cfg.hyperparams;
        hp.seed = cfg.seed;
        hp.f = args.f.unwrap_or(hp.f);
        hp.lambda = args.lambda.unwrap_or(hp.lambda);
        hp.gamma = args.gamma.unwrap_or(hp.gamma);
        hp.rho = args.rho.unwrap_or(hp.rho);
        hp.sam_mode = args.sam_mode.unwrap_or(hp.sam_mode);
        hp.cg_rel_tol = args.cg_tol.unwrap_or(hp.cg_rel_tol);
        hp.cg_abs_tol = args.cg_abs_tol.unwrap_or(hp.cg_abs_tol);
        hp.cg_max_iters = args.cg_max_iters.unwrap_or(hp.cg_max_iters);
        hp.warm_start = args.warm_start;
        hp.adapt_damping = !args.fixed_damping;
        hp.max_epochs = args.max_epochs.unwrap_or(hp.max_epochs);
        hp.patience = args.patience.unwrap_or(hp.patience);
        hp.init_low = args.init_low.unwrap_or(hp.init_low);
        hp.init_high = args.init_high.unwrap_or(hp.init_high);

        let fo = &mut cfg.first_order;
        fo.seed = cfg.seed;
        fo.f = hp.f;
        fo.lambda = args.lambda.unwrap_or(fo.lambda);
        fo.learning_rate = args.lr.unwrap_or(fo.learning_rate);
        fo.adam_beta1 = args.adam_beta1.unwrap_or(fo.adam_beta1);
        fo.adam_beta2 = args.adam_beta2.unwrap_or(fo.adam_beta2);
        fo.adam_eps = args.adam_eps.unwrap_or(fo.adam_eps);
        fo.max_epochs = hp.max_epochs;
        fo.patience = hp.patience;
        fo.init_low = hp.init_low;
        fo.init_high = hp.init_high;

        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.data.is_file() {
            return Err(Error::Config(format!(
                "data file {} does not exist",
                self.data.display()
            )));
        }
        self.split.validate()?;
        if self.workers == Some(0) {
            return Err(Error::Config("--workers must be at least 1".into()));
        }
        match self.model {
            ModelKind::Sslf => self.hyperparams.validate(),
            ModelKind::Sgd | ModelKind::Adam => self.first_order.validate(),
        }
    }

    /// All consumed options as `key = value` lines accepted by `--config`.
    pub fn to_conf(&self) -> String {
        let hp = &self.hyperparams;
        let fo = &self.first_order;
        let lambda = match self.model {
            ModelKind::Sslf => hp.lambda,
            _ => fo.lambda,
        };
        let mut lines = vec![
            format!("data = {}", self.data.display()),
            format!("format = {}", self.format),
            format!("split = {}", self.split),
            format!("seed = {}", self.seed),
            format!("model = {}", self.model),
            format!("f = {}", hp.f),
            format!("lambda = {lambda}"),
            format!("max-epochs = {}", hp.max_epochs),
            format!("patience = {}", hp.patience),
            format!("init-low = {}", hp.init_low),
            format!("init-high = {}", hp.init_high),
            format!("clamp-predictions = {}", self.clamp_predictions),
        ];
        match self.model {
            ModelKind::Sslf => lines.extend([
                format!("gamma = {}", hp.gamma),
                format!("rho = {}", hp.rho),
                format!("sam-mode = {}", hp.sam_mode),
                format!("cg-tol = {}", hp.cg_rel_tol),
                format!("cg-abs-tol = {}", hp.cg_abs_tol),
                format!("cg-max-iters = {}", hp.cg_max_iters),
                format!("warm-start = {}", hp.warm_start),
                format!("fixed-damping = {}", !hp.adapt_damping),
            ]),
            ModelKind::Sgd | ModelKind::Adam => {
                lines.push(format!("lr = {}", fo.learning_rate));
                if self.model == ModelKind::Adam {
                    lines.extend([
                        format!("adam-beta1 = {}", fo.adam_beta1),
                        format!("adam-beta2 = {}", fo.adam_beta2),
                        format!("adam-eps = {}", fo.adam_eps),
                    ]);
                }
            }
        }
        if let Some(w) = self.workers {
            lines.push(format!("workers = {w}"));
        }
        lines.join("\n") + "\n"
    }

    fn config_json(&self) -> serde_json::Value {
        let mut v = json!({
            "data": self.data.display().to_string(),
            "format": self.format.to_string(),
            "split": [self.split.train, self.split.validation, self.split.test],
            "seed": self.seed,
            "model": self.model,
            "workers": self.workers,
            "clamp_predictions": self.clamp_predictions,
        });
        let extra = match self.model {
            ModelKind::Sslf => serde_json::to_value(self.hyperparams),
            _ => serde_json::to_value(self.first_order),
        }
        .expect("config serializes");
        v["hyperparams"] = extra;
        v
    }

    fn same_split_as(&self, other: &RunConfig) -> bool {
        self.data == other.data
            && self.format == other.format
            && self.split == other.split
            && self.seed == other.seed
    }
}

/// Headline numbers of a finished run (one comparison-table row).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub model: ModelKind,
    /// Test RMSE at the best-validation parameters (validation RMSE when the
    /// test partition is empty).
    pub rmse: f64,
    pub seconds: f64,
    pub epochs: usize,
    pub best_epoch: usize,
    pub best_validation_rmse: f64,
    pub stopped_reason: StopReason,
}

/// Load ratings and split them per `cfg`.
pub fn prepare_split(cfg: &RunConfig) -> Result<DatasetSplit> {
    let triples = load_ratings(&cfg.data, cfg.format)?;
    let compacted = compact_ids(&triples)?;
    log::info!(
        "{} ratings, {} users, {} items ({} duplicates collapsed)",
        compacted.index.len(),
        compacted.index.n_users(),
        compacted.index.n_items(),
        compacted.duplicate_count
    );
    split(&compacted.index, cfg.split, cfg.seed)
}

/// Run `f` on a pool of `workers` threads, or the global pool when `None`.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("cannot start {n} workers: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Train one model and write its artifacts under `cfg.out`.
pub fn cmd_train(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let split = prepare_split(cfg)?;
    run_on_split(cfg, &split)
}

struct Staging {
    dir: PathBuf,
}

impl Staging {
    const FILES: [&'static str; 4] = ["epochs.jsonl", "summary.csv", "run.conf", "best.ckpt"];

    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let _ = fs::remove_file(dir.join("FAILED"));
        Ok(Self {
            dir: dir.to_path_buf(),
        })
    }

    fn tmp(&self, name: &str) -> PathBuf {
        self.dir.join(format!("{name}.tmp"))
    }

    fn commit(&self) -> Result<()> {
        for name in Self::FILES {
            fs::rename(self.tmp(name), self.dir.join(name))?;
        }
        Ok(())
    }

    fn fail(&self, err: &Error) {
        for name in Self::FILES {
            let _ = fs::remove_file(self.tmp(name));
            let _ = fs::remove_file(self.dir.join(name));
        }
        let _ = fs::write(self.dir.join("FAILED"), format!("{err}\n"));
    }
}

fn run_on_split(cfg: &RunConfig, split: &DatasetSplit) -> Result<RunSummary> {
    let staging = Staging::new(&cfg.out)?;
    let result = with_workers(cfg.workers, || write_run(cfg, split, &staging)).and_then(|r| r);
    match result {
        Ok(summary) => {
            staging.commit()?;
            Ok(summary)
        }
        Err(e) => {
            staging.fail(&e);
            Err(e)
        }
    }
}

fn write_run(cfg: &RunConfig, split: &DatasetSplit, staging: &Staging) -> Result<RunSummary> {
    let start = Instant::now();
    let mut log_file = BufWriter::new(File::create(staging.tmp("epochs.jsonl"))?);
    let mut io_err: Option<std::io::Error> = None;
    let on_epoch = |rec: &EpochRecord| {
        if io_err.is_none() {
            let line = serde_json::to_string(rec).expect("record serializes");
            if let Err(e) = writeln!(log_file, "{line}").and_then(|_| log_file.flush()) {
                io_err = Some(e);
            }
        }
    };
    let (params, report) = match cfg.model {
        ModelKind::Sslf => train_sslf_with(split, &cfg.hyperparams, on_epoch)?,
        ModelKind::Sgd => train_sgd_with(split, &cfg.first_order, on_epoch)?,
        ModelKind::Adam => train_adam_with(split, &cfg.first_order, on_epoch)?,
    };
    if let Some(e) = io_err {
        return Err(e.into());
    }
    let seconds = start.elapsed().as_secs_f64();
    let summary = summarize(cfg, split, &params, &report, seconds)?;

    writeln!(
        log_file,
        "{}",
        json!({ "summary": { "result": &summary, "config": cfg.config_json() } })
    )?;
    log_file.flush()?;

    let mut csv = BufWriter::new(File::create(staging.tmp("summary.csv"))?);
    writeln!(csv, "{}", SUMMARY_HEADER)?;
    writeln!(csv, "{}", summary_row(&summary))?;
    csv.flush()?;

    fs::write(staging.tmp("run.conf"), cfg.to_conf())?;
    checkpoint::save(staging.tmp("best.ckpt"), &params)?;
    Ok(summary)
}

const SUMMARY_HEADER: &str = "model,rmse,seconds,epochs,best_epoch,best_val_rmse,stopped_reason";

fn summary_row(s: &RunSummary) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        s.model,
        s.rmse,
        s.seconds,
        s.epochs,
        s.best_epoch,
        s.best_validation_rmse,
        serde_json::to_value(s.stopped_reason)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default()
    )
}

fn summarize(
    cfg: &RunConfig,
    split: &DatasetSplit,
    params: &ParamVector,
    report: &TrainReport,
    seconds: f64,
) -> Result<RunSummary> {
    let clamp = if cfg.clamp_predictions {
        let (lo, hi) = split
            .train
            .entries()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, _, r)| {
                (lo.min(r), hi.max(r))
            });
        Some((lo, hi))
    } else {
        None
    };
    let eval_set = if split.test.is_empty() {
        &split.validation
    } else {
        &split.test
    };
    let rmse = rmse_with_clamp(params, eval_set, clamp)?.rmse;
    Ok(RunSummary {
        model: cfg.model,
        rmse,
        seconds,
        epochs: report.epochs_run(),
        best_epoch: report.best_epoch,
        best_validation_rmse: report.best_validation_rmse,
        stopped_reason: report.stopped_reason,
    })
}

/// Train every config on their shared split; rows follow input order.
///
/// Each run writes its artifacts to its own `out` directory.
pub fn cmd_compare(configs: &[RunConfig]) -> Result<Vec<RunSummary>> {
    let first = configs
        .first()
        .ok_or_else(|| Error::Config("nothing to compare".into()))?;
    for cfg in configs {
        cfg.validate()?;
        if !cfg.same_split_as(first) {
            return Err(Error::MismatchedSplits(format!(
                "{} ({}, {}, seed {}) vs {} ({}, {}, seed {})",
                first.model,
                first.data.display(),
                first.split,
                first.seed,
                cfg.model,
                cfg.data.display(),
                cfg.split,
                cfg.seed
            )));
        }
    }
    let split = prepare_split(first)?;
    configs.iter().map(|cfg| run_on_split(cfg, &split)).collect()
}

/// Aligned text table of comparison rows.
pub fn render_table(rows: &[RunSummary]) -> String {
    let mut out = format!(
        "{:<6} {:>10} {:>11} {:>7} {:>11}\n",
        "model", "rmse", "seconds", "epochs", "best_epoch"
    );
    for r in rows {
        out.push_str(&format!(
            "{:<6} {:>10.5} {:>11.3} {:>7} {:>11}\n",
            r.model.to_string(),
            r.rmse,
            r.seconds,
            r.epochs,
            r.best_epoch
        ));
    }
    out
}

/// Comparison rows as CSV with the summary header.
pub fn render_csv(rows: &[RunSummary]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&summary_row(r));
        out.push('\n');
    }
    out
}

/// Splice `key = value` lines from `--config FILE` into the argument list,
/// directly after the subcommand, so later command-line flags win.
pub fn expand_config_args(args: Vec<String>) -> Result<Vec<String>> {
    let mut config_path = None;
    let mut rest = Vec::with_capacity(args.len());
    let mut iter = args.into_iter();
    while let Some(a) = iter.next() {
        if a == "--config" {
            config_path = Some(
                iter.next()
                    .ok_or_else(|| Error::Config("--config needs a file".into()))?,
            );
        } else if let Some(p) = a.strip_prefix("--config=") {
            config_path = Some(p.to_owned());
        } else {
            rest.push(a);
        }
    }
    let Some(path) = config_path else {
        return Ok(rest);
    };
    let text = fs::read_to_string(&path)
        .map_err(|e| Error::Config(format!("cannot read config {path}: {e}")))?;
    let file_args = conf_to_args(&text)?;
    let insert_at = rest.len().min(2);
    rest.splice(insert_at..insert_at, file_args);
    Ok(rest)
}

const BOOL_KEYS: [&str; 3] = ["warm-start", "fixed-damping", "clamp-predictions"];

fn conf_to_args(text: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("config line {}: expected key = value", n + 1)))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if BOOL_KEYS.contains(&key.as_str()) {
            match value {
                "true" => out.push(format!("--{key}")),
                "false" => {}
                other => {
                    return Err(Error::Config(format!(
                        "config line {}: {key} must be true or false, got '{other}'",
                        n + 1
                    )))
                }
            }
        } else {
            out.push(format!("--{key}"));
            out.push(value.to_owned());
        }
    }
    Ok(out)
}

/// Entry point shared by the binary; returns the process exit code.
pub fn run(args: Vec<String>) -> i32 {
    let args = match expand_config_args(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            if !e.use_stderr() {
                return 0;
            }
            if e.kind() == ErrorKind::InvalidValue {
                eprintln!("\n{}", Cli::command().render_usage());
            }
            return 2;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => {
            let cfg = RunConfig::from_args(&args)?;
            let summary = cmd_train(&cfg)?;
            print!("{}", render_table(std::slice::from_ref(&summary)));
            Ok(())
        }
        Command::Compare(args) => {
            let configs = compare_configs(&args)?;
            let rows = cmd_compare(&configs)?;
            print!("{}", render_table(&rows));
            let out = args.shared.out.unwrap_or_else(|| PathBuf::from("sslf-out"));
            fs::write(out.join("comparison.csv"), render_csv(&rows))?;
            Ok(())
        }
    }
}

fn compare_configs(args: &CompareArgs) -> Result<Vec<RunConfig>> {
    let base_out = args
        .shared
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("sslf-out"));
    let mut configs = Vec::new();
    if args.runs.is_empty() {
        for &model in &args.models {
            let mut a = args.shared.clone();
            a.model = Some(model);
            configs.push(RunConfig::from_args(&a)?);
        }
    } else {
        for path in &args.runs {
            let argv = expand_config_args(vec![
                "sslf".into(),
                "train".into(),
                "--config".into(),
                path.display().to_string(),
            ])?;
            let parsed = Cli::try_parse_from(argv)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let Command::Train(file_args) = parsed.command else {
                unreachable!("argv names the train subcommand");
            };
            configs.push(RunConfig::from_args(&merge_args(&file_args, &args.shared))?);
        }
    }
    for (k, cfg) in configs.iter_mut().enumerate() {
        cfg.out = base_out.join(format!("{k:02}-{}", cfg.model));
    }
    Ok(configs)
}

/// `base` with every option explicitly set in `over` replaced.
fn merge_args(base: &TrainArgs, over: &TrainArgs) -> TrainArgs {
    macro_rules! pick {
        ($($field:ident),*) => {
            TrainArgs {
                config: None,
                $($field: over.$field.clone().or_else(|| base.$field.clone()),)*
                warm_start: base.warm_start || over.warm_start,
                fixed_damping: base.fixed_damping || over.fixed_damping,
                clamp_predictions: base.clamp_predictions || over.clamp_predictions,
            }
        };
    }
    pick!(
        data, format, model, f, lambda, gamma, rho, sam_mode, cg_tol, cg_abs_tol, cg_max_iters,
        max_epochs, patience, init_low, init_high, lr, adam_beta1, adam_beta2, adam_eps, seed,
        split, out, workers
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn config_file_values_precede_flags() {
        let dir = tempfile::tempdir().unwrap();
        let conf = dir.path().join("a.conf");
        fs::write(&conf, "# comment\nrho = 0.5\nmax_epochs = 3\nwarm-start = true\nclamp-predictions = false\n")
            .unwrap();
        let args = expand_config_args(strings(&[
            "sslf",
            "train",
            "--rho",
            "0.1",
            "--config",
            conf.to_str().unwrap(),
        ]))
        .unwrap();
        assert_eq!(
            args,
            strings(&["sslf", "train", "--rho", "0.5", "--max-epochs", "3", "--warm-start", "--rho", "0.1"])
        );
        let cli = Cli::try_parse_from(args).unwrap();
        let Command::Train(t) = cli.command else { panic!() };
        assert_eq!(t.rho, Some(0.1));
        assert_eq!(t.max_epochs, Some(3));
        assert!(t.warm_start);
    }

    #[test]
    fn malformed_config_lines_are_reported() {
        assert!(conf_to_args("rho 0.1").is_err());
        assert!(conf_to_args("warm-start = yes").is_err());
    }

    #[test]
    fn unknown_model_is_a_usage_error() {
        let err = Cli::try_parse_from(strings(&["sslf", "train", "--model", "als"])).unwrap_err();
        assert!(err.use_stderr());
        assert!(err.to_string().contains("possible values"));
    }

    #[test]
    fn missing_data_is_reported_before_training() {
        let args = TrainArgs {
            data: Some(PathBuf::from("/definitely/not/here.dat")),
            ..blank_args()
        };
        assert!(matches!(RunConfig::from_args(&args), Err(Error::Config(_))));
        assert!(matches!(
            RunConfig::from_args(&blank_args()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn table_rows_follow_input_order() {
        let row = |model| RunSummary {
            model,
            rmse: 1.0,
            seconds: 0.5,
            epochs: 3,
            best_epoch: 2,
            best_validation_rmse: 1.1,
            stopped_reason: StopReason::Patience,
        };
        let rows = [row(ModelKind::Adam), row(ModelKind::Sslf)];
        let table = render_table(&rows);
        let lines: Vec<_> = table.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("adam"));
        assert!(lines[2].starts_with("sslf"));
        let csv = render_csv(&rows);
        assert!(csv.starts_with("model,rmse,seconds,epochs"));
        assert!(csv.lines().nth(1).unwrap().ends_with(",patience"));
    }

    pub(super) fn blank_args() -> TrainArgs {
        Cli::try_parse_from(strings(&["sslf", "train"]))
            .map(|c| match c.command {
                Command::Train(t) => t,
                _ => unreachable!(),
            })
            .unwrap()
    }
}

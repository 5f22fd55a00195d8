//! Config-driven commands behind the `har-chain` binary.
//!
//! Every command reads one JSON config (all fields optional), applies flag
//! overrides, validates, runs, and drops its artifacts plus a
//! `run_manifest.json` into the output directory. The manifest embeds the
//! fully resolved config and is itself a valid `--config` input, so any run
//! can be replayed byte-for-byte into a fresh directory.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{compute_metrics, confusion_matrix, write_confusion_csv};
use crate::ingest::{
    class_distribution, generate_synthetic, load_directory, summarize, LabelMap, SensorRecording,
    SyntheticSpec,
};
use crate::model::{build_model, Model, ModelSpec};
use crate::preprocess::{
    apply_normalizer_windows, fit_normalizer_windows, interpolate_missing, resample,
    sliding_windows, Labeling, NormScheme, WindowedDataset,
};
use crate::train::{batch_tensor, train, write_history_csv, TrainConfig};
use crate::validate::{
    random_search, run_cross_validation, split_train_val, Grouping, Protocol, SearchSpace,
};

/// Where the recordings come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    /// Generated corpus of class-distinct sinusoids.
    Synthetic(SyntheticSpec),
    /// Directory of per-recording CSV files.
    Dir {
        path: PathBuf,
        /// Activity names in class-id order; defaults to the eight
        /// wrist-worn activities.
        #[serde(default)]
        labels: Option<Vec<String>>,
    },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic(SyntheticSpec::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    /// Hz to resample onto. When absent the pooled median input rate is
    /// used, and the resolved value lands in the manifest.
    pub target_rate: Option<f64>,
    pub window_seconds: f64,
    /// Fraction of each window shared with its successor, in [0, 1).
    pub overlap: f64,
    pub scheme: NormScheme,
    pub labeling: Labeling,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            target_rate: None,
            window_seconds: 1.0,
            overlap: 0.5,
            scheme: NormScheme::Zscore,
            labeling: Labeling::Majority,
        }
    }
}

impl PreprocessConfig {
    pub fn window_len(&self, rate: f64) -> usize {
        (self.window_seconds * rate).round() as usize
    }

    pub fn stride(&self, rate: f64) -> usize {
        let w = self.window_len(rate) as f64;
        ((w * (1.0 - self.overlap)).round() as usize).max(1)
    }
}

/// Architecture knobs; the data-dependent dimensions (channels, window
/// length, classes) come from the pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub conv_layers: usize,
    pub filters: usize,
    pub kernel_len: usize,
    pub hidden: usize,
    pub lstm_layers: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            conv_layers: 4,
            filters: 64,
            kernel_len: 5,
            hidden: 128,
            lstm_layers: 1,
        }
    }
}

impl ModelConfig {
    pub fn to_spec(
        &self,
        channels: usize,
        window_len: usize,
        classes: usize,
        seed: u64,
    ) -> ModelSpec {
        ModelSpec {
            channels,
            window_len,
            classes,
            conv_layers: self.conv_layers,
            filters: self.filters,
            kernel_len: self.kernel_len,
            hidden: self.hidden,
            lstm_layers: self.lstm_layers,
            seed,
        }
    }
}

/// The single split used by `train` and `tune`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HoldoutConfig {
    pub val_fraction: f64,
    pub grouping: Grouping,
}

impl Default for HoldoutConfig {
    fn default() -> Self {
        Self {
            val_fraction: 0.2,
            grouping: Grouping::Subject,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub budget: usize,
    pub space: SearchSpace,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            budget: 10,
            space: SearchSpace::default(),
        }
    }
}

/// The complete, self-describing configuration of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every random draw in the run derives from it.
    pub seed: u64,
    /// Output directory. Deserialized but never written back, so manifests
    /// replay byte-identically into any directory.
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    pub data: DataSource,
    pub preprocess: PreprocessConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub holdout: HoldoutConfig,
    pub protocol: Protocol,
    pub search: SearchConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: None,
            data: DataSource::default(),
            preprocess: PreprocessConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            holdout: HoldoutConfig::default(),
            protocol: Protocol::Loso,
            search: SearchConfig::default(),
        }
    }
}

impl RunConfig {
    /// Reject bad settings before any work starts. Violations map to exit
    /// code 2.
    pub fn validate(&self) -> Result<()> {
        let p = &self.preprocess;
        if !(p.window_seconds > 0.0) {
            return Err(Error::config(format!(
                "window_seconds must be positive, got {}",
                p.window_seconds
            )));
        }
        if !(0.0..1.0).contains(&p.overlap) {
            return Err(Error::config(format!(
                "overlap must lie in [0, 1), got {}",
                p.overlap
            )));
        }
        if let Some(r) = p.target_rate {
            if !(r > 0.0) {
                return Err(Error::config(format!(
                    "target_rate must be positive, got {r}"
                )));
            }
        }
        let m = &self.model;
        if m.conv_layers < 1
            || m.filters < 1
            || m.kernel_len < 1
            || m.hidden < 1
            || m.lstm_layers < 1
        {
            return Err(Error::config(
                "model dimensions must all be at least 1".to_string(),
            ));
        }
        self.train
            .validate()
            .map_err(|e| Error::config(e.to_string()))?;
        if !(self.holdout.val_fraction > 0.0 && self.holdout.val_fraction < 1.0) {
            return Err(Error::config(format!(
                "holdout val_fraction must lie strictly between 0 and 1, got {}",
                self.holdout.val_fraction
            )));
        }
        match &self.protocol {
            Protocol::Holdout { val_fraction, .. } => {
                if !(*val_fraction > 0.0 && *val_fraction < 1.0) {
                    return Err(Error::config(format!(
                        "protocol val_fraction must lie strictly between 0 and 1, got {val_fraction}"
                    )));
                }
            }
            Protocol::Kfold { k } => {
                if *k < 2 {
                    return Err(Error::config(format!("kfold needs k >= 2, got {k}")));
                }
            }
            Protocol::Loso => {}
        }
        if self.search.budget < 1 {
            return Err(Error::config("search budget must be at least 1"));
        }
        self.search
            .space
            .validate()
            .map_err(|e| Error::config(e.to_string()))?;
        match &self.data {
            DataSource::Synthetic(s) => {
                if s.classes < 2
                    || s.subjects < 1
                    || s.channel_count < 1
                    || s.bouts_per_class < 1
                    || !(s.rate > 0.0)
                    || !(s.bout_seconds > 0.0)
                {
                    return Err(Error::config(
                        "synthetic source needs classes >= 2, subjects >= 1, \
                         channel_count >= 1, bouts_per_class >= 1, and positive \
                         rate and bout_seconds"
                            .to_string(),
                    ));
                }
            }
            DataSource::Dir { labels, .. } => {
                if let Some(names) = labels {
                    if names.len() < 2 {
                        return Err(Error::config("label list needs at least 2 entries"));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Read a config file. A `run_manifest.json` works too: its embedded config
/// is extracted, which is what makes reruns possible.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    let body = match (value.get("command"), value.get("config")) {
        (Some(_), Some(inner)) => inner.clone(),
        _ => value,
    };
    serde_json::from_value(body).map_err(|e| Error::config(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config: &'a RunConfig,
}

fn write_manifest(out: &Path, command: &str, cfg: &RunConfig) -> Result<()> {
    write_json(
        &out.join("run_manifest.json"),
        &Manifest {
            command,
            config: cfg,
        },
    )
}

fn load_data(cfg: &RunConfig) -> Result<(Vec<SensorRecording>, LabelMap)> {
    match &cfg.data {
        DataSource::Synthetic(spec) => {
            let label_map = LabelMap::synthetic(spec.classes)?;
            let recs = generate_synthetic(spec, cfg.seed)?;
            Ok((recs, label_map))
        }
        DataSource::Dir { path, labels } => {
            let label_map = match labels {
                Some(names) => LabelMap::new(names.clone())?,
                None => LabelMap::rwhar(),
            };
            let recs = load_directory(path, &label_map)?;
            Ok((recs, label_map))
        }
    }
}

/// Ingest, interpolate, resample, and window. Resolves an unset
/// `target_rate` to the pooled median rate so the manifest records what
/// actually ran.
fn prepare_windows(cfg: &mut RunConfig) -> Result<(WindowedDataset, LabelMap)> {
    let (recs, label_map) = load_data(cfg).map_err(|e| e.in_stage("ingest"))?;
    let recs: Vec<SensorRecording> = recs
        .iter()
        .map(interpolate_missing)
        .collect::<Result<_>>()
        .map_err(|e| e.in_stage("interpolate"))?;
    let rate = match cfg.preprocess.target_rate {
        Some(r) => r,
        None => {
            summarize(&recs, &label_map)
                .map_err(|e| e.in_stage("resample"))?
                .rate_hz
        }
    };
    cfg.preprocess.target_rate = Some(rate);
    let recs: Vec<SensorRecording> = recs
        .iter()
        .map(|r| resample(r, rate))
        .collect::<Result<_>>()
        .map_err(|e| e.in_stage("resample"))?;
    let w = cfg.preprocess.window_len(rate);
    let s = cfg.preprocess.stride(rate);
    let ds = sliding_windows(&recs, w, s, cfg.preprocess.labeling, &label_map)
        .map_err(|e| e.in_stage("window"))?;
    Ok((ds, label_map))
}

fn predict_all(model: &Model, ds: &WindowedDataset, batch_size: usize) -> Result<Vec<usize>> {
    let indices: Vec<usize> = (0..ds.len()).collect();
    let mut preds = Vec::with_capacity(ds.len());
    for chunk in indices.chunks(batch_size.max(1)) {
        preds.extend(model.predict(&batch_tensor(ds, chunk)?)?);
    }
    Ok(preds)
}

/// `summary.json` + `class_distribution.csv`: rates, channels, bouts, and
/// the label balance of the raw recordings.
pub fn cmd_summarize(cfg: &mut RunConfig, out: &Path) -> Result<()> {
    let (recs, label_map) = load_data(cfg).map_err(|e| e.in_stage("ingest"))?;
    let summary = summarize(&recs, &label_map).map_err(|e| e.in_stage("summarize"))?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_json(&out.join("summary.json"), &summary)?;
    let dist = class_distribution(&summary);
    let path = out.join("class_distribution.csv");
    let mut writer = csv::Writer::from_path(&path)
        .map_err(|e| Error::io(&path, std::io::Error::new(std::io::ErrorKind::Other, e)))?;
    writer.write_record(["label", "count"])?;
    for (name, count) in &dist {
        writer.write_record([name.as_str(), &count.to_string()])?;
    }
    writer.flush().map_err(|e| Error::io(&path, e))?;
    write_manifest(out, "summarize", cfg)
}

/// Train one model on a holdout split; save weights, history, and
/// validation metrics.
pub fn cmd_train(cfg: &mut RunConfig, out: &Path) -> Result<()> {
    let (ds, label_map) = prepare_windows(cfg)?;
    let split = split_train_val(
        &ds,
        cfg.holdout.val_fraction,
        cfg.seed,
        cfg.holdout.grouping,
    )
    .map_err(|e| e.in_stage("split"))?;
    let norm = fit_normalizer_windows(&ds, &split.train, cfg.preprocess.scheme)
        .map_err(|e| e.in_stage("normalize"))?;
    let normalized = apply_normalizer_windows(&ds, &norm).map_err(|e| e.in_stage("normalize"))?;
    let train_ds = normalized.select(&split.train);
    let val_ds = normalized.select(&split.test);
    let spec = cfg
        .model
        .to_spec(ds.channel_count(), ds.window_len, label_map.len(), cfg.seed);
    let model = build_model(&spec).map_err(|e| e.in_stage("model"))?;
    let history =
        train(&model, &train_ds, Some(&val_ds), &cfg.train).map_err(|e| e.in_stage("train"))?;
    let preds =
        predict_all(&model, &val_ds, cfg.train.batch_size).map_err(|e| e.in_stage("evaluate"))?;
    let cm = confusion_matrix(&val_ds.window_labels, &preds, &label_map)
        .map_err(|e| e.in_stage("evaluate"))?;
    let metrics = compute_metrics(&cm).map_err(|e| e.in_stage("evaluate"))?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    model.save_weights(&out.join("weights.csv"))?;
    write_json(&out.join("model_spec.json"), &spec)?;
    write_history_csv(&history, &out.join("history.csv"))?;
    write_json(&out.join("metrics.json"), &metrics)?;
    write_confusion_csv(&cm, &out.join("confusion.csv"))?;
    write_manifest(out, "train", cfg)
}

/// Cross-validate under the configured protocol; save the aggregate report
/// and per-fold histories and metrics.
pub fn cmd_crossval(cfg: &mut RunConfig, out: &Path) -> Result<()> {
    let (ds, label_map) = prepare_windows(cfg)?;
    let spec = cfg
        .model
        .to_spec(ds.channel_count(), ds.window_len, label_map.len(), cfg.seed);
    let report = run_cross_validation(
        &ds,
        cfg.preprocess.scheme,
        &spec,
        &cfg.train,
        &cfg.protocol,
        cfg.seed,
    )
    .map_err(|e| e.in_stage("crossval"))?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_json(&out.join("crossval_report.json"), &report)?;
    for fold in &report.folds {
        write_history_csv(
            &fold.history,
            &out.join(format!("fold_{}_history.csv", fold.id)),
        )?;
        write_json(
            &out.join(format!("fold_{}_metrics.json", fold.id)),
            &fold.metrics,
        )?;
    }
    write_manifest(out, "crossval", cfg)
}

/// Random hyperparameter search; save the trial log and the winning
/// configuration as a ready-to-run config file.
pub fn cmd_tune(cfg: &mut RunConfig, out: &Path) -> Result<()> {
    let (ds, label_map) = prepare_windows(cfg)?;
    let spec = cfg
        .model
        .to_spec(ds.channel_count(), ds.window_len, label_map.len(), cfg.seed);
    let report = random_search(
        &ds,
        cfg.preprocess.scheme,
        &spec,
        &cfg.train,
        &cfg.search.space,
        cfg.search.budget,
        cfg.holdout.val_fraction,
        cfg.holdout.grouping,
        cfg.seed,
    )
    .map_err(|e| e.in_stage("tune"))?;
    let winner = report.best_trial();
    let mut best_cfg = cfg.clone();
    best_cfg.model.filters = winner.spec.filters;
    best_cfg.model.hidden = winner.spec.hidden;
    best_cfg.train.lr = winner.cfg.lr;
    best_cfg.train.batch_size = winner.cfg.batch_size;
    best_cfg.train.label_smoothing = winner.cfg.label_smoothing;
    best_cfg.train.maxup_copies = winner.cfg.maxup_copies;
    best_cfg.train.seed = best_cfg.seed;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_json(&out.join("best_config.json"), &best_cfg)?;
    let path = out.join("trials.csv");
    let mut writer = csv::Writer::from_path(&path)
        .map_err(|e| Error::io(&path, std::io::Error::new(std::io::ErrorKind::Other, e)))?;
    writer.write_record([
        "trial",
        "lr",
        "batch_size",
        "label_smoothing",
        "maxup_copies",
        "filters",
        "hidden",
        "val_accuracy",
        "val_macro_f1",
        "best",
    ])?;
    for t in &report.trials {
        writer.write_record([
            t.index.to_string(),
            format!("{}", t.cfg.lr),
            t.cfg.batch_size.to_string(),
            format!("{}", t.cfg.label_smoothing),
            t.cfg.maxup_copies.to_string(),
            t.spec.filters.to_string(),
            t.spec.hidden.to_string(),
            format!("{}", t.val_accuracy),
            format!("{}", t.val_macro_f1),
            (t.index == report.best).to_string(),
        ])?;
    }
    writer.flush().map_err(|e| Error::io(&path, e))?;
    write_manifest(out, "tune", cfg)
}

#[derive(Parser)]
#[command(
    name = "har-chain",
    version,
    about = "Activity recognition pipeline for wearable inertial sensors"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Report dataset statistics: rate, channels, labels, bouts
    Summarize(RunArgs),
    /// Train one model on a holdout split; save weights and metrics
    Train(RunArgs),
    /// Cross-validate under the configured protocol
    Crossval(RunArgs),
    /// Random hyperparameter search scored on a holdout split
    Tune(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    /// JSON config file; omitted fields fall back to defaults
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for output artifacts
    #[arg(long)]
    out: Option<PathBuf>,
    /// Split protocol, overriding the config
    #[arg(long, value_enum)]
    protocol: Option<ProtocolArg>,
    /// Fold count; only valid with the kfold protocol
    #[arg(long)]
    k: Option<usize>,
    /// Use synthetic data regardless of the configured source
    #[arg(long)]
    synthetic: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProtocolArg {
    Holdout,
    Kfold,
    Loso,
}

fn resolve(args: &RunArgs, command: &str) -> Result<(RunConfig, PathBuf)> {
    let mut cfg = match &args.config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    if args.synthetic && !matches!(cfg.data, DataSource::Synthetic(_)) {
        cfg.data = DataSource::default();
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(p) = args.protocol {
        cfg.protocol = match p {
            ProtocolArg::Holdout => Protocol::Holdout {
                val_fraction: cfg.holdout.val_fraction,
                grouping: cfg.holdout.grouping,
            },
            ProtocolArg::Kfold => Protocol::Kfold {
                k: args.k.unwrap_or(match cfg.protocol {
                    Protocol::Kfold { k } => k,
                    _ => 5,
                }),
            },
            ProtocolArg::Loso => Protocol::Loso,
        };
    }
    if let Some(k) = args.k {
        match &mut cfg.protocol {
            Protocol::Kfold { k: slot } => *slot = k,
            _ => return Err(Error::config("--k only applies when the protocol is kfold")),
        }
    }
    let out = args
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("runs").join(command));
    cfg.out = None;
    cfg.train.seed = cfg.seed;
    cfg.validate()?;
    Ok((cfg, out))
}

/// Entry point for the binary: parse, dispatch, and map errors to exit
/// codes (2 for configuration problems, 1 for everything else).
pub fn run() -> i32 {
    match try_run() {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                2
            } else {
                1
            }
        }
    }
}

fn try_run() -> Result<()> {
    let cli = Cli::parse();
    let (name, args) = match &cli.command {
        Cmd::Summarize(a) => ("summarize", a),
        Cmd::Train(a) => ("train", a),
        Cmd::Crossval(a) => ("crossval", a),
        Cmd::Tune(a) => ("tune", a),
    };
    let (mut cfg, out) = resolve(args, name)?;
    match cli.command {
        Cmd::Summarize(_) => cmd_summarize(&mut cfg, &out),
        Cmd::Train(_) => cmd_train(&mut cfg, &out),
        Cmd::Crossval(_) => cmd_crossval(&mut cfg, &out),
        Cmd::Tune(_) => cmd_tune(&mut cfg, &out),
    }
}

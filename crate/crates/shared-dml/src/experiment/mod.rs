//! Experiment orchestration: configuration, the training loop, the ablation
//! grid, and the command-line interface.
//!
//! # Config file
//!
//! A versioned `key = value` text file; `#` starts a comment. Keys mirror
//! [`ExperimentConfig`]:
//!
//! ```text
//! version = 1
//! # dataset: "synthetic" or a path to a dataset CSV
//! dataset = synthetic
//! num_classes = 20
//! samples_per_class = 50
//! num_shared_factors = 4
//! ambient_dim = 24
//! class_signal_scale = 1.0
//! shared_signal_scale = 1.2
//! noise_scale = 0.25
//! data_seed = 1
//! # model
//! hidden = 32,32
//! feature_dim = 24
//! class_dim = 8
//! shared_dim = 8
//! regressor_hidden = 16
//! # objective
//! mode = both_sep_decor
//! loss = margin
//! alpha = 0.2
//! beta = 0.6
//! beta_learnable = true
//! gamma = 1.0
//! # sampling
//! negative_strategy = distance_weighted
//! shared_strategy = interclass
//! clamp_low = 0.5
//! weight_cap = 1e8
//! # training
//! epochs = 30
//! batch_size = 32
//! m_per_class = 4
//! learning_rate = 0.001
//! seeds = 1,2,3,4,5
//! # grouping (only used by group strategies)
//! num_groups = 10
//! regroup_every = 2
//! # evaluation
//! recall_ks = 1,2,4
//! representations = phi,phi_star,concat,f,phi_reinit
//! ```
//!
//! Every key has the default shown by [`ExperimentConfig::default`]; only
//! `version` is mandatory.

mod ablation;
mod cli;
mod train;

pub use ablation::{parse_ablation_csv, run_ablation, write_ablation_csv, AblationRow, Variant};
pub use cli::cli_main;
pub use train::{gap_probe, run_training, GapRow, TrainingRun};

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::dataset::SynthConfig;
use crate::error::{Error, Result};
use crate::evaluation::{MetricsReport, Representation, Split};
use crate::losses::{LossConfig, LossKind, TrainMode};
use crate::model::Dims;
use crate::sampling::SamplerConfig;

/// Where the experiment's data comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Synthetic(SynthConfig),
    Path(PathBuf),
}

/// Everything a training run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub hidden: Vec<usize>,
    pub feature_dim: usize,
    pub class_dim: usize,
    pub shared_dim: usize,
    pub regressor_hidden: usize,
    pub mode: TrainMode,
    pub loss: LossConfig,
    pub sampler: SamplerConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub m_per_class: usize,
    pub learning_rate: f64,
    /// Learning-rate multiplier for the correlation regressor.
    pub regressor_lr_scale: f64,
    pub seeds: Vec<u64>,
    /// Surrogate group count; defaults to the number of train classes.
    pub num_groups: Option<usize>,
    /// Re-group every E epochs when a group strategy is active.
    pub regroup_every: usize,
    pub recall_ks: Vec<usize>,
    pub representations: Vec<Representation>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetSource::Synthetic(SynthConfig::default()),
            hidden: vec![32],
            feature_dim: 24,
            class_dim: 8,
            shared_dim: 8,
            regressor_hidden: 16,
            mode: TrainMode::BothSepDecor,
            loss: LossConfig { gamma: 1.0, ..LossConfig::default() },
            sampler: SamplerConfig::default(),
            epochs: 30,
            batch_size: 32,
            m_per_class: 4,
            learning_rate: 1e-3,
            // The regressor adversary trains two orders slower than the
            // encoders; at the shared rate it dominates the heads.
            regressor_lr_scale: 0.01,
            seeds: vec![1, 2, 3, 4, 5],
            num_groups: None,
            regroup_every: 2,
            recall_ks: vec![1, 2, 4],
            // Per-epoch curves track the trained heads; the ablation table
            // and the gap probe evaluate every representation at the end.
            representations: vec![Representation::Phi, Representation::PhiStar, Representation::Concat],
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if let DatasetSource::Synthetic(cfg) = &self.dataset {
            cfg.validate()?;
        }
        self.loss.validate()?;
        self.sampler.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "must list at least one seed"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be >= 1"));
        }
        if self.m_per_class == 0 || self.batch_size < self.m_per_class {
            return Err(Error::config(
                "batch_size",
                format!("need b >= m >= 1, got b={}, m={}", self.batch_size, self.m_per_class),
            ));
        }
        if self.loss.gamma > 0.0 && !self.mode.decorrelates() {
            return Err(Error::config(
                "gamma",
                format!("gamma > 0 requires mode both_sep_decor, got {}", self.mode.name()),
            ));
        }
        if self.sampler.shared_strategy.uses_grouping() {
            if !self.mode.has_shared_phase() {
                return Err(Error::config(
                    "shared_strategy",
                    "group strategies need a mode with a shared phase",
                ));
            }
            if self.regroup_every == 0 {
                return Err(Error::config("regroup_every", "must be >= 1"));
            }
            if self.num_groups == Some(0) {
                return Err(Error::config("num_groups", "must be >= 1"));
            }
        }
        if self.recall_ks.is_empty() || self.recall_ks.contains(&0) {
            return Err(Error::config("recall_ks", "need at least one K >= 1"));
        }
        if !self.recall_ks.contains(&1) {
            return Err(Error::config("recall_ks", "must include K = 1 (used for checkpointing)"));
        }
        if self.representations.is_empty() {
            return Err(Error::config("representations", "must list at least one"));
        }
        Ok(())
    }

    pub fn dims(&self, ambient: usize) -> Dims {
        Dims {
            ambient,
            hidden: self.hidden.clone(),
            feature: self.feature_dim,
            class_dim: self.class_dim,
            shared_dim: self.shared_dim,
            regressor_hidden: self.regressor_hidden,
        }
    }

    /// The representation whose test Recall@1 drives best-checkpoint
    /// selection: the encoder each mode actually optimizes, the
    /// concatenation for dual-encoder modes.
    pub fn primary_representation(&self) -> Representation {
        match self.mode {
            TrainMode::DiscrOnly | TrainMode::BothSingle => Representation::Phi,
            TrainMode::SharedOnly => Representation::PhiStar,
            TrainMode::BothSep | TrainMode::BothSepDecor => Representation::Concat,
        }
    }
}

/// Per-epoch training record.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean discriminative-phase objective (includes the -gamma*r term).
    pub loss_discr: Option<f64>,
    /// Mean shared-phase objective.
    pub loss_inter: Option<f64>,
    /// Mean correlation r across steps where it was computed.
    pub correlation: Option<f64>,
    pub unique_classes_per_group: Option<f64>,
    /// Optimizer steps taken by each phase this epoch.
    pub discr_steps: usize,
    pub inter_steps: usize,
    pub reports: Vec<MetricsReport>,
}

/// Everything a run logs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsLog {
    pub epochs: Vec<EpochRecord>,
    /// Batches that could not produce triplets and were skipped.
    pub degenerate_steps: usize,
}

impl MetricsLog {
    /// Final-epoch report for a (split, representation) cell.
    pub fn final_report(&self, split: Split, representation: Representation) -> Option<&MetricsReport> {
        self.epochs
            .last()?
            .reports
            .iter()
            .find(|r| r.split == split && r.representation == representation)
    }
}

/// Flatten a log into the metrics CSV: `epoch,split,representation,metric,value`.
pub fn write_metrics_csv(log: &MetricsLog) -> String {
    let mut out = String::from("epoch,split,representation,metric,value\n");
    for rec in &log.epochs {
        let mut push = |split: &str, rep: &str, metric: &str, value: f64| {
            let _ = writeln!(out, "{},{},{},{},{}", rec.epoch, split, rep, metric, value);
        };
        if let Some(v) = rec.loss_discr {
            push("train", "-", "loss_discr", v);
        }
        if let Some(v) = rec.loss_inter {
            push("train", "-", "loss_inter", v);
        }
        if let Some(v) = rec.correlation {
            push("train", "-", "corr_r", v);
        }
        if let Some(v) = rec.unique_classes_per_group {
            push("train", "-", "unique_classes_per_group", v);
        }
        for report in &rec.reports {
            for (&k, &v) in &report.recall_at {
                push(report.split.name(), report.representation.name(), &format!("recall@{k}"), v);
            }
            push(report.split.name(), report.representation.name(), "nmi", report.nmi);
        }
    }
    out
}

/// One parsed metrics row: (epoch, split, representation, metric, value).
pub type MetricsRow = (usize, String, String, String, f64);

/// Parse the metrics CSV back into rows; used by round-trip tests and the
/// ablation reader.
pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "epoch,split,representation,metric,value")) => {}
        _ => return Err(Error::parse(1, "bad metrics header")),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 5 {
            return Err(Error::parse(i + 1, format!("expected 5 fields, got {}", parts.len())));
        }
        let epoch = parts[0].parse().map_err(|_| Error::parse(i + 1, "bad epoch"))?;
        let value = parts[4].parse().map_err(|_| Error::parse(i + 1, "bad value"))?;
        rows.push((epoch, parts[1].into(), parts[2].into(), parts[3].into(), value));
    }
    Ok(rows)
}

const CONFIG_VERSION: u64 = 1;

/// Parse the key = value config format described in the module docs.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    let mut synth = match &cfg.dataset {
        DatasetSource::Synthetic(s) => s.clone(),
        DatasetSource::Path(_) => unreachable!(),
    };
    let mut dataset_path: Option<PathBuf> = None;
    let mut saw_version = false;

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(lineno, format!("expected key = value, got {line:?}")))?;
        let key = key.trim();
        let value = value.trim();
        let bad = |what: &str| Error::parse(lineno, format!("bad {what} value {value:?}"));

        macro_rules! num {
            ($ty:ty, $what:expr) => {
                value.parse::<$ty>().map_err(|_| bad($what))?
            };
        }
        let list_u64 = |what: &str| -> Result<Vec<u64>> {
            value
                .split(',')
                .map(|s| s.trim().parse::<u64>().map_err(|_| bad(what)))
                .collect()
        };

        match key {
            "version" => {
                let v = num!(u64, "version");
                if v != CONFIG_VERSION {
                    return Err(Error::parse(
                        lineno,
                        format!("unsupported config version {v}, expected {CONFIG_VERSION}"),
                    ));
                }
                saw_version = true;
            }
            "dataset" => {
                if value == "synthetic" {
                    dataset_path = None;
                } else {
                    dataset_path = Some(PathBuf::from(value));
                }
            }
            "num_classes" => synth.num_classes = num!(usize, "num_classes"),
            "samples_per_class" => synth.samples_per_class = num!(usize, "samples_per_class"),
            "num_shared_factors" => synth.num_shared_factors = num!(usize, "num_shared_factors"),
            "ambient_dim" => synth.ambient_dim = num!(usize, "ambient_dim"),
            "class_signal_scale" => synth.class_signal_scale = num!(f64, "class_signal_scale"),
            "shared_signal_scale" => synth.shared_signal_scale = num!(f64, "shared_signal_scale"),
            "noise_scale" => synth.noise_scale = num!(f64, "noise_scale"),
            "data_seed" => synth.seed = num!(u64, "data_seed"),
            "hidden" => {
                cfg.hidden = if value.is_empty() {
                    Vec::new()
                } else {
                    value
                        .split(',')
                        .map(|s| s.trim().parse::<usize>().map_err(|_| bad("hidden")))
                        .collect::<Result<Vec<_>>>()?
                };
            }
            "feature_dim" => cfg.feature_dim = num!(usize, "feature_dim"),
            "class_dim" => cfg.class_dim = num!(usize, "class_dim"),
            "shared_dim" => cfg.shared_dim = num!(usize, "shared_dim"),
            "regressor_hidden" => cfg.regressor_hidden = num!(usize, "regressor_hidden"),
            "mode" => cfg.mode = TrainMode::parse(value).map_err(|_| bad("mode"))?,
            "loss" => {
                cfg.loss.kind = match value {
                    "triplet" => LossKind::Triplet,
                    "margin" => LossKind::Margin,
                    _ => return Err(bad("loss")),
                }
            }
            "alpha" => cfg.loss.alpha = num!(f64, "alpha"),
            "beta" => cfg.loss.beta = num!(f64, "beta"),
            "beta_learnable" => cfg.loss.beta_learnable = num!(bool, "beta_learnable"),
            "gamma" => cfg.loss.gamma = num!(f64, "gamma"),
            "negative_strategy" => {
                cfg.sampler.negative_strategy =
                    crate::sampling::NegativeStrategy::parse(value).map_err(|_| bad("negative_strategy"))?
            }
            "shared_strategy" => {
                cfg.sampler.shared_strategy =
                    crate::sampling::SharedStrategy::parse(value).map_err(|_| bad("shared_strategy"))?
            }
            "clamp_low" => cfg.sampler.clamp_low = num!(f64, "clamp_low"),
            "weight_cap" => cfg.sampler.weight_cap = num!(f64, "weight_cap"),
            "epochs" => cfg.epochs = num!(usize, "epochs"),
            "batch_size" => cfg.batch_size = num!(usize, "batch_size"),
            "m_per_class" => cfg.m_per_class = num!(usize, "m_per_class"),
            "learning_rate" => cfg.learning_rate = num!(f64, "learning_rate"),
            "regressor_lr_scale" => cfg.regressor_lr_scale = num!(f64, "regressor_lr_scale"),
            "seeds" => cfg.seeds = list_u64("seeds")?,
            "num_groups" => cfg.num_groups = Some(num!(usize, "num_groups")),
            "regroup_every" => cfg.regroup_every = num!(usize, "regroup_every"),
            "recall_ks" => {
                cfg.recall_ks = value
                    .split(',')
                    .map(|s| s.trim().parse::<usize>().map_err(|_| bad("recall_ks")))
                    .collect::<Result<Vec<_>>>()?
            }
            "representations" => {
                cfg.representations = value
                    .split(',')
                    .map(|s| Representation::parse(s.trim()).map_err(|_| bad("representations")))
                    .collect::<Result<Vec<_>>>()?
            }
            other => {
                return Err(Error::parse(lineno, format!("unknown config key {other:?}")));
            }
        }
    }

    if !saw_version {
        return Err(Error::parse(0, "config must declare `version = 1`"));
    }
    cfg.dataset = match dataset_path {
        Some(p) => DatasetSource::Path(p),
        None => DatasetSource::Synthetic(synth),
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Read and parse a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_config(&text)
}

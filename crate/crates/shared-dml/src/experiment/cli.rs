//! The `shared-dml` command-line interface.
//!
//! Subcommands: `generate` (write a synthetic dataset CSV), `train` (one
//! seeded run), `ablate` (a grid over one axis), `eval` (checkpoint + dataset
//! to metrics CSV), `gap` (train/test probe over every representation,
//! including the re-initialized head). All outputs are deterministic:
//! repeating a command with the same config and seed reproduces files byte
//! for byte.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::dataset::{generate_synthetic, load_dataset, save_dataset, split_by_class};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_representation, Representation, Split};
use crate::grouping::save_grouping;
use crate::losses::TrainMode;
use crate::model::{load_checkpoint, save_checkpoint};
use crate::parallel;
use crate::rng;
use crate::sampling::{NegativeStrategy, SharedStrategy};

use super::train::{gap_probe, run_training, write_gap_csv};
use super::{
    load_config, run_ablation, write_ablation_csv, write_metrics_csv, DatasetSource,
    EpochRecord, MetricsLog, Variant,
};

#[derive(Parser)]
#[command(
    name = "shared-dml",
    version,
    about = "Metric learning with shared characteristics: training, ablations, probes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the config's synthetic dataset to a CSV file.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model and write metrics plus checkpoints.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the first seed of the config's seed list.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for metrics.csv and checkpoints.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an ablation grid over one axis and write ablation.csv.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        /// One of: mode, shared_strategy, negative_strategy, gamma.
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values; each axis has a sensible default.
        #[arg(long)]
        values: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on a dataset CSV and write a metrics CSV.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Split tag recorded in the output rows: train or test.
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 4])]
        recall_ks: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generalization-gap probe: every representation on train and test.
    Gap {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Entry point shared by the binary and tests. Returns the process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version exit cleanly; anything else is a usage error.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    parallel::init_thread_pool();
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path.display().to_string(), e))
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Generate { config, out } => {
            let cfg = load_config(&config)?;
            let synth = match &cfg.dataset {
                DatasetSource::Synthetic(s) => s.clone(),
                DatasetSource::Path(p) => {
                    return Err(Error::config(
                        "dataset",
                        format!("config points at {}, nothing to generate", p.display()),
                    ));
                }
            };
            let ds = generate_synthetic(&synth)?;
            save_dataset(&ds, &out)?;
            println!("wrote {} samples to {}", ds.len(), out.display());
            Ok(())
        }
        Command::Train { config, seed, out } => {
            let cfg = load_config(&config)?;
            let seed = seed.unwrap_or(cfg.seeds[0]);
            let run = run_training(&cfg, seed)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(out.display().to_string(), e))?;
            write_file(&out.join("metrics.csv"), &write_metrics_csv(&run.log))?;
            save_checkpoint(&run.final_params, &out.join("checkpoint_final.ckpt"))?;
            save_checkpoint(&run.best_params, &out.join("checkpoint_best.ckpt"))?;
            if let Some(grouping) = &run.grouping {
                save_grouping(grouping, &out.join("grouping.csv"))?;
            }
            if let Some(msg) = run.diverged {
                return Err(Error::Divergence { tensor: msg });
            }
            println!(
                "trained {} epochs (seed {seed}); best test Recall@1 at epoch {}",
                run.log.epochs.len(),
                run.best_epoch
            );
            Ok(())
        }
        Command::Ablate { config, axis, values, out } => {
            let cfg = load_config(&config)?;
            let variants = parse_axis(&axis, values.as_deref())?;
            let rows = run_ablation(&cfg, &variants)?;
            write_file(&out, &write_ablation_csv(&rows))?;
            println!("wrote {} ablation rows to {}", rows.len(), out.display());
            Ok(())
        }
        Command::Eval { checkpoint, dataset, split, recall_ks, seed, out } => {
            let params = load_checkpoint(&checkpoint)?;
            let ds = load_dataset(&dataset)?;
            let split = match split.as_str() {
                "train" => Split::Train,
                "test" => Split::Test,
                other => {
                    return Err(Error::config("split", format!("expected train or test, got {other:?}")))
                }
            };
            let eval_seed = rng::derive_seed(seed, rng::stream::EVAL);
            let mut record = EpochRecord {
                epoch: 0,
                loss_discr: None,
                loss_inter: None,
                correlation: None,
                unique_classes_per_group: None,
                discr_steps: 0,
                inter_steps: 0,
                reports: Vec::new(),
            };
            for rep in Representation::ALL {
                record.reports.push(evaluate_representation(
                    &params, &ds, split, rep, 0, &recall_ks, eval_seed,
                )?);
            }
            let log = MetricsLog { epochs: vec![record], degenerate_steps: 0 };
            write_file(&out, &write_metrics_csv(&log))?;
            println!("wrote metrics for {} samples to {}", ds.len(), out.display());
            Ok(())
        }
        Command::Gap { config, checkpoint, seed, out } => {
            let cfg = load_config(&config)?;
            let seed = seed.unwrap_or(cfg.seeds[0]);
            let params = load_checkpoint(&checkpoint)?;
            let full = match &cfg.dataset {
                DatasetSource::Synthetic(s) => generate_synthetic(s)?,
                DatasetSource::Path(p) => load_dataset(p)?,
            };
            let (train, test) = split_by_class(&full)?;
            let rows = gap_probe(&params, &train, &test, rng::derive_seed(seed, rng::stream::REINIT))?;
            write_file(&out, &write_gap_csv(&rows))?;
            println!("wrote gap probe ({} representations) to {}", rows.len(), out.display());
            Ok(())
        }
    }
}

fn parse_axis(axis: &str, values: Option<&str>) -> Result<Vec<Variant>> {
    let items = |defaults: &str| -> Vec<String> {
        values
            .unwrap_or(defaults)
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect()
    };
    match axis {
        "mode" => items("discr_only,shared_only,both_single,both_sep,both_sep_decor")
            .iter()
            .map(|s| TrainMode::parse(s).map(Variant::Mode))
            .collect(),
        "shared_strategy" => items("interclass,interclass_minap,unconstrained,group,group_std")
            .iter()
            .map(|s| SharedStrategy::parse(s).map(Variant::SharedStrategy))
            .collect(),
        "negative_strategy" => items("random,semihard,distance_weighted")
            .iter()
            .map(|s| NegativeStrategy::parse(s).map(Variant::NegativeStrategy))
            .collect(),
        "gamma" => items("0,0.3,1,300")
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map(Variant::Gamma)
                    .map_err(|_| Error::config("values", format!("bad gamma {s:?}")))
            })
            .collect(),
        other => Err(Error::config(
            "axis",
            format!("unknown axis {other:?}; expected mode, shared_strategy, negative_strategy or gamma"),
        )),
    }
}

//! Seeded ablation grids: run every variant over every seed, aggregate test
//! metrics per representation.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::evaluation::{Representation, Split};
use crate::losses::TrainMode;
use crate::parallel;
use crate::sampling::{NegativeStrategy, SharedStrategy};

use super::train::run_training;
use super::ExperimentConfig;

/// One cell of an ablation axis.
#[derive(Debug, Clone, PartialEq)]
pub enum Variant {
    Mode(TrainMode),
    SharedStrategy(SharedStrategy),
    NegativeStrategy(NegativeStrategy),
    Gamma(f64),
}

impl Variant {
    pub fn label(&self) -> String {
        match self {
            Variant::Mode(m) => m.name().to_string(),
            Variant::SharedStrategy(s) => s.name().to_string(),
            Variant::NegativeStrategy(s) => s.name().to_string(),
            Variant::Gamma(g) => format!("gamma={g}"),
        }
    }

    /// Derive the variant's config from a base config.
    pub fn apply(&self, base: &ExperimentConfig) -> ExperimentConfig {
        let mut cfg = base.clone();
        match self {
            Variant::Mode(m) => {
                cfg.mode = *m;
                if !m.decorrelates() {
                    cfg.loss.gamma = 0.0;
                }
            }
            Variant::SharedStrategy(s) => cfg.sampler.shared_strategy = *s,
            Variant::NegativeStrategy(s) => cfg.sampler.negative_strategy = *s,
            Variant::Gamma(g) => {
                cfg.mode = TrainMode::BothSepDecor;
                cfg.loss.gamma = *g;
            }
        }
        cfg
    }
}

/// Aggregated result for one (variant, representation) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub variant: String,
    pub representation: Representation,
    pub recall1_mean: f64,
    pub recall1_std: f64,
    pub nmi_mean: f64,
    pub nmi_std: f64,
    pub seeds: usize,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Run every variant over all configured seeds and aggregate final-epoch test
/// Recall@1 and NMI per representation. Runs execute in parallel with fully
/// isolated state; the table order is deterministic.
pub fn run_ablation(base: &ExperimentConfig, variants: &[Variant]) -> Result<Vec<AblationRow>> {
    if variants.len() < 2 {
        return Err(Error::config("variants", "an ablation needs at least 2 variants"));
    }
    base.validate()?;
    parallel::init_thread_pool();

    let jobs: Vec<(usize, u64)> = variants
        .iter()
        .enumerate()
        .flat_map(|(vi, _)| base.seeds.iter().map(move |&s| (vi, s)))
        .collect();
    // Final test metrics per representation, computed once per run.
    type Cell = Vec<(Representation, f64, f64)>;
    let runs: Vec<Result<(usize, Cell)>> = jobs
        .par_iter()
        .map(|&(vi, seed)| {
            let cfg = variants[vi].apply(base);
            cfg.validate()?;
            let run = run_training(&cfg, seed)?;
            if let Some(msg) = &run.diverged {
                return Err(Error::Divergence {
                    tensor: format!("variant {} seed {seed}: {msg}", variants[vi].label()),
                });
            }
            let eval_seed = crate::rng::derive_seed(seed, crate::rng::stream::EVAL);
            let mut cell = Vec::new();
            for rep in Representation::ALL {
                let report = crate::evaluation::evaluate_representation(
                    &run.final_params,
                    &run.test,
                    Split::Test,
                    rep,
                    cfg.epochs,
                    &[1],
                    eval_seed,
                )?;
                cell.push((rep, report.recall_at[&1], report.nmi));
            }
            Ok((vi, cell))
        })
        .collect();

    let mut by_variant: Vec<Vec<Cell>> = (0..variants.len()).map(|_| Vec::new()).collect();
    for item in runs {
        let (vi, cell) = item?;
        by_variant[vi].push(cell);
    }

    let mut rows = Vec::new();
    for (vi, variant) in variants.iter().enumerate() {
        for (ri, rep) in Representation::ALL.into_iter().enumerate() {
            let recalls: Vec<f64> = by_variant[vi].iter().map(|c| c[ri].1).collect();
            let nmis: Vec<f64> = by_variant[vi].iter().map(|c| c[ri].2).collect();
            let (recall1_mean, recall1_std) = mean_std(&recalls);
            let (nmi_mean, nmi_std) = mean_std(&nmis);
            rows.push(AblationRow {
                variant: variant.label(),
                representation: rep,
                recall1_mean,
                recall1_std,
                nmi_mean,
                nmi_std,
                seeds: recalls.len(),
            });
        }
    }
    Ok(rows)
}

/// Serialize an ablation table.
pub fn write_ablation_csv(rows: &[AblationRow]) -> String {
    let mut out =
        String::from("variant,representation,recall1_mean,recall1_std,nmi_mean,nmi_std,seeds\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.variant,
            r.representation.name(),
            r.recall1_mean,
            r.recall1_std,
            r.nmi_mean,
            r.nmi_std,
            r.seeds
        );
    }
    out
}

/// Parse a table written by [`write_ablation_csv`]; exact round trip.
pub fn parse_ablation_csv(text: &str) -> Result<Vec<AblationRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "variant,representation,recall1_mean,recall1_std,nmi_mean,nmi_std,seeds")) => {}
        _ => return Err(Error::parse(1, "bad ablation header")),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 7 {
            return Err(Error::parse(i + 1, format!("expected 7 fields, got {}", parts.len())));
        }
        let f = |s: &str| s.parse::<f64>().map_err(|_| Error::parse(i + 1, "bad float"));
        rows.push(AblationRow {
            variant: parts[0].to_string(),
            representation: Representation::parse(parts[1])
                .map_err(|_| Error::parse(i + 1, "bad representation"))?,
            recall1_mean: f(parts[2])?,
            recall1_std: f(parts[3])?,
            nmi_mean: f(parts[4])?,
            nmi_std: f(parts[5])?,
            seeds: parts[6].parse().map_err(|_| Error::parse(i + 1, "bad seed count"))?,
        });
    }
    Ok(rows)
}

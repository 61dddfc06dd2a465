//! The two-phase training loop.
//!
//! Each step draws a batch, samples discriminative triplets and takes an
//! optimizer step, then draws a second batch, samples shared-characteristics
//! triplets and steps again. Dual-encoder modes additionally carry the
//! gradient-reversed correlation term in both phases, recomputed on each
//! phase's own batch. Degenerate batches (no valid triplet) are counted and
//! skipped so long seeded runs stay alive.

use std::fmt::Write as _;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::{generate_synthetic, load_dataset, split_by_class, Dataset};
use crate::error::{Error, Result};
use crate::evaluation::{
    self, evaluate_representation, recall_at_k, Representation, Split,
};
use crate::grouping::{recompute_groups, unique_classes_per_group, Grouping};
use crate::losses::LossKind;
use crate::model::{
    backward, forward_step, init_params, optimizer_step, AdamHyper, Head, ModelParams,
    OptimizerState, StepSpec, TapeTriplet,
};
use crate::rng;
use crate::sampling::{
    build_batch, sample_discriminative_triplets, sample_group_triplets,
    sample_interclass_triplets, Batch, TripletSet,
};

use super::{DatasetSource, EpochRecord, ExperimentConfig, MetricsLog};

/// The outcome of one training run.
#[derive(Debug, Clone)]
pub struct TrainingRun {
    /// Parameters after the last completed epoch.
    pub final_params: ModelParams,
    /// Parameters at the epoch with the best test Recall@1 of the primary
    /// representation.
    pub best_params: ModelParams,
    pub best_epoch: usize,
    pub log: MetricsLog,
    /// Set when training aborted on a non-finite loss; `final_params` then
    /// holds the last epoch-end snapshot.
    pub diverged: Option<String>,
    pub train: Dataset,
    pub test: Dataset,
    /// The active surrogate grouping at the end of the run, when a group
    /// strategy was configured.
    pub grouping: Option<Grouping>,
}

enum Phase {
    Discriminative,
    Shared,
}

struct PhaseResult {
    scalar: f64,
    correlation: Option<f64>,
}

fn resolve_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    match &cfg.dataset {
        DatasetSource::Synthetic(synth) => generate_synthetic(synth),
        DatasetSource::Path(path) => load_dataset(path),
    }
}

fn batch_embeddings(
    params: &ModelParams,
    train: &Dataset,
    batch: &Batch,
    head: Head,
) -> Result<Vec<Vec<f64>>> {
    batch
        .sample_indices
        .iter()
        .map(|&i| params.embed_input(&train.samples[i].features, head))
        .collect()
}

/// Translate sampled triplets (dataset indices) into tape positions over the
/// batch's unique samples.
fn tape_inputs(
    train: &Dataset,
    triplets: &[crate::sampling::Triplet],
) -> (Vec<Vec<f64>>, Vec<TapeTriplet>) {
    let mut position: std::collections::HashMap<usize, usize> = std::collections::HashMap::new();
    let mut inputs = Vec::new();
    let mut resolve = |idx: usize, inputs: &mut Vec<Vec<f64>>| -> usize {
        *position.entry(idx).or_insert_with(|| {
            inputs.push(train.samples[idx].features.clone());
            inputs.len() - 1
        })
    };
    let mut tape_triplets = Vec::with_capacity(triplets.len());
    for t in triplets {
        let anchor = resolve(t.anchor, &mut inputs);
        let positive = resolve(t.positive, &mut inputs);
        let negative = resolve(t.negative, &mut inputs);
        tape_triplets.push(TapeTriplet { anchor, positive, negative });
    }
    (inputs, tape_triplets)
}

#[allow(clippy::too_many_arguments)]
fn run_phase(
    phase: Phase,
    cfg: &ExperimentConfig,
    params: &mut ModelParams,
    state: &mut OptimizerState,
    train: &Dataset,
    labels: &[usize],
    grouping: Option<&Grouping>,
    rng: &mut ChaCha8Rng,
) -> Result<Option<PhaseResult>> {
    let batch = build_batch(train, cfg.batch_size, cfg.m_per_class, rng)?;
    let ranking_head = match phase {
        Phase::Discriminative => Head::Class,
        Phase::Shared => {
            if cfg.mode.separate_encoders() {
                Head::Shared
            } else {
                Head::Class
            }
        }
    };
    let embeddings = batch_embeddings(params, train, &batch, ranking_head)?;

    let sampled: TripletSet = match phase {
        Phase::Discriminative => {
            sample_discriminative_triplets(&batch, labels, &embeddings, &cfg.sampler, rng)?
        }
        Phase::Shared => {
            if cfg.sampler.shared_strategy.uses_grouping() {
                let grouping = grouping
                    .ok_or_else(|| Error::Internal("group strategy without a grouping".into()))?;
                sample_group_triplets(&batch, &grouping.assignment, &embeddings, &cfg.sampler, rng)?
            } else {
                match sample_interclass_triplets(&batch, labels, &embeddings, &cfg.sampler, rng) {
                    Ok(set) => set,
                    // A batch without enough classes is skipped, not fatal.
                    Err(Error::Sampling(_)) => {
                        return Ok(None);
                    }
                    Err(other) => return Err(other),
                }
            }
        }
    };
    if sampled.degenerate || sampled.triplets.is_empty() {
        return Ok(None);
    }

    let (inputs, triplets) = tape_inputs(train, &sampled.triplets);
    let compute_correlation = cfg.mode.separate_encoders() && cfg.mode.has_discr_phase();
    let spec = StepSpec {
        inputs: &inputs,
        triplets: &triplets,
        ranking_head,
        kind: cfg.loss.kind,
        alpha: cfg.loss.alpha,
        beta_learnable: cfg.loss.kind == LossKind::Margin && cfg.loss.beta_learnable,
        gamma: cfg.loss.gamma,
        compute_correlation,
        reversal: true,
        decor_samples: None,
    };
    let tape = forward_step(params, &spec)?;
    if !tape.scalar.is_finite() {
        return Err(Error::Divergence { tensor: "loss".into() });
    }
    let grads = backward(params, &tape)?;
    optimizer_step(params, &grads, state)?;
    Ok(Some(PhaseResult { scalar: tape.scalar, correlation: tape.correlation_mean }))
}

/// Train one model from one seed. Deterministic: identical `(cfg, seed)`
/// yield identical runs.
pub fn run_training(cfg: &ExperimentConfig, seed: u64) -> Result<TrainingRun> {
    cfg.validate()?;
    let full = resolve_dataset(cfg)?;
    let (train, test) = split_by_class(&full)?;
    let labels = train.labels();
    let train_classes = train.present_classes().len();

    // Fast-fail configs whose batches cannot satisfy the shared strategy.
    if cfg.mode.has_shared_phase() {
        let classes_per_batch = cfg.batch_size.div_ceil(cfg.m_per_class).min(train_classes);
        match cfg.sampler.shared_strategy {
            crate::sampling::SharedStrategy::Interclass
            | crate::sampling::SharedStrategy::InterclassMinap => {
                if classes_per_batch < 3 {
                    return Err(Error::config(
                        "batch_size",
                        format!(
                            "inter-class triplets need >= 3 classes per batch; \
                             b={}, m={} over {train_classes} train classes gives {classes_per_batch}",
                            cfg.batch_size, cfg.m_per_class
                        ),
                    ));
                }
            }
            crate::sampling::SharedStrategy::Unconstrained
                if cfg.batch_size < 3 => {
                    return Err(Error::config("batch_size", "unconstrained triplets need b >= 3"));
                }
            _ => {}
        }
    }
    for &k in &cfg.recall_ks {
        if k >= train.len().min(test.len()) {
            return Err(Error::config(
                "recall_ks",
                format!("k={k} too large for splits of {} / {}", train.len(), test.len()),
            ));
        }
    }

    let dims = cfg.dims(full.ambient_dim);
    let mut params = init_params(&dims, seed)?;
    params.margin_beta = cfg.loss.beta;
    let mut state = OptimizerState::new(
        &params,
        AdamHyper {
            regressor_lr_scale: cfg.regressor_lr_scale,
            ..AdamHyper::with_learning_rate(cfg.learning_rate)
        },
    );

    let mut train_rng = rng::seeded(seed, rng::stream::TRAIN);
    let mut grouping_rng = rng::seeded(seed, rng::stream::GROUPING);
    let eval_seed = rng::derive_seed(seed, rng::stream::EVAL);

    let grouping_active = cfg.sampler.shared_strategy.uses_grouping();
    let num_groups = cfg.num_groups.unwrap_or(train_classes);
    let use_std =
        cfg.sampler.shared_strategy == crate::sampling::SharedStrategy::GroupStd;
    let mut grouping: Option<Grouping> = None;

    let steps_per_phase = train.len().div_ceil(cfg.batch_size);
    let mut log = MetricsLog::default();
    let mut snapshot = params.clone();
    let mut best_params = params.clone();
    let mut best_epoch = 0usize;
    let mut best_recall = f64::NEG_INFINITY;
    let primary = cfg.primary_representation();

    for epoch in 1..=cfg.epochs {
        if grouping_active && (epoch - 1) % cfg.regroup_every == 0 {
            grouping =
                Some(recompute_groups(&params, &train, num_groups, use_std, &mut grouping_rng)?);
        }

        let mut discr = (0.0, 0usize);
        let mut inter = (0.0, 0usize);
        let mut corr = (0.0, 0usize);
        for _ in 0..steps_per_phase {
            for phase in [Phase::Discriminative, Phase::Shared] {
                let active = match phase {
                    Phase::Discriminative => cfg.mode.has_discr_phase(),
                    Phase::Shared => cfg.mode.has_shared_phase(),
                };
                if !active {
                    continue;
                }
                let acc = match phase {
                    Phase::Discriminative => &mut discr,
                    Phase::Shared => &mut inter,
                };
                match run_phase(
                    phase,
                    cfg,
                    &mut params,
                    &mut state,
                    &train,
                    &labels,
                    grouping.as_ref(),
                    &mut train_rng,
                ) {
                    Ok(Some(result)) => {
                        acc.0 += result.scalar;
                        acc.1 += 1;
                        if let Some(r) = result.correlation {
                            corr.0 += r;
                            corr.1 += 1;
                        }
                    }
                    Ok(None) => {
                        log.degenerate_steps += 1;
                        eprintln!("warning: degenerate batch skipped (epoch {epoch})");
                    }
                    Err(Error::Divergence { tensor }) => {
                        let mut message = String::new();
                        let _ = write!(
                            message,
                            "non-finite values in `{tensor}` at epoch {epoch}; last checkpoint is epoch {}",
                            epoch - 1
                        );
                        return Ok(TrainingRun {
                            final_params: snapshot.clone(),
                            best_params,
                            best_epoch,
                            log,
                            diverged: Some(message),
                            train,
                            test,
                            grouping,
                        });
                    }
                    Err(other) => return Err(other),
                }
            }
        }

        let mean = |acc: (f64, usize)| if acc.1 > 0 { Some(acc.0 / acc.1 as f64) } else { None };
        let mut record = EpochRecord {
            epoch,
            loss_discr: if cfg.mode.has_discr_phase() { mean(discr) } else { None },
            loss_inter: if cfg.mode.has_shared_phase() { mean(inter) } else { None },
            correlation: mean(corr),
            unique_classes_per_group: match &grouping {
                Some(g) => Some(unique_classes_per_group(g, &labels)?),
                None => None,
            },
            discr_steps: discr.1,
            inter_steps: inter.1,
            reports: Vec::new(),
        };
        let cells: Vec<(Split, &Dataset, Representation)> = [(Split::Train, &train), (Split::Test, &test)]
            .into_iter()
            .flat_map(|(split, ds)| cfg.representations.iter().map(move |&rep| (split, ds, rep)))
            .collect();
        let reports: Vec<crate::error::Result<_>> = cells
            .par_iter()
            .map(|&(split, ds, rep)| {
                evaluate_representation(&params, ds, split, rep, epoch, &cfg.recall_ks, eval_seed)
            })
            .collect();
        for report in reports {
            record.reports.push(report?);
        }
        let primary_recall = record
            .reports
            .iter()
            .find(|r| r.split == Split::Test && r.representation == primary)
            .or_else(|| record.reports.iter().find(|r| r.split == Split::Test))
            .and_then(|r| r.recall_at.get(&1).copied());
        if let Some(r1) = primary_recall {
            if r1 > best_recall {
                best_recall = r1;
                best_params = params.clone();
                best_epoch = epoch;
            }
        }
        log.epochs.push(record);
        snapshot = params.clone();
    }

    Ok(TrainingRun {
        final_params: params,
        best_params,
        best_epoch,
        log,
        diverged: None,
        train,
        test,
        grouping,
    })
}

/// One row of the generalization-gap probe.
#[derive(Debug, Clone, PartialEq)]
pub struct GapRow {
    pub representation: Representation,
    pub train_recall1: f64,
    pub test_recall1: f64,
    pub gap: f64,
}

/// Evaluate Recall@1 of every representation on both splits and report the
/// test-minus-train gap, including the re-initialized class head probe.
pub fn gap_probe(
    params: &ModelParams,
    train: &Dataset,
    test: &Dataset,
    reinit_seed: u64,
) -> Result<Vec<GapRow>> {
    let mut rows = Vec::new();
    for rep in Representation::ALL {
        let r1 = |ds: &Dataset| -> Result<f64> {
            let embs = evaluation::embed_dataset(params, ds, rep, reinit_seed)?;
            recall_at_k(&embs, &ds.labels(), 1)
        };
        let train_recall1 = r1(train)?;
        let test_recall1 = r1(test)?;
        rows.push(GapRow {
            representation: rep,
            train_recall1,
            test_recall1,
            gap: evaluation::generalization_gap(train_recall1, test_recall1),
        });
    }
    Ok(rows)
}

/// Gap probe CSV: one row per (representation, split), where the synthetic
/// `gap` split carries test minus train.
pub fn write_gap_csv(rows: &[GapRow]) -> String {
    let mut out = String::from("representation,split,value\n");
    for row in rows {
        let _ = writeln!(out, "{},train,{}", row.representation.name(), row.train_recall1);
        let _ = writeln!(out, "{},test,{}", row.representation.name(), row.test_recall1);
        let _ = writeln!(out, "{},gap,{}", row.representation.name(), row.gap);
    }
    out
}

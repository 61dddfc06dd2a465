//! Forward pass with cached intermediates for one training step.
//!
//! A [`StepTape`] records everything the backward pass needs: per-sample
//! feature-extractor activations, head outputs before and after
//! normalization, and regressor intermediates when the correlation term is
//! active. The step scalar follows the combined objective; the gradient
//! reversal on the correlation term is applied in [`super::backward`], never
//! by negating forward values.

use crate::error::{Error, Result};
use crate::losses::{self, LossKind, LossTerms};

use super::{Head, ModelParams};

/// A triplet of positions into the step's input list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TapeTriplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

/// Everything defining one forward step.
#[derive(Debug, Clone)]
pub struct StepSpec<'a> {
    /// Unique sample feature vectors used this step.
    pub inputs: &'a [Vec<f64>],
    /// Ranking triplets over positions in `inputs`.
    pub triplets: &'a [TapeTriplet],
    /// Which head the ranking loss is computed on.
    pub ranking_head: Head,
    pub kind: LossKind,
    pub alpha: f64,
    pub beta_learnable: bool,
    /// Decorrelation weight; the correlation term is recorded whenever
    /// `compute_correlation` is set, even at gamma = 0.
    pub gamma: f64,
    pub compute_correlation: bool,
    /// Gradient reversal on the embedding side of the correlation term.
    pub reversal: bool,
    /// Positions entering the batch correlation mean; `None` derives the
    /// unique triplet constituents.
    pub decor_samples: Option<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub(super) struct HeadCache {
    pub norm: f64,
    pub embedding: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(super) struct RegressorCache {
    pub hidden_pre: Vec<f64>,
    pub hidden_act: Vec<f64>,
    pub output: Vec<f64>,
}

/// Recorded forward pass for one loss term.
#[derive(Debug, Clone)]
pub struct StepTape {
    pub(super) inputs: Vec<Vec<f64>>,
    /// Per sample, per feature layer: pre-activations.
    pub(super) f_pre: Vec<Vec<Vec<f64>>>,
    /// Per sample, per feature layer: activations (rectified except the last).
    pub(super) f_act: Vec<Vec<Vec<f64>>>,
    pub(super) class_head: Option<Vec<HeadCache>>,
    pub(super) shared_head: Option<Vec<HeadCache>>,
    pub(super) regressor: Option<Vec<RegressorCache>>,
    pub(super) triplets: Vec<TapeTriplet>,
    pub(super) ranking_head: Head,
    pub(super) kind: LossKind,
    pub(super) alpha: f64,
    /// Margin boundary snapshot taken from the params at forward time.
    pub(super) beta: f64,
    pub(super) beta_learnable: bool,
    pub(super) gamma: f64,
    pub(super) reversal: bool,
    pub(super) decor_samples: Vec<usize>,
    /// Mean ranking loss over the step's triplets.
    pub rank_mean: f64,
    /// Mean correlation r over the decorrelation samples, when computed.
    pub correlation_mean: Option<f64>,
    /// The step objective: `rank_mean - gamma * correlation_mean`.
    pub scalar: f64,
}

impl StepTape {
    /// Scalar loss terms for logging.
    pub fn terms(&self) -> LossTerms {
        let rank = Some(self.rank_mean);
        LossTerms {
            rank_class: if self.ranking_head == Head::Class { rank } else { None },
            rank_shared: if self.ranking_head == Head::Shared { rank } else { None },
            correlation: self.correlation_mean,
        }
    }

    pub(super) fn head_cache(&self, head: Head) -> Option<&Vec<HeadCache>> {
        match head {
            Head::Class => self.class_head.as_ref(),
            Head::Shared => self.shared_head.as_ref(),
        }
    }
}

fn embed_with_cache(params: &ModelParams, f_vec: &[f64], head: Head) -> Result<HeadCache> {
    let layer = match head {
        Head::Class => &params.phi,
        Head::Shared => &params.phi_star,
    };
    let pre_norm = layer.forward(f_vec)?;
    let norm = pre_norm.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::DegenerateEmbedding);
    }
    let embedding = pre_norm.iter().map(|v| v / norm).collect();
    Ok(HeadCache { norm, embedding })
}

/// Run the forward pass for one step and record the tape.
pub fn forward_step(params: &ModelParams, spec: &StepSpec) -> Result<StepTape> {
    if spec.inputs.is_empty() {
        return Err(Error::Internal("forward_step needs at least one input".into()));
    }
    for (t, trip) in spec.triplets.iter().enumerate() {
        for pos in [trip.anchor, trip.positive, trip.negative] {
            if pos >= spec.inputs.len() {
                return Err(Error::Internal(format!(
                    "triplet {t} references input {pos}, but only {} inputs",
                    spec.inputs.len()
                )));
            }
        }
    }

    // Feature extractor with caches.
    let last = params.f_layers.len() - 1;
    let mut f_pre = Vec::with_capacity(spec.inputs.len());
    let mut f_act = Vec::with_capacity(spec.inputs.len());
    for x in spec.inputs {
        let mut pres = Vec::with_capacity(params.f_layers.len());
        let mut acts = Vec::with_capacity(params.f_layers.len());
        let mut a = x.clone();
        for (l, layer) in params.f_layers.iter().enumerate() {
            let z = layer.forward(&a)?;
            pres.push(z.clone());
            let mut act = z;
            if l < last {
                for v in act.iter_mut() {
                    *v = v.max(0.0);
                }
            }
            acts.push(act.clone());
            a = act;
        }
        f_pre.push(pres);
        f_act.push(acts);
    }
    let f_vecs: Vec<&Vec<f64>> = f_act.iter().map(|acts| acts.last().unwrap()).collect();

    // Head embeddings: the ranking head always, both plus the regressor when
    // the correlation term is active.
    let need_class = spec.ranking_head == Head::Class || spec.compute_correlation;
    let need_shared = spec.ranking_head == Head::Shared || spec.compute_correlation;
    let class_head = if need_class {
        Some(
            f_vecs
                .iter()
                .map(|f| embed_with_cache(params, f, Head::Class))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    let shared_head = if need_shared {
        Some(
            f_vecs
                .iter()
                .map(|f| embed_with_cache(params, f, Head::Shared))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };

    // Ranking term: mean over triplets.
    let rank_embs = match spec.ranking_head {
        Head::Class => class_head.as_ref().unwrap(),
        Head::Shared => shared_head.as_ref().unwrap(),
    };
    let mut rank_sum = 0.0;
    for trip in spec.triplets {
        let e_a = &rank_embs[trip.anchor].embedding;
        let e_p = &rank_embs[trip.positive].embedding;
        let e_n = &rank_embs[trip.negative].embedding;
        rank_sum += match spec.kind {
            LossKind::Triplet => losses::triplet_loss(e_a, e_p, e_n, spec.alpha)?,
            LossKind::Margin => {
                losses::margin_loss(e_a, e_p, e_n, spec.alpha, params.margin_beta)?
            }
        };
    }
    let rank_mean =
        if spec.triplets.is_empty() { 0.0 } else { rank_sum / spec.triplets.len() as f64 };

    // Correlation term over the step's embedded constituents.
    let decor_samples = if spec.compute_correlation {
        match &spec.decor_samples {
            Some(list) => {
                for &pos in list {
                    if pos >= spec.inputs.len() {
                        return Err(Error::Internal(format!(
                            "decor sample {pos} out of range ({} inputs)",
                            spec.inputs.len()
                        )));
                    }
                }
                list.clone()
            }
            None => {
                let mut set: Vec<usize> = spec
                    .triplets
                    .iter()
                    .flat_map(|t| [t.anchor, t.positive, t.negative])
                    .collect();
                set.sort_unstable();
                set.dedup();
                set
            }
        }
    } else {
        Vec::new()
    };

    let (regressor, correlation_mean) = if spec.compute_correlation && !decor_samples.is_empty() {
        let shared = shared_head.as_ref().unwrap();
        let class = class_head.as_ref().unwrap();
        let mut caches = Vec::with_capacity(decor_samples.len());
        let mut r_sum = 0.0;
        for &i in &decor_samples {
            let hidden_pre = params.p1.forward(&shared[i].embedding)?;
            let hidden_act: Vec<f64> = hidden_pre.iter().map(|v| v.max(0.0)).collect();
            let output = params.p2.forward(&hidden_act)?;
            r_sum += losses::correlation(&class[i].embedding, &output)?;
            caches.push(RegressorCache { hidden_pre, hidden_act, output });
        }
        (Some(caches), Some(r_sum / decor_samples.len() as f64))
    } else if spec.compute_correlation {
        (None, Some(0.0))
    } else {
        (None, None)
    };

    let scalar = rank_mean - spec.gamma * correlation_mean.unwrap_or(0.0);

    Ok(StepTape {
        inputs: spec.inputs.to_vec(),
        f_pre,
        f_act,
        class_head,
        shared_head,
        regressor,
        triplets: spec.triplets.to_vec(),
        ranking_head: spec.ranking_head,
        kind: spec.kind,
        alpha: spec.alpha,
        beta: params.margin_beta,
        beta_learnable: spec.beta_learnable,
        gamma: spec.gamma,
        reversal: spec.reversal,
        decor_samples,
        rank_mean,
        correlation_mean,
        scalar,
    })
}

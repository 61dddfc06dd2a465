//! Exact analytic gradients for one recorded step.
//!
//! The ranking term backpropagates through the embedding normalization, the
//! head layers and the feature extractor. The correlation term splits: the
//! regressor receives the plain gradient of `-gamma * r` (so descent trains
//! it to maximize r), while the contributions flowing into the embeddings
//! are sign-flipped when reversal is on, so descent minimizes r through the
//! encoders and the shared trunk.

use crate::error::{Error, Result};
use crate::losses::{self, LossKind};

use super::tape::StepTape;
use super::{GradientSet, Head, Linear, ModelParams};

/// `grad += scale * (dz outer a)` and `bias += scale * dz`; returns `W^T dz`.
fn linear_backward(
    layer: &Linear,
    grad: &mut Linear,
    input: &[f64],
    dz: &[f64],
    scale: f64,
) -> Vec<f64> {
    let mut d_input = vec![0.0; layer.in_dim];
    for row in 0..layer.out_dim {
        let g = scale * dz[row];
        grad.b[row] += g;
        let w_row = &layer.w[row * layer.in_dim..(row + 1) * layer.in_dim];
        let gw_row = &mut grad.w[row * layer.in_dim..(row + 1) * layer.in_dim];
        for col in 0..layer.in_dim {
            gw_row[col] += g * input[col];
            d_input[col] += w_row[col] * g;
        }
    }
    d_input
}

/// d(u/||u||) pulled back: `du = (de - (de . e) e) / ||u||`.
fn normalize_backward(de: &[f64], embedding: &[f64], norm: f64) -> Vec<f64> {
    let dot: f64 = de.iter().zip(embedding).map(|(a, b)| a * b).sum();
    de.iter().zip(embedding).map(|(d, e)| (d - dot * e) / norm).collect()
}

/// Compute gradients of the recorded step objective for every parameter.
pub fn backward(params: &ModelParams, tape: &StepTape) -> Result<GradientSet> {
    if tape.f_pre.len() != tape.inputs.len()
        || tape
            .f_pre
            .first()
            .map(|layers| layers.len() != params.f_layers.len())
            .unwrap_or(false)
    {
        return Err(Error::Internal("tape does not match the parameter layout".into()));
    }
    if tape.kind == LossKind::Margin && tape.beta != params.margin_beta {
        return Err(Error::Internal(
            "tape was recorded with a different margin boundary than the given params".into(),
        ));
    }

    let n = tape.inputs.len();
    let mut grads = GradientSet::zeros_like(params);

    // Per-sample gradients with respect to each head's unit embedding.
    let mut de_class = vec![vec![0.0; params.dims.class_dim]; n];
    let mut de_shared = vec![vec![0.0; params.dims.shared_dim]; n];

    // Ranking term, averaged over triplets.
    if !tape.triplets.is_empty() {
        let rank_embs = tape
            .head_cache(tape.ranking_head)
            .ok_or_else(|| Error::Internal("tape lacks the ranking head cache".into()))?;
        let de_rank = match tape.ranking_head {
            Head::Class => &mut de_class,
            Head::Shared => &mut de_shared,
        };
        let inv_t = 1.0 / tape.triplets.len() as f64;
        for trip in &tape.triplets {
            let e_a = &rank_embs[trip.anchor].embedding;
            let e_p = &rank_embs[trip.positive].embedding;
            let e_n = &rank_embs[trip.negative].embedding;
            let (g, d_beta) = match tape.kind {
                LossKind::Triplet => {
                    let (_, g) = losses::triplet_loss_grad(e_a, e_p, e_n, tape.alpha)?;
                    (g, 0.0)
                }
                LossKind::Margin => {
                    let (_, g, d_beta) =
                        losses::margin_loss_grad(e_a, e_p, e_n, tape.alpha, tape.beta)?;
                    (g, d_beta)
                }
            };
            for (role, pos) in [(0, trip.anchor), (1, trip.positive), (2, trip.negative)] {
                for (slot, v) in de_rank[pos].iter_mut().zip(&g[role]) {
                    *slot += inv_t * v;
                }
            }
            if tape.beta_learnable {
                grads.margin_beta += inv_t * d_beta;
            }
        }
    }

    // Correlation term: coefficient of r in the objective is -gamma, averaged
    // over the decorrelation samples.
    if let (Some(regressor), Some(class), Some(shared)) =
        (&tape.regressor, &tape.class_head, &tape.shared_head)
    {
        let coef = -tape.gamma / tape.decor_samples.len() as f64;
        // Reversal flips only what reaches the embeddings.
        let emb_sign = if tape.reversal { -1.0 } else { 1.0 };
        for (k, &i) in tape.decor_samples.iter().enumerate() {
            let reg = &regressor[k];
            let (_, d_phi, d_pout) =
                losses::correlation_grad(&class[i].embedding, &reg.output)?;

            // Regressor side: plain gradient of -gamma * r.
            let dz2: Vec<f64> = d_pout.iter().map(|v| coef * v).collect();
            let dh = linear_backward(&params.p2, &mut grads.p2, &reg.hidden_act, &dz2, 1.0);
            let dz1: Vec<f64> = dh
                .iter()
                .zip(&reg.hidden_pre)
                .map(|(d, z)| if *z > 0.0 { *d } else { 0.0 })
                .collect();
            let d_reg_input =
                linear_backward(&params.p1, &mut grads.p1, &shared[i].embedding, &dz1, 1.0);

            // Embedding side, possibly reversed.
            for (slot, v) in de_class[i].iter_mut().zip(&d_phi) {
                *slot += emb_sign * coef * v;
            }
            for (slot, v) in de_shared[i].iter_mut().zip(&d_reg_input) {
                *slot += emb_sign * v;
            }
        }
    }

    // Pull embedding gradients through normalization, the head layers, and
    // the shared feature extractor.
    let last = params.f_layers.len() - 1;
    for i in 0..n {
        let f_vec = tape.f_act[i].last().unwrap();
        let mut df = vec![0.0; params.dims.feature];
        let mut any = false;

        if let Some(class) = &tape.class_head {
            if de_class[i].iter().any(|&v| v != 0.0) {
                let du = normalize_backward(&de_class[i], &class[i].embedding, class[i].norm);
                let d = linear_backward(&params.phi, &mut grads.phi, f_vec, &du, 1.0);
                for (slot, v) in df.iter_mut().zip(&d) {
                    *slot += v;
                }
                any = true;
            }
        }
        if let Some(shared) = &tape.shared_head {
            if de_shared[i].iter().any(|&v| v != 0.0) {
                let du = normalize_backward(&de_shared[i], &shared[i].embedding, shared[i].norm);
                let d = linear_backward(&params.phi_star, &mut grads.phi_star, f_vec, &du, 1.0);
                for (slot, v) in df.iter_mut().zip(&d) {
                    *slot += v;
                }
                any = true;
            }
        }
        if !any {
            continue;
        }

        let mut da = df;
        for l in (0..params.f_layers.len()).rev() {
            let dz: Vec<f64> = if l < last {
                da.iter()
                    .zip(&tape.f_pre[i][l])
                    .map(|(d, z)| if *z > 0.0 { *d } else { 0.0 })
                    .collect()
            } else {
                da
            };
            let input: &[f64] = if l == 0 { &tape.inputs[i] } else { &tape.f_act[i][l - 1] };
            da = linear_backward(&params.f_layers[l], &mut grads.f_layers[l], input, &dz, 1.0);
        }
    }

    Ok(grads)
}

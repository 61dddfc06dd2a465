//! Ranking losses and the correlation objective, as pure scalar functions
//! with well-defined subgradients.
//!
//! Conventions: squared distances in the triplet loss, plain distances in the
//! margin loss, and subgradient 0 exactly at hinge kinks. Gradients with
//! respect to the embedding vectors live here; propagation through the
//! network is the model's job.

use crate::error::{Error, Result};

/// Which ranking loss to optimize.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Triplet,
    Margin,
}

/// How loss terms are combined into the training objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    /// Class-label triplets only, single encoder.
    DiscrOnly,
    /// Inter-class triplets only, single encoder.
    SharedOnly,
    /// Both triplet sets, one shared encoder.
    BothSingle,
    /// Both triplet sets, dedicated encoders, no decorrelation.
    BothSep,
    /// Dedicated encoders plus the gradient-reversed correlation term.
    BothSepDecor,
}

impl TrainMode {
    pub const ALL: [TrainMode; 5] = [
        TrainMode::DiscrOnly,
        TrainMode::SharedOnly,
        TrainMode::BothSingle,
        TrainMode::BothSep,
        TrainMode::BothSepDecor,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TrainMode::DiscrOnly => "discr_only",
            TrainMode::SharedOnly => "shared_only",
            TrainMode::BothSingle => "both_single",
            TrainMode::BothSep => "both_sep",
            TrainMode::BothSepDecor => "both_sep_decor",
        }
    }

    pub fn parse(s: &str) -> Result<TrainMode> {
        TrainMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config("mode", format!("unknown mode {s:?}")))
    }

    pub fn has_discr_phase(&self) -> bool {
        !matches!(self, TrainMode::SharedOnly)
    }

    pub fn has_shared_phase(&self) -> bool {
        !matches!(self, TrainMode::DiscrOnly)
    }

    /// Whether the shared phase trains a dedicated encoder.
    pub fn separate_encoders(&self) -> bool {
        matches!(self, TrainMode::SharedOnly | TrainMode::BothSep | TrainMode::BothSepDecor)
    }

    pub fn decorrelates(&self) -> bool {
        matches!(self, TrainMode::BothSepDecor)
    }
}

/// Loss hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub kind: LossKind,
    /// Ranking margin.
    pub alpha: f64,
    /// Margin-loss boundary; initial value when learnable.
    pub beta: f64,
    pub beta_learnable: bool,
    /// Decorrelation weight.
    pub gamma: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { kind: LossKind::Margin, alpha: 0.2, beta: 0.6, beta_learnable: true, gamma: 0.0 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(Error::config("alpha", format!("must be >= 0, got {}", self.alpha)));
        }
        if !self.gamma.is_finite() || self.gamma < 0.0 {
            return Err(Error::config("gamma", format!("must be >= 0, got {}", self.gamma)));
        }
        if self.kind == LossKind::Margin && (self.beta.is_nan() || self.beta <= 0.0) {
            return Err(Error::config("beta", format!("must be > 0 for margin loss, got {}", self.beta)));
        }
        Ok(())
    }
}

fn check_same_dim(label: &str, a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::dimension(format!("{label}: {} vs {}", a.len(), b.len())));
    }
    Ok(())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    sq_dist(a, b).sqrt()
}

/// Triplet loss: `max(0, ||e_a - e_p||^2 - ||e_a - e_n||^2 + alpha)`.
pub fn triplet_loss(e_a: &[f64], e_p: &[f64], e_n: &[f64], alpha: f64) -> Result<f64> {
    check_same_dim("triplet anchor/positive", e_a, e_p)?;
    check_same_dim("triplet anchor/negative", e_a, e_n)?;
    Ok((sq_dist(e_a, e_p) - sq_dist(e_a, e_n) + alpha).max(0.0))
}

/// Per-embedding gradients of [`triplet_loss`].
///
/// Returns `(loss, [d/de_a, d/de_p, d/de_n])`; all three are zero when the
/// hinge is inactive or exactly at its kink.
pub fn triplet_loss_grad(
    e_a: &[f64],
    e_p: &[f64],
    e_n: &[f64],
    alpha: f64,
) -> Result<(f64, [Vec<f64>; 3])> {
    let loss = triplet_loss(e_a, e_p, e_n, alpha)?;
    let dim = e_a.len();
    let mut g = [vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]];
    if loss > 0.0 {
        for i in 0..dim {
            g[0][i] = 2.0 * (e_n[i] - e_p[i]);
            g[1][i] = -2.0 * (e_a[i] - e_p[i]);
            g[2][i] = 2.0 * (e_a[i] - e_n[i]);
        }
    }
    Ok((loss, g))
}

/// Margin loss on plain distances:
/// `max(0, d_ap - beta + alpha) + max(0, beta - d_an + alpha)`.
pub fn margin_loss(e_a: &[f64], e_p: &[f64], e_n: &[f64], alpha: f64, beta: f64) -> Result<f64> {
    check_same_dim("margin anchor/positive", e_a, e_p)?;
    check_same_dim("margin anchor/negative", e_a, e_n)?;
    if beta.is_nan() || beta <= 0.0 {
        return Err(Error::config("beta", format!("must be > 0, got {beta}")));
    }
    let d_ap = dist(e_a, e_p);
    let d_an = dist(e_a, e_n);
    Ok((d_ap - beta + alpha).max(0.0) + (beta - d_an + alpha).max(0.0))
}

/// Per-embedding gradients of [`margin_loss`], plus `d loss / d beta`.
pub fn margin_loss_grad(
    e_a: &[f64],
    e_p: &[f64],
    e_n: &[f64],
    alpha: f64,
    beta: f64,
) -> Result<(f64, [Vec<f64>; 3], f64)> {
    let loss = margin_loss(e_a, e_p, e_n, alpha, beta)?;
    let dim = e_a.len();
    let mut g = [vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]];
    let mut d_beta = 0.0;
    let d_ap = dist(e_a, e_p);
    let d_an = dist(e_a, e_n);
    // d||a-b|| / da = (a-b)/||a-b||; undefined at 0 where we use subgradient 0.
    if d_ap - beta + alpha > 0.0 {
        d_beta -= 1.0;
        if d_ap > 1e-300 {
            for i in 0..dim {
                let u = (e_a[i] - e_p[i]) / d_ap;
                g[0][i] += u;
                g[1][i] -= u;
            }
        }
    }
    if beta - d_an + alpha > 0.0 {
        d_beta += 1.0;
        if d_an > 1e-300 {
            for i in 0..dim {
                let u = (e_a[i] - e_n[i]) / d_an;
                g[0][i] -= u;
                g[2][i] += u;
            }
        }
    }
    Ok((loss, g, d_beta))
}

/// Correlation between an embedding and a regressor projection:
/// `r = (1/D) * sum_s (phi_s * p_s)^2`. Always non-negative.
pub fn correlation(phi_vec: &[f64], p_vec: &[f64]) -> Result<f64> {
    check_same_dim("correlation", phi_vec, p_vec)?;
    let d = phi_vec.len() as f64;
    Ok(phi_vec.iter().zip(p_vec).map(|(a, b)| (a * b) * (a * b)).sum::<f64>() / d)
}

/// Gradients of [`correlation`] with respect to both inputs.
pub fn correlation_grad(phi_vec: &[f64], p_vec: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let r = correlation(phi_vec, p_vec)?;
    let d = phi_vec.len() as f64;
    let mut d_phi = vec![0.0; phi_vec.len()];
    let mut d_p = vec![0.0; p_vec.len()];
    for i in 0..phi_vec.len() {
        let prod = phi_vec[i] * p_vec[i];
        d_phi[i] = 2.0 / d * prod * p_vec[i];
        d_p[i] = 2.0 / d * prod * phi_vec[i];
    }
    Ok((r, d_phi, d_p))
}

/// Scalar loss terms gathered from one training step.
#[derive(Debug, Clone, Copy, Default)]
pub struct LossTerms {
    /// Ranking loss over class-label triplets.
    pub rank_class: Option<f64>,
    /// Ranking loss over inter-class (or group) triplets.
    pub rank_shared: Option<f64>,
    /// Batch-mean correlation r.
    pub correlation: Option<f64>,
}

/// Combine loss terms per the training mode.
///
/// The reversal semantics of the correlation term live in the backward pass;
/// this is the plain forward scalar.
pub fn combined_loss(terms: &LossTerms, mode: TrainMode, gamma: f64) -> Result<f64> {
    let need = |t: Option<f64>, which: &str| {
        t.ok_or_else(|| Error::Internal(format!("mode {} requires term {which}", mode.name())))
    };
    let forbid = |t: Option<f64>, which: &str| {
        if t.is_some() {
            Err(Error::Internal(format!("mode {} does not take term {which}", mode.name())))
        } else {
            Ok(())
        }
    };
    match mode {
        TrainMode::DiscrOnly => {
            forbid(terms.rank_shared, "rank_shared")?;
            need(terms.rank_class, "rank_class")
        }
        TrainMode::SharedOnly => {
            forbid(terms.rank_class, "rank_class")?;
            need(terms.rank_shared, "rank_shared")
        }
        TrainMode::BothSingle | TrainMode::BothSep => {
            forbid(terms.correlation, "correlation")?;
            Ok(need(terms.rank_class, "rank_class")? + need(terms.rank_shared, "rank_shared")?)
        }
        TrainMode::BothSepDecor => {
            Ok(need(terms.rank_class, "rank_class")? + need(terms.rank_shared, "rank_shared")?
                - gamma * need(terms.correlation, "correlation")?)
        }
    }
}

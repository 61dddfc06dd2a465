//! Retrieval and clustering metrics, the generalization gap, embedding
//! concatenation, and cross-class neighbor probes.
//!
//! Nearest-neighbor ties break on ascending sample index so every metric is
//! reproducible bit-for-bit. The NMI clustering protocol is K-means with as
//! many clusters as evaluated classes, ten seeded restarts, best objective
//! kept.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::grouping;
use crate::model::{Head, ModelParams};
use crate::parallel;
use crate::rng;

/// Which split a report was computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// Which representation of a sample is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    /// The discriminative embedding.
    Phi,
    /// The shared-characteristics embedding.
    PhiStar,
    /// Concatenation of both embeddings.
    Concat,
    /// The raw feature-extractor output.
    FeaturesF,
    /// The discriminative embedding after re-drawing the head weights.
    PhiReinit,
}

impl Representation {
    pub const ALL: [Representation; 5] = [
        Representation::Phi,
        Representation::PhiStar,
        Representation::Concat,
        Representation::FeaturesF,
        Representation::PhiReinit,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Representation::Phi => "phi",
            Representation::PhiStar => "phi_star",
            Representation::Concat => "concat",
            Representation::FeaturesF => "f",
            Representation::PhiReinit => "phi_reinit",
        }
    }

    pub fn parse(s: &str) -> Result<Representation> {
        Representation::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::config("representation", format!("unknown representation {s:?}")))
    }
}

/// Metric values for one (epoch, split, representation) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub recall_at: BTreeMap<usize, f64>,
    pub nmi: f64,
    pub split: Split,
    pub representation: Representation,
    pub epoch: usize,
}

/// Full symmetric Euclidean distance matrix; diagonal exactly zero.
pub fn pairwise_distances(embeddings: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = embeddings.len();
    if n < 2 {
        return Err(Error::dimension("need at least 2 embeddings"));
    }
    let dim = embeddings[0].len();
    if embeddings.iter().any(|e| e.len() != dim) {
        return Err(Error::dimension("embeddings have mixed dimensions"));
    }
    parallel::init_thread_pool();
    // Upper triangle per row, computed in parallel, then mirrored.
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i + 1..n)
                .map(|j| {
                    embeddings[i]
                        .iter()
                        .zip(&embeddings[j])
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt()
                })
                .collect()
        })
        .collect();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for (off, &d) in upper[i].iter().enumerate() {
            let j = i + 1 + off;
            out[i][j] = d;
            out[j][i] = d;
        }
    }
    Ok(out)
}

/// K nearest neighbors of `query` by the given distance row, self excluded,
/// ties broken by ascending index.
fn nearest_k(dist_row: &[f64], query: usize, k: usize, keep: impl Fn(usize) -> bool) -> Vec<usize> {
    let mut order: Vec<usize> =
        (0..dist_row.len()).filter(|&j| j != query && keep(j)).collect();
    order.sort_by(|&a, &b| dist_row[a].partial_cmp(&dist_row[b]).unwrap().then(a.cmp(&b)));
    order.truncate(k);
    order
}

fn recall_with_matrix(matrix: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    let n = labels.len();
    let hits = (0..n)
        .filter(|&i| {
            nearest_k(&matrix[i], i, k, |_| true)
                .iter()
                .any(|&j| labels[j] == labels[i])
        })
        .count();
    hits as f64 / n as f64
}

/// Recall@K: the fraction of samples whose K nearest neighbors contain at
/// least one same-class sample.
pub fn recall_at_k(embeddings: &[Vec<f64>], labels: &[usize], k: usize) -> Result<f64> {
    let n = embeddings.len();
    if labels.len() != n {
        return Err(Error::dimension(format!("{n} embeddings vs {} labels", labels.len())));
    }
    if k == 0 {
        return Err(Error::config("k", "must be >= 1"));
    }
    if k >= n {
        return Err(Error::config("k", format!("k={k} but only {n} samples")));
    }
    let matrix = pairwise_distances(embeddings)?;
    Ok(recall_with_matrix(&matrix, labels, k))
}

/// Normalized mutual information `I(c;l) / sqrt(H(c) H(l))`, with 0/0 = 0.
pub fn nmi(cluster_ids: &[usize], labels: &[usize]) -> Result<f64> {
    if cluster_ids.len() != labels.len() {
        return Err(Error::dimension(format!(
            "{} cluster ids vs {} labels",
            cluster_ids.len(),
            labels.len()
        )));
    }
    if cluster_ids.is_empty() {
        return Err(Error::dimension("empty inputs"));
    }
    let n = cluster_ids.len() as f64;
    let mut joint: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut c_marg: BTreeMap<usize, f64> = BTreeMap::new();
    let mut l_marg: BTreeMap<usize, f64> = BTreeMap::new();
    for (&c, &l) in cluster_ids.iter().zip(labels) {
        *joint.entry((c, l)).or_insert(0.0) += 1.0;
        *c_marg.entry(c).or_insert(0.0) += 1.0;
        *l_marg.entry(l).or_insert(0.0) += 1.0;
    }
    let mut mutual = 0.0;
    for (&(c, l), &count) in &joint {
        let p = count / n;
        let pc = c_marg[&c] / n;
        let pl = l_marg[&l] / n;
        mutual += p * (p / (pc * pl)).ln();
    }
    let entropy = |marg: &BTreeMap<usize, f64>| -> f64 {
        marg.values().map(|&count| -(count / n) * (count / n).ln()).sum()
    };
    let h_c = entropy(&c_marg);
    let h_l = entropy(&l_marg);
    let denom = (h_c * h_l).sqrt();
    if denom == 0.0 {
        return Ok(0.0);
    }
    // Mutual information is non-negative and bounded by the entropies;
    // rounding can stray a few ulps outside, so pin the score to [0, 1].
    Ok((mutual / denom).clamp(0.0, 1.0))
}

const NMI_RESTARTS: u64 = 10;
const NMI_KMEANS_ITERS: usize = 60;

/// Cluster embeddings with K-means (as many clusters as distinct labels, ten
/// restarts, best objective kept) and score the result against the labels.
pub fn nmi_via_kmeans(embeddings: &[Vec<f64>], labels: &[usize], seed: u64) -> Result<f64> {
    let mut distinct: Vec<usize> = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let l = distinct.len().min(embeddings.len());
    parallel::init_thread_pool();
    let restarts: Vec<Result<(f64, Vec<usize>)>> = (0..NMI_RESTARTS)
        .into_par_iter()
        .map(|restart| {
            let mut r = rng::seeded(seed, restart);
            let g = grouping::kmeans(embeddings, l, NMI_KMEANS_ITERS, &mut r)?;
            let obj = grouping::kmeans_objective(embeddings, &g.centroids, &g.assignment);
            Ok((obj, g.assignment))
        })
        .collect();
    // Best objective wins; ties keep the earliest restart.
    let mut best: Option<(f64, Vec<usize>)> = None;
    for item in restarts {
        let (obj, assignment) = item?;
        if best.as_ref().map(|(b, _)| obj < *b).unwrap_or(true) {
            best = Some((obj, assignment));
        }
    }
    let (_, assignment) = best.unwrap();
    nmi(&assignment, labels)
}

/// Concatenate two unit embeddings; the result has norm sqrt(2) and is not
/// renormalized (a global scale cannot change any ranking).
pub fn concat_embeddings(phi_vec: &[f64], phi_star_vec: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(phi_vec.len() + phi_star_vec.len());
    out.extend_from_slice(phi_vec);
    out.extend_from_slice(phi_star_vec);
    out
}

/// Test-minus-train difference; negative means overfitting to train classes.
pub fn generalization_gap(train_recall1: f64, test_recall1: f64) -> f64 {
    test_recall1 - train_recall1
}

/// K nearest neighbors of `query` restricted to samples of other classes.
pub fn cross_class_neighbors(
    embeddings: &[Vec<f64>],
    labels: &[usize],
    query: usize,
    k: usize,
) -> Result<Vec<usize>> {
    if query >= embeddings.len() {
        return Err(Error::dimension(format!("query {query} out of range")));
    }
    let candidates =
        labels.iter().enumerate().filter(|(j, &l)| *j != query && l != labels[query]).count();
    if candidates < k {
        return Err(Error::Sampling(format!(
            "only {candidates} cross-class candidates for k={k}"
        )));
    }
    let matrix = pairwise_distances(embeddings)?;
    Ok(nearest_k(&matrix[query], query, k, |j| labels[j] != labels[query]))
}

/// Materialize one representation for every sample of a dataset.
///
/// `reinit_seed` only matters for [`Representation::PhiReinit`], which
/// evaluates the class head after re-drawing its weights (the trunk stays
/// trained).
pub fn embed_dataset(
    params: &ModelParams,
    ds: &Dataset,
    representation: Representation,
    reinit_seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let reinit;
    let (params, head): (&ModelParams, Option<Head>) = match representation {
        Representation::Phi => (params, Some(Head::Class)),
        Representation::PhiStar => (params, Some(Head::Shared)),
        Representation::FeaturesF => (params, None),
        Representation::Concat => {
            return ds
                .samples
                .iter()
                .map(|s| {
                    let f = params.forward_features(&s.features)?;
                    let phi = params.embed(&f, Head::Class)?;
                    let phi_star = params.embed(&f, Head::Shared)?;
                    Ok(concat_embeddings(&phi, &phi_star))
                })
                .collect();
        }
        Representation::PhiReinit => {
            reinit = params.reinit_encoder(Head::Class, reinit_seed);
            (&reinit, Some(Head::Class))
        }
    };
    ds.samples
        .iter()
        .map(|s| {
            let f = params.forward_features(&s.features)?;
            match head {
                Some(h) => params.embed(&f, h),
                None => Ok(f),
            }
        })
        .collect()
}

/// Compute Recall@K for each requested K plus NMI for one representation.
pub fn evaluate_representation(
    params: &ModelParams,
    ds: &Dataset,
    split: Split,
    representation: Representation,
    epoch: usize,
    recall_ks: &[usize],
    eval_seed: u64,
) -> Result<MetricsReport> {
    let embeddings = embed_dataset(params, ds, representation, rng::derive_seed(eval_seed, 0x7e))?;
    let labels = ds.labels();
    let matrix = pairwise_distances(&embeddings)?;
    let mut recall_at = BTreeMap::new();
    for &k in recall_ks {
        if k == 0 || k >= ds.len() {
            return Err(Error::config("recall_ks", format!("k={k} invalid for n={}", ds.len())));
        }
        recall_at.insert(k, recall_with_matrix(&matrix, &labels, k));
    }
    let nmi = nmi_via_kmeans(&embeddings, &labels, eval_seed)?;
    Ok(MetricsReport { recall_at, nmi, split, representation, epoch })
}

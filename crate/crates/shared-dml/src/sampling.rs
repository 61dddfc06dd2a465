//! Mini-batch construction and triplet assembly.
//!
//! Three triplet families: discriminative (anchor and positive share a
//! class), inter-class (all three constituents from mutually different
//! classes, the source of shared characteristics), and group-based (surrogate
//! groups instead of classes). Negative — and for inter-class triplets,
//! positive — selection can be uniform, semihard, or weighted inversely to
//! the analytic distance density on the unit hypersphere, which flattens the
//! sampled distance distribution.
//!
//! Each anchor consumes an independent RNG substream derived from a per-step
//! seed, so strategies that draw different numbers of values stay aligned
//! across anchors and anchors may be processed in parallel.

use rand::seq::SliceRandom;
use rand::RngCore;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng;

/// A mini-batch: dataset indices, grouped per class in contiguous runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub sample_indices: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.sample_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_indices.is_empty()
    }
}

/// Provenance tag of a triplet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TripletOrigin {
    Discriminative,
    Interclass,
    InterclassMinap,
    Unconstrained,
    Group,
}

/// Anchor/positive/negative dataset indices plus their provenance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
    pub origin: TripletOrigin,
}

/// How negatives (and inter-class constituents) are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NegativeStrategy {
    Random,
    Semihard,
    DistanceWeighted,
}

impl NegativeStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            NegativeStrategy::Random => "random",
            NegativeStrategy::Semihard => "semihard",
            NegativeStrategy::DistanceWeighted => "distance_weighted",
        }
    }

    pub fn parse(s: &str) -> Result<NegativeStrategy> {
        match s {
            "random" => Ok(NegativeStrategy::Random),
            "semihard" => Ok(NegativeStrategy::Semihard),
            "distance_weighted" => Ok(NegativeStrategy::DistanceWeighted),
            _ => Err(Error::config("negative_strategy", format!("unknown strategy {s:?}"))),
        }
    }
}

/// How the shared-phase triplets are assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SharedStrategy {
    /// All three constituents from mutually different classes.
    Interclass,
    /// Inter-class, but the positive is the nearest other-class member.
    InterclassMinap,
    /// No label constraint at all.
    Unconstrained,
    /// Surrogate groups from K-means on raw features.
    Group,
    /// Surrogate groups from K-means on per-class standardized features.
    GroupStd,
}

impl SharedStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            SharedStrategy::Interclass => "interclass",
            SharedStrategy::InterclassMinap => "interclass_minap",
            SharedStrategy::Unconstrained => "unconstrained",
            SharedStrategy::Group => "group",
            SharedStrategy::GroupStd => "group_std",
        }
    }

    pub fn parse(s: &str) -> Result<SharedStrategy> {
        match s {
            "interclass" => Ok(SharedStrategy::Interclass),
            "interclass_minap" => Ok(SharedStrategy::InterclassMinap),
            "unconstrained" => Ok(SharedStrategy::Unconstrained),
            "group" => Ok(SharedStrategy::Group),
            "group_std" => Ok(SharedStrategy::GroupStd),
            _ => Err(Error::config("shared_strategy", format!("unknown strategy {s:?}"))),
        }
    }

    pub fn uses_grouping(&self) -> bool {
        matches!(self, SharedStrategy::Group | SharedStrategy::GroupStd)
    }
}

/// Sampler knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub negative_strategy: NegativeStrategy,
    pub shared_strategy: SharedStrategy,
    /// Distances are clamped below at this value before inverting q(d);
    /// 1/q diverges as d -> 0.
    pub clamp_low: f64,
    /// Cap on each candidate's raw inverse-density weight.
    pub weight_cap: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            negative_strategy: NegativeStrategy::DistanceWeighted,
            shared_strategy: SharedStrategy::Interclass,
            clamp_low: 0.5,
            weight_cap: 1e8,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clamp_low > 0.0 && self.clamp_low < 2.0) {
            return Err(Error::config(
                "clamp_low",
                format!("must lie in (0, 2), got {}", self.clamp_low),
            ));
        }
        if self.weight_cap.is_nan() || self.weight_cap <= 0.0 {
            return Err(Error::config(
                "weight_cap",
                format!("must be > 0, got {}", self.weight_cap),
            ));
        }
        Ok(())
    }
}

/// The result of one sampling call. `degenerate` flags batches that could not
/// produce any triplet (e.g. a single-class batch); callers log and move on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripletSet {
    pub triplets: Vec<Triplet>,
    pub degenerate: bool,
}

/// Draw a batch of `b` indices, `m` per class.
///
/// Classes are drawn uniformly without replacement; within a class, `m`
/// distinct samples (with replacement only when the class holds fewer than
/// `m`). The final class run is truncated to fit `b`. When every class has
/// been used and `b` is not yet reached, a fresh shuffled class deck starts.
pub fn build_batch(ds: &Dataset, b: usize, m: usize, rng: &mut ChaCha8Rng) -> Result<Batch> {
    if ds.is_empty() {
        return Err(Error::Sampling("cannot batch an empty dataset".into()));
    }
    if m == 0 || b < m {
        return Err(Error::config("batch", format!("need b >= m >= 1, got b={b}, m={m}")));
    }
    let by_class = ds.indices_by_class();
    let mut indices = Vec::with_capacity(b);
    while indices.len() < b {
        let mut deck: Vec<usize> = (0..by_class.len()).collect();
        deck.shuffle(rng);
        for ci in deck {
            if indices.len() >= b {
                break;
            }
            let members = &by_class[ci].1;
            let take = m.min(b - indices.len());
            if members.len() >= take && members.len() >= m {
                let picked = rand::seq::index::sample(rng, members.len(), take);
                indices.extend(picked.iter().map(|k| members[k]));
            } else {
                for _ in 0..take {
                    indices.push(members[rng.random_range(0..members.len())]);
                }
            }
        }
    }
    Ok(Batch { sample_indices: indices })
}

/// Unnormalized density of pairwise distances on the unit hypersphere S^D:
/// `q(d) = d^(D-2) * (1 - d^2/4)^((D-3)/2)` for `d` in [0, 2].
pub fn q_density(d: f64, dim: usize) -> Result<f64> {
    if dim < 3 {
        return Err(Error::Domain(format!("q(d) requires D >= 3, got {dim}")));
    }
    if !(0.0..=2.0).contains(&d) {
        return Err(Error::Domain(format!("distance {d} outside [0, 2]")));
    }
    let base = 1.0 - d * d / 4.0;
    Ok(d.powi(dim as i32 - 2) * base.powf((dim as f64 - 3.0) / 2.0))
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Raw sampling weight for one anchor-candidate distance.
pub fn inverse_q_weight(d: f64, dim: usize, cfg: &SamplerConfig) -> Result<f64> {
    // Unit embeddings can stray a hair past 2.0 in floating point.
    let d_eff = d.max(cfg.clamp_low).min(2.0);
    let q = q_density(d_eff, dim)?;
    Ok(if q > 0.0 { (1.0 / q).min(cfg.weight_cap) } else { cfg.weight_cap })
}

/// Pick one candidate with probability proportional to its capped
/// inverse-density weight. Deterministic given the RNG state.
pub fn distance_weighted_pick(
    anchor_emb: &[f64],
    candidate_embs: &[&[f64]],
    dim: usize,
    cfg: &SamplerConfig,
    rng: &mut ChaCha8Rng,
) -> Result<usize> {
    if candidate_embs.is_empty() {
        return Err(Error::Sampling("no candidates for distance-weighted pick".into()));
    }
    cfg.validate()?;
    let weights: Vec<f64> = candidate_embs
        .iter()
        .map(|c| inverse_q_weight(euclidean(anchor_emb, c), dim, cfg))
        .collect::<Result<Vec<_>>>()?;
    let total: f64 = weights.iter().sum();
    let mut target = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        target -= w;
        if target < 0.0 {
            return Ok(i);
        }
    }
    Ok(candidate_embs.len() - 1)
}

/// Semihard rule: among negatives farther than the positive, the closest;
/// when none qualifies, the farthest negative. Ties break on index.
pub fn semihard_negative(
    anchor_emb: &[f64],
    positive_emb: &[f64],
    negative_embs: &[&[f64]],
) -> Result<usize> {
    if negative_embs.is_empty() {
        return Err(Error::Sampling("no negatives for semihard selection".into()));
    }
    let d_ap = euclidean(anchor_emb, positive_emb);
    let dists: Vec<f64> = negative_embs.iter().map(|n| euclidean(anchor_emb, n)).collect();
    let semihard = dists
        .iter()
        .enumerate()
        .filter(|(_, &d)| d > d_ap)
        .min_by(|(i, a), (j, b)| a.partial_cmp(b).unwrap().then(i.cmp(j)));
    if let Some((idx, _)) = semihard {
        return Ok(idx);
    }
    let (idx, _) = dists
        .iter()
        .enumerate()
        .max_by(|(i, a), (j, b)| a.partial_cmp(b).unwrap().then(j.cmp(i)))
        .unwrap();
    Ok(idx)
}

/// Positions in the batch, bucketed for one anchor.
struct AnchorContext<'a> {
    batch: &'a Batch,
    embeddings: &'a [Vec<f64>],
}

impl AnchorContext<'_> {
    fn emb(&self, pos: usize) -> &[f64] {
        &self.embeddings[pos]
    }

    fn pick_negative(
        &self,
        anchor: usize,
        positive: usize,
        candidates: &[usize],
        strategy: NegativeStrategy,
        cfg: &SamplerConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<usize> {
        if candidates.is_empty() {
            return Err(Error::Sampling("no negative candidates".into()));
        }
        let picked = match strategy {
            NegativeStrategy::Random => rng.random_range(0..candidates.len()),
            NegativeStrategy::Semihard => {
                let negs: Vec<&[f64]> = candidates.iter().map(|&c| self.emb(c)).collect();
                semihard_negative(self.emb(anchor), self.emb(positive), &negs)?
            }
            NegativeStrategy::DistanceWeighted => {
                let negs: Vec<&[f64]> = candidates.iter().map(|&c| self.emb(c)).collect();
                let dim = self.emb(anchor).len();
                distance_weighted_pick(self.emb(anchor), &negs, dim, cfg, rng)?
            }
        };
        Ok(candidates[picked])
    }

    fn to_triplet(&self, a: usize, p: usize, n: usize, origin: TripletOrigin) -> Triplet {
        Triplet {
            anchor: self.batch.sample_indices[a],
            positive: self.batch.sample_indices[p],
            negative: self.batch.sample_indices[n],
            origin,
        }
    }
}

fn anchor_rng(step_seed: u64, anchor: usize) -> ChaCha8Rng {
    rng::seeded(step_seed, anchor as u64 + 1)
}

fn distinct_labels(batch: &Batch, labels: &[usize]) -> usize {
    let mut seen: Vec<usize> = batch.sample_indices.iter().map(|&i| labels[i]).collect();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

/// One discriminative triplet per anchor that has a same-class partner in the
/// batch: positive uniform among same-class members, negative per strategy.
pub fn sample_discriminative_triplets(
    batch: &Batch,
    labels: &[usize],
    embeddings: &[Vec<f64>],
    cfg: &SamplerConfig,
    rng: &mut ChaCha8Rng,
) -> Result<TripletSet> {
    check_sampler_inputs(batch, labels, embeddings)?;
    if distinct_labels(batch, labels) < 2 {
        return Ok(TripletSet { triplets: Vec::new(), degenerate: true });
    }
    let ctx = AnchorContext { batch, embeddings };
    let step_seed = rng.next_u64();
    let n = batch.len();
    let mut triplets = Vec::with_capacity(n);
    for a in 0..n {
        let label_a = labels[batch.sample_indices[a]];
        let same: Vec<usize> = (0..n)
            .filter(|&j| j != a && labels[batch.sample_indices[j]] == label_a)
            .collect();
        if same.is_empty() {
            continue;
        }
        let other: Vec<usize> =
            (0..n).filter(|&j| labels[batch.sample_indices[j]] != label_a).collect();
        let mut r = anchor_rng(step_seed, a);
        let p = same[r.random_range(0..same.len())];
        let neg = ctx.pick_negative(a, p, &other, cfg.negative_strategy, cfg, &mut r)?;
        triplets.push(ctx.to_triplet(a, p, neg, TripletOrigin::Discriminative));
    }
    Ok(TripletSet { triplets, degenerate: false })
}

/// One shared-characteristics triplet per anchor.
///
/// `interclass` draws positive and negative by the configured strategy under
/// the all-distinct-classes constraint (distance-weighted applies it to both
/// constituents); `interclass_minap` forces the positive to the nearest
/// other-class member; `unconstrained` drops the label constraint entirely.
pub fn sample_interclass_triplets(
    batch: &Batch,
    labels: &[usize],
    embeddings: &[Vec<f64>],
    cfg: &SamplerConfig,
    rng: &mut ChaCha8Rng,
) -> Result<TripletSet> {
    check_sampler_inputs(batch, labels, embeddings)?;
    let strategy = cfg.shared_strategy;
    if strategy.uses_grouping() {
        return Err(Error::Sampling(
            "group strategies go through sample_group_triplets".into(),
        ));
    }
    let n = batch.len();
    if strategy != SharedStrategy::Unconstrained && distinct_labels(batch, labels) < 3 {
        return Err(Error::Sampling(format!(
            "inter-class triplets need >= 3 classes in the batch, found {}",
            distinct_labels(batch, labels)
        )));
    }
    if strategy == SharedStrategy::Unconstrained && n < 3 {
        return Err(Error::Sampling("unconstrained triplets need >= 3 batch members".into()));
    }

    let ctx = AnchorContext { batch, embeddings };
    let step_seed = rng.next_u64();
    let dim = embeddings[0].len();
    let mut triplets = Vec::with_capacity(n);
    for a in 0..n {
        let mut r = anchor_rng(step_seed, a);
        let label = |pos: usize| labels[batch.sample_indices[pos]];

        if strategy == SharedStrategy::Unconstrained {
            let others: Vec<usize> = (0..n).filter(|&j| j != a).collect();
            let p = others[r.random_range(0..others.len())];
            let rest: Vec<usize> = (0..n).filter(|&j| j != a && j != p).collect();
            let neg = rest[r.random_range(0..rest.len())];
            triplets.push(ctx.to_triplet(a, p, neg, TripletOrigin::Unconstrained));
            continue;
        }

        let other_class: Vec<usize> = (0..n).filter(|&j| label(j) != label(a)).collect();
        let p = match strategy {
            SharedStrategy::InterclassMinap => {
                // Nearest other-class member; ties break on position.
                *other_class
                    .iter()
                    .min_by(|&&x, &&y| {
                        let dx = euclidean(ctx.emb(a), ctx.emb(x));
                        let dy = euclidean(ctx.emb(a), ctx.emb(y));
                        dx.partial_cmp(&dy).unwrap().then(x.cmp(&y))
                    })
                    .unwrap()
            }
            _ => match cfg.negative_strategy {
                NegativeStrategy::DistanceWeighted => {
                    let cands: Vec<&[f64]> = other_class.iter().map(|&c| ctx.emb(c)).collect();
                    other_class
                        [distance_weighted_pick(ctx.emb(a), &cands, dim, cfg, &mut r)?]
                }
                _ => other_class[r.random_range(0..other_class.len())],
            },
        };

        let third_class: Vec<usize> = (0..n)
            .filter(|&j| label(j) != label(a) && label(j) != label(p))
            .collect();
        let origin = if strategy == SharedStrategy::InterclassMinap {
            TripletOrigin::InterclassMinap
        } else {
            TripletOrigin::Interclass
        };
        let neg = ctx.pick_negative(a, p, &third_class, cfg.negative_strategy, cfg, &mut r)?;
        triplets.push(ctx.to_triplet(a, p, neg, origin));
    }
    Ok(TripletSet { triplets, degenerate: false })
}

/// One group triplet per anchor with a same-group partner in the batch:
/// positive uniform within the anchor's group, negative from another group
/// per strategy.
pub fn sample_group_triplets(
    batch: &Batch,
    group_of: &[usize],
    embeddings: &[Vec<f64>],
    cfg: &SamplerConfig,
    rng: &mut ChaCha8Rng,
) -> Result<TripletSet> {
    if embeddings.len() != batch.len() {
        return Err(Error::dimension(format!(
            "{} embeddings for a batch of {}",
            embeddings.len(),
            batch.len()
        )));
    }
    for &i in &batch.sample_indices {
        if i >= group_of.len() {
            return Err(Error::Sampling(format!("grouping does not cover batch index {i}")));
        }
    }
    if distinct_labels(batch, group_of) < 2 {
        return Ok(TripletSet { triplets: Vec::new(), degenerate: true });
    }
    let ctx = AnchorContext { batch, embeddings };
    let step_seed = rng.next_u64();
    let n = batch.len();
    let mut triplets = Vec::with_capacity(n);
    for a in 0..n {
        let group_a = group_of[batch.sample_indices[a]];
        let same: Vec<usize> = (0..n)
            .filter(|&j| j != a && group_of[batch.sample_indices[j]] == group_a)
            .collect();
        if same.is_empty() {
            continue;
        }
        let other: Vec<usize> =
            (0..n).filter(|&j| group_of[batch.sample_indices[j]] != group_a).collect();
        let mut r = anchor_rng(step_seed, a);
        let p = same[r.random_range(0..same.len())];
        let neg = ctx.pick_negative(a, p, &other, cfg.negative_strategy, cfg, &mut r)?;
        triplets.push(ctx.to_triplet(a, p, neg, TripletOrigin::Group));
    }
    Ok(TripletSet { triplets, degenerate: false })
}

fn check_sampler_inputs(batch: &Batch, labels: &[usize], embeddings: &[Vec<f64>]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Sampling("empty batch".into()));
    }
    if embeddings.len() != batch.len() {
        return Err(Error::dimension(format!(
            "{} embeddings for a batch of {}",
            embeddings.len(),
            batch.len()
        )));
    }
    for &i in &batch.sample_indices {
        if i >= labels.len() {
            return Err(Error::Sampling(format!("batch index {i} outside the label table")));
        }
    }
    Ok(())
}

//! Surrogate grouping: per-class feature standardization, K-means, and the
//! unique-classes-per-group diagnostic.
//!
//! Standardizing features per class before clustering removes class offsets,
//! so the groups that K-means finds are driven by whatever structure remains
//! shared across classes. Without it, groups drift toward the ground-truth
//! classes as training sharpens class separation.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::ModelParams;

const STD_EPSILON: f64 = 1e-8;

/// Per-class standardization statistics (mean and population std per
/// dimension).
#[derive(Debug, Clone, PartialEq)]
pub struct ClassStats {
    pub class: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// An assignment of samples to surrogate groups.
#[derive(Debug, Clone, PartialEq)]
pub struct Grouping {
    /// Group id in `[0, num_groups)` per sample index.
    pub assignment: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub num_groups: usize,
    /// Whether features were class-standardized before clustering.
    pub standardized: bool,
    pub class_stats: Option<Vec<ClassStats>>,
}

/// Standardize features per class: subtract the class mean and divide by the
/// per-dimension population std (guarded at 1e-8).
pub fn class_standardize(
    features: &[Vec<f64>],
    labels: &[usize],
) -> Result<(Vec<Vec<f64>>, Vec<ClassStats>)> {
    if features.len() != labels.len() {
        return Err(Error::dimension(format!(
            "{} feature rows vs {} labels",
            features.len(),
            labels.len()
        )));
    }
    if features.is_empty() {
        return Err(Error::dimension("no features to standardize"));
    }
    let dim = features[0].len();
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &c) in labels.iter().enumerate() {
        by_class.entry(c).or_default().push(i);
    }

    let mut out = features.to_vec();
    let mut stats = Vec::with_capacity(by_class.len());
    for (&class, members) in &by_class {
        let count = members.len() as f64;
        let mut mean = vec![0.0; dim];
        for &i in members {
            for (slot, v) in mean.iter_mut().zip(&features[i]) {
                *slot += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= count);
        let mut std = vec![0.0; dim];
        for &i in members {
            for (d, slot) in std.iter_mut().enumerate() {
                let diff = features[i][d] - mean[d];
                *slot += diff * diff;
            }
        }
        std.iter_mut().for_each(|v| *v = (*v / count).sqrt());
        for &i in members {
            for d in 0..dim {
                out[i][d] = (features[i][d] - mean[d]) / std[d].max(STD_EPSILON);
            }
        }
        stats.push(ClassStats { class, mean, std });
    }
    Ok((out, stats))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest_centroid(point: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    best
}

/// Sum of squared distances to assigned centroids.
pub fn kmeans_objective(features: &[Vec<f64>], centroids: &[Vec<f64>], assignment: &[usize]) -> f64 {
    features.iter().zip(assignment).map(|(f, &k)| sq_dist(f, &centroids[k])).sum()
}

/// Lloyd's algorithm with greedy farthest-point seeding.
///
/// The first centroid is a random sample; each further seed is the point
/// farthest from its nearest chosen centroid. Empty clusters are re-seeded
/// from the farthest point. Stops at an assignment fixpoint or `max_iters`.
pub fn kmeans(
    features: &[Vec<f64>],
    num_groups: usize,
    max_iters: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Grouping> {
    let n = features.len();
    if num_groups == 0 {
        return Err(Error::config("num_groups", "must be >= 1"));
    }
    if num_groups > n {
        return Err(Error::config(
            "num_groups",
            format!("{num_groups} groups but only {n} samples"),
        ));
    }

    // Greedy farthest-point seeding.
    let mut centroids: Vec<Vec<f64>> = vec![features[rng.random_range(0..n)].clone()];
    let mut min_d: Vec<f64> = features.iter().map(|f| sq_dist(f, &centroids[0])).collect();
    while centroids.len() < num_groups {
        let far = (0..n)
            .max_by(|&a, &b| min_d[a].partial_cmp(&min_d[b]).unwrap().then(b.cmp(&a)))
            .unwrap();
        centroids.push(features[far].clone());
        for (i, f) in features.iter().enumerate() {
            min_d[i] = min_d[i].min(sq_dist(f, centroids.last().unwrap()));
        }
    }

    let mut assignment: Vec<usize> =
        features.iter().map(|f| nearest_centroid(f, &centroids)).collect();
    for _ in 0..max_iters {
        // Means of the current assignment.
        let dim = features[0].len();
        let mut sums = vec![vec![0.0; dim]; num_groups];
        let mut counts = vec![0usize; num_groups];
        for (f, &k) in features.iter().zip(&assignment) {
            counts[k] += 1;
            for (slot, v) in sums[k].iter_mut().zip(f) {
                *slot += v;
            }
        }
        for k in 0..num_groups {
            if counts[k] > 0 {
                sums[k].iter_mut().for_each(|v| *v /= counts[k] as f64);
                centroids[k] = sums[k].clone();
            } else {
                // Re-seed an empty cluster from the farthest point.
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = sq_dist(&features[a], &centroids[assignment[a]]);
                        let db = sq_dist(&features[b], &centroids[assignment[b]]);
                        da.partial_cmp(&db).unwrap().then(b.cmp(&a))
                    })
                    .unwrap();
                centroids[k] = features[far].clone();
            }
        }
        let next: Vec<usize> = features.iter().map(|f| nearest_centroid(f, &centroids)).collect();
        let converged = next == assignment;
        assignment = next;
        if converged {
            break;
        }
    }

    Ok(Grouping { assignment, centroids, num_groups, standardized: false, class_stats: None })
}

/// Mean number of distinct class labels over non-empty groups.
pub fn unique_classes_per_group(grouping: &Grouping, labels: &[usize]) -> Result<f64> {
    if grouping.assignment.len() != labels.len() {
        return Err(Error::dimension(format!(
            "grouping covers {} samples, labels cover {}",
            grouping.assignment.len(),
            labels.len()
        )));
    }
    let mut per_group: Vec<BTreeMap<usize, ()>> = vec![BTreeMap::new(); grouping.num_groups];
    for (&g, &l) in grouping.assignment.iter().zip(labels) {
        per_group[g].insert(l, ());
    }
    let non_empty: Vec<usize> =
        per_group.iter().filter(|m| !m.is_empty()).map(|m| m.len()).collect();
    if non_empty.is_empty() {
        return Err(Error::Internal("grouping has no populated groups".into()));
    }
    Ok(non_empty.iter().sum::<usize>() as f64 / non_empty.len() as f64)
}

const KMEANS_MAX_ITERS: usize = 100;

/// Extract features f for every sample, optionally class-standardize, and
/// cluster into `num_groups` surrogate groups.
pub fn recompute_groups(
    params: &ModelParams,
    train: &Dataset,
    num_groups: usize,
    use_std: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Grouping> {
    let features: Vec<Vec<f64>> = train
        .samples
        .iter()
        .map(|s| params.forward_features(&s.features))
        .collect::<Result<Vec<_>>>()?;
    let labels = train.labels();
    let (clustered, stats) = if use_std {
        let (std_features, stats) = class_standardize(&features, &labels)?;
        (std_features, Some(stats))
    } else {
        (features, None)
    };
    let mut grouping = kmeans(&clustered, num_groups, KMEANS_MAX_ITERS, rng)?;
    grouping.standardized = use_std;
    grouping.class_stats = stats;
    Ok(grouping)
}

/// Dump `(sample_index, group_id)` rows for diagnostics.
pub fn save_grouping(grouping: &Grouping, path: &Path) -> Result<()> {
    let mut out = String::from("sample_index,group_id\n");
    for (i, g) in grouping.assignment.iter().enumerate() {
        let _ = writeln!(out, "{i},{g}");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

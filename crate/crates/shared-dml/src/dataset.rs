//! Synthetic latent-factor datasets, CSV persistence, and the class-disjoint
//! train/test split.
//!
//! The generator realizes a linear two-factor model: every sample is the sum
//! of a class signature, a shared-trait signature drawn independently of the
//! class, and Gaussian noise. Class signatures separate categories; the
//! shared factor is the cross-class structure the shared embedding head is
//! supposed to recover.
//!
//! # File format
//!
//! One header line `dim=<A>,classes=<C>`, then one row per sample with `A`
//! floats, the integer class label, and (optionally) the integer shared
//! factor as a trailing column. Floats are written in shortest round-trip
//! form, so save → load reproduces features exactly.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng;

/// One data point: an ambient feature vector plus labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub class_label: usize,
    /// Hidden generator attribute, kept for diagnostics; `None` for external
    /// data without a shared-factor column.
    pub shared_factor: Option<usize>,
}

/// Where a dataset came from.
#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Synthetic(SynthConfig),
    External,
}

/// An immutable table of samples. Safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    /// Size of the label space; labels are always `< num_classes`.
    pub num_classes: usize,
    pub ambient_dim: usize,
    pub provenance: Provenance,
}

/// Configuration of the synthetic generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub num_classes: usize,
    pub samples_per_class: usize,
    pub num_shared_factors: usize,
    pub ambient_dim: usize,
    pub class_signal_scale: f64,
    pub shared_signal_scale: f64,
    pub noise_scale: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        // Noise dominates raw ambient distances, so retrieval quality hinges
        // on how well the trained features isolate the signal subspaces.
        SynthConfig {
            num_classes: 20,
            samples_per_class: 50,
            num_shared_factors: 6,
            ambient_dim: 32,
            class_signal_scale: 1.0,
            shared_signal_scale: 1.2,
            noise_scale: 0.75,
            seed: 1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 || !self.num_classes.is_multiple_of(2) {
            return Err(Error::config(
                "num_classes",
                format!("must be even and positive, got {}", self.num_classes),
            ));
        }
        if self.samples_per_class < 2 {
            return Err(Error::config(
                "samples_per_class",
                format!("must be >= 2, got {}", self.samples_per_class),
            ));
        }
        if self.num_shared_factors == 0 {
            return Err(Error::config("num_shared_factors", "must be >= 1"));
        }
        if self.ambient_dim == 0 {
            return Err(Error::config("ambient_dim", "must be >= 1"));
        }
        for (field, v) in [
            ("class_signal_scale", self.class_signal_scale),
            ("shared_signal_scale", self.shared_signal_scale),
            ("noise_scale", self.noise_scale),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::config(field, format!("must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Distinct class labels present, ascending.
    pub fn present_classes(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self.samples.iter().map(|s| s.class_label).collect();
        set.into_iter().collect()
    }

    /// Class labels of all samples, in sample order.
    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.class_label).collect()
    }

    /// Indices of samples per present class, ascending by class.
    pub fn indices_by_class(&self) -> Vec<(usize, Vec<usize>)> {
        let classes = self.present_classes();
        classes
            .into_iter()
            .map(|c| {
                let idx = self
                    .samples
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| s.class_label == c)
                    .map(|(i, _)| i)
                    .collect();
                (c, idx)
            })
            .collect()
    }

    /// Check structural invariants: uniform ambient dimension, finite
    /// features, labels in range. Datasets may use only part of the label
    /// space (split views do); the generator additionally guarantees every
    /// class is populated.
    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.samples.iter().enumerate() {
            if s.features.len() != self.ambient_dim {
                return Err(Error::dimension(format!(
                    "sample {i} has {} features, expected {}",
                    s.features.len(),
                    self.ambient_dim
                )));
            }
            if s.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::dimension(format!("sample {i} has non-finite features")));
            }
            if s.class_label >= self.num_classes {
                return Err(Error::dimension(format!(
                    "sample {i} has label {} >= num_classes {}",
                    s.class_label, self.num_classes
                )));
            }
        }
        Ok(())
    }
}

/// Generate a synthetic dataset from the linear two-factor model.
///
/// Each sample is
/// `class_scale * Mc[:, class] + shared_scale * Ms[:, factor] + noise_scale * g`:
/// `Mc`, `Ms` are fixed random maps drawn from the seed, the shared factor
/// is uniform and independent of the class, and `g` is standard Gaussian
/// noise. Deterministic given the config.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut r = rng::seeded(cfg.seed, rng::stream::DATA);
    let a = cfg.ambient_dim;

    // Fixed factor signatures: one ambient column per class / shared value.
    let draw_map = |r: &mut rand_chacha::ChaCha8Rng, cols: usize| -> Vec<Vec<f64>> {
        (0..cols)
            .map(|_| (0..a).map(|_| r.sample::<f64, _>(StandardNormal)).collect())
            .collect()
    };
    let class_map = draw_map(&mut r, cfg.num_classes);
    let shared_map = draw_map(&mut r, cfg.num_shared_factors);

    let mut samples = Vec::with_capacity(cfg.num_classes * cfg.samples_per_class);
    for class in 0..cfg.num_classes {
        for _ in 0..cfg.samples_per_class {
            let factor = r.random_range(0..cfg.num_shared_factors);
            let mut features = vec![0.0; a];
            for d in 0..a {
                let noise: f64 = r.sample(StandardNormal);
                features[d] = cfg.class_signal_scale * class_map[class][d]
                    + cfg.shared_signal_scale * shared_map[factor][d]
                    + cfg.noise_scale * noise;
            }
            samples.push(Sample { features, class_label: class, shared_factor: Some(factor) });
        }
    }

    let ds = Dataset {
        samples,
        num_classes: cfg.num_classes,
        ambient_dim: a,
        provenance: Provenance::Synthetic(cfg.clone()),
    };
    ds.validate()?;
    debug_assert_eq!(ds.present_classes().len(), cfg.num_classes);
    Ok(ds)
}

/// Split by class: the first half of the label space goes to train, the rest
/// to test. Sample order is preserved within each part and the parts keep
/// their original labels, so the two label sets are disjoint.
pub fn split_by_class(ds: &Dataset) -> Result<(Dataset, Dataset)> {
    if ds.num_classes < 2 {
        return Err(Error::config(
            "num_classes",
            format!("need at least 2 classes to split, got {}", ds.num_classes),
        ));
    }
    let cut = ds.num_classes / 2;
    let part = |keep: &dyn Fn(usize) -> bool| Dataset {
        samples: ds.samples.iter().filter(|s| keep(s.class_label)).cloned().collect(),
        num_classes: ds.num_classes,
        ambient_dim: ds.ambient_dim,
        provenance: ds.provenance.clone(),
    };
    let train = part(&|c| c < cut);
    let test = part(&|c| c >= cut);
    Ok((train, test))
}

/// Write a dataset to the CSV format described in the module docs.
pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    ds.validate()?;
    let mut out = String::new();
    let _ = writeln!(out, "dim={},classes={}", ds.ambient_dim, ds.num_classes);
    for s in &ds.samples {
        for v in &s.features {
            let _ = write!(out, "{v},");
        }
        let _ = write!(out, "{}", s.class_label);
        if let Some(f) = s.shared_factor {
            let _ = write!(out, ",{f}");
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Read a dataset back. Errors carry the offending 1-based line number.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut lines = text.lines().enumerate();

    let (_, header) = lines.next().ok_or_else(|| Error::parse(1, "missing header"))?;
    let (ambient_dim, num_classes) = parse_header(header)?;

    let mut samples = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let with_factor = fields.len() == ambient_dim + 2;
        if !with_factor && fields.len() != ambient_dim + 1 {
            return Err(Error::parse(
                lineno,
                format!(
                    "row has {} fields, expected {} or {}",
                    fields.len(),
                    ambient_dim + 1,
                    ambient_dim + 2
                ),
            ));
        }
        let mut features = Vec::with_capacity(ambient_dim);
        for f in &fields[..ambient_dim] {
            let v: f64 = f
                .trim()
                .parse()
                .map_err(|_| Error::parse(lineno, format!("bad float {f:?}")))?;
            if !v.is_finite() {
                return Err(Error::parse(lineno, format!("non-finite feature value {f:?}")));
            }
            features.push(v);
        }
        let class_label: usize = fields[ambient_dim]
            .trim()
            .parse()
            .map_err(|_| Error::parse(lineno, format!("bad label {:?}", fields[ambient_dim])))?;
        if class_label >= num_classes {
            return Err(Error::parse(
                lineno,
                format!("label {class_label} >= classes {num_classes}"),
            ));
        }
        let shared_factor = if with_factor {
            Some(fields[ambient_dim + 1].trim().parse().map_err(|_| {
                Error::parse(lineno, format!("bad shared factor {:?}", fields[ambient_dim + 1]))
            })?)
        } else {
            None
        };
        samples.push(Sample { features, class_label, shared_factor });
    }

    let ds = Dataset { samples, num_classes, ambient_dim, provenance: Provenance::External };
    ds.validate().map_err(|e| match e {
        Error::Dimension(msg) => Error::parse(1, msg),
        other => other,
    })?;
    Ok(ds)
}

fn parse_header(header: &str) -> Result<(usize, usize)> {
    let bad = || Error::parse(1, format!("malformed header {header:?}, expected dim=<A>,classes=<C>"));
    let mut dim = None;
    let mut classes = None;
    for part in header.split(',') {
        let (key, value) = part.split_once('=').ok_or_else(bad)?;
        let value: usize = value.trim().parse().map_err(|_| bad())?;
        match key.trim() {
            "dim" => dim = Some(value),
            "classes" => classes = Some(value),
            _ => return Err(bad()),
        }
    }
    match (dim, classes) {
        (Some(d), Some(c)) if d > 0 && c > 0 => Ok((d, c)),
        _ => Err(bad()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> SynthConfig {
        SynthConfig {
            num_classes: 4,
            samples_per_class: 10,
            num_shared_factors: 3,
            ambient_dim: 6,
            class_signal_scale: 1.0,
            shared_signal_scale: 1.0,
            noise_scale: 0.1,
            seed: 99,
        }
    }

    #[test]
    fn generates_expected_counts() {
        let ds = generate_synthetic(&small_cfg()).unwrap();
        assert_eq!(ds.len(), 40);
        for c in 0..4 {
            assert_eq!(ds.samples.iter().filter(|s| s.class_label == c).count(), 10);
        }
    }

    #[test]
    fn generator_is_deterministic() {
        let a = generate_synthetic(&small_cfg()).unwrap();
        let b = generate_synthetic(&small_cfg()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pure_class_signal_collapses_within_class() {
        let cfg = SynthConfig { noise_scale: 0.0, shared_signal_scale: 0.0, ..small_cfg() };
        let ds = generate_synthetic(&cfg).unwrap();
        for c in 0..cfg.num_classes {
            let feats: Vec<&Vec<f64>> = ds
                .samples
                .iter()
                .filter(|s| s.class_label == c)
                .map(|s| &s.features)
                .collect();
            for f in &feats[1..] {
                assert_eq!(*f, feats[0]);
            }
        }
    }

    #[test]
    fn invalid_config_names_field() {
        let cfg = SynthConfig { num_classes: 5, ..small_cfg() };
        let err = generate_synthetic(&cfg).unwrap_err();
        assert!(matches!(err, Error::Config { field: "num_classes", .. }));
    }

    #[test]
    fn split_puts_first_half_in_train() {
        let ds = generate_synthetic(&small_cfg()).unwrap();
        let (train, test) = split_by_class(&ds).unwrap();
        assert_eq!(train.present_classes(), vec![0, 1]);
        assert_eq!(test.present_classes(), vec![2, 3]);
        assert_eq!(train.len() + test.len(), ds.len());
    }

    #[test]
    fn split_two_classes() {
        let cfg = SynthConfig { num_classes: 2, ..small_cfg() };
        let ds = generate_synthetic(&cfg).unwrap();
        let (train, test) = split_by_class(&ds).unwrap();
        assert_eq!(train.present_classes().len(), 1);
        assert_eq!(test.present_classes().len(), 1);
    }

    #[test]
    fn split_label_sets_disjoint() {
        let ds = generate_synthetic(&small_cfg()).unwrap();
        let (train, test) = split_by_class(&ds).unwrap();
        let train_set: BTreeSet<_> = train.present_classes().into_iter().collect();
        let test_set: BTreeSet<_> = test.present_classes().into_iter().collect();
        assert!(train_set.is_disjoint(&test_set));
    }

    #[test]
    fn save_load_round_trip() {
        let ds = generate_synthetic(&small_cfg()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.csv");
        save_dataset(&ds, &path).unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(back.len(), ds.len());
        assert_eq!(back.ambient_dim, ds.ambient_dim);
        assert_eq!(back.num_classes, ds.num_classes);
        for (a, b) in ds.samples.iter().zip(back.samples.iter()) {
            assert_eq!(a.features, b.features, "features must round-trip exactly");
            assert_eq!(a.class_label, b.class_label);
            assert_eq!(a.shared_factor, b.shared_factor);
        }
    }

    #[test]
    fn split_views_round_trip_through_csv() {
        // Split parts keep original labels, so a saved test split uses only
        // the upper half of the label space.
        let ds = generate_synthetic(&small_cfg()).unwrap();
        let (_, test) = split_by_class(&ds).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("test_split.csv");
        save_dataset(&test, &path).unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(back.present_classes(), vec![2, 3]);
        assert_eq!(back.num_classes, 4);
    }

    #[test]
    fn ragged_row_errors_with_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "dim=2,classes=1\n0.0,1.0,0\n0.5,0\n").unwrap();
        let err = load_dataset(&path).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_reports_missing_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        std::fs::write(&path, "").unwrap();
        let err = load_dataset(&path).unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 1);
                assert!(message.contains("missing header"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn class_and_shared_factor_are_independent() {
        // Empirical mutual information between the two label columns must be
        // near zero; the generator draws them independently.
        let cfg = SynthConfig {
            num_classes: 20,
            samples_per_class: 100,
            num_shared_factors: 4,
            ambient_dim: 4,
            ..small_cfg()
        };
        let ds = generate_synthetic(&cfg).unwrap();
        let n = ds.len() as f64;
        let mut joint = vec![vec![0.0; cfg.num_shared_factors]; cfg.num_classes];
        for s in &ds.samples {
            joint[s.class_label][s.shared_factor.unwrap()] += 1.0;
        }
        let class_marginal: Vec<f64> =
            joint.iter().map(|row| row.iter().sum::<f64>() / n).collect();
        let mut factor_marginal = vec![0.0; cfg.num_shared_factors];
        for row in &joint {
            for (f, v) in row.iter().enumerate() {
                factor_marginal[f] += v / n;
            }
        }
        let mut mi_bits = 0.0;
        for (c, row) in joint.iter().enumerate() {
            for (f, v) in row.iter().enumerate() {
                let p = v / n;
                if p > 0.0 {
                    mi_bits += p * (p / (class_marginal[c] * factor_marginal[f])).log2();
                }
            }
        }
        assert!(mi_bits < 0.05, "mutual information {mi_bits} bits too high");
    }
}

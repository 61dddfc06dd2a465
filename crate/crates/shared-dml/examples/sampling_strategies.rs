//! Assemble triplets under every strategy and demonstrate what
//! distance-weighted picking does to the sampled distance distribution.
//!
//! ```bash
//! cargo run --example sampling_strategies
//! ```

use rand::Rng;
use rand_distr::StandardNormal;
use shared_dml::dataset::{generate_synthetic, SynthConfig};
use shared_dml::rng;
use shared_dml::sampling::{
    build_batch, distance_weighted_pick, q_density, sample_discriminative_triplets,
    sample_interclass_triplets, NegativeStrategy, SamplerConfig, SharedStrategy,
};

fn sphere_point(dim: usize, r: &mut rand_chacha::ChaCha8Rng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

fn main() -> shared_dml::Result<()> {
    let ds = generate_synthetic(&SynthConfig {
        num_classes: 8,
        samples_per_class: 10,
        num_shared_factors: 3,
        ambient_dim: 8,
        class_signal_scale: 1.0,
        shared_signal_scale: 1.0,
        noise_scale: 0.3,
        seed: 11,
    })?;
    let labels = ds.labels();
    let mut r = rng::seeded(5, 0);
    let batch = build_batch(&ds, 16, 4, &mut r)?;
    let embeddings: Vec<Vec<f64>> = (0..batch.len()).map(|_| sphere_point(8, &mut r)).collect();

    // Discriminative triplets: same-class positive, other-class negative.
    let cfg = SamplerConfig::default();
    let discr = sample_discriminative_triplets(&batch, &labels, &embeddings, &cfg, &mut r)?;
    println!("discriminative: {} triplets, e.g. {:?}", discr.triplets.len(), discr.triplets[0]);

    // Inter-class triplets: three mutually different classes.
    for strategy in
        [SharedStrategy::Interclass, SharedStrategy::InterclassMinap, SharedStrategy::Unconstrained]
    {
        let cfg = SamplerConfig { shared_strategy: strategy, ..Default::default() };
        let out = sample_interclass_triplets(&batch, &labels, &embeddings, &cfg, &mut r)?;
        let t = out.triplets[0];
        println!(
            "{:<16}: {} triplets, labels of first = ({}, {}, {})",
            strategy.name(),
            out.triplets.len(),
            labels[t.anchor],
            labels[t.positive],
            labels[t.negative]
        );
    }

    // Negative strategies share the anchor/positive draws, so swapping the
    // strategy changes only the negatives.
    for strategy in
        [NegativeStrategy::Random, NegativeStrategy::Semihard, NegativeStrategy::DistanceWeighted]
    {
        let cfg = SamplerConfig { negative_strategy: strategy, ..Default::default() };
        let out = sample_discriminative_triplets(
            &batch,
            &labels,
            &embeddings,
            &cfg,
            &mut rng::seeded(31, 0),
        )?;
        let negs: Vec<usize> = out.triplets.iter().take(6).map(|t| t.negative).collect();
        println!("negatives under {:<18}: {negs:?}", strategy.name());
    }

    // On a high-dimensional sphere nearly all pairs sit near distance
    // sqrt(2); q(d) quantifies that concentration, and weighting picks by
    // 1/q flattens the sampled distances.
    let dim = 64;
    println!("\nq(d) on S^{dim}: q(0.6) = {:.3e}, q(1.414) = {:.3}", q_density(0.6, dim)?, q_density(std::f64::consts::SQRT_2, dim)?);
    let mut r = rng::seeded(17, 0);
    let anchor = sphere_point(dim, &mut r);
    let pool: Vec<Vec<f64>> = (0..128).map(|_| sphere_point(dim, &mut r)).collect();
    let refs: Vec<&[f64]> = pool.iter().map(|v| v.as_slice()).collect();
    let cfg = SamplerConfig::default();
    let dist = |c: &[f64]| -> f64 {
        anchor.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    };
    let spread = |ds: &[f64]| {
        let lo = ds.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ds.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    };
    let uniform: Vec<f64> = (0..2000).map(|_| dist(&pool[r.random_range(0..pool.len())])).collect();
    let weighted: Vec<f64> = (0..2000)
        .map(|_| {
            let i = distance_weighted_pick(&anchor, &refs, dim, &cfg, &mut r).unwrap();
            dist(&pool[i])
        })
        .collect();
    println!("uniform picks cover distances {:?}", spread(&uniform));
    println!("weighted picks cover distances {:?}", spread(&weighted));
    Ok(())
}

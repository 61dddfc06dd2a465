//! Generate a synthetic latent-factor dataset, persist it, and split it by
//! class.
//!
//! ```bash
//! cargo run --example generate_dataset
//! ```

use shared_dml::dataset::{
    generate_synthetic, load_dataset, save_dataset, split_by_class, SynthConfig,
};

fn main() -> shared_dml::Result<()> {
    // Every sample is class signature + shared-trait signature + noise. The
    // shared factor is drawn independently of the class, so the two label
    // columns carry disjoint information.
    let cfg = SynthConfig {
        num_classes: 10,
        samples_per_class: 20,
        num_shared_factors: 4,
        ambient_dim: 16,
        class_signal_scale: 1.0,
        shared_signal_scale: 1.2,
        noise_scale: 0.5,
        seed: 7,
    };
    let ds = generate_synthetic(&cfg)?;
    println!("generated {} samples in {} dims, {} classes", ds.len(), ds.ambient_dim, ds.num_classes);

    let dir = std::env::temp_dir().join("shared-dml-example");
    std::fs::create_dir_all(&dir).ok();
    let path = dir.join("synthetic.csv");
    save_dataset(&ds, &path)?;
    let back = load_dataset(&path)?;
    assert_eq!(back.samples[0].features, ds.samples[0].features);
    println!("round-tripped through {}", path.display());

    // The first half of the classes trains, the second half tests; the label
    // sets are disjoint, which is what makes retrieval on the test split a
    // transfer problem.
    let (train, test) = split_by_class(&ds)?;
    println!(
        "train classes {:?} ({} samples), test classes {:?} ({} samples)",
        train.present_classes(),
        train.len(),
        test.present_classes(),
        test.len()
    );
    Ok(())
}

//! Probe how each representation generalizes from train to test classes,
//! including the class head with freshly re-drawn weights over the trained
//! trunk.
//!
//! ```bash
//! cargo run --example generalization_gap
//! ```
//!
//! The discriminative head tends to show the largest (most negative) gap:
//! it fits the training classes hardest. The shared head and the raw trunk
//! features are less specialized and travel better.

use shared_dml::dataset::SynthConfig;
use shared_dml::experiment::{gap_probe, run_training, DatasetSource, ExperimentConfig};

fn main() -> shared_dml::Result<()> {
    let cfg = ExperimentConfig {
        dataset: DatasetSource::Synthetic(SynthConfig {
            num_classes: 12,
            samples_per_class: 30,
            ..SynthConfig::default()
        }),
        epochs: 15,
        ..Default::default()
    };
    let run = run_training(&cfg, 1)?;
    let rows = gap_probe(&run.final_params, &run.train, &run.test, 99)?;

    println!("{:<12} {:>8} {:>8} {:>8}", "repr", "train", "test", "gap");
    for row in rows {
        println!(
            "{:<12} {:>8.3} {:>8.3} {:>+8.3}",
            row.representation.name(),
            row.train_recall1,
            row.test_recall1,
            row.gap
        );
    }
    Ok(())
}

//! Compare training architectures: discriminative only, shared only, one
//! encoder for both tasks, dedicated encoders, and dedicated encoders with
//! decorrelation.
//!
//! ```bash
//! cargo run --example architecture_ablation
//! ```
//!
//! Expect the shared-only model to collapse on class retrieval (it never
//! sees a class boundary), the discriminative baseline to land in the
//! middle, and the dual-encoder variants to lead through the concatenated
//! embedding.

use shared_dml::dataset::SynthConfig;
use shared_dml::experiment::{run_ablation, DatasetSource, ExperimentConfig, Variant};
use shared_dml::losses::TrainMode;

fn main() -> shared_dml::Result<()> {
    let base = ExperimentConfig {
        dataset: DatasetSource::Synthetic(SynthConfig {
            num_classes: 12,
            samples_per_class: 30,
            ..SynthConfig::default()
        }),
        epochs: 15,
        seeds: vec![1, 2, 3],
        ..Default::default()
    };
    let variants: Vec<Variant> = TrainMode::ALL.into_iter().map(Variant::Mode).collect();
    let rows = run_ablation(&base, &variants)?;

    println!("{:<16} {:<10} {:>8} {:>8} {:>8} {:>8}", "variant", "repr", "R@1", "+-", "NMI", "+-");
    for row in rows {
        println!(
            "{:<16} {:<10} {:>8.3} {:>8.3} {:>8.3} {:>8.3}",
            row.variant,
            row.representation.name(),
            row.recall1_mean,
            row.recall1_std,
            row.nmi_mean,
            row.nmi_std
        );
    }
    Ok(())
}

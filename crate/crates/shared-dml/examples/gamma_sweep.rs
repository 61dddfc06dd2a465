//! Sweep the decorrelation weight gamma and observe the unimodal response:
//! mild decorrelation helps, excessive decorrelation drowns the ranking
//! signal.
//!
//! ```bash
//! cargo run --example gamma_sweep
//! ```

use shared_dml::dataset::SynthConfig;
use shared_dml::evaluation::Representation;
use shared_dml::experiment::{run_ablation, DatasetSource, ExperimentConfig, Variant};

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
    let gammas = [0.0, 0.3, 1.0, 3.0, 10_000.0];
    let rows = run_ablation(&base, &gammas.map(Variant::Gamma))?;

    println!("{:>12}  {:>10}  {:>8}", "gamma", "R@1 concat", "+-");
    for row in rows.iter().filter(|r| r.representation == Representation::Concat) {
        println!("{:>12}  {:>10.3}  {:>8.3}", row.variant, row.recall1_mean, row.recall1_std);
    }
    Ok(())
}

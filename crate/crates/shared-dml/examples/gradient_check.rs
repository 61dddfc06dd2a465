//! Check the hand-written backward pass against central finite differences,
//! including the gradient-reversal branch of the correlation term.
//!
//! ```bash
//! cargo run --example gradient_check
//! ```
//!
//! Under reversal the delivered encoder gradients are not the gradient of
//! the training objective itself: they are the gradient of the surrogate
//! `rank + gamma * r` (sign of the correlation term flipped), while the
//! regressor sees the true objective `rank - gamma * r`. The check below
//! differentiates each side against its own effective scalar.

use rand::Rng;
use shared_dml::losses::LossKind;
use shared_dml::model::{
    backward, forward_step, init_params, Dims, Head, ModelParams, StepSpec, TapeTriplet,
};
use shared_dml::rng;

fn main() -> shared_dml::Result<()> {
    let dims = Dims {
        ambient: 6,
        hidden: vec![8],
        feature: 8,
        class_dim: 5,
        shared_dim: 4,
        regressor_hidden: 8,
    };
    let params = init_params(&dims, 2024)?;
    let mut r = rng::seeded(42, 0);
    let inputs: Vec<Vec<f64>> =
        (0..6).map(|_| (0..6).map(|_| r.random_range(-1.5..1.5)).collect()).collect();
    let triplets = vec![
        TapeTriplet { anchor: 0, positive: 1, negative: 2 },
        TapeTriplet { anchor: 3, positive: 4, negative: 5 },
    ];
    let spec = StepSpec {
        inputs: &inputs,
        triplets: &triplets,
        ranking_head: Head::Class,
        kind: LossKind::Margin,
        alpha: 0.2,
        beta_learnable: true,
        gamma: 2.0,
        compute_correlation: true,
        reversal: true,
        decor_samples: None,
    };

    let tape = forward_step(&params, &spec)?;
    println!(
        "step objective {:.5} (rank {:.5}, correlation {:.5})",
        tape.scalar,
        tape.rank_mean,
        tape.correlation_mean.unwrap()
    );
    let grads = backward(&params, &tape)?;

    let scalar = |p: &ModelParams, encoder_view: bool| -> f64 {
        let t = forward_step(p, &spec).unwrap();
        if encoder_view {
            t.rank_mean + spec.gamma * t.correlation_mean.unwrap()
        } else {
            t.scalar
        }
    };

    let step = 1e-5;
    let mut worst: f64 = 0.0;
    for (t, (name, view)) in grads.flat_views().iter().enumerate() {
        let encoder_view = ModelParams::is_encoder_side(name);
        let mut tensor_worst: f64 = 0.0;
        for idx in 0..view.len() {
            let mut plus = params.clone();
            plus.flat_views_mut()[t].1[idx] += step;
            let mut minus = params.clone();
            minus.flat_views_mut()[t].1[idx] -= step;
            let fd = (scalar(&plus, encoder_view) - scalar(&minus, encoder_view)) / (2.0 * step);
            let got = view[idx];
            let rel = (fd - got).abs() / fd.abs().max(got.abs()).max(1e-6);
            tensor_worst = tensor_worst.max(rel);
        }
        worst = worst.max(tensor_worst);
        println!("{name:<18} worst relative error {tensor_worst:.2e}");
    }
    println!("overall worst relative error {worst:.2e}");
    assert!(worst <= 1e-4);
    Ok(())
}

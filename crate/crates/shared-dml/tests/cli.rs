//! End-to-end checks of the command-line interface: every subcommand, its
//! file outputs, and its failure behavior.

use std::path::Path;

use shared_dml::experiment::{cli_main, parse_ablation_csv, parse_metrics_csv};

const TINY_CONFIG: &str = "\
version = 1
num_classes = 8
samples_per_class = 12
num_shared_factors = 2
ambient_dim = 8
data_seed = 3
hidden = 12
feature_dim = 10
class_dim = 4
shared_dim = 4
regressor_hidden = 8
epochs = 2
batch_size = 12
m_per_class = 4
seeds = 5,6
representations = phi,phi_star,concat
";

fn write_config(dir: &Path) -> String {
    let path = dir.join("exp.conf");
    std::fs::write(&path, TINY_CONFIG).unwrap();
    path.to_str().unwrap().to_string()
}

fn run(args: &[&str]) -> i32 {
    cli_main(std::iter::once("shared-dml").chain(args.iter().copied()))
}

#[test]
fn generate_then_reload() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = dir.path().join("data.csv");
    assert_eq!(run(&["generate", "--config", &config, "--out", out.to_str().unwrap()]), 0);
    let ds = shared_dml::dataset::load_dataset(&out).unwrap();
    assert_eq!(ds.len(), 8 * 12);
    assert_eq!(ds.ambient_dim, 8);
}

#[test]
fn train_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = dir.path().join("run");
    assert_eq!(run(&["train", "--config", &config, "--out", out.to_str().unwrap()]), 0);
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    let rows = parse_metrics_csv(&metrics).unwrap();
    // 2 epochs x (3 loss rows + 2 splits x 3 representations x (3 recall Ks + nmi)).
    assert_eq!(rows.len(), 2 * (3 + 2 * 3 * 4));
    assert!(out.join("checkpoint_final.ckpt").exists());
    assert!(out.join("checkpoint_best.ckpt").exists());
    let params = shared_dml::model::load_checkpoint(&out.join("checkpoint_final.ckpt")).unwrap();
    assert_eq!(params.dims.class_dim, 4);
}

#[test]
fn eval_checkpoint_on_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let data = dir.path().join("data.csv");
    let out = dir.path().join("run");
    assert_eq!(run(&["generate", "--config", &config, "--out", data.to_str().unwrap()]), 0);
    assert_eq!(run(&["train", "--config", &config, "--out", out.to_str().unwrap()]), 0);
    let metrics_path = dir.path().join("eval.csv");
    let code = run(&[
        "eval",
        "--checkpoint",
        out.join("checkpoint_final.ckpt").to_str().unwrap(),
        "--dataset",
        data.to_str().unwrap(),
        "--recall-ks",
        "1,2",
        "--out",
        metrics_path.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let rows = parse_metrics_csv(&std::fs::read_to_string(&metrics_path).unwrap()).unwrap();
    // 5 representations x (2 recall Ks + nmi) at epoch 0.
    assert_eq!(rows.len(), 5 * 3);
    assert!(rows.iter().all(|r| r.0 == 0 && r.1 == "test"));
}

#[test]
fn gap_probe_has_one_row_per_representation_and_split() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = dir.path().join("run");
    assert_eq!(run(&["train", "--config", &config, "--out", out.to_str().unwrap()]), 0);
    let gap_path = dir.path().join("gap.csv");
    let code = run(&[
        "gap",
        "--config",
        &config,
        "--checkpoint",
        out.join("checkpoint_best.ckpt").to_str().unwrap(),
        "--out",
        gap_path.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(&gap_path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("representation,split,value"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 5 * 3);
    for rep in ["phi", "phi_star", "concat", "f", "phi_reinit"] {
        for split in ["train", "test", "gap"] {
            assert_eq!(
                rows.iter().filter(|r| r[0] == rep && r[1] == split).count(),
                1,
                "expected exactly one ({rep}, {split}) row"
            );
        }
    }
    // The gap rows are test minus train.
    for rep in ["phi", "phi_star", "concat", "f", "phi_reinit"] {
        let value = |split: &str| -> f64 {
            rows.iter().find(|r| r[0] == rep && r[1] == split).unwrap()[2].parse().unwrap()
        };
        assert!((value("gap") - (value("test") - value("train"))).abs() < 1e-12);
    }
}

#[test]
fn ablate_writes_parseable_table() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = dir.path().join("ablation.csv");
    let code = run(&[
        "ablate",
        "--config",
        &config,
        "--axis",
        "mode",
        "--values",
        "discr_only,both_sep",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let rows = parse_ablation_csv(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(rows.len(), 2 * 5);
    assert!(rows.iter().all(|r| r.seeds == 2));
}

#[test]
fn missing_config_fails_without_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let code = run(&["train", "--config", "/nonexistent/exp.conf", "--out", out.to_str().unwrap()]);
    assert_ne!(code, 0);
    assert!(!out.exists(), "no output directory may be created on failure");
}

#[test]
fn invalid_usage_fails() {
    assert_ne!(run(&["train"]), 0); // missing required flags
    assert_ne!(run(&["frobnicate"]), 0); // unknown subcommand
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = dir.path().join("ablation.csv");
    // Unknown axis is a validation error.
    assert_ne!(
        run(&["ablate", "--config", &config, "--axis", "nope", "--out", out.to_str().unwrap()]),
        0
    );
    assert!(!out.exists());
}

#[test]
fn config_validation_errors_are_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.conf");
    // gamma > 0 outside the decorrelation mode is rejected.
    std::fs::write(&path, "version = 1\nmode = discr_only\ngamma = 2\n").unwrap();
    let out = dir.path().join("run");
    let code =
        run(&["train", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_ne!(code, 0);
    assert!(!out.exists());
}

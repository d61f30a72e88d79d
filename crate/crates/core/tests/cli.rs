use std::path::Path;
use std::process::{Command, Output};

fn hyperrec(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hyperrec")).current_dir(dir).args(args).output().unwrap()
}

const SMALL: &str = "\
[geometry]
dim = 8

[train]
epochs = 3
patience = 3

[moe]
semantic_dim = 16
epochs = 2
patience = 2
";

#[test]
fn smoke_train_and_eval_base() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("hyperrec.toml"), SMALL).unwrap();
    let run = |args: &[&str]| {
        let out = hyperrec(dir.path(), &[&["--config", "hyperrec.toml", "--threads", "1"], args].concat());
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap()
    };
    run(&["prepare", "--synthetic"]);
    run(&["train", "--variant", "base"]);
    assert!(dir.path().join("runs/base/checkpoints/model.hypl").is_file());
    let log = std::fs::read_to_string(dir.path().join("runs/base/logs/epochs.csv")).unwrap();
    assert_eq!(log.lines().count(), 4, "{log}");
    let table = run(&["eval", "--variant", "base", "--longtail"]);
    assert!(table.contains("base"), "{table}");
    let csv = std::fs::read_to_string(dir.path().join("runs/base/metrics.csv")).unwrap();
    assert!(csv.starts_with("variant,K,recall,ndcg"), "{csv}");
    assert!(dir.path().join("runs/base/metrics_longtail.csv").is_file());
}

#[test]
fn missing_config_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = hyperrec(dir.path(), &["--config", "nope.toml", "train"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("nope.toml"), "{err}");
}

#[test]
fn eval_before_training_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("hyperrec.toml"), SMALL).unwrap();
    let out = hyperrec(dir.path(), &["--config", "hyperrec.toml", "eval", "--variant", "base"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("no checkpoint found"), "{err}");
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = hyperrec(dir.path(), &["train", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
}

//! The `hyperrec` commands end to end on a synthetic corpus, in a
//! temporary directory.

use hyperrec::cli::dispatch;

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let config = dir.path().join("hyperrec.toml");
    std::fs::write(
        &config,
        "[geometry]\ndim = 16\n[train]\nepochs = 40\npatience = 10\nlr = 0.003\n\
         [moe]\nexperts = 4\nsemantic_dim = 64\nlr = 0.01\n",
    )
    .expect("write config");
    let config = config.to_str().expect("utf-8 path");

    let steps: &[&[&str]] = &[
        &["prepare", "--synthetic"],
        &["annotate", "--mock"],
        &["summarize-users", "--mock"],
        &["encode", "--mock"],
        &["train", "--phase", "full", "--variant", "semantic"],
        &["eval", "--variant", "semantic", "--longtail"],
        &["analyze", "linkage", "--variant", "semantic"],
    ];
    for step in steps {
        let mut argv = vec!["hyperrec", "--config", config, "--threads", "1"];
        argv.extend_from_slice(step);
        let code = dispatch(argv);
        println!("$ hyperrec {} -> exit {code}", step.join(" "));
        if code != 0 {
            std::process::exit(code);
        }
    }
    let run = dir.path().join("runs/semantic");
    for f in ["config.resolved.toml", "checkpoints/meta.hypl", "checkpoints/model.hypl", "logs/epochs.csv", "metrics.csv", "linkage.csv"] {
        println!("{f}: {}", if run.join(f).is_file() { "present" } else { "missing" });
    }
}

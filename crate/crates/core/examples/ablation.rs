//! Trains the four variants on synthetic corpora and prints test metrics.
//!
//! ```text
//! cargo run --release --example ablation -- [seeds=1,2,3] [interactions=40] [section.key=value ...]
//! ```

use std::collections::BTreeMap;
use std::time::Instant;

use hyperrec::corpus::synthetic::SyntheticConfig;
use hyperrec::eval::{ndcg_at_k, recall_at_k};
use hyperrec::pipeline::{evaluate, run_variant, synthetic_data, Config, Variant};

fn main() -> hyperrec::Result<()> {
    let mut seeds = vec![1u64];
    let mut synth = SyntheticConfig::default();
    let mut overrides: Vec<String> = [
        "moe.semantic_dim=64",
        "moe.experts=4",
        "moe.lr=0.01",
        "train.epochs=60",
        "train.patience=10",
        "train.lr=0.01",
        "geometry.dim=16",
    ]
    .map(String::from)
    .to_vec();
    for a in std::env::args().skip(1) {
        if let Some(s) = a.strip_prefix("seeds=") {
            seeds = s.split(',').map(|x| x.parse().expect("seed")).collect();
        } else if let Some(m) = a.strip_prefix("interactions=") {
            synth.mean_interactions = m.parse().expect("mean interactions");
        } else {
            overrides.push(a);
        }
    }
    let base = Config::from_toml("", &overrides)?;

    let mut means: BTreeMap<Variant, f64> = BTreeMap::new();
    for &seed in &seeds {
        let mut cfg = base.clone();
        cfg.train.seed = seed;
        let synth = SyntheticConfig { seed, ..synth.clone() };
        let data = synthetic_data(&synth, cfg.moe.semantic_dim, seed)?;
        println!(
            "seed {seed}: {} users, {} items, {} tags, {} train pairs",
            data.num_users(),
            data.num_items(),
            data.num_tags(),
            data.split.train.len()
        );
        for v in Variant::ALL {
            let t = Instant::now();
            let run = run_variant(&cfg, v, &data, true)?;
            let st = &run.phase2.state;
            let r = evaluate(&st.users, &st.items, &data, &cfg, 20)?;
            let recall = recall_at_k(&r, &data.test_sets, 20);
            *means.entry(v).or_default() += recall / seeds.len() as f64;
            let p1 = run.phase1.as_ref().map(|p| format!(" meta {:.4}@{}", p.best_val, p.best_epoch)).unwrap_or_default();
            println!(
                "  {:<10} recall@20 {recall:.4} ndcg@20 {:.4} | val {:.4} -> {:.4}@{}{p1} ({:.1}s)",
                v.as_str(),
                ndcg_at_k(&r, &data.test_sets, 20),
                run.phase2.initial_val,
                st.best_metric,
                st.best_epoch,
                t.elapsed().as_secs_f64()
            );
        }
    }
    println!("mean test recall@20:");
    for (v, m) in &means {
        println!("  {:<10} {m:.4}", v.as_str());
    }
    Ok(())
}

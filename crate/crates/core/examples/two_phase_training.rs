//! Phase 1 trains the adapter against the frozen model; phase 2 starts the
//! ID tables from its outputs and trains the full objective.

use hyperrec::corpus::synthetic::SyntheticConfig;
use hyperrec::eval::{ndcg_at_k, recall_at_k};
use hyperrec::pipeline::{
    evaluate, init_from_moe, run_phase1, run_phase2, semantic_hash, structure_hash, synthetic_data, variant_matrix,
    Config, RunDir, Variant,
};

fn main() -> hyperrec::Result<()> {
    let cfg = Config::from_toml(
        "[geometry]\ndim = 16\n[train]\nepochs = 60\npatience = 10\n[moe]\nexperts = 4\nsemantic_dim = 64\nlr = 0.01\n",
        &[],
    )?;
    let data = synthetic_data(&SyntheticConfig::default(), cfg.moe.semantic_dim, 0)?;
    let (us, is) = (data.user_sem.as_ref().unwrap(), data.item_sem.as_ref().unwrap());
    let before = (semantic_hash(us), semantic_hash(is), structure_hash(&data.ui, cfg.train.layers, &cfg.manifold()));

    let p1 = run_phase1(&cfg, &data, true)?;
    println!("phase 1: val recall@20 {:.4} -> {:.4} at epoch {}", p1.initial_val, p1.best_val, p1.best_epoch);
    let after = (semantic_hash(us), semantic_hash(is), structure_hash(&data.ui, cfg.train.layers, &cfg.manifold()));
    println!("semantic tables and graph untouched: {}", before == after);

    let plan = variant_matrix(Variant::HyperLlm, &cfg.train);
    let p2 = run_phase2(&cfg, &plan, &data, init_from_moe(&p1.moe, &data, &cfg)?, true)?;
    for row in p2.log.iter().take(5) {
        println!(
            "  epoch {:>3}: ui {:.4} tag {:.4} cl {:.4} val {:.4}",
            row.epoch, row.loss_ui, row.loss_tag, row.loss_cl, row.val_recall
        );
    }
    let st = &p2.state;
    println!("phase 2: best val {:.4} at epoch {} of {}", st.best_metric, st.best_epoch, st.epoch);

    let ranked = evaluate(&st.users, &st.items, &data, &cfg, 20)?;
    println!(
        "test recall@20 {:.4} ndcg@20 {:.4}",
        recall_at_k(&ranked, &data.test_sets, 20),
        ndcg_at_k(&ranked, &data.test_sets, 20)
    );

    let run = RunDir::create(std::env::temp_dir().join("hyperrec-two-phase"))?;
    run.write_config(&cfg)?;
    run.save_tables(&st.users, &st.items, st.tags.as_ref())?;
    println!("checkpoint: {}", run.model_checkpoint().display());
    Ok(())
}

use std::collections::BTreeSet;
use std::sync::OnceLock;

use hyperrec::corpus::synthetic::SyntheticConfig;
use hyperrec::moe::transform_table;
use hyperrec::pipeline::{
    init_from_moe, random_init, run_phase1, run_phase2, run_variant, synthetic_data, variant_matrix, Config, Plan,
    Stage, TrainData, Variant,
};

fn small_config(extra: &[&str]) -> Config {
    let mut overrides: Vec<String> = [
        "geometry.dim=8",
        "moe.semantic_dim=16",
        "moe.experts=2",
        "moe.lr=0.01",
        "moe.epochs=50",
        "train.lr=0.01",
        "train.epochs=40",
        "train.patience=10",
        "train.batch_size=512",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    overrides.extend(extra.iter().map(|s| s.to_string()));
    Config::from_toml("", &overrides).unwrap()
}

fn small_data() -> &'static TrainData {
    static DATA: OnceLock<TrainData> = OnceLock::new();
    DATA.get_or_init(|| {
        let synth = SyntheticConfig { users: 150, items: 500, ..SyntheticConfig::default() };
        synthetic_data(&synth, 16, 0).unwrap()
    })
}

#[test]
fn phase_one_beats_the_untrained_adapter() {
    let cfg = small_config(&[]);
    let p1 = run_phase1(&cfg, small_data(), false).unwrap();
    assert!(p1.best_val > p1.initial_val, "{} vs {}", p1.best_val, p1.initial_val);
    assert!((1..=50).contains(&p1.best_epoch));
}

#[test]
fn early_stopping_halts_within_patience() {
    let cfg = small_config(&["train.epochs=200", "train.patience=5"]);
    let data = small_data();
    let plan = variant_matrix(Variant::Base, &cfg.train);
    let out = run_phase2(&cfg, &plan, data, random_init(data, &cfg), false).unwrap();
    let last = out.log.last().unwrap().epoch;
    assert!(last <= out.state.best_epoch + 5, "stopped at {last}, best {}", out.state.best_epoch);
    assert!(last < 200);
}

#[test]
fn losses_fall_for_every_variant() {
    let cfg = small_config(&[]);
    for v in Variant::ALL {
        let run = run_variant(&cfg, v, small_data(), false).unwrap();
        let totals: Vec<f64> = run.phase2.batches.iter().map(|b| b.total).collect();
        assert!(totals.len() >= 40, "{v}: only {} batches", totals.len());
        let head = totals[..20].iter().sum::<f64>() / 20.0;
        let tail = totals[totals.len() - 20..].iter().sum::<f64>() / 20.0;
        assert!(tail < head, "{v}: {tail} !< {head}");
    }
}

#[test]
fn zero_weight_without_tag_loss_matches_base() {
    let cfg = small_config(&["train.epochs=5", "train.patience=5", "train.w=0.0"]);
    let data = small_data();
    let base = run_phase2(&cfg, &variant_matrix(Variant::Base, &cfg.train), data, random_init(data, &cfg), false)
        .unwrap();
    let plan = Plan {
        variant: Variant::Structural,
        stages: BTreeSet::from([Stage::UserItemLoss, Stage::Contrastive]),
        w: 0.0,
    };
    let other = run_phase2(&cfg, &plan, data, random_init(data, &cfg), false).unwrap();
    assert_eq!(base.state.users.values(), other.state.users.values());
    assert_eq!(base.state.items.values(), other.state.items.values());
    let ui = |o: &hyperrec::pipeline::Phase2Outcome| o.batches.iter().map(|b| b.loss_ui).collect::<Vec<_>>();
    assert_eq!(ui(&base), ui(&other));
}

#[test]
fn moe_init_copies_adapter_outputs() {
    let cfg = small_config(&["moe.epochs=3", "moe.patience=3"]);
    let data = small_data();
    let p1 = run_phase1(&cfg, data, false).unwrap();
    let (users, items, tags) = init_from_moe(&p1.moe, data, &cfg).unwrap();
    let want_u = transform_table(data.user_sem.as_ref().unwrap(), &p1.moe);
    let want_i = transform_table(data.item_sem.as_ref().unwrap(), &p1.moe);
    assert!(users.values().iter().zip(&want_u).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert!(items.values().iter().zip(&want_i).all(|(a, b)| a.to_bits() == b.to_bits()));

    let tags = tags.unwrap();
    let v = tags.values();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
    assert!(mean.abs() < 4.0 * 0.1 / n.sqrt(), "mean {mean}");
    assert!((std - 0.1).abs() < 0.02, "std {std}");
}

#[test]
fn variants_differ_only_in_plan() {
    let cfg = Config::from_toml("", &[]).unwrap();
    let stages = |v| variant_matrix(v, &cfg.train).stages;
    assert!(stages(Variant::Base).is_subset(&stages(Variant::Structural)));
    assert!(stages(Variant::Semantic).is_subset(&stages(Variant::HyperLlm)));
    assert!(stages(Variant::Structural).is_subset(&stages(Variant::HyperLlm)));
    assert_eq!(variant_matrix(Variant::Semantic, &cfg.train).w, 0.0);
}

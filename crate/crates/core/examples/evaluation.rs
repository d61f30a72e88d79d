//! Ranking metrics, long-tail groups, convergence accounting and Ward
//! linkage on a trained model.

use hyperrec::corpus::synthetic::SyntheticConfig;
use hyperrec::eval::{
    convergence_report, group_members, longtail_groups, metric_rows, sample_indices, ward_linkage, LONGTAIL_GROUPS,
};
use hyperrec::pipeline::{evaluate, item_tangent_coords, run_variant, synthetic_data, Config, Variant};

fn main() -> hyperrec::Result<()> {
    let cfg = Config::from_toml(
        "[geometry]\ndim = 16\n[train]\nepochs = 200\npatience = 20\nlr = 0.003\n[moe]\nexperts = 4\nsemantic_dim = 64\n",
        &[],
    )?;
    let data = synthetic_data(&SyntheticConfig::default(), cfg.moe.semantic_dim, 0)?;
    let run = run_variant(&cfg, Variant::Base, &data, false)?;
    let st = &run.phase2.state;

    let ranked = evaluate(&st.users, &st.items, &data, &cfg, 20)?;
    let counts: Vec<usize> = data.train_sets.iter().map(Vec::len).collect();
    let groups = group_members(&longtail_groups(&counts, LONGTAIL_GROUPS)?, LONGTAIL_GROUPS);
    println!("variant,K,recall,ndcg,group");
    for r in metric_rows("base", &ranked, &data.test_sets, &[10, 20], Some(&groups)) {
        let g = r.group.map(|g| g.to_string()).unwrap_or_default();
        println!("{},{},{:.4},{:.4},{g}", r.variant, r.k, r.recall, r.ndcg);
    }
    for (g, members) in groups.iter().enumerate() {
        let c: Vec<usize> = members.iter().map(|&u| counts[u]).collect();
        println!("group {}: {} users, {}..={} train items", g + 1, c.len(), c.iter().min().unwrap(), c.iter().max().unwrap());
    }

    let log: Vec<(usize, f64)> = run.phase2.log.iter().map(|r| (r.epoch, r.val_recall)).collect();
    let rep = convergence_report(&log, None)?;
    println!("best val {:.4} at epoch {}", rep.best, rep.best_epoch);
    for (f, e) in rep.thresholds {
        println!("  {:.0}% of best first reached at epoch {e:?}", f * 100.0);
    }

    let coords = item_tangent_coords(&st.users, &st.items, &data, &cfg);
    let d = cfg.geometry.dim;
    let picked = sample_indices(data.num_items(), 100, 0);
    let pts: Vec<f64> = picked.iter().flat_map(|&i| coords[i * d..(i + 1) * d].to_vec()).collect();
    let rows = ward_linkage(&pts, d)?;
    let last = rows.last().unwrap();
    println!("ward linkage over {} items: {} merges, final height {:.4}", picked.len(), rows.len(), last.height);
    Ok(())
}

//! Ranking metrics, long-tail groups, convergence accounting, and Ward
//! linkage over learned representations.

mod linkage;
mod ranking;

use std::io::Write;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

pub use linkage::{ward_linkage, LinkageRow};
pub use ranking::{
    mean_over, ndcg_at_k, ndcg_per_user, rank_hyperbolic, rank_scores, recall_at_k, recall_per_user, top_k,
    RankingResult,
};

pub const DEFAULT_KS: [usize; 2] = [10, 20];
pub const LONGTAIL_GROUPS: usize = 5;
pub const LINKAGE_SAMPLE: usize = 500;

/// Group index (`0..g`) for each user.
///
/// Users are sorted by `(count, index)` and cut into contiguous blocks; the
/// last `n mod g` blocks hold one extra user.
pub fn longtail_groups(counts: &[usize], g: usize) -> Result<Vec<usize>> {
    if g == 0 {
        return Err(Error::Config("group count must be at least 1".into()));
    }
    let n = counts.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&u| (counts[u], u));
    let (base, extra) = (n / g, n % g);
    let mut out = vec![0; n];
    let mut pos = 0;
    for grp in 0..g {
        let len = base + usize::from(grp >= g - extra);
        for &u in &order[pos..pos + len] {
            out[u] = grp;
        }
        pos += len;
    }
    Ok(out)
}

/// Users of each group, ascending.
pub fn group_members(groups: &[usize], g: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); g];
    for (u, &grp) in groups.iter().enumerate() {
        out[grp].push(u);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub best_epoch: usize,
    pub best: f64,
    /// `(fraction, first epoch reaching fraction * reference)`.
    pub thresholds: Vec<(f64, Option<usize>)>,
}

pub const CONVERGENCE_FRACTIONS: [f64; 4] = [0.5, 0.8, 0.9, 1.0];

/// Best `(epoch, metric)` of a log and the first epoch reaching each
/// fraction of `reference_best` (the log's own best when `None`). The
/// earliest epoch wins ties for best.
pub fn convergence_report(log: &[(usize, f64)], reference_best: Option<f64>) -> Result<ConvergenceReport> {
    let Some(&(mut best_epoch, mut best)) = log.first() else {
        return Err(Error::Contract("convergence report needs a non-empty log".into()));
    };
    for &(e, v) in log {
        if v > best {
            best = v;
            best_epoch = e;
        }
    }
    let reference = reference_best.unwrap_or(best);
    let thresholds = CONVERGENCE_FRACTIONS
        .iter()
        .map(|&f| (f, log.iter().find(|(_, v)| *v >= f * reference).map(|(e, _)| *e)))
        .collect();
    Ok(ConvergenceReport { best_epoch, best, thresholds })
}

/// One row of the metrics CSV; `group` is empty for overall rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub variant: String,
    #[serde(rename = "K")]
    pub k: usize,
    pub recall: f64,
    pub ndcg: f64,
    pub group: Option<usize>,
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Overall and per-group rows for every `k`.
pub fn metric_rows(
    variant: &str,
    ranked: &RankingResult,
    truth: &[Vec<usize>],
    ks: &[usize],
    groups: Option<&[Vec<usize>]>,
) -> Vec<MetricRow> {
    let mut rows = Vec::new();
    for &k in ks {
        let rec = recall_per_user(ranked, truth, k);
        let ndcg = ndcg_per_user(ranked, truth, k);
        rows.push(MetricRow {
            variant: variant.into(),
            k,
            recall: mean_over(&rec, None),
            ndcg: mean_over(&ndcg, None),
            group: None,
        });
        for (g, members) in groups.unwrap_or(&[]).iter().enumerate() {
            rows.push(MetricRow {
                variant: variant.into(),
                k,
                recall: mean_over(&rec, Some(members)),
                ndcg: mean_over(&ndcg, Some(members)),
                group: Some(g + 1),
            });
        }
    }
    rows
}

/// Seeded sample of at most `cap` indices out of `0..n`, ascending.
pub fn sample_indices(n: usize, cap: usize, seed: u64) -> Vec<usize> {
    if n <= cap {
        return (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = sample(&mut rng, n, cap).into_vec();
    v.sort_unstable();
    v
}

/// `a,b,height,size` CSV plus a `<file>.tsv` sidecar of `row<TAB>id` for the
/// clustered points.
pub fn write_linkage_csv(path: &Path, rows: &[LinkageRow], ids: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["a", "b", "height", "size"])?;
    for r in rows {
        w.write_record([r.a.to_string(), r.b.to_string(), format!("{}", r.height), r.size.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    let side = crate::augment::sidecar_path(path);
    let mut f = std::io::BufWriter::new(std::fs::File::create(&side).map_err(|e| Error::io(&side, e))?);
    for (i, id) in ids.iter().enumerate() {
        writeln!(f, "{i}\t{id}").map_err(|e| Error::io(&side, e))?;
    }
    f.flush().map_err(|e| Error::io(&side, e))
}

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::hyperboloid_distance_raw;

/// Per-user top-K lists over the full catalog with masked items removed.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingResult {
    pub k: usize,
    /// `top[u]` holds item indices, best first.
    pub top: Vec<Vec<usize>>,
    pub scores: Vec<Vec<f64>>,
    /// Names of the masked sets (e.g. `["train", "val"]`).
    pub masked: Vec<&'static str>,
}

/// Indices of the `k` highest scores outside `masked` (sorted). Ties go to
/// the smaller item index.
pub fn top_k(scores: &[f64], masked: &[usize], k: usize) -> Vec<(usize, f64)> {
    let mut cand: Vec<(usize, f64)> =
        scores.iter().enumerate().filter(|(i, _)| masked.binary_search(i).is_err()).map(|(i, &s)| (i, s)).collect();
    let better = |a: &(usize, f64), b: &(usize, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
    let k = k.min(cand.len());
    if k < cand.len() && k > 0 {
        cand.select_nth_unstable_by(k - 1, better);
    }
    cand.truncate(k);
    cand.sort_by(better);
    cand
}

/// Ranks from an explicit `users x items` score matrix.
pub fn rank_scores(scores: &[Vec<f64>], masks: &[&[Vec<usize>]], names: &[&'static str], k: usize) -> Result<RankingResult> {
    if k == 0 {
        return Err(Error::Config("K must be at least 1".into()));
    }
    let n_items = scores.first().map_or(0, Vec::len);
    if k > n_items {
        return Err(Error::Config(format!("K = {k} exceeds the catalog size {n_items}")));
    }
    let rows: Vec<(Vec<usize>, Vec<f64>)> = scores
        .par_iter()
        .enumerate()
        .map(|(u, s)| {
            let mut m: Vec<usize> = masks.iter().flat_map(|set| set[u].iter().copied()).collect();
            m.sort_unstable();
            top_k(s, &m, k).into_iter().unzip()
        })
        .collect();
    let (top, scores) = rows.into_iter().unzip();
    Ok(RankingResult { k, top, scores, masked: names.to_vec() })
}

/// Ranks items for every user by `-d(h_u, h_i)^power`.
///
/// `users` and `items` are row-major hyperboloid coordinates of width
/// `dim + 1`.
pub fn rank_hyperbolic(
    users: &[f64],
    items: &[f64],
    dim: usize,
    k_curv: f64,
    power: u8,
    masks: &[&[Vec<usize>]],
    names: &[&'static str],
    k: usize,
) -> Result<RankingResult> {
    let w = dim + 1;
    let scores: Vec<Vec<f64>> = users
        .par_chunks(w)
        .map(|hu| {
            items
                .chunks(w)
                .map(|hi| {
                    let d = hyperboloid_distance_raw(hu, hi, k_curv);
                    if power == 1 {
                        -d
                    } else {
                        -d * d
                    }
                })
                .collect()
        })
        .collect();
    rank_scores(&scores, masks, names, k)
}

/// Per-user recall at `k` (`None` for users without truth).
pub fn recall_per_user(ranked: &RankingResult, truth: &[Vec<usize>], k: usize) -> Vec<Option<f64>> {
    assert!(k >= 1 && k <= ranked.k, "K must be in 1..={}", ranked.k);
    truth
        .iter()
        .zip(&ranked.top)
        .map(|(t, top)| {
            if t.is_empty() {
                return None;
            }
            let hits = top[..k.min(top.len())].iter().filter(|i| t.contains(i)).count();
            Some(hits as f64 / t.len() as f64)
        })
        .collect()
}

/// Per-user binary-relevance NDCG at `k`.
pub fn ndcg_per_user(ranked: &RankingResult, truth: &[Vec<usize>], k: usize) -> Vec<Option<f64>> {
    assert!(k >= 1 && k <= ranked.k, "K must be in 1..={}", ranked.k);
    let disc = |r: usize| 1.0 / ((r + 1) as f64).log2();
    truth
        .iter()
        .zip(&ranked.top)
        .map(|(t, top)| {
            if t.is_empty() {
                return None;
            }
            let dcg: f64 = top[..k.min(top.len())]
                .iter()
                .enumerate()
                .filter(|(_, i)| t.contains(i))
                .map(|(pos, _)| disc(pos + 1))
                .sum();
            let idcg: f64 = (1..=k.min(t.len())).map(disc).sum();
            Some(dcg / idcg)
        })
        .collect()
}

/// Mean of the defined entries, restricted to `users` when given. Zero when
/// nothing is defined.
pub fn mean_over(values: &[Option<f64>], users: Option<&[usize]>) -> f64 {
    let picked: Vec<f64> = match users {
        Some(us) => us.iter().filter_map(|&u| values[u]).collect(),
        None => values.iter().filter_map(|v| *v).collect(),
    };
    if picked.is_empty() {
        0.0
    } else {
        picked.iter().sum::<f64>() / picked.len() as f64
    }
}

pub fn recall_at_k(ranked: &RankingResult, truth: &[Vec<usize>], k: usize) -> f64 {
    mean_over(&recall_per_user(ranked, truth, k), None)
}

pub fn ndcg_at_k(ranked: &RankingResult, truth: &[Vec<usize>], k: usize) -> f64 {
    mean_over(&ndcg_per_user(ranked, truth, k), None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ranked(top: Vec<Vec<usize>>, k: usize) -> RankingResult {
        let scores = top.iter().map(|t| vec![0.0; t.len()]).collect();
        RankingResult { k, top, scores, masked: vec![] }
    }

    #[test]
    fn recall_examples() {
        let r = ranked(vec![vec![3, 1, 2]], 3);
        assert_eq!(recall_at_k(&r, &[vec![1, 2]], 3), 1.0);
        assert_eq!(recall_at_k(&r, &[vec![1, 9]], 3), 0.5);
        // users without truth are skipped
        assert_eq!(recall_at_k(&ranked(vec![vec![0], vec![1]], 1), &[vec![0], vec![]], 1), 1.0);
    }

    #[test]
    fn ndcg_examples() {
        let r = ranked(vec![vec![5, 6, 7]], 3);
        assert_eq!(ndcg_at_k(&r, &[vec![5]], 3), 1.0);
        assert!((ndcg_at_k(&r, &[vec![7]], 3) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn masking_and_ties() {
        let s = vec![vec![0.5, 0.9, 0.9, 0.1, 0.7]];
        let train = vec![vec![1]];
        let r = rank_scores(&s, &[&train], &["train"], 3).unwrap();
        assert_eq!(r.top[0], vec![2, 4, 0]);
        assert!(rank_scores(&s, &[&train], &["train"], 6).is_err());
        assert!(rank_scores(&s, &[&train], &["train"], 0).is_err());
    }

    #[test]
    fn monotone_transform_invariance() {
        let s: Vec<Vec<f64>> = vec![vec![0.3, -1.0, 2.0, 0.7, 0.0, 1.5]];
        let t: Vec<Vec<f64>> = s.iter().map(|r| r.iter().map(|x| x.exp() * 3.0 + 1.0).collect()).collect();
        let none: Vec<Vec<usize>> = vec![vec![]];
        let a = rank_scores(&s, &[&none], &[], 4).unwrap();
        let b = rank_scores(&t, &[&none], &[], 4).unwrap();
        assert_eq!(a.top, b.top);
    }
}

//! Synthetic review corpus with a planted three-level taxonomy.
//!
//! Items hang off the leaves of a complete `branching`-ary tree of depth 3.
//! Each user prefers one leaf; draws come from that leaf, its sibling
//! leaves, the rest of its top-level subtree, or the whole catalog with
//! fixed probabilities. Item metadata carries the category path, so an
//! annotator that reads categories recovers the taxonomy exactly.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use super::files::ItemMeta;
use super::ingest::RawReview;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub branching: usize,
    pub items: usize,
    pub users: usize,
    /// Interactions per user: `min + Exp(mean - min)`, capped at `max`.
    pub min_interactions: usize,
    pub mean_interactions: f64,
    pub max_interactions: usize,
    pub p_leaf: f64,
    pub p_sibling: f64,
    pub p_subtree: f64,
    /// Share of interactions that get a rating below 4.
    pub low_rating_rate: f64,
    /// Exponent of the within-leaf popularity power law.
    pub popularity_skew: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            branching: 4,
            items: 2000,
            users: 500,
            min_interactions: 8,
            mean_interactions: 40.0,
            max_interactions: 80,
            p_leaf: 0.4,
            p_sibling: 0.25,
            p_subtree: 0.2,
            low_rating_rate: 0.1,
            popularity_skew: 0.7,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub reviews: Vec<RawReview>,
    pub metadata: Vec<ItemMeta>,
    /// Leaf index of every item.
    pub item_leaf: Vec<usize>,
    /// Preferred leaf of every user.
    pub user_leaf: Vec<usize>,
}

const ADJECTIVES: &[&str] = &[
    "classic", "deluxe", "mini", "giant", "smart", "vintage", "bright", "quiet", "rapid", "soft", "sturdy",
    "compact", "premium", "basic", "colorful", "portable", "modern", "wooden", "metal", "travel",
];
const NOUNS: &[&str] = &[
    "kit", "set", "pack", "edition", "bundle", "model", "series", "collection", "starter", "box", "case", "combo",
];

fn letters(path: &[usize]) -> String {
    path.iter().map(|&i| (b'a' + i as u8) as char).collect()
}

/// Category names along the path to leaf `leaf`.
pub fn leaf_path(leaf: usize, branching: usize) -> [String; 3] {
    let p = [leaf / (branching * branching), (leaf / branching) % branching, leaf % branching];
    [format!("l1{}", letters(&p[..1])), format!("l2{}", letters(&p[..2])), format!("l3{}", letters(&p[..3]))]
}

pub fn generate(cfg: &SyntheticConfig) -> SyntheticCorpus {
    let b = cfg.branching;
    let leaves = b * b * b;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let item_leaf: Vec<usize> = (0..cfg.items).map(|i| i % leaves).collect();
    let mut by_leaf: Vec<Vec<usize>> = vec![Vec::new(); leaves];
    for (i, &l) in item_leaf.iter().enumerate() {
        by_leaf[l].push(i);
    }
    // popularity order inside each leaf
    for items in by_leaf.iter_mut() {
        items.shuffle(&mut rng);
    }
    let weights: Vec<Vec<f64>> = by_leaf
        .iter()
        .map(|items| (0..items.len()).map(|r| 1.0 / ((r + 1) as f64).powf(cfg.popularity_skew)).collect())
        .collect();

    let metadata = (0..cfg.items)
        .map(|i| {
            let path = leaf_path(item_leaf[i], b);
            let adj = ADJECTIVES[rng.random_range(0..ADJECTIVES.len())];
            let noun = NOUNS[rng.random_range(0..NOUNS.len())];
            ItemMeta {
                item_id: format!("item{i:05}"),
                title: format!("{adj} {noun} sku{i:05}"),
                brand: format!("brand{:02}", rng.random_range(0..40)),
                description: format!("a {adj} {noun}"),
                categories: path.to_vec(),
            }
        })
        .collect();

    let pick_in_leaf = |leaf: usize, rng: &mut ChaCha8Rng| -> usize {
        let w = &weights[leaf];
        let total: f64 = w.iter().sum();
        let mut x = rng.random_range(0.0..total);
        for (r, wr) in w.iter().enumerate() {
            if x < *wr {
                return by_leaf[leaf][r];
            }
            x -= wr;
        }
        *by_leaf[leaf].last().unwrap()
    };

    let extra = Exp::new(1.0 / (cfg.mean_interactions - cfg.min_interactions as f64).max(1e-9)).unwrap();
    let mut reviews = Vec::new();
    let mut user_leaf = Vec::with_capacity(cfg.users);
    for u in 0..cfg.users {
        let leaf = rng.random_range(0..leaves);
        user_leaf.push(leaf);
        let l2_base = leaf - leaf % b;
        let l1_base = leaf - leaf % (b * b);
        let want = (cfg.min_interactions + extra.sample(&mut rng).round() as usize).min(cfg.max_interactions);
        let mut chosen = std::collections::BTreeSet::new();
        let mut attempts = 0;
        while chosen.len() < want && attempts < want * 50 {
            attempts += 1;
            let x: f64 = rng.random();
            let target = if x < cfg.p_leaf {
                leaf
            } else if x < cfg.p_leaf + cfg.p_sibling {
                l2_base + rng.random_range(0..b)
            } else if x < cfg.p_leaf + cfg.p_sibling + cfg.p_subtree {
                l1_base + rng.random_range(0..b * b)
            } else {
                rng.random_range(0..leaves)
            };
            if by_leaf[target].is_empty() {
                continue;
            }
            chosen.insert(pick_in_leaf(target, &mut rng));
        }
        let mut items: Vec<usize> = chosen.into_iter().collect();
        items.shuffle(&mut rng);
        for i in items {
            let rating = if rng.random::<f64>() < cfg.low_rating_rate {
                rng.random_range(1..=3) as f64
            } else {
                rng.random_range(4..=5) as f64
            };
            reviews.push(RawReview {
                user_id: format!("user{u:05}"),
                item_id: format!("item{i:05}"),
                rating,
                timestamp: 1_600_000_000 + rng.random_range(0..10_000_000),
            });
        }
    }
    SyntheticCorpus { reviews, metadata, item_leaf, user_leaf }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paths_follow_the_tree() {
        assert_eq!(leaf_path(0, 4), ["l1a".to_string(), "l2aa".into(), "l3aaa".into()]);
        assert_eq!(leaf_path(63, 4), ["l1d".to_string(), "l2dd".into(), "l3ddd".into()]);
        assert_eq!(leaf_path(6, 4), ["l1a".to_string(), "l2ab".into(), "l3abc".into()]);
    }

    #[test]
    fn deterministic_and_sized() {
        let cfg = SyntheticConfig { items: 200, users: 40, ..Default::default() };
        let a = generate(&cfg);
        let b = generate(&cfg);
        assert_eq!(a.reviews, b.reviews);
        assert_eq!(a.metadata.len(), 200);
        let per_user = a.reviews.iter().filter(|r| r.user_id == "user00000").count();
        assert!(per_user >= cfg.min_interactions);
    }
}

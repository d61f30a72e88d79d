use rand::Rng;

use super::graph::Adjacency;

const REJECTION_TRIES: usize = 100;

/// Uniform draw from the nodes of `block` that share no edge with `anchor`.
///
/// Rejection sampling with a fixed retry cap, then a linear scan over the
/// remaining candidates. Returns `None` when every node of the block is
/// adjacent to `anchor` (or is `anchor` itself).
pub fn sample_negative<R: Rng + ?Sized>(anchor: usize, block: usize, adj: &Adjacency, rng: &mut R) -> Option<usize> {
    let range = adj.block_range(block);
    if range.is_empty() {
        return None;
    }
    let excluded = |v: usize| v == anchor || adj.has_edge(anchor, v);
    for _ in 0..REJECTION_TRIES {
        let v = rng.random_range(range.clone());
        if !excluded(v) {
            return Some(v);
        }
    }
    let free: Vec<usize> = range.filter(|&v| !excluded(v)).collect();
    if free.is_empty() {
        None
    } else {
        Some(free[rng.random_range(0..free.len())])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn forced_when_one_item_left() {
        let adj = Adjacency::bipartite(1, 5, &[(0, 0), (0, 1), (0, 2), (0, 4)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            assert_eq!(sample_negative(0, 1, &adj, &mut rng), Some(1 + 3));
        }
        let full = Adjacency::bipartite(1, 2, &[(0, 0), (0, 1)]).unwrap();
        assert_eq!(sample_negative(0, 1, &full, &mut rng), None);
    }

    #[test]
    fn same_seed_same_sequence() {
        let adj = Adjacency::bipartite(2, 30, &[(0, 3), (0, 7), (1, 2)]).unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|_| sample_negative(0, 1, &adj, &mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draw(4), draw(4));
        assert_ne!(draw(4), draw(5));
    }

    #[test]
    fn empirical_distribution_is_uniform() {
        // 10-item toy set, user 0 owns items 2 and 5: 8 admissible items
        let adj = Adjacency::bipartite(1, 10, &[(0, 2), (0, 5)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let draws = 100_000;
        let mut counts = [0usize; 10];
        for _ in 0..draws {
            counts[sample_negative(0, 1, &adj, &mut rng).unwrap() - 1] += 1;
        }
        assert_eq!(counts[2], 0);
        assert_eq!(counts[5], 0);
        let p = 1.0 / 8.0;
        let mean = draws as f64 * p;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for (i, &c) in counts.iter().enumerate() {
            if i != 2 && i != 5 {
                assert!((c as f64 - mean).abs() <= 3.0 * sigma, "item {i}: {c}");
            }
        }
    }
}

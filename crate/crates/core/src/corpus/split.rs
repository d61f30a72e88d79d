use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ingest::InteractionSet;
use crate::error::{Error, Result};
use crate::model::Adjacency;

/// Relative sizes of train / validation / test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitRatios {
    pub train: u64,
    pub val: u64,
    pub test: u64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self { train: 8, val: 1, test: 1 }
    }
}

/// Indexed interactions split into train / validation / test.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub users: Vec<String>,
    pub items: Vec<String>,
    pub train: Vec<(usize, usize)>,
    pub val: Vec<(usize, usize)>,
    pub test: Vec<(usize, usize)>,
}

fn per_user(n_users: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); n_users];
    for &(u, i) in edges {
        out[u].push(i);
    }
    out.iter_mut().for_each(|v| v.sort_unstable());
    out
}

impl SplitDataset {
    /// Builds a dataset from explicit edge lists and checks its invariants.
    pub fn new(
        users: Vec<String>,
        items: Vec<String>,
        mut train: Vec<(usize, usize)>,
        mut val: Vec<(usize, usize)>,
        mut test: Vec<(usize, usize)>,
    ) -> Result<Self> {
        train.sort_unstable();
        val.sort_unstable();
        test.sort_unstable();
        let ds = Self { users, items, train, val, test };
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<()> {
        let (nu, ni) = (self.users.len(), self.items.len());
        let mut seen = std::collections::HashSet::new();
        for &(u, i) in self.train.iter().chain(&self.val).chain(&self.test) {
            if u >= nu || i >= ni {
                return Err(Error::Data(format!("edge ({u}, {i}) out of range")));
            }
            if !seen.insert((u, i)) {
                return Err(Error::Data(format!("edge ({u}, {i}) appears twice across splits")));
            }
        }
        let mut user_seen = vec![false; nu];
        let mut item_seen = vec![false; ni];
        for &(u, i) in &self.train {
            user_seen[u] = true;
            item_seen[i] = true;
        }
        if let Some(u) = user_seen.iter().position(|s| !s) {
            return Err(Error::Data(format!("user {} has no training interaction", self.users[u])));
        }
        if let Some(i) = item_seen.iter().position(|s| !s) {
            return Err(Error::Data(format!("item {} has no training interaction", self.items[i])));
        }
        Ok(())
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    pub fn train_sets(&self) -> Vec<Vec<usize>> {
        per_user(self.num_users(), &self.train)
    }

    pub fn val_sets(&self) -> Vec<Vec<usize>> {
        per_user(self.num_users(), &self.val)
    }

    pub fn test_sets(&self) -> Vec<Vec<usize>> {
        per_user(self.num_users(), &self.test)
    }

    /// Bipartite user-item graph over the training edges.
    pub fn train_adjacency(&self) -> Adjacency {
        Adjacency::bipartite(self.num_users(), self.num_items(), &self.train).expect("validated split")
    }

    pub fn item_index(&self) -> BTreeMap<&str, usize> {
        self.items.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect()
    }
}

/// Held-out counts per user from the cumulative global proportion.
struct Allocator {
    ratios: SplitRatios,
    seen: u64,
    val: u64,
    test: u64,
}

impl Allocator {
    fn new(ratios: SplitRatios) -> Self {
        Self { ratios, seen: 0, val: 0, test: 0 }
    }

    /// `(val, test)` for a user with `n` interactions; leaves `>= 1` for train.
    fn next(&mut self, n: usize) -> (usize, usize) {
        let total = self.ratios.train + self.ratios.val + self.ratios.test;
        let n = n as u64;
        self.seen += n;
        let mut n_val = self.seen * self.ratios.val / total - self.val;
        let mut n_test = self.seen * self.ratios.test / total - self.test;
        while n_val + n_test >= n.max(1) {
            if n_test >= n_val && n_test > 0 {
                n_test -= 1;
            } else {
                n_val -= 1;
            }
        }
        self.val += n_val;
        self.test += n_test;
        (n_val as usize, n_test as usize)
    }
}

/// Per-user random split.
///
/// Users are visited in id order; each user's items are shuffled with one
/// seeded generator. Validation and test counts follow the cumulative global
/// proportion (integer arithmetic over the running interaction count), so
/// fractional shares carry over between users. Each user keeps at least one
/// training edge; items that end up without a training edge have one of
/// their held-out edges moved back to train.
pub fn split(interactions: &InteractionSet, ratios: SplitRatios, seed: u64) -> Result<SplitDataset> {
    if ratios.train == 0 || ratios.val == 0 || ratios.test == 0 {
        return Err(Error::Config(format!("split ratios must be positive, got {ratios:?}")));
    }
    if interactions.is_empty() {
        return Err(Error::EmptyCorpus("nothing to split".into()));
    }
    let users: Vec<String> = interactions.user_counts().keys().map(|s| s.to_string()).collect();
    let items: Vec<String> = interactions.item_counts().keys().map(|s| s.to_string()).collect();
    let uidx: BTreeMap<&str, usize> = users.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let iidx: BTreeMap<&str, usize> = items.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();

    let mut by_user = vec![Vec::new(); users.len()];
    for r in interactions.records() {
        by_user[uidx[r.user_id.as_str()]].push(iidx[r.item_id.as_str()]);
    }

    let mut alloc = Allocator::new(ratios);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (u, its) in by_user.iter_mut().enumerate() {
        its.sort_unstable();
        its.shuffle(&mut rng);
        let (n_val, n_test) = alloc.next(its.len());
        for (pos, &i) in its.iter().enumerate() {
            if pos < n_val {
                val.push((u, i));
            } else if pos < n_val + n_test {
                test.push((u, i));
            } else {
                train.push((u, i));
            }
        }
    }

    let mut in_train = vec![false; items.len()];
    train.iter().for_each(|&(_, i)| in_train[i] = true);
    for held in [&mut val, &mut test] {
        held.sort_unstable();
        let mut kept = Vec::with_capacity(held.len());
        for &(u, i) in held.iter() {
            if in_train[i] {
                kept.push((u, i));
            } else {
                in_train[i] = true;
                train.push((u, i));
            }
        }
        *held = kept;
    }
    SplitDataset::new(users, items, train, val, test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ingest, RawReview};

    fn corpus(spec: &[(&str, usize)]) -> InteractionSet {
        let mut rs = Vec::new();
        for &(u, n) in spec {
            for i in 0..n {
                rs.push(RawReview { user_id: u.into(), item_id: format!("i{i:02}"), rating: 5.0, timestamp: 0 });
            }
        }
        ingest(rs, 4.0, 0).unwrap()
    }

    #[test]
    fn ten_interactions_split_8_1_1() {
        let mut alloc = Allocator::new(SplitRatios::default());
        assert_eq!(alloc.next(10), (1, 1));
        let mut alloc = Allocator::new(SplitRatios::default());
        assert_eq!(alloc.next(1), (0, 0));
        // shares carry over: five users of 5 give 2 val + 2 test in total
        let mut alloc = Allocator::new(SplitRatios::default());
        let got: Vec<_> = (0..5).map(|_| alloc.next(5)).collect();
        assert_eq!(got, vec![(0, 0), (1, 1), (0, 0), (1, 1), (0, 0)]);
    }

    #[test]
    fn ten_interactions_end_to_end() {
        // every item is also rated by many other users, so the held-out
        // items of user "a" stay covered by training edges elsewhere
        let mut spec = vec![("a", 10)];
        let names: Vec<String> = (0..12).map(|i| format!("z{i:02}")).collect();
        spec.extend(names.iter().map(|n| (n.as_str(), 10)));
        let ds = split(&corpus(&spec), SplitRatios::default(), 1).unwrap();
        let count = |edges: &[(usize, usize)]| edges.iter().filter(|e| e.0 == 0).count();
        assert_eq!((count(&ds.train), count(&ds.val), count(&ds.test)), (8, 1, 1));
    }

    #[test]
    fn single_interaction_goes_to_train() {
        let ds = split(&corpus(&[("a", 1)]), SplitRatios::default(), 3).unwrap();
        assert_eq!((ds.train.len(), ds.val.len(), ds.test.len()), (1, 0, 0));
    }

    #[test]
    fn determinism_and_seed_sensitivity() {
        let c = corpus(&[("a", 30), ("b", 25), ("c", 40), ("d", 12)]);
        let a = split(&c, SplitRatios::default(), 7).unwrap();
        let b = split(&c, SplitRatios::default(), 7).unwrap();
        assert_eq!(a, b);
        let other = split(&c, SplitRatios::default(), 8).unwrap();
        assert_ne!(a, other);
        assert_eq!(
            (a.train.len(), a.val.len(), a.test.len()),
            (other.train.len(), other.val.len(), other.test.len())
        );
    }

    #[test]
    fn partition_invariants() {
        let c = corpus(&[("a", 5), ("b", 7), ("c", 3), ("d", 2), ("e", 11)]);
        let ds = split(&c, SplitRatios::default(), 11).unwrap();
        assert_eq!(ds.train.len() + ds.val.len() + ds.test.len(), c.len());
        for u in 0..ds.num_users() {
            assert!(ds.train.iter().any(|e| e.0 == u));
        }
    }
}

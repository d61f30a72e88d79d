use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One row of the reviews CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawReview {
    pub user_id: String,
    pub item_id: String,
    pub rating: f64,
    pub timestamp: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Interaction {
    pub user_id: String,
    pub item_id: String,
    pub timestamp: i64,
}

/// Deduplicated implicit-feedback interactions, sorted by `(user, item)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InteractionSet {
    records: Vec<Interaction>,
}

impl InteractionSet {
    pub fn records(&self) -> &[Interaction] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn user_counts(&self) -> BTreeMap<&str, usize> {
        let mut m = BTreeMap::new();
        for r in &self.records {
            *m.entry(r.user_id.as_str()).or_default() += 1;
        }
        m
    }

    pub fn item_counts(&self) -> BTreeMap<&str, usize> {
        let mut m = BTreeMap::new();
        for r in &self.records {
            *m.entry(r.item_id.as_str()).or_default() += 1;
        }
        m
    }
}

/// Rating filter, duplicate removal (earliest timestamp wins), then
/// iterative `core`-core pruning of users and items until nothing changes.
pub fn ingest<I>(reviews: I, min_rating: f64, core: usize) -> Result<InteractionSet>
where
    I: IntoIterator<Item = RawReview>,
{
    let mut earliest: HashMap<(String, String), i64> = HashMap::new();
    for r in reviews {
        if r.user_id.is_empty() || r.item_id.is_empty() {
            return Err(Error::Data(format!("review with empty id: {r:?}")));
        }
        if r.rating < min_rating {
            continue;
        }
        earliest
            .entry((r.user_id, r.item_id))
            .and_modify(|t| *t = (*t).min(r.timestamp))
            .or_insert(r.timestamp);
    }
    let mut records: Vec<Interaction> = earliest
        .into_iter()
        .map(|((user_id, item_id), timestamp)| Interaction { user_id, item_id, timestamp })
        .collect();

    if core > 0 {
        loop {
            let mut users: HashMap<&str, usize> = HashMap::new();
            let mut items: HashMap<&str, usize> = HashMap::new();
            for r in &records {
                *users.entry(&r.user_id).or_default() += 1;
                *items.entry(&r.item_id).or_default() += 1;
            }
            let keep: Vec<bool> =
                records.iter().map(|r| users[r.user_id.as_str()] >= core && items[r.item_id.as_str()] >= core).collect();
            if keep.iter().all(|&k| k) {
                break;
            }
            let mut it = keep.into_iter();
            records.retain(|_| it.next().unwrap());
        }
    }
    if records.is_empty() {
        return Err(Error::EmptyCorpus(format!(
            "no interactions left after rating >= {min_rating} and {core}-core filtering"
        )));
    }
    records.sort();
    Ok(InteractionSet { records })
}

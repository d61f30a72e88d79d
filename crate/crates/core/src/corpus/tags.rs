use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Adjacency;

pub const TAG_LEVELS: u8 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagEntry {
    pub level: u8,
    pub name: String,
}

/// LLM output for one item: preference summary, leveled tags, parent -> child
/// edges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemAnnotation {
    pub item_id: String,
    pub summary: String,
    pub tags: Vec<TagEntry>,
    pub edges: Vec<(String, String)>,
}

/// Trim + case-fold.
pub fn normalize_tag(name: &str) -> String {
    name.trim().to_lowercase()
}

impl ItemAnnotation {
    /// Checks the per-item invariants: levels in `1..=3`, names unique after
    /// normalization, every edge endpoint declared, parent level < child
    /// level.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let mut levels: HashMap<String, u8> = HashMap::new();
        for t in &self.tags {
            if !(1..=TAG_LEVELS).contains(&t.level) {
                return Err(format!("tag {:?} has level {}", t.name, t.level));
            }
            let key = normalize_tag(&t.name);
            if key.is_empty() {
                return Err("empty tag name".into());
            }
            if levels.insert(key, t.level).is_some() {
                return Err(format!("tag {:?} declared more than once", t.name));
            }
        }
        for (p, c) in &self.edges {
            let lp = levels.get(&normalize_tag(p)).ok_or_else(|| format!("edge parent {p:?} is not a declared tag"))?;
            let lc = levels.get(&normalize_tag(c)).ok_or_else(|| format!("edge child {c:?} is not a declared tag"))?;
            if lp >= lc {
                return Err(format!("edge {p:?} -> {c:?} does not go to a deeper level ({lp} -> {lc})"));
            }
        }
        Ok(())
    }
}

/// Why an annotation contributed nothing (or less than it declared).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationIssue {
    pub item_id: String,
    pub reason: String,
}

/// Global tag vocabulary plus the tag-tag and tag-item edge sets.
///
/// Tags are indexed in name order. A tag's level is the smallest level it
/// was declared with; tag-tag edges that do not strictly increase in level
/// under those global levels are dropped and reported.
#[derive(Debug, Clone, PartialEq)]
pub struct TagGraph {
    pub tags: Vec<String>,
    pub levels: Vec<u8>,
    /// `(parent, child)` tag indices, sorted, deduplicated.
    pub tag_tag: Vec<(usize, usize)>,
    /// `(tag, item)` indices, sorted, deduplicated.
    pub tag_item: Vec<(usize, usize)>,
}

impl TagGraph {
    pub fn empty() -> Self {
        Self { tags: Vec::new(), levels: Vec::new(), tag_tag: Vec::new(), tag_item: Vec::new() }
    }

    pub fn num_tags(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    /// Heterogeneous graph: block 0 = tags, block 1 = items.
    pub fn adjacency(&self, num_items: usize) -> Result<Adjacency> {
        let t = self.num_tags();
        let mut edges: Vec<(usize, usize)> = self.tag_tag.clone();
        edges.extend(self.tag_item.iter().map(|&(tag, item)| (tag, t + item)));
        Adjacency::new(&[t, num_items], edges)
    }

    pub fn index(&self) -> BTreeMap<&str, usize> {
        self.tags.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect()
    }

    /// Rebuilds a graph from stored parts, checking the invariants.
    pub fn from_parts(
        tags: Vec<String>,
        levels: Vec<u8>,
        tag_tag: Vec<(usize, usize)>,
        tag_item: Vec<(usize, usize)>,
    ) -> Result<Self> {
        let g = Self { tags, levels, tag_tag, tag_item };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<()> {
        if self.tags.len() != self.levels.len() {
            return Err(Error::Data("tag level table does not match vocabulary".into()));
        }
        let mut touched = vec![false; self.tags.len()];
        for &(p, c) in &self.tag_tag {
            if p >= self.tags.len() || c >= self.tags.len() || p == c {
                return Err(Error::Data(format!("bad tag-tag edge ({p}, {c})")));
            }
            if self.levels[p] >= self.levels[c] {
                return Err(Error::Data(format!("tag-tag edge ({p}, {c}) does not increase in level")));
            }
            touched[p] = true;
            touched[c] = true;
        }
        for &(t, _) in &self.tag_item {
            if t >= self.tags.len() {
                return Err(Error::Data(format!("tag-item edge references tag {t}")));
            }
            touched[t] = true;
        }
        if let Some(t) = touched.iter().position(|x| !x) {
            return Err(Error::Data(format!("tag {} has no edges", self.tags[t])));
        }
        Ok(())
    }
}

/// Builds the global tag graph.
///
/// Invalid annotations and annotations for items outside `item_index` are
/// skipped and reported; they never abort the build.
pub fn build_tag_graph(
    annotations: &[ItemAnnotation],
    item_index: &BTreeMap<&str, usize>,
) -> (TagGraph, Vec<AnnotationIssue>) {
    let mut issues = Vec::new();
    let mut level_of: BTreeMap<String, u8> = BTreeMap::new();
    let mut raw_tag_tag: BTreeSet<(String, String)> = BTreeSet::new();
    let mut raw_tag_item: BTreeSet<(String, usize)> = BTreeSet::new();
    for a in annotations {
        let Some(&item) = item_index.get(a.item_id.as_str()) else {
            issues.push(AnnotationIssue { item_id: a.item_id.clone(), reason: "item not in the interaction data".into() });
            continue;
        };
        if let Err(reason) = a.validate() {
            issues.push(AnnotationIssue { item_id: a.item_id.clone(), reason });
            continue;
        }
        for t in &a.tags {
            let name = normalize_tag(&t.name);
            level_of.entry(name.clone()).and_modify(|l| *l = (*l).min(t.level)).or_insert(t.level);
            raw_tag_item.insert((name, item));
        }
        for (p, c) in &a.edges {
            raw_tag_tag.insert((normalize_tag(p), normalize_tag(c)));
        }
    }
    let tags: Vec<String> = level_of.keys().cloned().collect();
    let levels: Vec<u8> = level_of.values().cloned().collect();
    let idx: HashMap<&str, usize> = tags.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut tag_tag = Vec::new();
    for (p, c) in &raw_tag_tag {
        let (pi, ci) = (idx[p.as_str()], idx[c.as_str()]);
        if levels[pi] < levels[ci] {
            tag_tag.push((pi, ci));
        } else {
            issues.push(AnnotationIssue {
                item_id: String::new(),
                reason: format!("dropped edge {p} -> {c}: global levels {} -> {}", levels[pi], levels[ci]),
            });
        }
    }
    // (a -> b) and (b -> a) cannot both survive the level check, so the
    // undirected edge set has no duplicates
    let tag_item = raw_tag_item.iter().map(|(n, i)| (idx[n.as_str()], *i)).collect();
    (TagGraph { tags, levels, tag_tag, tag_item }, issues)
}

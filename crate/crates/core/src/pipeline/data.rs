use crate::corpus::{SplitDataset, TagGraph};
use crate::error::{Error, Result};
use crate::model::Adjacency;
use crate::moe::SemanticTable;

/// Everything a training run reads: the split, its graphs, and optional
/// tag and semantic inputs aligned to the split's index order.
#[derive(Debug, Clone)]
pub struct TrainData {
    pub split: SplitDataset,
    /// Users `0..n_u`, then items.
    pub ui: Adjacency,
    pub tags: Option<TagGraph>,
    /// Tags `0..n_t`, then items.
    pub tag_adj: Option<Adjacency>,
    pub user_sem: Option<SemanticTable>,
    pub item_sem: Option<SemanticTable>,
    pub train_sets: Vec<Vec<usize>>,
    pub val_sets: Vec<Vec<usize>>,
    pub test_sets: Vec<Vec<usize>>,
}

impl TrainData {
    pub fn new(split: SplitDataset) -> Self {
        Self {
            ui: split.train_adjacency(),
            train_sets: split.train_sets(),
            val_sets: split.val_sets(),
            test_sets: split.test_sets(),
            split,
            tags: None,
            tag_adj: None,
            user_sem: None,
            item_sem: None,
        }
    }

    pub fn num_users(&self) -> usize {
        self.split.num_users()
    }

    pub fn num_items(&self) -> usize {
        self.split.num_items()
    }

    pub fn num_tags(&self) -> usize {
        self.tags.as_ref().map_or(0, TagGraph::num_tags)
    }

    pub fn with_tags(mut self, graph: TagGraph) -> Result<Self> {
        if let Some(&(_, i)) = graph.tag_item.iter().find(|e| e.1 >= self.num_items()) {
            return Err(Error::Data(format!("tag graph references item {i} outside the split")));
        }
        self.tag_adj = Some(graph.adjacency(self.num_items())?);
        self.tags = Some(graph);
        Ok(self)
    }

    /// Attaches semantic tables, reordered to the split's user and item
    /// order. Missing rows are an error listing the ids.
    pub fn with_semantics(mut self, users: SemanticTable, items: SemanticTable) -> Result<Self> {
        if users.dim() != items.dim() {
            return Err(Error::Shape(format!("user semantic dim {} vs item {}", users.dim(), items.dim())));
        }
        self.user_sem = Some(users.reindex(&self.split.users)?);
        self.item_sem = Some(items.reindex(&self.split.items)?);
        Ok(self)
    }

    pub(crate) fn semantics(&self) -> Result<(&SemanticTable, &SemanticTable)> {
        match (&self.user_sem, &self.item_sem) {
            (Some(u), Some(i)) => Ok((u, i)),
            _ => Err(Error::Config("this stage needs user and item semantic tables".into())),
        }
    }

    /// `(anchor, positive)` pairs over the tag graph in tag-adjacency ids:
    /// parent -> child tag edges and tag -> item edges.
    pub(crate) fn tag_pairs(&self) -> Vec<(usize, usize)> {
        let Some(g) = &self.tags else { return Vec::new() };
        let t = g.num_tags();
        g.tag_tag.iter().copied().chain(g.tag_item.iter().map(|&(tag, i)| (tag, t + i))).collect()
    }
}

/// End-to-end synthetic inputs: generated reviews, rating >= 4 and 5-core
/// filtering, 8:1:1 split, mock annotations and summaries, mock-encoded
/// semantic tables of width `semantic_dim`.
pub fn synthetic_data(
    synth: &crate::corpus::synthetic::SyntheticConfig,
    semantic_dim: usize,
    encoder_seed: u64,
) -> Result<TrainData> {
    use crate::augment::{annotate_corpus, encode_items, encode_users, summarize_corpus, user_prompt_inputs};
    use crate::augment::{EncoderClient, LlmClient};
    use crate::corpus::{build_tag_graph, ingest, split, SplitRatios};

    let corpus = crate::corpus::synthetic::generate(synth);
    let interactions = ingest(corpus.reviews, 4.0, 5)?;
    let ds = split(&interactions, SplitRatios::default(), synth.seed)?;
    let llm = LlmClient::mock();
    let (annotations, _) = annotate_corpus(&llm, &corpus.metadata, &ds)?;
    let (graph, _) = build_tag_graph(&annotations, &ds.item_index());
    let (summaries, _) = summarize_corpus(&llm, &user_prompt_inputs(&ds, &annotations))?;
    let enc = EncoderClient::mock(encoder_seed, semantic_dim)?;
    let items = encode_items(&enc, &ds, &annotations, &corpus.metadata)?;
    let users = encode_users(&enc, &summaries)?;
    TrainData::new(ds).with_tags(graph)?.with_semantics(users, items)
}

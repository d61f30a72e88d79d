//! Interaction data: ingestion, k-core filtering, the per-user random split,
//! and the tag graph built from item annotations.

mod files;
mod ingest;
mod split;
pub mod synthetic;
mod tags;

pub use files::{
    read_annotations, read_metadata, read_reviews, read_split_dir, read_tag_map, read_user_summaries,
    write_annotations, write_metadata, write_reviews, write_split_dir, write_tag_map, write_user_summaries,
    ItemMeta, UserSummary,
};
pub use ingest::{ingest, Interaction, InteractionSet, RawReview};
pub use split::{split, SplitDataset, SplitRatios};
pub use tags::{build_tag_graph, normalize_tag, AnnotationIssue, ItemAnnotation, TagEntry, TagGraph, TAG_LEVELS};

//! Corpus-level annotation, summarization and encoding.

use std::collections::HashMap;

use super::encoder::EncoderClient;
use super::llm::{LlmClient, Outcome};
use super::prompt::item_information;
use crate::corpus::{AnnotationIssue, ItemAnnotation, ItemMeta, SplitDataset, TagEntry, UserSummary};
use crate::error::{Error, Result};
use crate::model::Role;
use crate::moe::SemanticTable;

/// Annotates the metadata rows of every item in `split`, in split order.
/// Items without metadata or with unusable replies are reported.
pub fn annotate_corpus(
    client: &LlmClient,
    metas: &[ItemMeta],
    split: &SplitDataset,
) -> Result<(Vec<ItemAnnotation>, Vec<AnnotationIssue>)> {
    let by_id: HashMap<&str, &ItemMeta> = metas.iter().map(|m| (m.item_id.as_str(), m)).collect();
    let mut issues = Vec::new();
    let mut todo = Vec::new();
    for id in &split.items {
        match by_id.get(id.as_str()) {
            Some(m) => todo.push((*m).clone()),
            None => issues.push(AnnotationIssue { item_id: id.clone(), reason: "no metadata".into() }),
        }
    }
    let mut out = Vec::new();
    for (m, o) in todo.iter().zip(client.annotate_all(&todo)?) {
        match o {
            Outcome::Done(a) => out.push(a),
            Outcome::Skipped(reason) => issues.push(AnnotationIssue { item_id: m.item_id.clone(), reason }),
        }
    }
    Ok((out, issues))
}

/// `(user id, [(item summary, tags)])` over each user's train items, in
/// item index order. Items without an annotation are left out.
pub fn user_prompt_inputs(
    split: &SplitDataset,
    annotations: &[ItemAnnotation],
) -> Vec<(String, Vec<(String, Vec<TagEntry>)>)> {
    let by_id: HashMap<&str, &ItemAnnotation> = annotations.iter().map(|a| (a.item_id.as_str(), a)).collect();
    split
        .train_sets()
        .iter()
        .enumerate()
        .map(|(u, items)| {
            let rows = items
                .iter()
                .filter_map(|&i| by_id.get(split.items[i].as_str()))
                .map(|a| (a.summary.clone(), a.tags.clone()))
                .collect();
            (split.users[u].clone(), rows)
        })
        .collect()
}

/// One summary per user. Users whose reply was unusable get the joined
/// item summaries instead, and are reported.
pub fn summarize_corpus(
    client: &LlmClient,
    inputs: &[(String, Vec<(String, Vec<TagEntry>)>)],
) -> Result<(Vec<UserSummary>, Vec<AnnotationIssue>)> {
    if let Some((u, _)) = inputs.iter().find(|(_, items)| items.is_empty()) {
        return Err(Error::NoTrainingItems(u.clone()));
    }
    let mut issues = Vec::new();
    let out = inputs
        .iter()
        .zip(client.summarize_all(inputs)?)
        .map(|((user_id, items), o)| {
            let summary = match o {
                Outcome::Done(s) => s,
                Outcome::Skipped(reason) => {
                    issues.push(AnnotationIssue { item_id: user_id.clone(), reason });
                    items.iter().map(|(s, _)| s.as_str()).collect::<Vec<_>>().join(" ")
                }
            };
            UserSummary { user_id: user_id.clone(), summary }
        })
        .collect();
    Ok((out, issues))
}

/// Item table in split order; items without an annotation are encoded from
/// their metadata line.
pub fn encode_items(
    encoder: &EncoderClient,
    split: &SplitDataset,
    annotations: &[ItemAnnotation],
    metas: &[ItemMeta],
) -> Result<SemanticTable> {
    let ann: HashMap<&str, &str> = annotations.iter().map(|a| (a.item_id.as_str(), a.summary.as_str())).collect();
    let meta: HashMap<&str, &ItemMeta> = metas.iter().map(|m| (m.item_id.as_str(), m)).collect();
    let texts = split
        .items
        .iter()
        .map(|id| match (ann.get(id.as_str()), meta.get(id.as_str())) {
            (Some(s), _) => Ok(s.to_string()),
            (None, Some(m)) => item_information(m),
            (None, None) => Err(Error::Data(format!("item {id} has neither annotation nor metadata"))),
        })
        .collect::<Result<Vec<_>>>()?;
    encoder.encode(Role::Item, split.items.clone(), &texts)
}

pub fn encode_users(encoder: &EncoderClient, summaries: &[UserSummary]) -> Result<SemanticTable> {
    let ids = summaries.iter().map(|s| s.user_id.clone()).collect();
    let texts: Vec<String> = summaries.iter().map(|s| s.summary.clone()).collect();
    encoder.encode(Role::User, ids, &texts)
}

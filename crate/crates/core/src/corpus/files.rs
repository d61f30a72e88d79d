//! On-disk formats: reviews CSV, metadata / annotation / user-summary JSON
//! Lines, and the split directory.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::ingest::RawReview;
use super::split::SplitDataset;
use super::tags::{ItemAnnotation, TagGraph};
use crate::error::{Error, Result};

/// One line of the item metadata file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ItemMeta {
    pub item_id: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub brand: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub categories: Vec<String>,
}

/// One line of the user-summary file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserSummary {
    pub user_id: String,
    pub summary: String,
}

const REVIEW_HEADER: [&str; 4] = ["user_id", "item_id", "rating", "timestamp"];

pub fn read_reviews(path: &Path) -> Result<Vec<RawReview>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(BufReader::new(file));
    let header = rdr.headers()?.clone();
    for col in REVIEW_HEADER {
        if !header.iter().any(|h| h == col) {
            return Err(Error::parse("reviews CSV", path.display().to_string(), format!("missing column {col}")));
        }
    }
    let mut out = Vec::new();
    for (line, rec) in rdr.deserialize::<RawReview>().enumerate() {
        out.push(rec.map_err(|e| Error::parse("reviews CSV", format!("{}:{}", path.display(), line + 2), e.to_string()))?);
    }
    Ok(out)
}

pub fn write_reviews(path: &Path, reviews: &[RawReview]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in reviews {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_jsonl<T: DeserializeOwned>(path: &Path, what: &'static str) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::parse(what, format!("{}:{}", path.display(), n + 1), e.to_string()))?,
        );
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_metadata(path: &Path) -> Result<Vec<ItemMeta>> {
    read_jsonl(path, "metadata JSONL")
}

pub fn write_metadata(path: &Path, rows: &[ItemMeta]) -> Result<()> {
    write_jsonl(path, rows)
}

pub fn read_annotations(path: &Path) -> Result<Vec<ItemAnnotation>> {
    read_jsonl(path, "annotation JSONL")
}

pub fn write_annotations(path: &Path, rows: &[ItemAnnotation]) -> Result<()> {
    write_jsonl(path, rows)
}

pub fn read_user_summaries(path: &Path) -> Result<Vec<UserSummary>> {
    read_jsonl(path, "user summary JSONL")
}

pub fn write_user_summaries(path: &Path, rows: &[UserSummary]) -> Result<()> {
    write_jsonl(path, rows)
}

fn write_edges(path: &Path, edges: &[(usize, usize)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["user_idx", "item_idx"])?;
    for &(u, i) in edges {
        w.write_record([u.to_string(), i.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_edges(path: &Path) -> Result<Vec<(usize, usize)>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in rdr.deserialize::<(usize, usize)>() {
        out.push(rec?);
    }
    Ok(out)
}

fn write_map(path: &Path, ids: &[String]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (i, id) in ids.iter().enumerate() {
        writeln!(w, "{i}\t{id}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads an `index<TAB>id[<TAB>...]` map; returns the rows split on tabs.
fn read_map(path: &Path) -> Result<Vec<Vec<String>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let cols: Vec<String> = line.split('\t').map(str::to_string).collect();
        let idx: usize = cols[0]
            .parse()
            .map_err(|_| Error::parse("index map", format!("{}:{}", path.display(), n + 1), "bad index"))?;
        if idx != out.len() || cols.len() < 2 {
            return Err(Error::parse("index map", format!("{}:{}", path.display(), n + 1), "rows must be 0..n in order"));
        }
        out.push(cols[1..].to_vec());
    }
    Ok(out)
}

/// Writes `train.csv`, `val.csv`, `test.csv`, `users.tsv`, `items.tsv`.
pub fn write_split_dir(dir: &Path, ds: &SplitDataset) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_edges(&dir.join("train.csv"), &ds.train)?;
    write_edges(&dir.join("val.csv"), &ds.val)?;
    write_edges(&dir.join("test.csv"), &ds.test)?;
    write_map(&dir.join("users.tsv"), &ds.users)?;
    write_map(&dir.join("items.tsv"), &ds.items)
}

pub fn read_split_dir(dir: &Path) -> Result<SplitDataset> {
    let users = read_map(&dir.join("users.tsv"))?.into_iter().map(|mut c| c.swap_remove(0)).collect();
    let items = read_map(&dir.join("items.tsv"))?.into_iter().map(|mut c| c.swap_remove(0)).collect();
    SplitDataset::new(
        users,
        items,
        read_edges(&dir.join("train.csv"))?,
        read_edges(&dir.join("val.csv"))?,
        read_edges(&dir.join("test.csv"))?,
    )
}

/// `tags.tsv`: `index<TAB>name<TAB>level`.
pub fn write_tag_map(path: &Path, graph: &TagGraph) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (i, (name, level)) in graph.tags.iter().zip(&graph.levels).enumerate() {
        writeln!(w, "{i}\t{name}\t{level}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_tag_map(path: &Path) -> Result<Vec<(String, u8)>> {
    read_map(path)?
        .into_iter()
        .map(|cols| {
            let level = cols
                .get(1)
                .and_then(|l| l.parse().ok())
                .ok_or_else(|| Error::parse("tag map", path.display().to_string(), "missing level column"))?;
            Ok((cols[0].clone(), level))
        })
        .collect()
}

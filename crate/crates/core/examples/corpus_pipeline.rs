//! From raw reviews to a split dataset and a tag graph.
//!
//! Uses the synthetic generator so it runs offline; point `read_reviews`
//! and `read_metadata` at real files for the same flow.

use hyperrec::augment::{annotate_corpus, LlmClient};
use hyperrec::corpus::synthetic::{generate, SyntheticConfig};
use hyperrec::corpus::{build_tag_graph, ingest, split, write_split_dir, SplitRatios};

fn main() -> hyperrec::Result<()> {
    let corpus = generate(&SyntheticConfig { users: 200, items: 800, ..SyntheticConfig::default() });
    println!("{} raw reviews over {} items", corpus.reviews.len(), corpus.metadata.len());

    let kept = ingest(corpus.reviews, 4.0, 5)?;
    println!("after rating >= 4 and 5-core: {} interactions", kept.len());

    let ds = split(&kept, SplitRatios::default(), 1)?;
    println!(
        "{} users, {} items; {} / {} / {} train / val / test",
        ds.num_users(),
        ds.num_items(),
        ds.train.len(),
        ds.val.len(),
        ds.test.len()
    );

    let (annotations, issues) = annotate_corpus(&LlmClient::mock(), &corpus.metadata, &ds)?;
    let (graph, dropped) = build_tag_graph(&annotations, &ds.item_index());
    println!(
        "{} annotations ({} issues): {} tags, {} tag-tag edges, {} tag-item edges, {} dropped",
        annotations.len(),
        issues.len(),
        graph.num_tags(),
        graph.tag_tag.len(),
        graph.tag_item.len(),
        dropped.len()
    );
    for level in 1..=3u8 {
        let n = graph.levels.iter().filter(|&&l| l == level).count();
        println!("  level {level}: {n} tags");
    }

    let dir = std::env::temp_dir().join("hyperrec-corpus-example");
    write_split_dir(&dir, &ds)?;
    println!("split written to {}", dir.display());
    Ok(())
}

//! Item and user prompts, the mock annotator, and tolerant response parsing.

use hyperrec::augment::{parse_item_response, render_item_prompt, render_user_prompt, LlmClient, Outcome};
use hyperrec::corpus::ItemMeta;

fn main() -> hyperrec::Result<()> {
    let meta = ItemMeta {
        item_id: "B0001".into(),
        title: "Ocean Jigsaw 1000".into(),
        brand: "Puzzleco".into(),
        description: "A 1000-piece puzzle of a coral reef.".into(),
        categories: vec!["Toys & Games".into(), "Puzzles".into(), "Jigsaw Puzzles".into()],
    };
    let prompt = render_item_prompt(&meta)?;
    let lines: Vec<&str> = prompt.lines().collect();
    println!("--- item prompt (tail) ---\n{}", lines[lines.len().saturating_sub(8)..].join("\n"));

    // replies in the wild come with markdown, arrows and loose levels
    let reply = "**Summary:** Fans of calm, detailed puzzles.\n\
                 **Tags:** Level 1: toys & games; Level 2: puzzles; Level 3: jigsaw puzzles\n\
                 **Edges:** toys & games → puzzles, puzzles → jigsaw puzzles";
    let parsed = parse_item_response(reply).map_err(hyperrec::Error::Data)?;
    println!("--- parsed ---\n{parsed:#?}");

    let client = LlmClient::mock();
    let Outcome::Done(ann) = client.annotate_item(&meta)? else { unreachable!("mock always answers") };
    println!("--- mock annotation ---\n{ann:#?}");

    let items = vec![(ann.summary.clone(), ann.tags.clone())];
    println!("--- user prompt input ---\n{}", render_user_prompt(&items, 50).lines().last().unwrap_or(""));
    if let Outcome::Done(s) = client.summarize_user("u1", &items)? {
        println!("--- mock user summary ---\n{s}");
    }
    Ok(())
}

//! Prompt rendering and response parsing.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::Value;

use crate::corpus::{normalize_tag, ItemMeta, TagEntry, TAG_LEVELS};
use crate::error::{Error, Result};

pub const ITEM_TEMPLATE: &str = include_str!("../../templates/item_prompt.v1.txt");
pub const USER_TEMPLATE: &str = include_str!("../../templates/user_prompt.v1.txt");
pub const TEMPLATE_VERSION: u32 = 1;

const ITEM_SLOT: &str = "{item_information}";
const USER_SLOT: &str = "{user_items}";

/// Field text safe to place between ` | ` separators on one line.
fn clean(s: &str) -> String {
    let s: String = s.chars().map(|c| if c == '|' { '/' } else if c.is_control() { ' ' } else { c }).collect();
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// `t1 | t2 | ... | tm` over the non-empty metadata fields.
pub fn item_information(meta: &ItemMeta) -> Result<String> {
    let mut fields = Vec::new();
    let cats: Vec<String> = meta.categories.iter().map(|c| clean(c)).filter(|c| !c.is_empty()).collect();
    for (key, value) in [
        ("title", clean(&meta.title)),
        ("brand", clean(&meta.brand)),
        ("categories", cats.join(" > ")),
        ("description", clean(&meta.description)),
    ] {
        if !value.is_empty() {
            fields.push(format!("{key}: {value}"));
        }
    }
    if fields.is_empty() {
        return Err(Error::Contract(format!("item {} has no metadata to describe", meta.item_id)));
    }
    Ok(fields.join(" | "))
}

pub fn render_item_prompt(meta: &ItemMeta) -> Result<String> {
    Ok(ITEM_TEMPLATE.replacen(ITEM_SLOT, &item_information(meta)?, 1))
}

/// `Summary: S1, Tags: a, b | ... | Summary: Sk, Tags: ...`, truncated to
/// the first `cap` items.
pub fn render_user_prompt(items: &[(String, Vec<TagEntry>)], cap: usize) -> String {
    let body: Vec<String> = items
        .iter()
        .take(cap.max(1))
        .map(|(summary, tags)| {
            let names: Vec<String> = tags.iter().map(|t| clean(&t.name).replace(',', " ")).collect();
            format!("Summary: {}, Tags: {}", clean(summary), names.join(", "))
        })
        .collect();
    USER_TEMPLATE.replacen(USER_SLOT, &body.join(" | "), 1)
}

/// Canonical response text for an annotation; [`parse_item_response`]
/// inverts it.
pub fn format_item_response(summary: &str, tags: &[TagEntry], edges: &[(String, String)]) -> String {
    let mut levels = String::new();
    for level in 1..=TAG_LEVELS {
        let names: Vec<&str> = tags.iter().filter(|t| t.level == level).map(|t| t.name.as_str()).collect();
        if names.is_empty() {
            continue;
        }
        if !levels.is_empty() {
            levels.push_str("; ");
        }
        levels.push_str(&format!("Level {level}: {}", names.join(", ")));
    }
    let edges: Vec<String> = edges.iter().map(|(p, c)| format!("{p} -> {c}")).collect();
    format!("Summary: {summary}\nTags: {levels}\nEdges: {}\n", edges.join(", "))
}

/// Parsed item response before validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedItem {
    pub summary: String,
    pub tags: Vec<TagEntry>,
    pub edges: Vec<(String, String)>,
}

fn strip_decor(s: &str) -> &str {
    s.trim().trim_matches(|c: char| c == '{' || c == '}' || c == ',' || c == '.' || c == '*' || c.is_whitespace())
}

fn split_list(s: &str) -> Vec<String> {
    s.split([',', ';'])
        .map(|t| normalize_tag(strip_decor(t)))
        .filter(|t| !t.is_empty())
        .collect()
}

/// Positions of `level N:` markers (case-insensitive) as `(start, end, N)`.
fn level_markers(s: &str) -> Vec<(usize, usize, u8)> {
    let lower = s.to_ascii_lowercase();
    let bytes = lower.as_bytes();
    let mut out = Vec::new();
    let mut from = 0;
    while let Some(pos) = lower[from..].find("level") {
        let start = from + pos;
        let mut j = start + 5;
        while j < bytes.len() && bytes[j] == b' ' {
            j += 1;
        }
        if j < bytes.len() && bytes[j].is_ascii_digit() {
            let level = bytes[j] - b'0';
            let mut e = j + 1;
            while e < bytes.len() && bytes[e] == b' ' {
                e += 1;
            }
            if e < bytes.len() && bytes[e] == b':' {
                out.push((start, e + 1, level));
                from = e + 1;
                continue;
            }
        }
        from = start + 5;
    }
    out
}

/// Levels from edge depth for an unleveled tag list: roots are level 1,
/// children one below their deepest parent, capped at 3.
fn infer_levels(names: &[String], edges: &[(String, String)]) -> Vec<TagEntry> {
    let mut level: BTreeMap<&str, u8> = names.iter().map(|n| (n.as_str(), 1)).collect();
    for _ in 0..names.len() {
        let mut changed = false;
        for (p, c) in edges {
            if let (Some(&lp), Some(&lc)) = (level.get(p.as_str()), level.get(c.as_str())) {
                let want = (lp + 1).min(TAG_LEVELS);
                if lc < want {
                    level.insert(c.as_str(), want);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    names.iter().map(|n| TagEntry { level: level[n.as_str()], name: n.clone() }).collect()
}

fn parse_tags(text: &str, edges: &[(String, String)]) -> Vec<TagEntry> {
    let markers = level_markers(text);
    if markers.is_empty() {
        let mut seen = BTreeSet::new();
        let names: Vec<String> = split_list(text).into_iter().filter(|n| seen.insert(n.clone())).collect();
        return infer_levels(&names, edges);
    }
    let mut tags = Vec::new();
    for (n, &(_, end, level)) in markers.iter().enumerate() {
        let stop = markers.get(n + 1).map_or(text.len(), |m| m.0);
        for name in split_list(&text[end..stop]) {
            tags.push(TagEntry { level, name });
        }
    }
    tags
}

fn parse_edges(text: &str) -> Vec<(String, String)> {
    let text = text.replace('→', "->");
    let mut out = Vec::new();
    for part in text.split([',', ';', '\n']) {
        let chain: Vec<String> = part.split("->").map(|t| normalize_tag(strip_decor(t))).collect();
        if chain.len() < 2 {
            continue;
        }
        for w in chain.windows(2) {
            if !w[0].is_empty() && !w[1].is_empty() {
                out.push((w[0].clone(), w[1].clone()));
            }
        }
    }
    out
}

/// Splits labeled text into `summary` / `tags` / `edges` sections.
fn sections(text: &str) -> BTreeMap<&'static str, String> {
    let mut out: BTreeMap<&'static str, String> = BTreeMap::new();
    let mut current: Option<&'static str> = None;
    for raw in text.lines() {
        let line = raw.trim().trim_start_matches(['*', '#', '-', ' ']).replace("**", "");
        let lower = line.to_ascii_lowercase();
        let mut header = None;
        for key in ["summary", "tags", "edges"] {
            if lower.starts_with(key) && lower[key.len()..].trim_start().starts_with(':') {
                header = Some(key);
            }
        }
        if let Some(key) = header {
            let rest = line[line.find(':').unwrap() + 1..].trim().to_string();
            out.insert(key, rest);
            current = Some(key);
        } else if let Some(key) = current {
            let entry = out.get_mut(key).unwrap();
            if !line.is_empty() {
                if !entry.is_empty() {
                    entry.push(if key == "summary" { ' ' } else { ';' });
                }
                entry.push_str(&line);
            }
        }
    }
    out
}

fn json_object(text: &str) -> Option<Value> {
    let start = text.find('{')?;
    let end = text.rfind('}')?;
    let v: Value = serde_json::from_str(text.get(start..=end)?).ok()?;
    v.is_object().then_some(v)
}

fn value_names(v: &Value) -> Vec<String> {
    match v {
        Value::String(s) => split_list(s),
        Value::Array(a) => a.iter().flat_map(value_names).collect(),
        _ => Vec::new(),
    }
}

fn parse_item_json(v: &Value) -> Option<ParsedItem> {
    let summary = v.get("summary")?.as_str()?.trim().to_string();
    let edges: Vec<(String, String)> = match v.get("edges") {
        Some(Value::Array(a)) => a
            .iter()
            .flat_map(|e| match e {
                Value::Array(pair) if pair.len() == 2 => match (pair[0].as_str(), pair[1].as_str()) {
                    (Some(p), Some(c)) => vec![(normalize_tag(p), normalize_tag(c))],
                    _ => Vec::new(),
                },
                Value::String(s) => parse_edges(s),
                _ => Vec::new(),
            })
            .collect(),
        Some(Value::String(s)) => parse_edges(s),
        _ => Vec::new(),
    };
    let tags = match v.get("tags")? {
        Value::Object(levels) => {
            let mut tags = Vec::new();
            for (key, names) in levels {
                let level: u8 = key.chars().filter(char::is_ascii_digit).collect::<String>().parse().ok()?;
                tags.extend(value_names(names).into_iter().map(|name| TagEntry { level, name }));
            }
            tags
        }
        Value::Array(items) if items.iter().all(Value::is_object) => items
            .iter()
            .map(|t| {
                Some(TagEntry {
                    level: u8::try_from(t.get("level")?.as_u64()?).ok()?,
                    name: normalize_tag(t.get("name")?.as_str()?),
                })
            })
            .collect::<Option<Vec<_>>>()?,
        other => infer_levels(&value_names(other), &edges),
    };
    Some(ParsedItem { summary, tags, edges })
}

/// Reads `Summary:` / `Tags:` / `Edges:` sections, falling back to a JSON
/// object with `summary`, `tags`, `edges` keys. Tag names come back
/// normalized.
pub fn parse_item_response(text: &str) -> std::result::Result<ParsedItem, String> {
    let s = sections(text);
    if let (Some(summary), Some(tags)) = (s.get("summary"), s.get("tags")) {
        let edges = s.get("edges").map(|e| parse_edges(e)).unwrap_or_default();
        let summary = strip_decor(summary).to_string();
        let tags = parse_tags(tags, &edges);
        if !summary.is_empty() && !tags.is_empty() {
            return Ok(ParsedItem { summary, tags, edges });
        }
    }
    if let Some(p) = json_object(text).as_ref().and_then(parse_item_json) {
        if !p.summary.is_empty() && !p.tags.is_empty() {
            return Ok(p);
        }
    }
    Err("response has no usable Summary/Tags sections".into())
}

/// User summary from a `Summary:` line, a JSON `summary` field, or the bare
/// text.
pub fn parse_user_response(text: &str) -> std::result::Result<String, String> {
    let summary = if let Some(s) = sections(text).get("summary") {
        strip_decor(s).to_string()
    } else if let Some(s) = json_object(text).and_then(|v| v.get("summary")?.as_str().map(str::to_string)) {
        s.trim().to_string()
    } else {
        strip_decor(text).to_string()
    };
    if summary.is_empty() {
        Err("empty user summary".into())
    } else {
        Ok(summary)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(level: u8, name: &str) -> TagEntry {
        TagEntry { level, name: name.into() }
    }

    #[test]
    fn templates_have_one_slot() {
        assert_eq!(ITEM_TEMPLATE.matches(ITEM_SLOT).count(), 1);
        assert_eq!(USER_TEMPLATE.matches(USER_SLOT).count(), 1);
        assert!(ITEM_TEMPLATE.contains("Please generate 3 level tags for the item."));
    }

    #[test]
    fn item_information_line() {
        let meta = ItemMeta {
            item_id: "x".into(),
            title: "Big | Puzzle".into(),
            categories: vec!["Toys".into(), "Puzzles".into()],
            ..Default::default()
        };
        assert_eq!(item_information(&meta).unwrap(), "title: Big / Puzzle | categories: Toys > Puzzles");
        let p = render_item_prompt(&meta).unwrap();
        assert!(p.contains("Item Information: title: Big / Puzzle | categories: Toys > Puzzles.\n"));
        assert!(item_information(&ItemMeta { item_id: "y".into(), ..Default::default() }).is_err());
    }

    #[test]
    fn user_prompt_joins_segments() {
        let items: Vec<(String, Vec<TagEntry>)> =
            (0..3).map(|i| (format!("s{i}"), vec![t(1, "toys"), t(2, "cars")])).collect();
        let p = render_user_prompt(&items, 50);
        assert!(p.contains("Summary: s0, Tags: toys, cars | Summary: s1, Tags: toys, cars | Summary: s2"));
        let input = p.split("Input:\n\n").nth(1).unwrap().split("\n\nOutput:").next().unwrap();
        assert_eq!(input.matches("Summary:").count(), 3);
        assert_eq!(render_user_prompt(&items, 2).split("Input:").nth(1).unwrap().matches("Summary: s").count(), 2);
    }

    #[test]
    fn canonical_round_trip() {
        let tags = vec![t(1, "toys"), t(2, "puzzles"), t(2, "games"), t(3, "jigsaw")];
        let edges = vec![("toys".to_string(), "puzzles".to_string()), ("puzzles".into(), "jigsaw".into())];
        let text = format_item_response("A fun puzzle", &tags, &edges);
        let p = parse_item_response(&text).unwrap();
        assert_eq!(p, ParsedItem { summary: "A fun puzzle".into(), tags, edges });
    }

    #[test]
    fn paper_style_layout() {
        let text = "Summary: {A wooden jigsaw},\n\nTags: {Toys, Puzzles, Jigsaw},\n\nEdges: {Toys → Puzzles, Puzzles → Jigsaw}.";
        let p = parse_item_response(text).unwrap();
        assert_eq!(p.summary, "A wooden jigsaw");
        assert_eq!(p.tags, vec![t(1, "toys"), t(2, "puzzles"), t(3, "jigsaw")]);
        assert_eq!(p.edges.len(), 2);
    }

    #[test]
    fn multi_line_levels_and_markdown() {
        let text = "**Summary:** Nice.\n**Tags:**\nLevel 1: Toys\nLevel 2: Puzzles, Games\nLevel 3: Jigsaw\n**Edges:** Toys -> Puzzles -> Jigsaw";
        let p = parse_item_response(text).unwrap();
        assert_eq!(p.tags.len(), 4);
        assert_eq!(p.edges, vec![("toys".into(), "puzzles".into()), ("puzzles".into(), "jigsaw".into())]);
    }

    #[test]
    fn json_fallback() {
        let text = r#"Sure! ```json
{"summary": "s", "tags": {"level 1": ["Toys"], "level 2": ["Cars"]}, "edges": [["Toys", "Cars"]]}
```"#;
        let p = parse_item_response(text).unwrap();
        assert_eq!(p.tags, vec![t(1, "toys"), t(2, "cars")]);
        assert_eq!(p.edges, vec![("toys".into(), "cars".into())]);
        assert!(parse_item_response("nothing useful").is_err());
    }

    #[test]
    fn user_response_forms() {
        assert_eq!(parse_user_response("Summary: likes puzzles.").unwrap(), "likes puzzles");
        assert_eq!(parse_user_response(r#"{"summary": "x"}"#).unwrap(), "x");
        assert_eq!(parse_user_response("plain text").unwrap(), "plain text");
        assert!(parse_user_response("  ").is_err());
    }
}

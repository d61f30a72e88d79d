//! Chat-completion client, retry policy, and the offline mock.

use std::collections::BTreeMap;
use std::time::Duration;

use rayon::prelude::*;
use serde_json::{json, Value};

use super::prompt::{
    format_item_response, parse_item_response, parse_user_response, render_item_prompt, render_user_prompt,
};
use crate::corpus::{normalize_tag, ItemAnnotation, ItemMeta, TagEntry, TAG_LEVELS};
use crate::error::{Error, Result};

pub const API_KEY_VAR: &str = "HYPERREC_API_KEY";

/// One completion request.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub model: String,
    pub temperature: f64,
    pub prompt: String,
}

impl ChatRequest {
    /// Request body for an OpenAI-style `chat/completions` endpoint.
    pub fn payload(&self) -> Value {
        json!({
            "model": self.model,
            "temperature": self.temperature,
            "messages": [{"role": "user", "content": self.prompt}],
        })
    }
}

/// Anything that turns a prompt into text. Errors are transport failures.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> std::result::Result<String, String>;
}

pub(crate) fn http_agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into()
}

pub(crate) fn post_json(agent: &ureq::Agent, url: &str, body: &Value) -> std::result::Result<Value, String> {
    let mut req = agent.post(url);
    if let Ok(key) = std::env::var(API_KEY_VAR) {
        req = req.header("Authorization", format!("Bearer {key}"));
    }
    let mut resp = req.send_json(body).map_err(|e| e.to_string())?;
    resp.body_mut().read_json::<Value>().map_err(|e| e.to_string())
}

/// HTTP chat-completion transport.
pub struct HttpChat {
    url: String,
    agent: ureq::Agent,
}

impl HttpChat {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        Self { url: url.into(), agent: http_agent(timeout) }
    }
}

impl ChatBackend for HttpChat {
    fn complete(&self, request: &ChatRequest) -> std::result::Result<String, String> {
        let v = post_json(&self.agent, &self.url, &request.payload())?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| "response has no choices[0].message.content".to_string())
    }
}

/// Offline annotator.
///
/// For item prompts it reads the `categories:` field of the item
/// information line, keeps the first three path components (padding with
/// `general-2`, `general-3`) and chains them. For user prompts it answers
/// with the most frequent tags of the listed items.
#[derive(Debug, Clone, Copy)]
pub struct MockAnnotator {
    pub user_top_tags: usize,
}

impl Default for MockAnnotator {
    fn default() -> Self {
        Self { user_top_tags: 5 }
    }
}

fn input_section(prompt: &str) -> Option<&str> {
    let start = prompt.find("Input:\n\n")? + "Input:\n\n".len();
    let end = prompt[start..].find("\n\nOutput:")? + start;
    Some(prompt[start..end].trim_end_matches('.'))
}

impl MockAnnotator {
    fn item(&self, info: &str) -> String {
        let mut title = "";
        let mut path: Vec<String> = Vec::new();
        for field in info.split(" | ") {
            if let Some(t) = field.strip_prefix("title: ") {
                title = t;
            } else if let Some(c) = field.strip_prefix("categories: ") {
                path = c.split('>').map(normalize_tag).filter(|s| !s.is_empty()).collect();
            }
        }
        path.truncate(TAG_LEVELS as usize);
        while path.len() < TAG_LEVELS as usize {
            path.push(format!("general-{}", path.len() + 1));
        }
        let tags: Vec<TagEntry> =
            path.iter().enumerate().map(|(l, n)| TagEntry { level: l as u8 + 1, name: n.clone() }).collect();
        let edges: Vec<(String, String)> = path.windows(2).map(|w| (w[0].clone(), w[1].clone())).collect();
        let summary = if title.is_empty() { path.join(" ") } else { format!("{title}. {}", path.join(" ")) };
        format_item_response(&summary, &tags, &edges)
    }

    fn user(&self, input: &str) -> String {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for seg in input.split(" | ") {
            if let Some(pos) = seg.rfind(", Tags: ") {
                for tag in seg[pos + 8..].split(", ") {
                    let tag = normalize_tag(tag);
                    if !tag.is_empty() {
                        *counts.entry(tag).or_default() += 1;
                    }
                }
            }
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let top: Vec<String> = ranked.into_iter().take(self.user_top_tags).map(|(t, _)| t).collect();
        format!("Summary: prefers {}\n", top.join(" "))
    }
}

impl ChatBackend for MockAnnotator {
    fn complete(&self, request: &ChatRequest) -> std::result::Result<String, String> {
        let input = input_section(&request.prompt).ok_or("mock: prompt has no Input section")?;
        Ok(match input.strip_prefix("Item Information: ") {
            Some(info) => self.item(info),
            None => self.user(input),
        })
    }
}

/// Result of an annotation call that did not hit a transport failure.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome<T> {
    Done(T),
    /// Every attempt produced unusable output; the last diagnostic is kept.
    Skipped(String),
}

pub struct LlmClient {
    backend: Box<dyn ChatBackend>,
    pub model: String,
    pub temperature: f64,
    pub max_retries: u32,
    pub timeout: Duration,
    /// Largest number of items listed in one user prompt.
    pub user_item_cap: usize,
    /// Concurrent requests for the batch helpers.
    pub in_flight: usize,
}

impl LlmClient {
    pub fn new(backend: Box<dyn ChatBackend>, model: impl Into<String>) -> Self {
        Self {
            backend,
            model: model.into(),
            temperature: 0.0,
            max_retries: 2,
            timeout: Duration::from_secs(60),
            user_item_cap: 50,
            in_flight: 4,
        }
    }

    pub fn http(url: &str, model: impl Into<String>, timeout: Duration) -> Self {
        let mut c = Self::new(Box::new(HttpChat::new(url, timeout)), model);
        c.timeout = timeout;
        c
    }

    pub fn mock() -> Self {
        let mut c = Self::new(Box::new(MockAnnotator::default()), "mock-annotator");
        c.in_flight = 1;
        c
    }

    /// Sends `prompt` up to `1 + max_retries` times until `accept` takes the
    /// reply.
    fn ask<T>(&self, prompt: String, accept: impl Fn(&str) -> std::result::Result<T, String>) -> Result<Outcome<T>> {
        let req = ChatRequest { model: self.model.clone(), temperature: self.temperature, prompt };
        let attempts = self.max_retries + 1;
        let mut last_transport = None;
        let mut last_diag = String::new();
        for attempt in 1..=attempts {
            match self.backend.complete(&req) {
                Ok(text) => match accept(&text) {
                    Ok(v) => return Ok(Outcome::Done(v)),
                    Err(d) => {
                        log::debug!("attempt {attempt}/{attempts}: unusable reply: {d}");
                        last_diag = d;
                        last_transport = None;
                    }
                },
                Err(e) => {
                    log::debug!("attempt {attempt}/{attempts}: transport error: {e}");
                    last_transport = Some(e);
                }
            }
        }
        match last_transport {
            Some(reason) => Err(Error::Transport { attempts, reason }),
            None => Ok(Outcome::Skipped(last_diag)),
        }
    }

    pub fn annotate_item(&self, meta: &ItemMeta) -> Result<Outcome<ItemAnnotation>> {
        let prompt = render_item_prompt(meta)?;
        self.ask(prompt, |text| {
            let p = parse_item_response(text)?;
            let a = ItemAnnotation { item_id: meta.item_id.clone(), summary: p.summary, tags: p.tags, edges: p.edges };
            a.validate()?;
            Ok(a)
        })
    }

    /// `items` are the user's train-split `(summary, tags)` pairs.
    pub fn summarize_user(&self, user_id: &str, items: &[(String, Vec<TagEntry>)]) -> Result<Outcome<String>> {
        if items.is_empty() {
            return Err(Error::NoTrainingItems(user_id.to_string()));
        }
        self.ask(render_user_prompt(items, self.user_item_cap), parse_user_response)
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.in_flight.max(1))
            .build()
            .map_err(|e| Error::Config(e.to_string()))
    }

    /// Annotates every item, in input order.
    pub fn annotate_all(&self, metas: &[ItemMeta]) -> Result<Vec<Outcome<ItemAnnotation>>> {
        self.pool()?.install(|| metas.par_iter().map(|m| self.annotate_item(m)).collect())
    }

    pub fn summarize_all(&self, users: &[(String, Vec<(String, Vec<TagEntry>)>)]) -> Result<Vec<Outcome<String>>> {
        self.pool()?.install(|| users.par_iter().map(|(u, items)| self.summarize_user(u, items)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    struct Scripted(Mutex<Vec<std::result::Result<String, String>>>);

    impl ChatBackend for Scripted {
        fn complete(&self, _: &ChatRequest) -> std::result::Result<String, String> {
            self.0.lock().unwrap().remove(0)
        }
    }

    fn scripted(replies: Vec<std::result::Result<&str, &str>>) -> LlmClient {
        let replies = replies.into_iter().map(|r| r.map(str::to_string).map_err(str::to_string)).collect();
        LlmClient::new(Box::new(Scripted(Mutex::new(replies))), "scripted")
    }

    fn meta(cats: &[&str]) -> ItemMeta {
        ItemMeta {
            item_id: "i1".into(),
            title: "Ocean Jigsaw".into(),
            categories: cats.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        }
    }

    fn tag(level: u8, name: &str) -> TagEntry {
        TagEntry { level, name: name.into() }
    }

    #[test]
    fn mock_follows_category_path() {
        let a = LlmClient::mock().annotate_item(&meta(&["Toys > Puzzles > Jigsaw"])).unwrap();
        let Outcome::Done(a) = a else { panic!() };
        assert_eq!(a.tags, vec![tag(1, "toys"), tag(2, "puzzles"), tag(3, "jigsaw")]);
        assert_eq!(a.edges, vec![("toys".into(), "puzzles".into()), ("puzzles".into(), "jigsaw".into())]);
        assert!(a.summary.starts_with("Ocean Jigsaw"));
    }

    #[test]
    fn mock_pads_short_paths() {
        let Outcome::Done(a) = LlmClient::mock().annotate_item(&meta(&["A"])).unwrap() else { panic!() };
        assert_eq!(a.tags, vec![tag(1, "a"), tag(2, "general-2"), tag(3, "general-3")]);
    }

    #[test]
    fn invalid_reply_is_retried() {
        let bad = "Summary: s\nTags: Level 1: a\nEdges: a -> z";
        let good = "Summary: s\nTags: Level 1: a; Level 2: b\nEdges: a -> b";
        let c = scripted(vec![Ok(bad), Ok(good)]);
        assert!(matches!(c.annotate_item(&meta(&["x"])).unwrap(), Outcome::Done(_)));
    }

    #[test]
    fn exhausted_retries_skip_or_fail() {
        let c = scripted(vec![Ok("junk"), Ok("junk"), Ok("junk")]);
        assert!(matches!(c.annotate_item(&meta(&["x"])).unwrap(), Outcome::Skipped(_)));
        let c = scripted(vec![Ok("junk"), Err("down"), Err("down")]);
        assert!(matches!(c.annotate_item(&meta(&["x"])), Err(Error::Transport { attempts: 3, .. })));
    }

    #[test]
    fn user_summary_echoes_dominant_tags() {
        let items = vec![("Ocean Jigsaw".to_string(), vec![tag(1, "toys"), tag(2, "puzzles"), tag(3, "jigsaw")])];
        let Outcome::Done(s) = LlmClient::mock().summarize_user("u", &items).unwrap() else { panic!() };
        assert_eq!(s, "prefers jigsaw puzzles toys");
        let err = LlmClient::mock().summarize_user("u", &[]).unwrap_err();
        assert!(err.to_string().contains("no training items"));
    }

    #[test]
    fn payload_is_byte_stable() {
        let r = ChatRequest { model: "m".into(), temperature: 0.0, prompt: render_item_prompt(&meta(&["x"])).unwrap() };
        assert_eq!(r.payload().to_string(), r.clone().payload().to_string());
    }

    #[test]
    fn batch_keeps_order() {
        let metas: Vec<ItemMeta> = (0..20)
            .map(|i| ItemMeta { item_id: format!("i{i}"), categories: vec![format!("c{i}")], ..Default::default() })
            .collect();
        let mut c = LlmClient::mock();
        c.in_flight = 3;
        let out = c.annotate_all(&metas).unwrap();
        for (i, o) in out.iter().enumerate() {
            let Outcome::Done(a) = o else { panic!() };
            assert_eq!(a.item_id, format!("i{i}"));
        }
    }
}

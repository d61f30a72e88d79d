//! Text encoders and the `HYPS` semantic-embedding file.
//!
//! `HYPS` layout (little-endian): magic `"HYPS"`, version `u32`, `d1` `u32`,
//! row count `u64`, then `rows x d1` `f32` row-major. The sidecar
//! `<file>.tsv` maps row index to entity id; lines starting with `#` carry
//! provenance.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde_json::{json, Value};

use super::llm::{http_agent, post_json};
use crate::error::{Error, Result};
use crate::model::Role;
use crate::moe::{Provenance, SemanticTable};

pub const HYPS_MAGIC: &[u8; 4] = b"HYPS";
pub const HYPS_VERSION: u32 = 1;

/// Batch embedding transport. Must return one vector per input, in order.
pub trait EmbedBackend: Send + Sync {
    fn embed(&self, texts: &[String]) -> std::result::Result<Vec<Vec<f32>>, String>;
}

/// OpenAI-style `embeddings` endpoint.
pub struct HttpEmbed {
    url: String,
    model: String,
    agent: ureq::Agent,
}

impl HttpEmbed {
    pub fn new(url: impl Into<String>, model: impl Into<String>, timeout: Duration) -> Self {
        Self { url: url.into(), model: model.into(), agent: http_agent(timeout) }
    }
}

impl EmbedBackend for HttpEmbed {
    fn embed(&self, texts: &[String]) -> std::result::Result<Vec<Vec<f32>>, String> {
        let v = post_json(&self.agent, &self.url, &json!({"model": self.model, "input": texts}))?;
        let data = v.get("data").and_then(Value::as_array).ok_or("response has no data array")?;
        let mut rows: Vec<(usize, Vec<f32>)> = Vec::with_capacity(data.len());
        for (pos, d) in data.iter().enumerate() {
            let index = d.get("index").and_then(Value::as_u64).map_or(pos, |i| i as usize);
            let emb = d
                .get("embedding")
                .and_then(Value::as_array)
                .ok_or("data entry has no embedding")?
                .iter()
                .map(|x| x.as_f64().map(|x| x as f32).ok_or("non-numeric embedding entry"))
                .collect::<std::result::Result<Vec<f32>, _>>()?;
            rows.push((index, emb));
        }
        rows.sort_by_key(|r| r.0);
        Ok(rows.into_iter().map(|r| r.1).collect())
    }
}

/// Word tokens: maximal alphanumeric runs, lowercased.
pub fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase)
}

fn fnv1a(seed: u64, token: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in seed.to_le_bytes().iter().chain(token.as_bytes()) {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Bucket and sign of a token under the mock encoder's hashing.
pub fn hash_slot(seed: u64, token: &str, dim: usize) -> (usize, f64) {
    let h = fnv1a(seed, token);
    ((h % dim as u64) as usize, if h >> 63 == 0 { 1.0 } else { -1.0 })
}

/// Signed feature hashing of word tokens, L2-normalized.
#[derive(Debug, Clone, Copy)]
pub struct MockEncoder {
    pub seed: u64,
    pub dim: usize,
}

impl MockEncoder {
    pub fn encode_one(&self, text: &str) -> Vec<f32> {
        let mut v = vec![0.0f64; self.dim];
        for t in tokens(text) {
            let (slot, sign) = hash_slot(self.seed, &t, self.dim);
            v[slot] += sign;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v.into_iter().map(|x| x as f32).collect()
    }
}

impl EmbedBackend for MockEncoder {
    fn embed(&self, texts: &[String]) -> std::result::Result<Vec<Vec<f32>>, String> {
        Ok(texts.iter().map(|t| self.encode_one(t)).collect())
    }
}

pub struct EncoderClient {
    backend: Box<dyn EmbedBackend>,
    pub name: String,
    pub model: String,
    pub dim: usize,
    pub batch_size: usize,
}

impl EncoderClient {
    pub fn new(backend: Box<dyn EmbedBackend>, name: &str, model: &str, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("encoder dimension must be at least 1".into()));
        }
        Ok(Self { backend, name: name.into(), model: model.into(), dim, batch_size: 64 })
    }

    pub fn mock(seed: u64, dim: usize) -> Result<Self> {
        Self::new(Box::new(MockEncoder { seed, dim }), "mock", &format!("feature-hash-seed{seed}"), dim)
    }

    pub fn http(url: &str, model: &str, dim: usize, timeout: Duration) -> Result<Self> {
        Self::new(Box::new(HttpEmbed::new(url, model, timeout)), url, model, dim)
    }

    /// One `d1` row per text, in input order.
    pub fn encode(&self, role: Role, ids: Vec<String>, texts: &[String]) -> Result<SemanticTable> {
        if ids.len() != texts.len() {
            return Err(Error::Shape(format!("{} ids for {} texts", ids.len(), texts.len())));
        }
        if let Some(pos) = texts.iter().position(|t| t.trim().is_empty()) {
            return Err(Error::Contract(format!("empty text for {}", ids[pos])));
        }
        let mut values = Vec::with_capacity(texts.len() * self.dim);
        for chunk in texts.chunks(self.batch_size.max(1)) {
            let rows = self.backend.embed(chunk).map_err(|reason| Error::Transport { attempts: 1, reason })?;
            if rows.len() != chunk.len() {
                return Err(Error::Data(format!("encoder returned {} rows for {} texts", rows.len(), chunk.len())));
            }
            for r in rows {
                if r.len() != self.dim {
                    return Err(Error::Data(format!("encoder returned dimension {}, expected {}", r.len(), self.dim)));
                }
                values.extend(r);
            }
        }
        SemanticTable::new(role, self.dim, ids, values, Provenance { encoder: self.name.clone(), model: self.model.clone() })
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".tsv");
    PathBuf::from(s)
}

pub fn write_hyps(path: &Path, table: &SemanticTable) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(std::fs::File::create(path).map_err(io)?);
    w.write_all(HYPS_MAGIC).map_err(io)?;
    w.write_all(&HYPS_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(table.dim() as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&(table.rows() as u64).to_le_bytes()).map_err(io)?;
    for v in table.values() {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)?;

    let side = sidecar_path(path);
    let io = |e| Error::io(&side, e);
    let mut w = BufWriter::new(std::fs::File::create(&side).map_err(io)?);
    let p = table.provenance();
    writeln!(w, "# role={}\tencoder={}\tmodel={}", table.role().as_str(), p.encoder, p.model).map_err(io)?;
    for (i, id) in table.ids().iter().enumerate() {
        writeln!(w, "{i}\t{id}").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_hyps(path: &Path, role: Role) -> Result<SemanticTable> {
    let bad = |reason: String| Error::Checkpoint { path: path.to_path_buf(), reason };
    let mut bytes = Vec::new();
    std::fs::File::open(path).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 20 || &bytes[..4] != HYPS_MAGIC {
        return Err(bad("not a HYPS file".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != HYPS_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let rows = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let expect = rows.checked_mul(dim).and_then(|n| n.checked_mul(4)).ok_or_else(|| bad("size overflow".into()))?;
    if bytes.len() - 20 != expect {
        return Err(bad(format!("payload is {} bytes, header implies {expect}", bytes.len() - 20)));
    }
    let values: Vec<f32> = bytes[20..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();

    let side = sidecar_path(path);
    let file = std::fs::File::open(&side).map_err(|e| Error::io(&side, e))?;
    let mut ids = Vec::with_capacity(rows);
    let mut prov = Provenance::default();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&side, e))?;
        if let Some(meta) = line.strip_prefix("# ") {
            for kv in meta.split('\t') {
                match kv.split_once('=') {
                    Some(("encoder", v)) => prov.encoder = v.into(),
                    Some(("model", v)) => prov.model = v.into(),
                    _ => {}
                }
            }
            continue;
        }
        let (idx, id) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse("HYPS sidecar", format!("{}:{}", side.display(), n + 1), "expected idx<TAB>id"))?;
        if idx.parse::<usize>().ok() != Some(ids.len()) {
            return Err(Error::parse("HYPS sidecar", format!("{}:{}", side.display(), n + 1), "rows must be 0..n in order"));
        }
        ids.push(id.to_string());
    }
    if ids.len() != rows {
        return Err(bad(format!("sidecar lists {} ids for {rows} rows", ids.len())));
    }
    SemanticTable::new(role, dim, ids, values, prov)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn enc(dim: usize) -> EncoderClient {
        EncoderClient::mock(3, dim).unwrap()
    }

    fn texts(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn unit_norm_and_determinism() {
        let t = texts(&["red wooden puzzle", "red wooden puzzle", "blue car"]);
        let ids = texts(&["a", "b", "c"]);
        let s = enc(64).encode(Role::Item, ids, &t).unwrap();
        assert_eq!(s.row(0), s.row(1));
        for r in 0..3 {
            let n: f64 = s.row(r).iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn permutation_is_preserved() {
        let t = texts(&["one", "two", "three", "four", "five"]);
        let ids = texts(&["1", "2", "3", "4", "5"]);
        let mut e = enc(32);
        e.batch_size = 2;
        let a = e.encode(Role::User, ids.clone(), &t).unwrap();
        let order = [4, 2, 0, 3, 1];
        let pt: Vec<String> = order.iter().map(|&i| t[i].clone()).collect();
        let pi: Vec<String> = order.iter().map(|&i| ids[i].clone()).collect();
        let b = e.encode(Role::User, pi, &pt).unwrap();
        for (row, &i) in order.iter().enumerate() {
            assert_eq!(b.row(row), a.row(i));
        }
    }

    #[test]
    fn disjoint_tokens_without_collisions_are_orthogonal() {
        let dim = 256;
        let mut used = std::collections::HashSet::new();
        let words: Vec<String> = (0..200)
            .map(|i| format!("w{i}"))
            .filter(|w| used.insert(hash_slot(3, w, dim).0))
            .take(8)
            .collect();
        assert_eq!(words.len(), 8);
        let a = MockEncoder { seed: 3, dim }.encode_one(&words[..4].join(" "));
        let b = MockEncoder { seed: 3, dim }.encode_one(&words[4..].join(" "));
        assert_eq!(a.iter().zip(&b).map(|(x, y)| x * y).sum::<f32>(), 0.0);
    }

    #[test]
    fn empty_text_is_rejected() {
        assert!(enc(8).encode(Role::Item, texts(&["a"]), &texts(&[" "])).is_err());
        assert!(EncoderClient::mock(1, 0).is_err());
    }

    #[test]
    fn hyps_round_trip_and_layout() {
        let s = enc(16).encode(Role::Item, texts(&["x", "y"]), &texts(&["alpha beta", "gamma"])).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("items.hyps");
        write_hyps(&p, &s).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[..4], b"HYPS");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 16);
        assert_eq!(u64::from_le_bytes(bytes[12..20].try_into().unwrap()), 2);
        assert_eq!(bytes.len(), 20 + 2 * 16 * 4);
        assert_eq!(read_hyps(&p, Role::Item).unwrap(), s);
        std::fs::write(&p, &bytes[..bytes.len() - 1]).unwrap();
        assert!(read_hyps(&p, Role::Item).is_err());
    }
}

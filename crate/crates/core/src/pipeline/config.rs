//! Run configuration: `[corpus]`, `[geometry]`, `[train]`, `[moe]`, `[llm]`,
//! `[encoder]`, `[paths]`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ManifoldConfig;
use crate::model::MarginSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContrastiveMode {
    /// Denominator over the items of the current batch.
    InBatch,
    /// Denominator over the whole catalog.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub min_rating: f64,
    /// k of the k-core filter; 0 disables it.
    pub core: usize,
}

impl Default for CorpusSection {
    fn default() -> Self {
        Self { min_rating: 4.0, core: 5 }
    }
}

/// Chat endpoint settings. An empty `endpoint` means `--endpoint` or
/// `--mock` must be given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSection {
    pub endpoint: String,
    pub model: String,
    pub max_retries: u32,
    pub timeout_s: f64,
    pub in_flight: usize,
    pub user_item_cap: usize,
}

impl Default for LlmSection {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            model: "llama3-8b-instruct".into(),
            max_retries: 2,
            timeout_s: 60.0,
            in_flight: 4,
            user_item_cap: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSection {
    pub endpoint: String,
    pub model: String,
    pub batch_size: usize,
    pub timeout_s: f64,
    /// Hash seed of the mock encoder.
    pub mock_seed: u64,
}

impl Default for EncoderSection {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            model: "text-embedding-3-large".into(),
            batch_size: 64,
            timeout_s: 60.0,
            mock_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySection {
    /// Curvature, strictly negative.
    pub c: f64,
    /// Tangent (ID embedding) dimension `d2`.
    pub dim: usize,
}

impl Default for GeometrySection {
    fn default() -> Self {
        Self { c: -1.0, dim: crate::moe::DEFAULT_TANGENT_DIM }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Margin of the MoE phase.
    pub m1: f64,
    /// Margin of the user-item loss.
    pub m2: f64,
    /// Margin of the tag-item loss.
    pub m3: f64,
    /// Weight of the contrastive term.
    pub w: f64,
    pub tau: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
    pub layers: usize,
    pub seed: u64,
    pub distance_power: u8,
    pub negatives: usize,
    pub contrastive_mode: ContrastiveMode,
    /// Standard deviation of random ID-embedding initialization.
    pub init_std: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            m1: 0.1,
            m2: 0.1,
            m3: 0.1,
            w: 0.01,
            tau: 0.5,
            lr: 1e-3,
            batch_size: 1024,
            epochs: 500,
            patience: 50,
            layers: crate::model::DEFAULT_LAYERS,
            seed: 1,
            distance_power: 2,
            negatives: 1,
            contrastive_mode: ContrastiveMode::InBatch,
            init_std: crate::model::INIT_STD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MoeSection {
    pub experts: usize,
    /// Semantic embedding dimension `d1`.
    pub semantic_dim: usize,
    pub lr: f64,
    pub epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
}

impl Default for MoeSection {
    fn default() -> Self {
        Self {
            experts: crate::moe::DEFAULT_EXPERTS,
            semantic_dim: crate::moe::DEFAULT_SEMANTIC_DIM,
            lr: 1e-3,
            epochs: 50,
            patience: 10,
            batch_size: 4096,
        }
    }
}

/// File locations; relative paths resolve against the config file's
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub reviews: PathBuf,
    pub metadata: PathBuf,
    /// Split directory written by `prepare`.
    pub data: PathBuf,
    pub annotations: PathBuf,
    pub user_summaries: PathBuf,
    pub item_semantic: PathBuf,
    pub user_semantic: PathBuf,
    /// Parent of per-run directories.
    pub runs: PathBuf,
}

impl Default for PathsSection {
    fn default() -> Self {
        Self {
            reviews: "reviews.csv".into(),
            metadata: "metadata.jsonl".into(),
            data: "data".into(),
            annotations: "annotations.jsonl".into(),
            user_summaries: "user_summaries.jsonl".into(),
            item_semantic: "items.hyps".into(),
            user_semantic: "users.hyps".into(),
            runs: "runs".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub corpus: CorpusSection,
    pub geometry: GeometrySection,
    pub train: TrainConfig,
    pub moe: MoeSection,
    pub llm: LlmSection,
    pub encoder: EncoderSection,
    pub paths: PathsSection,
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        let t = &self.train;
        ManifoldConfig::new(self.geometry.c, self.geometry.dim)?;
        for (name, m) in [("m1", t.m1), ("m2", t.m2), ("m3", t.m3)] {
            MarginSpec::new(m, t.distance_power).map_err(|e| Error::Config(format!("{name}: {e}")))?;
        }
        if !(t.tau > 0.0) {
            return Err(Error::Config(format!("tau must be positive, got {}", t.tau)));
        }
        if !(t.w >= 0.0) {
            return Err(Error::Config(format!("w must be nonnegative, got {}", t.w)));
        }
        if !(t.lr > 0.0) || !(self.moe.lr > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if t.patience > t.epochs || self.moe.patience > self.moe.epochs {
            return Err(Error::Config("patience must not exceed the epoch cap".into()));
        }
        if t.batch_size == 0 || self.moe.batch_size == 0 || t.negatives == 0 {
            return Err(Error::Config("batch sizes and negatives must be at least 1".into()));
        }
        if self.moe.experts == 0 || self.moe.semantic_dim == 0 {
            return Err(Error::Config("experts and semantic_dim must be at least 1".into()));
        }
        if !(t.init_std >= 0.0) {
            return Err(Error::Config("init_std must be nonnegative".into()));
        }
        if !(self.llm.timeout_s > 0.0) || !(self.encoder.timeout_s > 0.0) {
            return Err(Error::Config("timeouts must be positive".into()));
        }
        if self.llm.in_flight == 0 || self.llm.user_item_cap == 0 || self.encoder.batch_size == 0 {
            return Err(Error::Config("in_flight, user_item_cap and encoder batch_size must be at least 1".into()));
        }
        Ok(())
    }

    pub fn manifold(&self) -> ManifoldConfig {
        ManifoldConfig::new(self.geometry.c, self.geometry.dim).expect("validated config")
    }

    /// Parses TOML text, applies `section.key=value` overrides, validates.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: Config = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative `[paths]` entries are resolved against
    /// its directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text, overrides)?;
        if let Some(dir) = path.parent() {
            cfg.paths.resolve_against(dir);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

impl PathsSection {
    pub fn resolve_against(&mut self, dir: &Path) {
        for p in [
            &mut self.reviews,
            &mut self.metadata,
            &mut self.data,
            &mut self.annotations,
            &mut self.user_summaries,
            &mut self.item_semantic,
            &mut self.user_semantic,
            &mut self.runs,
        ] {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
    }
}

/// Every `section.key` the config accepts.
pub fn config_keys() -> Vec<String> {
    let v = toml::Value::try_from(Config::default()).expect("config serializes");
    let mut keys = Vec::new();
    for (section, body) in v.as_table().unwrap() {
        for key in body.as_table().unwrap().keys() {
            keys.push(format!("{section}.{key}"));
        }
    }
    keys
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| Error::Config(format!("override {spec:?} is not key=value")))?;
    let key = key.trim();
    if !config_keys().iter().any(|k| k == key) {
        return Err(Error::Config(format!("unknown config key {key:?}")));
    }
    let (section, field) = key.split_once('.').unwrap();
    let raw = raw.trim();
    // bare words become strings
    let value: toml::Value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    table
        .entry(section.to_string())
        .or_insert_with(|| toml::Value::Table(Default::default()))
        .as_table_mut()
        .ok_or_else(|| Error::Config(format!("[{section}] is not a table")))?
        .insert(field.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = Config::default();
        c.validate().unwrap();
        assert_eq!(Config::from_toml(&c.to_toml(), &[]).unwrap(), c);
        assert_eq!((c.train.w, c.train.tau, c.train.epochs, c.train.patience), (0.01, 0.5, 500, 50));
    }

    #[test]
    fn unknown_keys_are_errors() {
        assert!(Config::from_toml("[train]\nbogus = 1\n", &[]).is_err());
        assert!(Config::from_toml("[nope]\n", &[]).is_err());
        assert!(Config::from_toml("", &["train.bogus=1".into()]).is_err());
    }

    #[test]
    fn overrides_apply() {
        let c = Config::from_toml("[train]\nm2 = 0.5\n", &["train.m2=1.5".into(), "train.contrastive_mode=full".into()])
            .unwrap();
        assert_eq!(c.train.m2, 1.5);
        assert_eq!(c.train.contrastive_mode, ContrastiveMode::Full);
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(Config::from_toml("[train]\ntau = 0.0\n", &[]).is_err());
        assert!(Config::from_toml("[train]\nepochs = 5\npatience = 6\n", &[]).is_err());
        assert!(Config::from_toml("[geometry]\nc = 1.0\n", &[]).is_err());
    }

    #[test]
    fn every_train_field_has_a_key() {
        let keys = config_keys();
        for k in ["m1", "m2", "m3", "w", "tau", "lr", "batch_size", "epochs", "patience", "layers", "seed"] {
            assert!(keys.contains(&format!("train.{k}")), "{k}");
        }
        assert!(keys.contains(&"train.contrastive_mode".to_string()));
    }
}

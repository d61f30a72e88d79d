//! Two-phase training.
//!
//! Phase 1 (`meta`) trains only the MoE adapter: semantic tables go through
//! the adapter, the parameter-free propagation model and the margin loss,
//! with everything but the adapter frozen. Phase 2 (`full`) copies the
//! adapter outputs into the ID tables (or draws them at random) and trains
//! the user-item loss, optionally joined by the tag-item loss and the
//! contrastive alignment of the two item views.

mod config;
mod data;
mod run;
mod train;
mod variant;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::ManifoldConfig;
use crate::model::Adjacency;
use crate::moe::SemanticTable;

pub use config::{
    config_keys, Config, ContrastiveMode, CorpusSection, EncoderSection, GeometrySection, LlmSection, MoeSection,
    PathsSection, TrainConfig,
};
pub use data::{synthetic_data, TrainData};
pub use variant::{run_variant, VariantRun};
pub use run::{read_epoch_log, write_batch_log, write_epoch_log, RunDir};
pub use train::{
    evaluate, init_from_moe, item_tangent_coords, random_init, run_phase1, run_phase2, validation_recall, BatchLog, EpochLog, Phase,
    Phase1Outcome, Phase2Outcome, PhaseState, VAL_K,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    Base,
    Structural,
    Semantic,
    HyperLlm,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Base, Variant::Structural, Variant::Semantic, Variant::HyperLlm];

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Base => "base",
            Variant::Structural => "structural",
            Variant::Semantic => "semantic",
            Variant::HyperLlm => "hyperllm",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?} (base|structural|semantic|hyperllm)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    /// Phase 1: MoE against the frozen model.
    MetaPhase,
    /// ID tables copied from the MoE outputs.
    MoeInit,
    UserItemLoss,
    TagLoss,
    Contrastive,
}

/// What a variant runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub variant: Variant,
    pub stages: BTreeSet<Stage>,
    /// Contrastive weight actually used (zero without the stage).
    pub w: f64,
}

impl Plan {
    pub fn has(&self, s: Stage) -> bool {
        self.stages.contains(&s)
    }
}

pub fn variant_matrix(variant: Variant, cfg: &TrainConfig) -> Plan {
    use Stage::*;
    let structural = [UserItemLoss, TagLoss, Contrastive];
    let semantic = [MetaPhase, MoeInit, UserItemLoss];
    let stages: BTreeSet<Stage> = match variant {
        Variant::Base => [UserItemLoss].into(),
        Variant::Structural => structural.into(),
        Variant::Semantic => semantic.into(),
        Variant::HyperLlm => structural.into_iter().chain(semantic).collect(),
    };
    let w = if stages.contains(&Contrastive) { cfg.w } else { 0.0 };
    Plan { variant, stages, w }
}

/// SHA-256 of a semantic table's ids and values.
pub fn semantic_hash(t: &SemanticTable) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update((t.dim() as u64).to_le_bytes());
    for id in t.ids() {
        h.update((id.len() as u64).to_le_bytes());
        h.update(id.as_bytes());
    }
    for v in t.values() {
        h.update(v.to_le_bytes());
    }
    h.finalize().into()
}

/// SHA-256 of everything the propagation model is made of: graph, layer
/// count, curvature.
pub fn structure_hash(adj: &Adjacency, layers: usize, cfg: &ManifoldConfig) -> [u8; 32] {
    let mut h = Sha256::new();
    for b in 0..adj.num_blocks() {
        h.update((adj.block_range(b).len() as u64).to_le_bytes());
    }
    for &(a, b) in adj.edges() {
        h.update((a as u64).to_le_bytes());
        h.update((b as u64).to_le_bytes());
    }
    h.update((layers as u64).to_le_bytes());
    h.update(cfg.k().to_le_bytes());
    h.update((cfg.dim() as u64).to_le_bytes());
    h.finalize().into()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plans() {
        let cfg = TrainConfig::default();
        let base = variant_matrix(Variant::Base, &cfg);
        assert!(!base.has(Stage::MetaPhase));
        assert_eq!(base.w, 0.0);
        let sem = variant_matrix(Variant::Semantic, &cfg);
        assert!(sem.has(Stage::MetaPhase) && !sem.has(Stage::TagLoss) && !sem.has(Stage::Contrastive));
        let st = variant_matrix(Variant::Structural, &cfg);
        let all = variant_matrix(Variant::HyperLlm, &cfg);
        assert_eq!(all.stages, st.stages.union(&sem.stages).cloned().collect());
        assert_eq!(all.w, 0.01);
    }

    #[test]
    fn variant_names() {
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
        }
        assert!("nope".parse::<Variant>().is_err());
    }
}

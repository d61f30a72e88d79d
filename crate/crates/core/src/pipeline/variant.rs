use super::config::Config;
use super::data::TrainData;
use super::train::{init_from_moe, random_init, run_phase1, run_phase2, Phase1Outcome, Phase2Outcome};
use super::{variant_matrix, Plan, Stage, Variant};
use crate::error::Result;

/// Both phases of one variant.
#[derive(Debug, Clone)]
pub struct VariantRun {
    pub plan: Plan,
    pub phase1: Option<Phase1Outcome>,
    pub phase2: Phase2Outcome,
}

/// Runs the phases `variant` calls for: the adapter first when the plan
/// has it, then joint training from the adapter outputs or a random start.
pub fn run_variant(cfg: &Config, variant: Variant, data: &TrainData, timed: bool) -> Result<VariantRun> {
    let plan = variant_matrix(variant, &cfg.train);
    let (phase1, init) = if plan.has(Stage::MetaPhase) {
        let p1 = run_phase1(cfg, data, timed)?;
        let init = init_from_moe(&p1.moe, data, cfg)?;
        (Some(p1), init)
    } else {
        (None, random_init(data, cfg))
    };
    let phase2 = run_phase2(cfg, &plan, data, init, timed)?;
    Ok(VariantRun { plan, phase1, phase2 })
}

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{Config, ContrastiveMode};
use super::data::TrainData;
use super::{Plan, Stage};
use crate::error::{Error, Result};
use crate::geometry::log0_raw;
use crate::eval::{rank_hyperbolic, recall_at_k, RankingResult};
use crate::model::{
    contrastive_accumulate, margin_accumulate, sample_negative, Adjacency, EmbeddingTable, MarginSpec,
    Representation, Role,
};
use crate::moe::{transform_table, transform_table_backward, MoEParams, SemanticTable};
use crate::optim::Adam;

/// Cutoff of the early-stopping metric.
pub const VAL_K: usize = 20;

/// One row of the per-epoch metric log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss_ui: f64,
    pub loss_tag: f64,
    pub loss_cl: f64,
    #[serde(rename = "val_recall@20")]
    pub val_recall: f64,
    /// Wall time since the phase started; left empty in deterministic runs.
    pub elapsed_s: Option<f64>,
}

/// One row of the per-batch loss log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchLog {
    pub epoch: usize,
    pub batch: usize,
    pub loss_ui: f64,
    pub loss_tag: f64,
    pub loss_cl: f64,
    pub w: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Meta,
    Full,
}

/// Trainable and frozen state of one phase.
#[derive(Debug, Clone)]
pub struct PhaseState {
    pub phase: Phase,
    pub moe: Option<MoEParams>,
    pub users: EmbeddingTable,
    pub items: EmbeddingTable,
    pub tags: Option<EmbeddingTable>,
    pub epoch: usize,
    pub best_metric: f64,
    pub best_epoch: usize,
}

impl PhaseState {
    /// Components that do not change during the phase.
    pub fn frozen(&self) -> &'static [&'static str] {
        match self.phase {
            Phase::Meta => &["semantic tables", "propagation model"],
            Phase::Full => &["moe", "semantic tables"],
        }
    }
}

#[derive(Debug, Clone)]
pub struct Phase1Outcome {
    /// Adapter of the best validation epoch.
    pub moe: MoEParams,
    /// Validation recall of the untrained adapter.
    pub initial_val: f64,
    pub best_val: f64,
    /// 0 when no epoch beat the untrained adapter.
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
}

#[derive(Debug, Clone)]
pub struct Phase2Outcome {
    /// Tables of the best validation epoch.
    pub state: PhaseState,
    pub initial_val: f64,
    pub log: Vec<EpochLog>,
    pub batches: Vec<BatchLog>,
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mean margin loss over `(user, item)` train pairs with `negatives`
/// sampled items each; gradients go into `grad` scaled by `1 / terms`.
fn user_item_terms<R: Rng>(
    rep: &Representation,
    data: &TrainData,
    batch: &[(usize, usize)],
    spec: MarginSpec,
    negatives: usize,
    k: f64,
    rng: &mut R,
    grad: &mut [f64],
) -> f64 {
    let nu = data.num_users();
    let mut triples = Vec::with_capacity(batch.len() * negatives);
    for &(u, i) in batch {
        for _ in 0..negatives {
            if let Some(j) = sample_negative(u, 1, &data.ui, rng) {
                triples.push((u, nu + i, j));
            }
        }
    }
    if triples.is_empty() {
        return 0.0;
    }
    let weight = 1.0 / triples.len() as f64;
    let sum: f64 = triples.iter().map(|&(a, p, n)| margin_accumulate(rep, a, p, n, spec, k, weight, grad)).sum();
    sum * weight
}

/// Mean margin loss over `count` uniformly drawn tag-graph pairs.
fn tag_terms<R: Rng>(
    rep: &Representation,
    adj: &Adjacency,
    pairs: &[(usize, usize)],
    count: usize,
    spec: MarginSpec,
    k: f64,
    rng: &mut R,
    grad: &mut [f64],
) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let mut triples = Vec::with_capacity(count);
    for _ in 0..count {
        let (a, p) = pairs[rng.random_range(0..pairs.len())];
        if let Some(n) = sample_negative(a, adj.block_of(p), adj, rng) {
            triples.push((a, p, n));
        }
    }
    if triples.is_empty() {
        return 0.0;
    }
    let weight = 1.0 / triples.len() as f64;
    let sum: f64 = triples.iter().map(|&(a, p, n)| margin_accumulate(rep, a, p, n, spec, k, weight, grad)).sum();
    sum * weight
}

fn ranked(values_ui: &[f64], data: &TrainData, cfg: &Config, masks: &[&[Vec<usize>]], names: &[&'static str], k: usize) -> Result<RankingResult> {
    let man = cfg.manifold();
    let d = cfg.geometry.dim;
    let rep = Representation::build(values_ui, d, &data.ui, cfg.train.layers, &man);
    let split = data.num_users() * (d + 1);
    let pts = rep.points();
    rank_hyperbolic(&pts[..split], &pts[split..], d, man.k(), cfg.train.distance_power, masks, names, k)
}

/// Validation Recall@20 of `[users | items]` tangent rows, train masked.
pub fn validation_recall(values_ui: &[f64], data: &TrainData, cfg: &Config) -> Result<f64> {
    let r = ranked(values_ui, data, cfg, &[&data.train_sets], &["train"], VAL_K)?;
    Ok(recall_at_k(&r, &data.val_sets, VAL_K))
}

/// Test ranking to depth `k` with train and validation items masked.
pub fn evaluate(users: &EmbeddingTable, items: &EmbeddingTable, data: &TrainData, cfg: &Config, k: usize) -> Result<RankingResult> {
    let mut v = users.values().to_vec();
    v.extend_from_slice(items.values());
    ranked(&v, data, cfg, &[&data.train_sets, &data.val_sets], &["train", "val"], k)
}

/// `log0` of the propagated item representations, row-major `items x dim`.
pub fn item_tangent_coords(users: &EmbeddingTable, items: &EmbeddingTable, data: &TrainData, cfg: &Config) -> Vec<f64> {
    let man = cfg.manifold();
    let d = cfg.geometry.dim;
    let mut v = users.values().to_vec();
    v.extend_from_slice(items.values());
    let rep = Representation::build(&v, d, &data.ui, cfg.train.layers, &man);
    let pts = rep.points();
    pts[data.num_users() * (d + 1)..].chunks(d + 1).flat_map(|x| log0_raw(x, man.k())).collect()
}

fn moe_embed(moe: &MoEParams, us: &SemanticTable, is: &SemanticTable) -> Vec<f64> {
    let mut v = transform_table(us, moe);
    v.extend(transform_table(is, moe));
    v
}

fn shuffled_train(data: &TrainData, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let mut order = data.split.train.clone();
    order.shuffle(rng);
    order
}

/// Phase 1: train the adapter against the frozen propagation model.
pub fn run_phase1(cfg: &Config, data: &TrainData, timed: bool) -> Result<Phase1Outcome> {
    cfg.validate()?;
    let (us, is) = data.semantics()?;
    if us.dim() != cfg.moe.semantic_dim {
        return Err(Error::Shape(format!("semantic tables have dim {}, config says {}", us.dim(), cfg.moe.semantic_dim)));
    }
    let man = cfg.manifold();
    let (d, k, layers) = (cfg.geometry.dim, man.k(), cfg.train.layers);
    let spec = MarginSpec::new(cfg.train.m1, cfg.train.distance_power)?;
    let mut rng = rng_for(cfg.train.seed, 1);
    let mut moe = MoEParams::init(cfg.moe.experts, cfg.moe.semantic_dim, d, &mut rng)?;
    let nu_d = data.num_users() * d;

    let initial_val = validation_recall(&moe_embed(&moe, us, is), data, cfg)?;
    let mut best = (initial_val, 0usize, moe.clone());
    let mut opt = Adam::new(moe.values().len(), cfg.moe.lr);
    let mut log = Vec::new();
    let start = Instant::now();
    for epoch in 1..=cfg.moe.epochs {
        let order = shuffled_train(data, &mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for (b, batch) in order.chunks(cfg.moe.batch_size).enumerate() {
            let x = moe_embed(&moe, us, is);
            let rep = Representation::build(&x, d, &data.ui, layers, &man);
            let mut gp = rep.grad_buffer();
            let loss = user_item_terms(&rep, data, batch, spec, cfg.train.negatives, k, &mut rng, &mut gp);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b, loss_ui: loss, loss_tag: 0.0, loss_cl: 0.0 });
            }
            let gx = rep.backward(&gp, &data.ui, layers, k);
            let mut g = transform_table_backward(us, &moe, &gx[..nu_d]);
            let gi = transform_table_backward(is, &moe, &gx[nu_d..]);
            g.iter_mut().zip(&gi).for_each(|(a, b)| *a += b);
            opt.step(moe.values_mut(), &g);
            loss_sum += loss;
            batches += 1;
        }
        let val = validation_recall(&moe_embed(&moe, us, is), data, cfg)?;
        log.push(EpochLog {
            epoch,
            loss_ui: loss_sum / batches.max(1) as f64,
            loss_tag: 0.0,
            loss_cl: 0.0,
            val_recall: val,
            elapsed_s: timed.then(|| start.elapsed().as_secs_f64()),
        });
        log::info!("meta epoch {epoch}: loss {:.5} val recall@20 {val:.5}", loss_sum / batches.max(1) as f64);
        if val > best.0 {
            best = (val, epoch, moe.clone());
        } else if epoch - best.1 >= cfg.moe.patience {
            break;
        }
    }
    Ok(Phase1Outcome { moe: best.2, initial_val, best_val: best.0, best_epoch: best.1, log })
}

/// ID tables copied from the adapter outputs; the tag table is Gaussian.
pub fn init_from_moe(
    moe: &MoEParams,
    data: &TrainData,
    cfg: &Config,
) -> Result<(EmbeddingTable, EmbeddingTable, Option<EmbeddingTable>)> {
    let (us, is) = data.semantics()?;
    let d = cfg.geometry.dim;
    if moe.d_out() != d {
        return Err(Error::Shape(format!("adapter output dim {} vs embedding dim {d}", moe.d_out())));
    }
    let users = EmbeddingTable::from_values(Role::User, us.rows(), d, transform_table(us, moe))?;
    let items = EmbeddingTable::from_values(Role::Item, is.rows(), d, transform_table(is, moe))?;
    let mut rng = rng_for(cfg.train.seed, 3);
    let tags = data.tags.as_ref().map(|g| EmbeddingTable::gaussian(Role::Tag, g.num_tags(), d, cfg.train.init_std, &mut rng));
    Ok((users, items, tags))
}

/// Gaussian ID tables for every entity.
pub fn random_init(data: &TrainData, cfg: &Config) -> (EmbeddingTable, EmbeddingTable, Option<EmbeddingTable>) {
    let mut rng = rng_for(cfg.train.seed, 2);
    let (d, s) = (cfg.geometry.dim, cfg.train.init_std);
    let users = EmbeddingTable::gaussian(Role::User, data.num_users(), d, s, &mut rng);
    let items = EmbeddingTable::gaussian(Role::Item, data.num_items(), d, s, &mut rng);
    let mut rng = rng_for(cfg.train.seed, 3);
    let tags = data.tags.as_ref().map(|g| EmbeddingTable::gaussian(Role::Tag, g.num_tags(), d, s, &mut rng));
    (users, items, tags)
}

/// Phase 2: joint training of the ID tables.
///
/// Parameters live in one buffer `[users | items | tags]`. Every batch runs
/// the user-item side over the train graph and, when the plan has tag
/// stages, the tag side over the tag graph with the same item rows.
pub fn run_phase2(
    cfg: &Config,
    plan: &Plan,
    data: &TrainData,
    init: (EmbeddingTable, EmbeddingTable, Option<EmbeddingTable>),
    timed: bool,
) -> Result<Phase2Outcome> {
    cfg.validate()?;
    let t = &cfg.train;
    let man = cfg.manifold();
    let (d, k, layers) = (cfg.geometry.dim, man.k(), t.layers);
    let (nu, ni) = (data.num_users(), data.num_items());
    let (users, items, tags) = init;
    if users.rows() != nu || items.rows() != ni || users.dim() != d || items.dim() != d {
        return Err(Error::Shape("initial tables do not match the data".into()));
    }
    let use_tags = plan.has(Stage::TagLoss);
    let use_cl = plan.has(Stage::Contrastive) && plan.w > 0.0;
    let (tag_adj, n_tags) = match (&data.tag_adj, use_tags || use_cl) {
        (Some(a), true) => (Some(a), data.num_tags()),
        (None, true) => return Err(Error::Config(format!("variant {} needs a tag graph", plan.variant))),
        (_, false) => (None, 0),
    };
    let tag_table = match (tag_adj, tags) {
        (None, _) => None,
        (Some(_), Some(tt)) if tt.rows() == n_tags && tt.dim() == d => Some(tt),
        (Some(_), _) => return Err(Error::Shape("tag table does not match the tag graph".into())),
    };
    let spec_ui = MarginSpec::new(t.m2, t.distance_power)?;
    let spec_tag = MarginSpec::new(t.m3, t.distance_power)?;
    let pairs = data.tag_pairs();

    let (ou, oi, ot) = (0, nu * d, (nu + ni) * d);
    let mut theta = users.into_values();
    theta.extend(items.into_values());
    if let Some(tt) = tag_table {
        theta.extend(tt.into_values());
    }
    let mut opt = Adam::new(theta.len(), t.lr);
    let mut rng = rng_for(t.seed, 4);

    let initial_val = validation_recall(&theta[..ot], data, cfg)?;
    let mut best = (initial_val, 0usize, theta.clone());
    let mut log = Vec::new();
    let mut batch_log = Vec::new();
    let start = Instant::now();
    let mut last_epoch = 0;
    for epoch in 1..=t.epochs {
        last_epoch = epoch;
        let order = shuffled_train(data, &mut rng);
        let (mut s_ui, mut s_tag, mut s_cl, mut nb) = (0.0, 0.0, 0.0, 0usize);
        for (b, batch) in order.chunks(t.batch_size).enumerate() {
            let rep_ui = Representation::build(&theta[..ot], d, &data.ui, layers, &man);
            let mut g_ui = rep_ui.grad_buffer();
            let loss_ui = user_item_terms(&rep_ui, data, batch, spec_ui, t.negatives, k, &mut rng, &mut g_ui);
            let (mut loss_tag, mut loss_cl) = (0.0, 0.0);
            let mut grad = vec![0.0; theta.len()];
            if let Some(adj) = tag_adj {
                let mut tag_vals = theta[ot..].to_vec();
                tag_vals.extend_from_slice(&theta[oi..ot]);
                let rep_tag = Representation::build(&tag_vals, d, adj, layers, &man);
                let mut g_tag = rep_tag.grad_buffer();
                if use_tags {
                    loss_tag = tag_terms(&rep_tag, adj, &pairs, batch.len(), spec_tag, k, &mut rng, &mut g_tag);
                }
                if use_cl {
                    let mut batch_items: Vec<usize> = batch.iter().map(|e| e.1).collect();
                    batch_items.sort_unstable();
                    batch_items.dedup();
                    let left: Vec<usize> = batch_items.iter().map(|i| nu + i).collect();
                    let right: Vec<usize> = batch_items.iter().map(|i| n_tags + i).collect();
                    let (cands, pos): (Vec<usize>, Vec<usize>) = match t.contrastive_mode {
                        ContrastiveMode::InBatch => (right.clone(), (0..right.len()).collect()),
                        ContrastiveMode::Full => ((n_tags..n_tags + ni).collect(), batch_items.clone()),
                    };
                    let n = left.len() as f64;
                    let sum = contrastive_accumulate(
                        &rep_ui, &left, &rep_tag, &cands, &pos, t.tau, k, plan.w / n, &mut g_ui, &mut g_tag,
                    );
                    loss_cl = sum / n;
                }
                let gt = rep_tag.backward(&g_tag, adj, layers, k);
                let tag_part = n_tags * d;
                grad[ot..].iter_mut().zip(&gt[..tag_part]).for_each(|(a, b)| *a += b);
                grad[oi..ot].iter_mut().zip(&gt[tag_part..]).for_each(|(a, b)| *a += b);
            }
            let total = loss_ui + loss_tag + plan.w * loss_cl;
            if !total.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b, loss_ui, loss_tag, loss_cl });
            }
            let gu = rep_ui.backward(&g_ui, &data.ui, layers, k);
            grad[ou..ot].iter_mut().zip(&gu).for_each(|(a, b)| *a += b);
            opt.step(&mut theta, &grad);
            batch_log.push(BatchLog { epoch, batch: b, loss_ui, loss_tag, loss_cl, w: plan.w, total });
            s_ui += loss_ui;
            s_tag += loss_tag;
            s_cl += loss_cl;
            nb += 1;
        }
        let val = validation_recall(&theta[..ot], data, cfg)?;
        let nbf = nb.max(1) as f64;
        log.push(EpochLog {
            epoch,
            loss_ui: s_ui / nbf,
            loss_tag: s_tag / nbf,
            loss_cl: s_cl / nbf,
            val_recall: val,
            elapsed_s: timed.then(|| start.elapsed().as_secs_f64()),
        });
        log::info!("{} epoch {epoch}: ui {:.5} tag {:.5} cl {:.5} val recall@20 {val:.5}", plan.variant, s_ui / nbf, s_tag / nbf, s_cl / nbf);
        if val > best.0 {
            best = (val, epoch, theta.clone());
        } else if epoch - best.1 >= t.patience {
            break;
        }
    }
    let theta = best.2;
    let state = PhaseState {
        phase: Phase::Full,
        moe: None,
        users: EmbeddingTable::from_values(Role::User, nu, d, theta[ou..oi].to_vec())?,
        items: EmbeddingTable::from_values(Role::Item, ni, d, theta[oi..ot].to_vec())?,
        tags: (n_tags > 0).then(|| EmbeddingTable::from_values(Role::Tag, n_tags, d, theta[ot..].to_vec())).transpose()?,
        epoch: last_epoch,
        best_metric: best.0,
        best_epoch: best.1,
    };
    Ok(Phase2Outcome { state, initial_val, log, batches: batch_log })
}

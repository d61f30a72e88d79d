//! Softmax-gated mixture of affine experts.
//!
//! Maps a semantic embedding `s` (dim `d1`) to the collaborative tangent
//! space (dim `d2`):
//!
//! ```text
//! z   = W_gate^T s + b_gate            (K logits)
//! g   = softmax(z)
//! out = sum_k g_k (W_k^T s + b_k)
//! ```
//!
//! Gating is dense: every expert contributes.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::checkpoint::{Checkpoint, Tensor};
use crate::error::{Error, Result};

pub const DEFAULT_EXPERTS: usize = 12;
pub const DEFAULT_SEMANTIC_DIM: usize = 3072;
pub const DEFAULT_TANGENT_DIM: usize = 50;

/// Number of partial-gradient shards used by [`transform_table_backward`].
/// Fixed so the reduction order does not depend on the thread pool.
const GRAD_SHARDS: usize = 16;

/// Adapter parameters in one flat buffer:
/// `[gate_weight (d1 x K) | gate_bias (K) | expert weights (K x d1 x d2) | expert biases (K x d2)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MoEParams {
    experts: usize,
    d_in: usize,
    d_out: usize,
    values: Vec<f64>,
}

impl MoEParams {
    pub fn zeros(experts: usize, d_in: usize, d_out: usize) -> Result<Self> {
        if experts == 0 || d_in == 0 || d_out == 0 {
            return Err(Error::Config(format!(
                "MoE needs K, d1, d2 >= 1 (got {experts}, {d_in}, {d_out})"
            )));
        }
        let len = d_in * experts + experts + experts * d_in * d_out + experts * d_out;
        Ok(Self { experts, d_in, d_out, values: vec![0.0; len] })
    }

    /// Gate and expert weights `N(0, 1/d1)`, biases zero.
    pub fn init<R: Rng + ?Sized>(experts: usize, d_in: usize, d_out: usize, rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(experts, d_in, d_out)?;
        let normal = Normal::new(0.0, 1.0 / (d_in as f64).sqrt()).expect("valid std");
        p.gate_weight_mut().iter_mut().for_each(|w| *w = normal.sample(rng));
        p.expert_weights_mut().iter_mut().for_each(|w| *w = normal.sample(rng));
        Ok(p)
    }

    pub fn experts(&self) -> usize {
        self.experts
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    fn offsets(&self) -> [usize; 4] {
        let gw = self.d_in * self.experts;
        let gb = gw + self.experts;
        let ew = gb + self.experts * self.d_in * self.d_out;
        [gw, gb, ew, self.values.len()]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Row-major `d1 x K`.
    pub fn gate_weight(&self) -> &[f64] {
        &self.values[..self.offsets()[0]]
    }

    pub fn gate_weight_mut(&mut self) -> &mut [f64] {
        let o = self.offsets();
        &mut self.values[..o[0]]
    }

    pub fn gate_bias(&self) -> &[f64] {
        let o = self.offsets();
        &self.values[o[0]..o[1]]
    }

    pub fn gate_bias_mut(&mut self) -> &mut [f64] {
        let o = self.offsets();
        &mut self.values[o[0]..o[1]]
    }

    /// All experts, each row-major `d1 x d2`.
    pub fn expert_weights(&self) -> &[f64] {
        let o = self.offsets();
        &self.values[o[1]..o[2]]
    }

    pub fn expert_weights_mut(&mut self) -> &mut [f64] {
        let o = self.offsets();
        &mut self.values[o[1]..o[2]]
    }

    pub fn expert_weight(&self, k: usize) -> &[f64] {
        let n = self.d_in * self.d_out;
        &self.expert_weights()[k * n..(k + 1) * n]
    }

    pub fn expert_biases(&self) -> &[f64] {
        let o = self.offsets();
        &self.values[o[2]..o[3]]
    }

    pub fn expert_biases_mut(&mut self) -> &mut [f64] {
        let o = self.offsets();
        &mut self.values[o[2]..o[3]]
    }

    pub fn expert_bias(&self, k: usize) -> &[f64] {
        &self.expert_biases()[k * self.d_out..(k + 1) * self.d_out]
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut c = Checkpoint::new();
        c.push(Tensor::from_f64("gate.weight", vec![self.d_in, self.experts], self.gate_weight())?)?;
        c.push(Tensor::from_f64("gate.bias", vec![self.experts], self.gate_bias())?)?;
        for k in 0..self.experts {
            c.push(Tensor::from_f64(format!("expert.{k}.weight"), vec![self.d_in, self.d_out], self.expert_weight(k))?)?;
            c.push(Tensor::from_f64(format!("expert.{k}.bias"), vec![self.d_out], self.expert_bias(k))?)?;
        }
        Ok(c)
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        let gw = c.get("gate.weight").ok_or_else(|| Error::Data("checkpoint lacks gate.weight".into()))?;
        let [d_in, experts] = gw.dims[..] else {
            return Err(Error::Shape(format!("gate.weight must be rank 2, got {:?}", gw.dims)));
        };
        let e0 = c.get("expert.0.weight").ok_or_else(|| Error::Data("checkpoint lacks expert.0.weight".into()))?;
        let d_out = *e0.dims.get(1).ok_or_else(|| Error::Shape("expert.0.weight must be rank 2".into()))?;
        let mut p = Self::zeros(experts, d_in, d_out)?;
        p.gate_weight_mut().copy_from_slice(&gw.to_f64());
        p.gate_bias_mut().copy_from_slice(&c.expect("gate.bias", &[experts])?.to_f64());
        let n = d_in * d_out;
        for k in 0..experts {
            let w = c.expect(&format!("expert.{k}.weight"), &[d_in, d_out])?.to_f64();
            p.expert_weights_mut()[k * n..(k + 1) * n].copy_from_slice(&w);
            let b = c.expect(&format!("expert.{k}.bias"), &[d_out])?.to_f64();
            p.expert_biases_mut()[k * d_out..(k + 1) * d_out].copy_from_slice(&b);
        }
        Ok(p)
    }
}

/// Where a semantic table came from.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Provenance {
    pub encoder: String,
    pub model: String,
}

/// Encoder output for one entity class, `rows x d1`, row order matching
/// `ids`.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticTable {
    role: crate::model::Role,
    dim: usize,
    ids: Vec<String>,
    values: Vec<f32>,
    provenance: Provenance,
}

impl SemanticTable {
    pub fn new(
        role: crate::model::Role,
        dim: usize,
        ids: Vec<String>,
        values: Vec<f32>,
        provenance: Provenance,
    ) -> Result<Self> {
        if dim == 0 || values.len() != ids.len() * dim {
            return Err(Error::Shape(format!(
                "semantic table: {} values for {} rows of dim {dim}",
                values.len(),
                ids.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("semantic table has non-finite entries".into()));
        }
        Ok(Self { role, dim, ids, values, provenance })
    }

    pub fn role(&self) -> crate::model::Role {
        self.role
    }

    pub fn rows(&self) -> usize {
        self.ids.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Rows reordered to follow `order` (entity ids). Errors list every id
    /// that has no row.
    pub fn reindex(&self, order: &[String]) -> Result<Self> {
        let lookup: std::collections::HashMap<&str, usize> =
            self.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        let missing: Vec<String> = order.iter().filter(|id| !lookup.contains_key(id.as_str())).cloned().collect();
        if !missing.is_empty() {
            return Err(Error::MissingSemanticRows { role: self.role.as_str().into(), ids: missing });
        }
        let mut values = Vec::with_capacity(order.len() * self.dim);
        for id in order {
            values.extend_from_slice(self.row(lookup[id.as_str()]));
        }
        Ok(Self { role: self.role, dim: self.dim, ids: order.to_vec(), values, provenance: self.provenance.clone() })
    }
}

fn gate_from_logits(logits: &mut [f64]) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for z in logits.iter_mut() {
        *z = (*z - max).exp();
        sum += *z;
    }
    logits.iter_mut().for_each(|z| *z /= sum);
}

/// Gate logits `W_gate^T s + b_gate`.
pub fn gate_logits(s: &[f64], p: &MoEParams) -> Vec<f64> {
    assert_eq!(s.len(), p.d_in, "gate: input dim mismatch");
    let mut z = p.gate_bias().to_vec();
    let gw = p.gate_weight();
    for (a, &sa) in s.iter().enumerate() {
        if sa == 0.0 {
            continue;
        }
        for (zk, w) in z.iter_mut().zip(&gw[a * p.experts..(a + 1) * p.experts]) {
            *zk += sa * w;
        }
    }
    z
}

/// Softmax gate over the `K` experts.
pub fn gate(s: &[f64], p: &MoEParams) -> Vec<f64> {
    let mut z = gate_logits(s, p);
    gate_from_logits(&mut z);
    z
}

/// `W_k^T s + b_k` for one expert, written into `out`.
fn expert_into(s: &[f64], p: &MoEParams, k: usize, out: &mut [f64]) {
    out.copy_from_slice(p.expert_bias(k));
    let w = p.expert_weight(k);
    for (a, &sa) in s.iter().enumerate() {
        if sa == 0.0 {
            continue;
        }
        for (o, wv) in out.iter_mut().zip(&w[a * p.d_out..(a + 1) * p.d_out]) {
            *o += sa * wv;
        }
    }
}

/// Mixture output for a fixed gate vector.
pub fn transform_with_gate(s: &[f64], g: &[f64], p: &MoEParams) -> Vec<f64> {
    assert_eq!(g.len(), p.experts);
    let mut out = vec![0.0; p.d_out];
    let mut e = vec![0.0; p.d_out];
    for (k, &gk) in g.iter().enumerate() {
        expert_into(s, p, k, &mut e);
        out.iter_mut().zip(&e).for_each(|(o, x)| *o += gk * x);
    }
    out
}

/// `sum_k g_k(s) (W_k^T s + b_k)`.
pub fn transform(s: &[f64], p: &MoEParams) -> Vec<f64> {
    transform_with_gate(s, &gate(s, p), p)
}

/// Adds `dL/dparams` for one input into `grad` (same layout as
/// [`MoEParams::values`]), given the upstream gradient `g_out` on the output.
pub fn transform_backward(s: &[f64], p: &MoEParams, g_out: &[f64], grad: &mut [f64]) {
    assert_eq!(g_out.len(), p.d_out);
    assert_eq!(grad.len(), p.values.len());
    let (kk, d_in, d_out) = (p.experts, p.d_in, p.d_out);
    let g = gate(s, p);
    let mut e = vec![0.0; d_out];
    // dL/dg_k = g_out . e_k
    let mut dg = vec![0.0; kk];
    let o = p.offsets();
    let (gate_part, expert_part) = grad.split_at_mut(o[1]);
    let (gw_grad, gb_grad) = gate_part.split_at_mut(o[0]);
    let (ew_grad, eb_grad) = expert_part.split_at_mut(o[2] - o[1]);
    for k in 0..kk {
        expert_into(s, p, k, &mut e);
        dg[k] = e.iter().zip(g_out).map(|(a, b)| a * b).sum();
        let gk = g[k];
        let wslab = &mut ew_grad[k * d_in * d_out..(k + 1) * d_in * d_out];
        for (a, &sa) in s.iter().enumerate() {
            if sa == 0.0 {
                continue;
            }
            let f = sa * gk;
            for (w, go) in wslab[a * d_out..(a + 1) * d_out].iter_mut().zip(g_out) {
                *w += f * go;
            }
        }
        for (b, go) in eb_grad[k * d_out..(k + 1) * d_out].iter_mut().zip(g_out) {
            *b += gk * go;
        }
    }
    // softmax backward: dz_j = g_j (dg_j - sum_k g_k dg_k)
    let mean: f64 = g.iter().zip(&dg).map(|(a, b)| a * b).sum();
    let dz: Vec<f64> = g.iter().zip(&dg).map(|(gj, dgj)| gj * (dgj - mean)).collect();
    for (a, &sa) in s.iter().enumerate() {
        if sa == 0.0 {
            continue;
        }
        for (w, d) in gw_grad[a * kk..(a + 1) * kk].iter_mut().zip(&dz) {
            *w += sa * d;
        }
    }
    gb_grad.iter_mut().zip(&dz).for_each(|(b, d)| *b += d);
}

fn row_f64(t: &SemanticTable, i: usize) -> Vec<f64> {
    t.row(i).iter().map(|&v| v as f64).collect()
}

/// Row-wise [`transform`]; returns `rows x d2`, row-major.
pub fn transform_table(t: &SemanticTable, p: &MoEParams) -> Vec<f64> {
    assert_eq!(t.dim(), p.d_in, "semantic dim does not match the adapter");
    let mut out = vec![0.0; t.rows() * p.d_out];
    out.par_chunks_mut(p.d_out).enumerate().for_each(|(i, o)| {
        o.copy_from_slice(&transform(&row_f64(t, i), p));
    });
    out
}

/// Parameter gradient of `sum_i <g_out[i], transform(t.row(i))>`.
///
/// Rows are split into a fixed number of shards, reduced in shard order, so
/// the result is identical for any thread count.
pub fn transform_table_backward(t: &SemanticTable, p: &MoEParams, g_out: &[f64]) -> Vec<f64> {
    assert_eq!(g_out.len(), t.rows() * p.d_out);
    let shard = t.rows().div_ceil(GRAD_SHARDS).max(1);
    let partials: Vec<Vec<f64>> = (0..t.rows())
        .step_by(shard)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|start| {
            let mut grad = vec![0.0; p.values.len()];
            for i in start..(start + shard).min(t.rows()) {
                let go = &g_out[i * p.d_out..(i + 1) * p.d_out];
                if go.iter().any(|v| *v != 0.0) {
                    transform_backward(&row_f64(t, i), p, go, &mut grad);
                }
            }
            grad
        })
        .collect();
    let mut total = vec![0.0; p.values.len()];
    for part in partials {
        total.iter_mut().zip(&part).for_each(|(a, b)| *a += b);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Role;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(k: usize, d1: usize, d2: usize, seed: u64) -> MoEParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = MoEParams::init(k, d1, d2, &mut rng).unwrap();
        let normal = Normal::new(0.0, 0.3).unwrap();
        p.gate_bias_mut().iter_mut().for_each(|b| *b = normal.sample(&mut rng));
        p.expert_biases_mut().iter_mut().for_each(|b| *b = normal.sample(&mut rng));
        p
    }

    #[test]
    fn gate_examples() {
        let mut p = MoEParams::zeros(4, 3, 2).unwrap();
        let g = gate(&[0.3, -1.0, 2.0], &p);
        assert!(g.iter().all(|x| (x - 0.25).abs() < 1e-15));
        let mut p2 = MoEParams::zeros(2, 1, 1).unwrap();
        p2.gate_bias_mut().copy_from_slice(&[3f64.ln(), 0.0]);
        let g = gate(&[0.0], &p2);
        assert!((g[0] - 0.75).abs() < 1e-15 && (g[1] - 0.25).abs() < 1e-15);
        p.gate_bias_mut().copy_from_slice(&[0.1, 0.5, -0.2, 0.9]);
        let before = gate(&[1.0, 2.0, 3.0], &p);
        p.gate_bias_mut().iter_mut().for_each(|b| *b += 123.0);
        let after = gate(&[1.0, 2.0, 3.0], &p);
        for (a, b) in before.iter().zip(&after) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_expert_is_affine() {
        let p = params(1, 3, 2, 1);
        let s = [0.5, -0.25, 1.0];
        let out = transform(&s, &p);
        let w = p.expert_weight(0);
        for c in 0..2 {
            let expect = p.expert_bias(0)[c] + (0..3).map(|a| s[a] * w[a * 2 + c]).sum::<f64>();
            assert!((out[c] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_weights_give_mean_bias() {
        let mut p = MoEParams::zeros(3, 2, 2).unwrap();
        p.expert_biases_mut().copy_from_slice(&[1.0, 2.0, 3.0, 4.0, 5.0, 9.0]);
        let out = transform(&[0.7, 0.1], &p);
        assert!((out[0] - 3.0).abs() < 1e-15 && (out[1] - 5.0).abs() < 1e-15);
    }

    #[test]
    fn positively_linear_in_experts_with_gate_fixed() {
        let p = params(3, 4, 2, 2);
        let s = [0.3, 0.2, -0.4, 0.9];
        let g = gate(&s, &p);
        let base = transform_with_gate(&s, &g, &p);
        let mut scaled = p.clone();
        scaled.expert_weights_mut().iter_mut().for_each(|w| *w *= 2.5);
        scaled.expert_biases_mut().iter_mut().for_each(|w| *w *= 2.5);
        let out = transform_with_gate(&s, &g, &scaled);
        for (a, b) in base.iter().zip(&out) {
            assert!((2.5 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn table_matches_row_loop() {
        let p = params(3, 4, 2, 3);
        let t = SemanticTable::new(
            Role::Item,
            4,
            vec!["a".into(), "b".into(), "c".into()],
            vec![0.1, 0.2, 0.3, 0.4, -0.5, 0.6, 0.0, 1.0, 0.25, -0.75, 0.5, 0.125],
            Provenance::default(),
        )
        .unwrap();
        let out = transform_table(&t, &p);
        for i in 0..3 {
            let row: Vec<f64> = t.row(i).iter().map(|&v| v as f64).collect();
            assert_eq!(&out[i * 2..(i + 1) * 2], transform(&row, &p).as_slice());
        }
        assert!(t.reindex(&["c".into(), "z".into()]).is_err());
        let r = t.reindex(&["c".into(), "a".into()]).unwrap();
        assert_eq!(r.row(0), t.row(2));
    }

    #[test]
    fn checkpoint_round_trip() {
        let p = params(2, 3, 2, 4);
        let c = p.to_checkpoint().unwrap();
        assert!(c.get("expert.1.bias").is_some());
        let back = MoEParams::from_checkpoint(&c).unwrap();
        for (a, b) in p.values().iter().zip(back.values()) {
            assert_eq!(*a as f32, *b as f32);
        }
    }
}

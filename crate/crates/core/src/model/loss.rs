use super::graph::Representation;
use crate::error::{Error, Result};
use crate::geometry::{
    add_cosh_arg_grad, distance_pow_grad, distance_pow_slope, hyperboloid_cosh_arg, hyperboloid_distance,
    HyperboloidPoint, ManifoldConfig,
};

/// Hinge margin and the power applied to the distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginSpec {
    pub margin: f64,
    pub power: u8,
}

impl MarginSpec {
    pub fn new(margin: f64, power: u8) -> Result<Self> {
        if !(margin >= 0.0) || !margin.is_finite() {
            return Err(Error::Config(format!("margin must be finite and >= 0, got {margin}")));
        }
        if power != 1 && power != 2 {
            return Err(Error::Config(format!("distance power must be 1 or 2, got {power}")));
        }
        Ok(Self { margin, power })
    }
}

/// Ranking score: `-d(h_u, h_i)^power`, larger is better.
pub fn score(hu: &HyperboloidPoint, hi: &HyperboloidPoint, cfg: &ManifoldConfig, power: u8) -> f64 {
    let d = hyperboloid_distance(hu, hi, cfg);
    match power {
        1 => -d,
        2 => -d * d,
        p => panic!("unsupported distance power {p}"),
    }
}

fn add_row(buf: &mut [f64], row: usize, width: usize, src: &[f64]) {
    buf[row * width..(row + 1) * width].iter_mut().zip(src).for_each(|(b, s)| *b += s);
}

/// Margin ranking term for rows `(anchor, pos, neg)` of one representation.
/// Adds `weight * dloss/dpoint` into `grad` (ambient layout) and returns the
/// unweighted loss.
pub(crate) fn margin_accumulate(
    rep: &Representation,
    anchor: usize,
    pos: usize,
    neg: usize,
    spec: MarginSpec,
    k: f64,
    weight: f64,
    grad: &mut [f64],
) -> f64 {
    let w = rep.dim() + 1;
    let (xa, xp, xn) = (rep.point(anchor), rep.point(pos), rep.point(neg));
    let mut scratch = [vec![0.0; w], vec![0.0; w], vec![0.0; w], vec![0.0; w]];
    let [ga_p, gp, ga_n, gn] = &mut scratch;
    let d_pos = distance_pow_grad(xa, xp, k, spec.power, 1.0, ga_p, gp);
    let d_neg = distance_pow_grad(xa, xn, k, spec.power, -1.0, ga_n, gn);
    let loss = d_pos - d_neg + spec.margin;
    if loss <= 0.0 {
        return 0.0;
    }
    if weight != 0.0 {
        ga_p.iter_mut().zip(ga_n.iter()).for_each(|(a, b)| *a = (*a + b) * weight);
        gp.iter_mut().for_each(|g| *g *= weight);
        gn.iter_mut().for_each(|g| *g *= weight);
        add_row(grad, anchor, w, ga_p);
        add_row(grad, pos, w, gp);
        add_row(grad, neg, w, gn);
    }
    loss
}

/// Loss and tangent-space gradients for one `(anchor, positive, negative)`
/// triple.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginOutcome {
    pub loss: f64,
    pub grad_anchor: Vec<f64>,
    pub grad_pos: Vec<f64>,
    pub grad_neg: Vec<f64>,
}

/// `max(d(h_u,h_i)^p - d(h_u,h_j)^p + m, 0)` with gradients with respect to
/// the aggregated tangent rows of `u`, `i` and `j`. The three rows must be
/// distinct.
pub fn margin_loss(
    u: usize,
    i: usize,
    j: usize,
    reps: &Representation,
    spec: MarginSpec,
    cfg: &ManifoldConfig,
) -> MarginOutcome {
    assert!(u != i && u != j && i != j, "margin_loss: rows must be distinct");
    let mut grad = reps.grad_buffer();
    let loss = margin_accumulate(reps, u, i, j, spec, cfg.k(), 1.0, &mut grad);
    let tangent = reps.tangent_grad(&grad, cfg.k());
    let d = reps.dim();
    let row = |r: usize| tangent[r * d..(r + 1) * d].to_vec();
    MarginOutcome { loss, grad_anchor: row(u), grad_pos: row(i), grad_neg: row(j) }
}

/// InfoNCE over squared hyperbolic distances.
///
/// Anchor `b` is row `left_rows[b]` of `left`; its positive is
/// `candidates[pos_index[b]]` of `right`, and its denominator ranges over
/// every row in `candidates`. Adds `weight * dloss/dpoint` into the two
/// gradient buffers and returns the unweighted loss, summed over anchors.
#[allow(clippy::too_many_arguments)]
pub(crate) fn contrastive_accumulate(
    left: &Representation,
    left_rows: &[usize],
    right: &Representation,
    candidates: &[usize],
    pos_index: &[usize],
    tau: f64,
    k: f64,
    weight: f64,
    grad_left: &mut [f64],
    grad_right: &mut [f64],
) -> f64 {
    assert!(tau > 0.0, "contrastive temperature must be positive, got {tau}");
    assert_eq!(left_rows.len(), pos_index.len());
    let w = left.dim() + 1;
    let n = candidates.len();
    let mut slopes = vec![0.0; n];
    let mut logits = vec![0.0; n];
    let mut ga = vec![0.0; w];
    let mut total = 0.0;
    for (&lrow, &pos) in left_rows.iter().zip(pos_index) {
        let xl = left.point(lrow);
        for (j, &c) in candidates.iter().enumerate() {
            let (d2, slope) = distance_pow_slope(hyperboloid_cosh_arg(xl, right.point(c), k), k, 2);
            logits[j] = -d2 / tau;
            slopes[j] = slope;
        }
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for l in logits.iter_mut() {
            *l = (*l - max).exp();
            denom += *l;
        }
        // logits now hold unnormalized probabilities
        let pos_prob = logits[pos] / denom;
        total += -pos_prob.ln();
        if weight == 0.0 {
            continue;
        }
        ga.iter_mut().for_each(|g| *g = 0.0);
        for (j, &c) in candidates.iter().enumerate() {
            let p = logits[j] / denom;
            // dloss/dlogit_j = p_j - [j == pos], dlogit/dd2 = -1/tau
            let coeff = -(p - if j == pos { 1.0 } else { 0.0 }) / tau * weight;
            if coeff == 0.0 || slopes[j] == 0.0 {
                continue;
            }
            let gr = &mut grad_right[c * w..(c + 1) * w];
            add_cosh_arg_grad(xl, right.point(c), k, coeff * slopes[j], &mut ga, gr);
        }
        add_row(grad_left, lrow, w, &ga);
    }
    total
}

/// Loss and tangent-space gradients of [`contrastive_loss`].
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveOutcome {
    pub loss: f64,
    /// One row per entry of `left_rows`.
    pub grad_left: Vec<Vec<f64>>,
    /// One row per entry of `candidates`.
    pub grad_right: Vec<Vec<f64>>,
}

/// Contrastive alignment between two views of the same items.
///
/// `left_rows[b]` and `right_rows[b]` index the same item in the two
/// representations. With `candidates = None` the denominator runs over the
/// batch (`right_rows`); otherwise over the given right-side rows, which must
/// contain every entry of `right_rows`.
pub fn contrastive_loss(
    left: &Representation,
    left_rows: &[usize],
    right: &Representation,
    right_rows: &[usize],
    candidates: Option<&[usize]>,
    tau: f64,
    cfg: &ManifoldConfig,
) -> ContrastiveOutcome {
    assert_eq!(left_rows.len(), right_rows.len(), "contrastive_loss: misaligned batch");
    assert!(!left_rows.is_empty(), "contrastive_loss: empty batch");
    let cands: Vec<usize> = candidates.map(<[usize]>::to_vec).unwrap_or_else(|| right_rows.to_vec());
    let pos_index = positive_positions(right_rows, &cands);
    let mut gl = left.grad_buffer();
    let mut gr = right.grad_buffer();
    let loss = contrastive_accumulate(left, left_rows, right, &cands, &pos_index, tau, cfg.k(), 1.0, &mut gl, &mut gr);
    let tl = left.tangent_grad(&gl, cfg.k());
    let tr = right.tangent_grad(&gr, cfg.k());
    let d = left.dim();
    ContrastiveOutcome {
        loss,
        grad_left: left_rows.iter().map(|&r| tl[r * d..(r + 1) * d].to_vec()).collect(),
        grad_right: cands.iter().map(|&r| tr[r * d..(r + 1) * d].to_vec()).collect(),
    }
}

/// Position of each positive row within the candidate list.
pub(crate) fn positive_positions(right_rows: &[usize], candidates: &[usize]) -> Vec<usize> {
    let lookup: std::collections::HashMap<usize, usize> =
        candidates.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    right_rows
        .iter()
        .map(|r| *lookup.get(r).expect("positive row missing from candidate set"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::exp0;
    use crate::geometry::TangentVector;
    use crate::model::{Adjacency, Representation};

    fn rep_from(values: Vec<f64>, dim: usize, cfg: &ManifoldConfig) -> Representation {
        Representation::from_tangent(values, dim, cfg)
    }

    #[test]
    fn margin_spec_validation() {
        assert!(MarginSpec::new(-0.1, 2).is_err());
        assert!(MarginSpec::new(0.1, 3).is_err());
        assert!(MarginSpec::new(0.0, 1).is_ok());
    }

    #[test]
    fn score_examples() {
        let c = ManifoldConfig::from_k(1.0, 1).unwrap();
        let x = exp0(&TangentVector::new(vec![(1.0 + 2f64.sqrt()).ln()]), &c);
        assert_eq!(score(&x, &x, &c, 2), 0.0);
        assert!((score(&x, &c.origin(), &c, 2) + 0.776_819_4).abs() < 1e-6);
    }

    /// Places points on a 1-D geodesic so distances from the anchor are exact.
    fn line_rep(d_pos: f64, d_neg: f64, cfg: &ManifoldConfig) -> Representation {
        rep_from(vec![0.0, d_pos, -d_neg], 1, cfg)
    }

    #[test]
    fn margin_hinge_examples() {
        let c = ManifoldConfig::from_k(1.0, 1).unwrap();
        // power 1 so distances are the stated d^p values
        let rep = line_rep(0.3, 1.0, &c);
        let out = margin_loss(0, 1, 2, &rep, MarginSpec::new(0.5, 1).unwrap(), &c);
        assert_eq!(out.loss, 0.0);
        assert!(out.grad_anchor.iter().chain(&out.grad_pos).chain(&out.grad_neg).all(|g| *g == 0.0));
        let rep = line_rep(1.0, 0.5, &c);
        let out = margin_loss(0, 1, 2, &rep, MarginSpec::new(0.2, 1).unwrap(), &c);
        assert!((out.loss - 0.7).abs() < 1e-12);
    }

    #[test]
    fn contrastive_examples() {
        let c = ManifoldConfig::from_k(1.0, 1).unwrap();
        let left = rep_from(vec![0.3], 1, &c);
        let right = rep_from(vec![-2.0], 1, &c);
        let out = contrastive_loss(&left, &[0], &right, &[0], None, 0.5, &c);
        assert!(out.loss.abs() < 1e-15);

        // anchor 1 coincides with its positive and sits at distance 1 from the other candidate
        let left = rep_from(vec![0.0, 5.0], 1, &c);
        let right = rep_from(vec![0.0, 1.0], 1, &c);
        let mut gl = left.grad_buffer();
        let mut gr = right.grad_buffer();
        let row1 = contrastive_accumulate(&left, &[0], &right, &[0, 1], &[0], 0.5, 1.0, 0.0, &mut gl, &mut gr);
        assert!((row1 - (1.0 + (-2f64).exp()).ln()).abs() < 1e-12);
        assert!((row1 - 0.126_928_011_042_973).abs() < 1e-12);
    }

    #[test]
    #[should_panic]
    fn contrastive_rejects_nonpositive_tau() {
        let c = ManifoldConfig::from_k(1.0, 1).unwrap();
        let r = rep_from(vec![0.0], 1, &c);
        contrastive_loss(&r, &[0], &r, &[0], None, 0.0, &c);
    }

    #[test]
    fn contrastive_full_mode_matches_in_batch_when_batch_is_everything() {
        let c = ManifoldConfig::from_k(1.0, 2).unwrap();
        let left = rep_from(vec![0.1, 0.2, -0.3, 0.4, 0.5, -0.6], 2, &c);
        let right = rep_from(vec![0.2, 0.1, -0.2, 0.5, 0.4, -0.4], 2, &c);
        let a = contrastive_loss(&left, &[0, 1, 2], &right, &[0, 1, 2], None, 0.5, &c);
        let b = contrastive_loss(&left, &[0, 1, 2], &right, &[0, 1, 2], Some(&[2, 0, 1]), 0.5, &c);
        assert!((a.loss - b.loss).abs() < 1e-12);
        let adj = Adjacency::new(&[3], vec![]).unwrap();
        assert_eq!(adj.num_nodes(), left.rows());
    }
}

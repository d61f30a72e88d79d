use std::ops::Range;

use rayon::prelude::*;

use super::table::EmbeddingTable;
use crate::error::{Error, Result};
use crate::geometry::{exp0_into, exp0_vjp, HyperboloidPoint, ManifoldConfig};

/// Undirected graph over a node set partitioned into contiguous blocks
/// (users then items, or tags then items).
///
/// The edge list keeps the orientation it was built with (user -> item,
/// parent -> child, tag -> item); propagation ignores orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct Adjacency {
    block_starts: Vec<usize>,
    edges: Vec<(usize, usize)>,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
}

impl Adjacency {
    /// Builds a graph from block sizes and edges given in global node ids.
    pub fn new(block_sizes: &[usize], edges: Vec<(usize, usize)>) -> Result<Self> {
        let mut block_starts = Vec::with_capacity(block_sizes.len() + 1);
        let mut acc = 0;
        block_starts.push(0);
        for &s in block_sizes {
            acc += s;
            block_starts.push(acc);
        }
        let n = acc;
        let mut degree = vec![0usize; n];
        let mut seen = std::collections::HashSet::with_capacity(edges.len());
        for &(a, b) in &edges {
            if a >= n || b >= n {
                return Err(Error::Contract(format!("edge ({a}, {b}) out of range for {n} nodes")));
            }
            if a == b {
                return Err(Error::Contract(format!("self-edge on node {a}")));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(Error::Contract(format!("duplicate edge ({a}, {b})")));
            }
            degree[a] += 1;
            degree[b] += 1;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets[..n].to_vec();
        let mut neighbors = vec![0; offsets[n]];
        for &(a, b) in &edges {
            neighbors[fill[a]] = b;
            fill[a] += 1;
            neighbors[fill[b]] = a;
            fill[b] += 1;
        }
        for v in 0..n {
            neighbors[offsets[v]..offsets[v + 1]].sort_unstable();
        }
        Ok(Self { block_starts, edges, offsets, neighbors })
    }

    /// Two-block graph; `edges` use local ids `(left, right)`.
    pub fn bipartite(n_left: usize, n_right: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if let Some(&(l, r)) = edges.iter().find(|&&(l, r)| l >= n_left || r >= n_right) {
            return Err(Error::Contract(format!("bipartite edge ({l}, {r}) out of range")));
        }
        Self::new(&[n_left, n_right], edges.iter().map(|&(l, r)| (l, n_left + r)).collect())
    }

    pub fn num_nodes(&self) -> usize {
        *self.block_starts.last().unwrap()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn num_blocks(&self) -> usize {
        self.block_starts.len() - 1
    }

    pub fn block_range(&self, block: usize) -> Range<usize> {
        self.block_starts[block]..self.block_starts[block + 1]
    }

    pub fn block_of(&self, node: usize) -> usize {
        self.block_starts[1..].iter().position(|&end| node < end).expect("node out of range")
    }

    /// Sorted neighbor ids.
    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[self.offsets[node]..self.offsets[node + 1]]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.offsets[node + 1] - self.offsets[node]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.num_nodes()).map(|v| self.degree(v)).collect()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.neighbors(a).binary_search(&b).is_ok()
    }
}

/// One step of row-mean propagation: `out[v] = mean_{u ~ v} z[u]`.
fn propagate(z: &[f64], dim: usize, adj: &Adjacency) -> Vec<f64> {
    let mut out = vec![0.0; z.len()];
    out.par_chunks_mut(dim).enumerate().for_each(|(v, row)| {
        let nbrs = adj.neighbors(v);
        if nbrs.is_empty() {
            return;
        }
        for &u in nbrs {
            for (o, x) in row.iter_mut().zip(&z[u * dim..(u + 1) * dim]) {
                *o += x;
            }
        }
        let inv = 1.0 / nbrs.len() as f64;
        row.iter_mut().for_each(|o| *o *= inv);
    });
    out
}

/// Transpose of [`propagate`]: `out[u] = sum_{v ~ u} g[v] / deg(v)`.
fn propagate_transpose(g: &[f64], dim: usize, adj: &Adjacency) -> Vec<f64> {
    let mut out = vec![0.0; g.len()];
    out.par_chunks_mut(dim).enumerate().for_each(|(u, row)| {
        for &v in adj.neighbors(u) {
            let inv = 1.0 / adj.degree(v) as f64;
            for (o, x) in row.iter_mut().zip(&g[v * dim..(v + 1) * dim]) {
                *o += x * inv;
            }
        }
    });
    out
}

/// Layer-sum of mean propagation, `sum_{l=0..layers} (D^-1 A)^l values`.
pub fn aggregate(values: &[f64], dim: usize, adj: &Adjacency, layers: usize) -> Vec<f64> {
    assert_eq!(values.len(), adj.num_nodes() * dim, "aggregate: table does not cover the graph");
    let mut sum = values.to_vec();
    let mut z = values.to_vec();
    for _ in 0..layers {
        z = propagate(&z, dim, adj);
        sum.iter_mut().zip(&z).for_each(|(s, x)| *s += x);
    }
    sum
}

/// Vector-Jacobian product of [`aggregate`].
pub fn aggregate_backward(grad: &[f64], dim: usize, adj: &Adjacency, layers: usize) -> Vec<f64> {
    assert_eq!(grad.len(), adj.num_nodes() * dim);
    let mut acc = grad.to_vec();
    let mut cur = grad.to_vec();
    for _ in 0..layers {
        cur = propagate_transpose(&cur, dim, adj);
        acc.iter_mut().zip(&cur).for_each(|(s, x)| *s += x);
    }
    acc
}

/// Output of a forward pass: aggregated tangent rows and their images on the
/// hyperboloid, both row-major.
#[derive(Debug, Clone)]
pub struct Representation {
    dim: usize,
    tangent: Vec<f64>,
    points: Vec<f64>,
}

impl Representation {
    pub fn build(values: &[f64], dim: usize, adj: &Adjacency, layers: usize, cfg: &ManifoldConfig) -> Self {
        let tangent = aggregate(values, dim, adj, layers);
        Self::from_tangent(tangent, dim, cfg)
    }

    /// Maps already-aggregated tangent rows onto the manifold.
    pub fn from_tangent(tangent: Vec<f64>, dim: usize, cfg: &ManifoldConfig) -> Self {
        assert_eq!(dim, cfg.dim(), "embedding dim does not match the manifold");
        let rows = tangent.len() / dim;
        let mut points = vec![0.0; rows * (dim + 1)];
        let k = cfg.k();
        points
            .par_chunks_mut(dim + 1)
            .zip(tangent.par_chunks(dim))
            .for_each(|(p, v)| exp0_into(v, k, p));
        Self { dim, tangent, points }
    }

    pub fn rows(&self) -> usize {
        self.tangent.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tangent(&self, row: usize) -> &[f64] {
        &self.tangent[row * self.dim..(row + 1) * self.dim]
    }

    pub fn point(&self, row: usize) -> &[f64] {
        let w = self.dim + 1;
        &self.points[row * w..(row + 1) * w]
    }

    pub fn tangent_values(&self) -> &[f64] {
        &self.tangent
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Zeroed buffer for ambient-coordinate gradients.
    pub fn grad_buffer(&self) -> Vec<f64> {
        vec![0.0; self.points.len()]
    }

    /// Maps ambient gradients back to aggregated tangent rows.
    pub fn tangent_grad(&self, grad_points: &[f64], k: f64) -> Vec<f64> {
        let w = self.dim + 1;
        let mut out = vec![0.0; self.tangent.len()];
        out.par_chunks_mut(self.dim).enumerate().for_each(|(r, o)| {
            let g = &grad_points[r * w..(r + 1) * w];
            if g.iter().any(|x| *x != 0.0) {
                exp0_vjp(&self.tangent[r * self.dim..(r + 1) * self.dim], g, k, o);
            }
        });
        out
    }

    /// Maps ambient gradients all the way back to the input table values.
    pub fn backward(&self, grad_points: &[f64], adj: &Adjacency, layers: usize, k: f64) -> Vec<f64> {
        aggregate_backward(&self.tangent_grad(grad_points, k), self.dim, adj, layers)
    }
}

/// Forward pass over a table that covers every node of `adj`.
pub fn forward(
    table: &EmbeddingTable,
    adj: &Adjacency,
    layers: usize,
    cfg: &ManifoldConfig,
) -> Vec<HyperboloidPoint> {
    let rep = Representation::build(table.values(), table.dim(), adj, layers, cfg);
    (0..rep.rows())
        .map(|r| HyperboloidPoint::try_from_coords(rep.point(r).to_vec(), cfg).expect("exp0 output on manifold"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{exp0, TangentVector};
    use crate::model::Role;

    fn cfg(d: usize) -> ManifoldConfig {
        ManifoldConfig::from_k(1.0, d).unwrap()
    }

    #[test]
    fn adjacency_invariants() {
        let adj = Adjacency::bipartite(2, 3, &[(0, 0), (0, 2), (1, 2)]).unwrap();
        assert_eq!(adj.num_nodes(), 5);
        assert_eq!(adj.degrees(), vec![2, 1, 1, 0, 2]);
        assert_eq!(adj.neighbors(4), &[0, 1]);
        assert!(adj.has_edge(2, 0));
        assert_eq!(adj.block_of(3), 1);
        assert!(Adjacency::bipartite(2, 3, &[(0, 0), (0, 0)]).is_err());
        assert!(Adjacency::bipartite(2, 3, &[(2, 0)]).is_err());
        assert!(Adjacency::new(&[3], vec![(1, 1)]).is_err());
        assert!(Adjacency::new(&[3], vec![(0, 1), (1, 0)]).is_err());
    }

    #[test]
    fn zero_layers_is_exp0() {
        let c = cfg(2);
        let adj = Adjacency::new(&[1], vec![]).unwrap();
        let t = EmbeddingTable::from_values(Role::Item, 1, 2, vec![0.3, -0.4]).unwrap();
        let out = forward(&t, &adj, 0, &c);
        assert_eq!(out[0], exp0(&TangentVector::new(vec![0.3, -0.4]), &c));
    }

    #[test]
    fn one_layer_adds_neighbor_mean() {
        let c = cfg(1);
        // node 0 linked to 1 and 2; node 3 isolated
        let adj = Adjacency::new(&[4], vec![(0, 1), (0, 2)]).unwrap();
        let t = EmbeddingTable::from_values(Role::Item, 4, 1, vec![0.1, 0.4, 0.8, 0.5]).unwrap();
        let out = forward(&t, &adj, 1, &c);
        let expect = exp0(&TangentVector::new(vec![0.1 + (0.4 + 0.8) / 2.0]), &c);
        assert!((out[0].coords()[1] - expect.coords()[1]).abs() < 1e-15);
        let isolated = forward(&t, &adj, 2, &c);
        assert_eq!(isolated[3], exp0(&TangentVector::new(vec![0.5]), &c));
    }

    #[test]
    fn zero_table_maps_to_origin() {
        let c = cfg(3);
        let adj = Adjacency::bipartite(3, 4, &[(0, 1), (1, 1), (2, 3)]).unwrap();
        let t = EmbeddingTable::zeros(Role::User, 7, 3);
        for p in forward(&t, &adj, 0, &c) {
            assert_eq!(p, c.origin());
        }
    }

    #[test]
    fn aggregate_backward_is_transpose() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let adj = Adjacency::bipartite(4, 5, &[(0, 0), (0, 3), (1, 3), (2, 1), (2, 4), (3, 4)]).unwrap();
        let dim = 2;
        let x: Vec<f64> = (0..18).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g: Vec<f64> = (0..18).map(|_| rng.random_range(-1.0..1.0)).collect();
        for layers in 0..3 {
            let ax = aggregate(&x, dim, &adj, layers);
            let atg = aggregate_backward(&g, dim, &adj, layers);
            let lhs: f64 = ax.iter().zip(&g).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.iter().zip(&atg).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}

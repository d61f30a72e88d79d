use crate::error::{Error, Result};

/// One merge: clusters `a < b` join at `height` into a cluster of `size`
/// points. Singletons are `0..n`; the cluster made at step `s` is `n + s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkageRow {
    pub a: usize,
    pub b: usize,
    pub height: f64,
    pub size: usize,
}

/// Ward agglomerative clustering of `n` rows of width `dim`.
///
/// Starts from Euclidean distances between singletons and updates with the
/// Lance-Williams recurrence. Among equal distances the pair with the
/// smallest `(a, b)` ids merges first.
pub fn ward_linkage(points: &[f64], dim: usize) -> Result<Vec<LinkageRow>> {
    if dim == 0 || points.len() % dim != 0 {
        return Err(Error::Shape(format!("{} values do not form rows of width {dim}", points.len())));
    }
    let n = points.len() / dim;
    if n < 2 {
        return Err(Error::Contract(format!("linkage needs at least 2 points, got {n}")));
    }
    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    // slot i holds one active cluster
    let mut dist = vec![0.0f64; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = row(i).iter().zip(row(j)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    let mut id: Vec<usize> = (0..n).collect();
    let mut size = vec![1usize; n];
    let mut active: Vec<usize> = (0..n).collect();
    let mut out = Vec::with_capacity(n - 1);

    for step in 0..n - 1 {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for (x, &s) in active.iter().enumerate() {
            for &t in &active[x + 1..] {
                let d = dist[s * n + t];
                let (a, b) = (id[s].min(id[t]), id[s].max(id[t]));
                let better = match best {
                    None => true,
                    Some((bd, ba, bb, _, _)) => d < bd || (d == bd && (a, b) < (ba, bb)),
                };
                if better {
                    best = Some((d, a, b, s, t));
                }
            }
        }
        let (h, a, b, s, t) = best.unwrap();
        let (ns, nt) = (size[s] as f64, size[t] as f64);
        for &u in &active {
            if u == s || u == t {
                continue;
            }
            let nu = size[u] as f64;
            let (dus, dut) = (dist[u * n + s], dist[u * n + t]);
            let v = ((ns + nu) * dus * dus + (nt + nu) * dut * dut - nu * h * h) / (ns + nt + nu);
            let d = v.max(0.0).sqrt();
            dist[u * n + s] = d;
            dist[s * n + u] = d;
        }
        size[s] += size[t];
        id[s] = n + step;
        active.retain(|&x| x != t);
        out.push(LinkageRow { a, b, height: h, size: size[s] });
    }
    for w in out.windows(2) {
        if w[1].height < w[0].height - 1e-12 * w[0].height.max(1.0) {
            return Err(Error::Contract(format!("linkage heights decrease: {} then {}", w[0].height, w[1].height)));
        }
    }
    Ok(out)
}

//! Hyperbolic geometry kernel.
//!
//! Two models of the same space are provided:
//!
//! - the hyperboloid `{x ∈ R^{d+1} : <x,x>_H = -k, x_0 > 0}`, used for every
//!   distance that enters a loss, and
//! - the Poincaré ball `{p ∈ R^d : |p|^2 < k}`, used for cross-checks and
//!   export.
//!
//! Trainable parameters never live on the manifold itself. They are tangent
//! vectors at the hyperboloid origin `o = (sqrt(k), 0, ..., 0)`, stored by
//! their `d` spatial components and mapped to the manifold with [`exp0`].
//!
//! All arithmetic is `f64`.

use crate::error::{Error, Result};

/// Curvature parameters of the space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManifoldConfig {
    c: f64,
    k: f64,
    dim: usize,
}

impl ManifoldConfig {
    /// Builds a configuration from the (strictly negative) curvature `c`.
    pub fn new(c: f64, dim: usize) -> Result<Self> {
        if !(c < 0.0) || !c.is_finite() {
            return Err(Error::Config(format!("curvature must be finite and negative, got {c}")));
        }
        if dim == 0 {
            return Err(Error::Config("manifold dimension must be at least 1".into()));
        }
        Ok(Self { c, k: -1.0 / c, dim })
    }

    /// Builds a configuration from `k = -1/c > 0`.
    pub fn from_k(k: f64, dim: usize) -> Result<Self> {
        if !(k > 0.0) || !k.is_finite() {
            return Err(Error::Config(format!("k must be finite and positive, got {k}")));
        }
        Self::new(-1.0 / k, dim).map(|cfg| Self { k, ..cfg })
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    /// Intrinsic dimension `d`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sqrt_k(&self) -> f64 {
        self.k.sqrt()
    }

    /// The hyperboloid origin `(sqrt(k), 0, ..., 0)`.
    pub fn origin(&self) -> HyperboloidPoint {
        let mut coords = vec![0.0; self.dim + 1];
        coords[0] = self.sqrt_k();
        HyperboloidPoint { coords }
    }
}

/// A point on the hyperboloid, `d + 1` ambient coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperboloidPoint {
    coords: Vec<f64>,
}

impl HyperboloidPoint {
    /// Lifts spatial coordinates onto the sheet by recomputing the time-like
    /// coordinate.
    pub fn from_spatial(spatial: &[f64], cfg: &ManifoldConfig) -> Self {
        assert_eq!(spatial.len(), cfg.dim(), "spatial dimension mismatch");
        let mut coords = Vec::with_capacity(spatial.len() + 1);
        coords.push(time_coordinate(spatial, cfg.k()));
        coords.extend_from_slice(spatial);
        Self { coords }
    }

    /// Wraps raw ambient coordinates, checking the manifold invariant.
    pub fn try_from_coords(coords: Vec<f64>, cfg: &ManifoldConfig) -> Result<Self> {
        if coords.len() != cfg.dim() + 1 {
            return Err(Error::Shape(format!(
                "hyperboloid point needs {} coordinates, got {}",
                cfg.dim() + 1,
                coords.len()
            )));
        }
        if coords.iter().any(|v| !v.is_finite()) || coords[0] <= 0.0 {
            return Err(Error::Contract("hyperboloid point must be finite with x_0 > 0".into()));
        }
        let residual = minkowski_inner(&coords, &coords) + cfg.k();
        if residual.abs() > 1e-9 * cfg.k().max(coords[0] * coords[0]) {
            return Err(Error::Contract(format!("point is off the hyperboloid by {residual:e}")));
        }
        Ok(Self { coords })
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn spatial(&self) -> &[f64] {
        &self.coords[1..]
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }
}

/// A point strictly inside the Poincaré ball of squared radius `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoincarePoint {
    coords: Vec<f64>,
}

impl PoincarePoint {
    pub fn try_new(coords: Vec<f64>, cfg: &ManifoldConfig) -> Result<Self> {
        if coords.len() != cfg.dim() {
            return Err(Error::Shape(format!(
                "Poincaré point needs {} coordinates, got {}",
                cfg.dim(),
                coords.len()
            )));
        }
        let sq = sq_norm(&coords);
        if !sq.is_finite() || sq >= cfg.k() {
            return Err(Error::Contract(format!(
                "Poincaré point has |p|^2 = {sq}, must be < k = {}",
                cfg.k()
            )));
        }
        Ok(Self { coords })
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }
}

/// Tangent vector at the hyperboloid origin, stored by its spatial part.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    coords: Vec<f64>,
}

impl TangentVector {
    pub fn new(coords: Vec<f64>) -> Self {
        assert!(coords.iter().all(|v| v.is_finite()), "tangent vector must be finite");
        Self { coords }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { coords: vec![0.0; dim] }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn norm(&self) -> f64 {
        sq_norm(&self.coords).sqrt()
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }
}

/// `-x_0 y_0 + sum_{i>=1} x_i y_i`.
pub fn minkowski_inner(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "minkowski_inner: dimension mismatch");
    assert!(x.len() >= 2, "minkowski_inner: need at least 2 coordinates");
    let spatial: f64 = x[1..].iter().zip(&y[1..]).map(|(a, b)| a * b).sum();
    spatial - x[0] * y[0]
}

#[inline]
pub(crate) fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum()
}

#[inline]
fn time_coordinate(spatial: &[f64], k: f64) -> f64 {
    (k + sq_norm(spatial)).sqrt()
}

/// `arcosh` with its argument floored at exactly 1.
#[inline]
pub(crate) fn arcosh_clamped(a: f64) -> f64 {
    assert!(!a.is_nan(), "arcosh of NaN");
    if a <= 1.0 {
        0.0
    } else {
        a.acosh()
    }
}

/// Argument of the hyperboloid distance, `-<x,y>_H / k`.
#[inline]
pub(crate) fn hyperboloid_cosh_arg(x: &[f64], y: &[f64], k: f64) -> f64 {
    -minkowski_inner(x, y) / k
}

pub(crate) fn hyperboloid_distance_raw(x: &[f64], y: &[f64], k: f64) -> f64 {
    k.sqrt() * arcosh_clamped(hyperboloid_cosh_arg(x, y, k))
}

/// Geodesic distance on the hyperboloid, `sqrt(k) arcosh(-<x,y>_H / k)`.
pub fn hyperboloid_distance(x: &HyperboloidPoint, y: &HyperboloidPoint, cfg: &ManifoldConfig) -> f64 {
    hyperboloid_distance_raw(&x.coords, &y.coords, cfg.k())
}

/// Geodesic distance in the Poincaré ball.
pub fn poincare_distance(x: &PoincarePoint, y: &PoincarePoint, cfg: &ManifoldConfig) -> f64 {
    let k = cfg.k();
    let diff: f64 = x.coords.iter().zip(&y.coords).map(|(a, b)| (a - b) * (a - b)).sum();
    let denom = (k - sq_norm(&x.coords)) * (k - sq_norm(&y.coords));
    assert!(denom > 0.0, "Poincaré point outside the ball");
    k.sqrt() * arcosh_clamped(1.0 + 2.0 * k * diff / denom)
}

/// `sinh(t)/t`, stable at `t -> 0`.
#[inline]
fn sinhc(t: f64) -> f64 {
    if t.abs() < 1e-4 {
        let t2 = t * t;
        1.0 + t2 / 6.0 + t2 * t2 / 120.0
    } else {
        t.sinh() / t
    }
}

/// Exponential map at the origin, written into `out` (length `d + 1`).
pub(crate) fn exp0_into(v: &[f64], k: f64, out: &mut [f64]) {
    debug_assert_eq!(out.len(), v.len() + 1);
    let sk = k.sqrt();
    let r = sq_norm(v).sqrt();
    let scale = sinhc(r / sk);
    for (o, &vi) in out[1..].iter_mut().zip(v) {
        *o = scale * vi;
    }
    out[0] = time_coordinate(&out[1..], k);
}

/// Exponential map at the origin.
pub fn exp0(v: &TangentVector, cfg: &ManifoldConfig) -> HyperboloidPoint {
    assert_eq!(v.coords.len(), cfg.dim(), "exp0: dimension mismatch");
    let mut coords = vec![0.0; cfg.dim() + 1];
    exp0_into(&v.coords, cfg.k(), &mut coords);
    HyperboloidPoint { coords }
}

/// Logarithmic map at the origin.
pub fn log0(x: &HyperboloidPoint, cfg: &ManifoldConfig) -> TangentVector {
    TangentVector { coords: log0_raw(&x.coords, cfg.k()) }
}

pub(crate) fn log0_raw(x: &[f64], k: f64) -> Vec<f64> {
    let spatial = &x[1..];
    let norm = sq_norm(spatial).sqrt();
    if norm == 0.0 {
        return vec![0.0; spatial.len()];
    }
    let sk = k.sqrt();
    // d(o, x) = sqrt(k) asinh(|x_s| / sqrt(k)); asinh is well conditioned near 0
    let dist = sk * (norm / sk).asinh();
    spatial.iter().map(|v| v * dist / norm).collect()
}

/// Vector-Jacobian product of [`exp0`]: maps a gradient with respect to the
/// ambient coordinates of `exp0(v)` to a gradient with respect to `v`.
pub(crate) fn exp0_vjp(v: &[f64], grad_ambient: &[f64], k: f64, out: &mut [f64]) {
    debug_assert_eq!(grad_ambient.len(), v.len() + 1);
    let sk = k.sqrt();
    let r = sq_norm(v).sqrt();
    let t = r / sk;
    // x_0 = sk cosh(t)          => d x_0 / d v = (sinh(t)/t)(1/sk) v
    // x_s = f(r) v, f = sinhc(t) => d x_s / d v = f I + (f'(r)/r) v v^T
    let f = sinhc(t);
    let d0 = sinhc(t) / sk;
    // f'(r)/r = (cosh(t) - sinhc(t)) / r^2, series 1/(3k) + r^2/(30 k^2) near 0
    let fprime_over_r = if t < 1e-3 {
        let t2 = t * t;
        (1.0 / 3.0 + t2 / 30.0) / k
    } else {
        (t.cosh() - f) / (r * r)
    };
    let g0 = grad_ambient[0];
    let gs = &grad_ambient[1..];
    let v_dot_gs: f64 = v.iter().zip(gs).map(|(a, b)| a * b).sum();
    for ((o, &vi), &gi) in out.iter_mut().zip(v).zip(gs) {
        *o = g0 * d0 * vi + f * gi + fprime_over_r * v_dot_gs * vi;
    }
}

/// Stereographic projection from the hyperboloid into the Poincaré ball.
pub fn hyperboloid_to_poincare(x: &HyperboloidPoint, cfg: &ManifoldConfig) -> PoincarePoint {
    let sk = cfg.sqrt_k();
    let denom = x.coords[0] + sk;
    PoincarePoint { coords: x.coords[1..].iter().map(|v| sk * v / denom).collect() }
}

/// Inverse stereographic projection.
pub fn poincare_to_hyperboloid(p: &PoincarePoint, cfg: &ManifoldConfig) -> HyperboloidPoint {
    let k = cfg.k();
    let sq = sq_norm(&p.coords);
    let spatial: Vec<f64> = p.coords.iter().map(|v| 2.0 * k * v / (k - sq)).collect();
    HyperboloidPoint::from_spatial(&spatial, cfg)
}

/// Power of the hyperboloid distance and its gradient with respect to both
/// ambient arguments, accumulated into `gx` and `gy` scaled by `weight`.
///
/// Returns `d^power`. For `power == 1` the gradient at coincident points is
/// taken as zero.
pub(crate) fn distance_pow_grad(
    x: &[f64],
    y: &[f64],
    k: f64,
    power: u8,
    weight: f64,
    gx: &mut [f64],
    gy: &mut [f64],
) -> f64 {
    let a = hyperboloid_cosh_arg(x, y, k);
    let (value, slope) = distance_pow_slope(a, k, power);
    if weight != 0.0 && slope != 0.0 {
        add_cosh_arg_grad(x, y, k, weight * slope, gx, gy);
    }
    value
}

/// `(d^power, d(d^power)/da)` for the cosh argument `a`.
#[inline]
pub(crate) fn distance_pow_slope(a: f64, k: f64, power: u8) -> (f64, f64) {
    let sk = k.sqrt();
    match power {
        1 => {
            if a <= 1.0 {
                (0.0, 0.0)
            } else {
                (sk * a.acosh(), sk / (a * a - 1.0).sqrt())
            }
        }
        2 => {
            // d^2 = k arcosh(a)^2, d(d^2)/da = 2k arcosh(a) / sqrt(a^2 - 1)
            if a <= 1.0 {
                (0.0, 2.0 * k)
            } else {
                let ac = a.acosh();
                let delta = a - 1.0;
                let ratio = if delta < 1e-8 {
                    // arcosh(a)/sqrt(a^2-1) = 1 - delta/3 + O(delta^2)
                    1.0 - delta / 3.0
                } else {
                    ac / (a * a - 1.0).sqrt()
                };
                (k * ac * ac, 2.0 * k * ratio)
            }
        }
        p => panic!("unsupported distance power {p}"),
    }
}

/// Adds `scale * da/dx` to `gx` and `scale * da/dy` to `gy`.
#[inline]
pub(crate) fn add_cosh_arg_grad(x: &[f64], y: &[f64], k: f64, scale: f64, gx: &mut [f64], gy: &mut [f64]) {
    // da/dx = (y_0, -y_s) / k
    let s = scale / k;
    gx[0] += s * y[0];
    gy[0] += s * x[0];
    for i in 1..x.len() {
        gx[i] -= s * y[i];
        gy[i] -= s * x[i];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(k: f64, d: usize) -> ManifoldConfig {
        ManifoldConfig::from_k(k, d).unwrap()
    }

    fn random_tangent(rng: &mut ChaCha8Rng, d: usize, max_norm: f64) -> TangentVector {
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = sq_norm(&v).sqrt().max(1e-12);
        let target = rng.random_range(0.0..max_norm);
        TangentVector::new(v.iter().map(|x| x * target / n).collect())
    }

    #[test]
    fn config_rejects_nonnegative_curvature() {
        assert!(ManifoldConfig::new(0.0, 2).is_err());
        assert!(ManifoldConfig::new(1.0, 2).is_err());
        assert!(ManifoldConfig::new(-1.0, 0).is_err());
        let c = ManifoldConfig::new(-0.5, 3).unwrap();
        assert!((c.k() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn minkowski_examples() {
        let s2 = 2f64.sqrt();
        assert_eq!(minkowski_inner(&[1.0, 0.0], &[1.0, 0.0]), -1.0);
        assert!((minkowski_inner(&[s2, 1.0], &[s2, 1.0]) + 1.0).abs() < 1e-15);
        assert_eq!(minkowski_inner(&[2.0, 1.0, 1.0], &[1.0, 0.0, 0.0]), -2.0);
    }

    #[test]
    #[should_panic]
    fn minkowski_rejects_mismatch() {
        minkowski_inner(&[1.0, 0.0], &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn hyperboloid_distance_examples() {
        let c = cfg(1.0, 1);
        let o = c.origin();
        assert_eq!(hyperboloid_distance(&o, &o, &c), 0.0);
        let x = HyperboloidPoint::try_from_coords(vec![2f64.sqrt(), 1.0], &c).unwrap();
        // ln(1 + sqrt 2)
        assert!((hyperboloid_distance(&x, &o, &c) - 0.881_373_587_019_543).abs() < 1e-12);
        let v = TangentVector::new(vec![0.7]);
        assert!((hyperboloid_distance(&exp0(&v, &c), &o, &c) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn poincare_distance_example() {
        let c = cfg(1.0, 2);
        let x = PoincarePoint::try_new(vec![0.5, 0.0], &c).unwrap();
        let y = PoincarePoint::try_new(vec![0.0, 0.0], &c).unwrap();
        assert!((poincare_distance(&x, &y, &c) - 3f64.ln()).abs() < 1e-12);
        assert_eq!(poincare_distance(&x, &x, &c), 0.0);
        assert!(PoincarePoint::try_new(vec![1.0, 0.0], &c).is_err());
    }

    #[test]
    fn exp_log_examples() {
        let c = cfg(1.0, 1);
        let x = exp0(&TangentVector::new(vec![(1.0 + 2f64.sqrt()).ln()]), &c);
        assert!((x.coords()[0] - 2f64.sqrt()).abs() < 1e-12);
        assert!((x.coords()[1] - 1.0).abs() < 1e-12);
        let c3 = cfg(2.0, 3);
        assert_eq!(exp0(&TangentVector::zeros(3), &c3), c3.origin());
        assert_eq!(log0(&c3.origin(), &c3).coords(), &[0.0, 0.0, 0.0]);
        let p = HyperboloidPoint::try_from_coords(vec![2f64.sqrt(), 1.0], &c).unwrap();
        assert!((log0(&p, &c).coords()[0] - 0.881_373_587_019_543).abs() < 1e-12);
        let q = hyperboloid_to_poincare(&p, &c);
        assert!((q.coords()[0] - 1.0 / (1.0 + 2f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn exp_log_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &k in &[0.5, 1.0, 2.0] {
            let c = cfg(k, 5);
            for _ in 0..200 {
                let v = random_tangent(&mut rng, 5, 10.0);
                let back = log0(&exp0(&v, &c), &c);
                for (a, b) in v.coords().iter().zip(back.coords()) {
                    assert!((a - b).abs() < 1e-9, "{a} vs {b}");
                }
                let x = exp0(&random_tangent(&mut rng, 5, 5.0), &c);
                let x2 = exp0(&log0(&x, &c), &c);
                for (a, b) in x.coords().iter().zip(x2.coords()) {
                    assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn near_identical_points_are_stable() {
        let c = cfg(1.0, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let v = random_tangent(&mut rng, 4, 3.0);
            let mut w = v.coords().to_vec();
            w[0] += 1e-13;
            let x = exp0(&v, &c);
            let y = exp0(&TangentVector::new(w), &c);
            let d = hyperboloid_distance(&x, &y, &c);
            assert!(d.is_finite() && (0.0..=1e-5).contains(&d), "{d}");
            let pd = poincare_distance(&hyperboloid_to_poincare(&x, &c), &hyperboloid_to_poincare(&y, &c), &c);
            assert!(pd.is_finite() && (0.0..=1e-5).contains(&pd), "{pd}");
        }
    }

    #[test]
    fn poincare_round_trip() {
        let c = cfg(2.0, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let x = exp0(&random_tangent(&mut rng, 3, 4.0), &c);
            let p = hyperboloid_to_poincare(&x, &c);
            assert!(sq_norm(p.coords()) < c.k());
            let back = poincare_to_hyperboloid(&p, &c);
            for (a, b) in x.coords().iter().zip(back.coords()) {
                assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn exp0_vjp_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for &k in &[0.5, 1.0, 2.0] {
            for _ in 0..50 {
                let v = random_tangent(&mut rng, 4, 3.0).into_coords();
                let g: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
                let mut analytic = vec![0.0; 4];
                exp0_vjp(&v, &g, k, &mut analytic);
                let f = |v: &[f64]| {
                    let mut out = vec![0.0; 5];
                    exp0_into(v, k, &mut out);
                    out.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>()
                };
                for i in 0..4 {
                    let h = 1e-6;
                    let mut p = v.clone();
                    p[i] += h;
                    let mut m = v.clone();
                    m[i] -= h;
                    let fd = (f(&p) - f(&m)) / (2.0 * h);
                    assert!((fd - analytic[i]).abs() <= 1e-6 * fd.abs().max(1.0));
                }
            }
        }
        // gradient at the exact origin is the spatial part of the ambient gradient
        let mut out = vec![0.0; 2];
        exp0_vjp(&[0.0, 0.0], &[3.0, 1.0, -2.0], 1.0, &mut out);
        assert_eq!(out, vec![1.0, -2.0]);
    }
}

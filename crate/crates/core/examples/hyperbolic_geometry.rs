//! Points on the hyperboloid, the Poincaré ball, and the maps between them.

use hyperrec::geometry::{
    exp0, hyperboloid_distance, hyperboloid_to_poincare, log0, minkowski_inner, poincare_distance,
    poincare_to_hyperboloid, ManifoldConfig, TangentVector,
};

fn main() -> hyperrec::Result<()> {
    // c = -0.5, so k = 2
    let cfg = ManifoldConfig::new(-0.5, 3)?;
    let o = cfg.origin();
    let u = exp0(&TangentVector::new(vec![0.3, -0.2, 0.1]), &cfg);
    let v = exp0(&TangentVector::new(vec![-1.0, 0.5, 2.0]), &cfg);

    println!("k = {}", cfg.k());
    println!("<u,u>_H = {:.12} (expect {})", minkowski_inner(u.coords(), u.coords()), -cfg.k());
    println!("d(o, u) = {:.12}, |log0 u| = {:.12}", hyperboloid_distance(&o, &u, &cfg), log0(&u, &cfg).norm());

    let (pu, pv) = (hyperboloid_to_poincare(&u, &cfg), hyperboloid_to_poincare(&v, &cfg));
    println!("u in the ball: {:?}", pu.coords());
    println!(
        "d_H(u, v) = {:.12}, d_P(u, v) = {:.12}",
        hyperboloid_distance(&u, &v, &cfg),
        poincare_distance(&pu, &pv, &cfg)
    );
    let back = poincare_to_hyperboloid(&pu, &cfg);
    let err = back.coords().iter().zip(u.coords()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("round trip error {err:.2e}");

    // distances grow fast towards the boundary
    for r in [0.5, 1.0, 2.0, 4.0] {
        let p = exp0(&TangentVector::new(vec![r, 0.0, 0.0]), &cfg);
        let q = exp0(&TangentVector::new(vec![0.0, r, 0.0]), &cfg);
        println!("radius {r}: d = {:.4}", hyperboloid_distance(&p, &q, &cfg));
    }
    Ok(())
}

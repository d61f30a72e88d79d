use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hyperrec::eval::{group_members, longtail_groups, top_k, ward_linkage};
use hyperrec::geometry::{exp0, hyperboloid_distance, log0, minkowski_inner, ManifoldConfig, TangentVector};
use hyperrec::model::{aggregate, Adjacency};
use hyperrec::moe::{gate, MoEParams};

fn tangent(max: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-max..max, 4)
}

fn curvature() -> impl Strategy<Value = f64> {
    prop::sample::select(vec![0.5, 1.0, 2.0])
}

proptest! {
    #[test]
    fn exp0_stays_on_the_sheet(v in tangent(2.0), k in curvature()) {
        let cfg = ManifoldConfig::from_k(k, 4).unwrap();
        let x = exp0(&TangentVector::new(v.clone()), &cfg);
        prop_assert!((minkowski_inner(x.coords(), x.coords()) + k).abs() < 1e-9);
        prop_assert!(x.coords()[0] > 0.0);
        let back = log0(&x, &cfg);
        for (a, b) in back.coords().iter().zip(&v) {
            prop_assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn distance_is_a_symmetric_premetric(a in tangent(2.0), b in tangent(2.0), k in curvature()) {
        let cfg = ManifoldConfig::from_k(k, 4).unwrap();
        let (x, y) = (exp0(&TangentVector::new(a), &cfg), exp0(&TangentVector::new(b), &cfg));
        let (dxy, dyx) = (hyperboloid_distance(&x, &y, &cfg), hyperboloid_distance(&y, &x, &cfg));
        prop_assert!(dxy >= 0.0);
        prop_assert!((dxy - dyx).abs() < 1e-12);
        prop_assert!(hyperboloid_distance(&x, &x, &cfg) < 1e-6);
    }

    #[test]
    fn gate_is_a_distribution(seed in any::<u64>(), experts in 1usize..6, s in prop::collection::vec(-5.0..5.0f64, 3)) {
        let p = MoEParams::init(experts, 3, 2, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let g = gate(&s, &p);
        prop_assert_eq!(g.len(), experts);
        prop_assert!(g.iter().all(|&x| (0.0..=1.0).contains(&x)));
        prop_assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn top_k_is_sorted_and_skips_masked(
        scores in prop::collection::vec(-1.0..1.0f64, 1..60),
        mask_bits in prop::collection::vec(any::<bool>(), 60),
        k in 0usize..30,
    ) {
        let masked: Vec<usize> = (0..scores.len()).filter(|&i| mask_bits[i]).collect();
        let top = top_k(&scores, &masked, k);
        prop_assert_eq!(top.len(), k.min(scores.len() - masked.len()));
        prop_assert!(top.windows(2).all(|w| w[0].1 >= w[1].1));
        prop_assert!(top.iter().all(|(i, _)| !masked.contains(i)));
        if let Some(last) = top.last() {
            let kept = (0..scores.len()).filter(|i| !masked.contains(i) && !top.iter().any(|t| t.0 == *i));
            for i in kept {
                prop_assert!(scores[i] <= last.1);
            }
        }
    }

    #[test]
    fn longtail_groups_are_balanced_and_ordered(counts in prop::collection::vec(0usize..100, 5..200)) {
        let groups = group_members(&longtail_groups(&counts, 5).unwrap(), 5);
        let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        for w in groups.windows(2) {
            let hi = w[0].iter().map(|&u| counts[u]).max().unwrap();
            let lo = w[1].iter().map(|&u| counts[u]).min().unwrap();
            prop_assert!(hi <= lo);
        }
    }

    #[test]
    fn ward_heights_never_decrease(pts in prop::collection::vec(-3.0..3.0f64, 4..40)) {
        let n = pts.len() / 2;
        let rows = ward_linkage(&pts[..n * 2], 2).unwrap();
        prop_assert_eq!(rows.len(), n - 1);
        prop_assert!(rows.windows(2).all(|w| w[0].height <= w[1].height + 1e-12));
        prop_assert_eq!(rows.last().unwrap().size, n);
    }

    #[test]
    fn zero_layers_is_identity(values in prop::collection::vec(-1.0..1.0f64, 12)) {
        let adj = Adjacency::bipartite(2, 4, &[(0, 0), (0, 1), (1, 2), (1, 3)]).unwrap();
        prop_assert_eq!(aggregate(&values, 2, &adj, 0), values);
    }
}

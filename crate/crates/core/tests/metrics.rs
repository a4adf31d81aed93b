use mckm::dataset::{generate_synthetic, GeneratorSpec, Partition};
use mckm::metrics::{ari, f_star, nmi};
use proptest::prelude::*;

fn choose2(x: f64) -> f64 {
    x * (x - 1.0) / 2.0
}

/// ARI straight from nested count loops over label values.
fn ari_oracle(a: &[usize], b: &[usize]) -> f64 {
    let la: Vec<usize> = { let mut v = a.to_vec(); v.sort(); v.dedup(); v };
    let lb: Vec<usize> = { let mut v = b.to_vec(); v.sort(); v.dedup(); v };
    let count = |f: &dyn Fn(usize) -> bool| (0..a.len()).filter(|&j| f(j)).count() as f64;
    let mut index = 0.0;
    for &x in &la {
        for &y in &lb {
            index += choose2(count(&|j| a[j] == x && b[j] == y));
        }
    }
    let sa: f64 = la.iter().map(|&x| choose2(count(&|j| a[j] == x))).sum();
    let sb: f64 = lb.iter().map(|&y| choose2(count(&|j| b[j] == y))).sum();
    let expected = sa * sb / choose2(a.len() as f64);
    (index - expected) / (0.5 * (sa + sb) - expected)
}

fn labels(n: usize, k: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1..=k, n)
}

fn relabel(v: &[usize], perm: &[usize]) -> Vec<usize> {
    v.iter().map(|&x| perm[(x - 1) % perm.len()] + 100).collect()
}

proptest! {
    #[test]
    fn ari_matches_count_oracle(a in labels(12, 4), b in labels(12, 4)) {
        let (pa, pb) = (Partition::from_labels(&a), Partition::from_labels(&b));
        let expected = ari_oracle(&a, &b);
        if expected.is_finite() {
            prop_assert!((ari(&pa, &pb).unwrap() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn relabeling_invariance(a in labels(20, 5), b in labels(20, 5), perm in Just(vec![4usize, 2, 0, 3, 1]).prop_shuffle()) {
        let (pa, pb) = (Partition::from_labels(&a), Partition::from_labels(&b));
        let (ra, rb) = (Partition::from_labels(&relabel(&a, &perm)), Partition::from_labels(&relabel(&b, &perm)));
        for m in [f_star, nmi, ari] {
            let x = m(&pa, &pb).unwrap();
            prop_assert!((x - m(&ra, &pb).unwrap()).abs() < 1e-12);
            prop_assert!((x - m(&pa, &rb).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn ranges(a in labels(15, 6), b in labels(15, 6)) {
        let (pa, pb) = (Partition::from_labels(&a), Partition::from_labels(&b));
        let (f, n, r) = (f_star(&pa, &pb).unwrap(), nmi(&pa, &pb).unwrap(), ari(&pa, &pb).unwrap());
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert!((0.0..=1.0).contains(&n));
        prop_assert!(r <= 1.0 + 1e-15);
        prop_assert_eq!(r == 1.0, pa.same_up_to_relabeling(&pb));
    }

    #[test]
    fn truth_scores_one(seed in any::<u64>(), rows in 1usize..4, cols in 1usize..4) {
        let ds = generate_synthetic::<f64>(&GeneratorSpec::GaussianGrid { rows, cols, per_cluster: 5, sigma: 0.1 }, seed).unwrap();
        let t = ds.truth().unwrap();
        prop_assert_eq!(f_star(&t, &t).unwrap(), 1.0);
        prop_assert_eq!(nmi(&t, &t).unwrap(), 1.0);
        prop_assert_eq!(ari(&t, &t).unwrap(), 1.0);
    }
}

#[test]
fn nmi_entropy_example() {
    // truth [1,1,2,2], pred [1,2,2,2]: p = 1/4 cells (1,1), (1,2), and 1/2 at (2,2)
    let h_t = 2f64.ln();
    let h_p = -(0.25 * 0.25f64.ln() + 0.75 * 0.75f64.ln());
    let mi = 0.25 * (0.25f64 / (0.5 * 0.25)).ln() + 0.25 * (0.25f64 / (0.5 * 0.75)).ln() + 0.5 * (0.5f64 / (0.5 * 0.75)).ln();
    let got = nmi(&Partition::from_labels(&[1, 1, 2, 2]), &Partition::from_labels(&[1, 2, 2, 2])).unwrap();
    assert!((got - mi / (h_t * h_p).sqrt()).abs() < 1e-14);
}

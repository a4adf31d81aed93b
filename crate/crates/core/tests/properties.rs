use mckm::dataset::{generate_synthetic, Dataset, GeneratorSpec, Partition};
use mckm::kmeans::{kmeans_cost, kmeanspp_seed, lloyd, update_centroids, D2Sampler, LloydConfig, PrototypeSet};
use mckm::mps::{mps, reconstruction, MpsConfig};
use mckm::pipeline::{run, AlgorithmSpec, MckmParams, Params};
use mckm::smkm::{smkm, SmkmAction};
use ndarray::Array2;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn points(max_n: usize, max_p: usize) -> impl Strategy<Value = Dataset<f64>> {
    (4..=max_n, 1..=max_p).prop_flat_map(|(n, p)| {
        prop::collection::vec(-5.0f64..5.0, n * p)
            .prop_map(move |v| Dataset::new(Array2::from_shape_vec((n, p), v).unwrap(), None, "random").unwrap())
    })
}

fn brute_d2(ds: &Dataset<f64>, chosen: &[usize]) -> Vec<f64> {
    (0..ds.n())
        .map(|j| {
            chosen
                .iter()
                .map(|&c| ds.row(j).iter().zip(ds.row(c)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lloyd_is_monotone(ds in points(60, 3), k in 1usize..5, seed in any::<u64>()) {
        let k = k.min(ds.n());
        let fit = lloyd(&ds, &kmeanspp_seed(&ds, k, seed).unwrap(), LloydConfig::default()).unwrap();
        for w in fit.cost_trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn centroids_are_locally_optimal(ds in points(40, 3), k in 1usize..4, seed in any::<u64>()) {
        let k = k.min(ds.n());
        let fit = lloyd(&ds, &kmeanspp_seed(&ds, k, seed).unwrap(), LloydConfig::default()).unwrap();
        let part = fit.partition;
        let centers = update_centroids(&ds, &part).unwrap();
        let base = kmeans_cost(&ds, &centers, &part).unwrap();
        for i in 0..centers.k() {
            for c in 0..ds.p() {
                for delta in [1e-3, -1e-3] {
                    let mut moved = centers.centers().clone();
                    moved[[i, c]] += delta;
                    let moved = PrototypeSet::new(moved, centers.provenance().to_vec()).unwrap();
                    prop_assert!(kmeans_cost(&ds, &moved, &part).unwrap() >= base);
                }
            }
        }
    }

    #[test]
    fn seeding_skips_covered_points(ds in points(30, 2), k in 1usize..6, seed in any::<u64>()) {
        // duplicate the data so that covered points exist
        let mut doubled = ds.points().clone();
        doubled.append(ndarray::Axis(0), ds.points().view()).unwrap();
        let ds = Dataset::new(doubled, None, "doubled").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sampler = D2Sampler::new(&ds, 0);
        for _ in 1..k {
            let Some(j) = sampler.sample(&mut rng) else { break };
            let d2 = brute_d2(&ds, sampler.chosen());
            prop_assert!(d2[j] > 0.0);
            sampler.add(j);
        }
    }

    #[test]
    fn mps_invariants(ds in points(80, 3), seed in any::<u64>(), rho in 0.3f64..3.0) {
        let cfg = MpsConfig::new(seed).with_rho(rho);
        let r = mps(&ds, &cfg).unwrap();
        let again = mps(&ds, &cfg).unwrap();
        prop_assert_eq!(&r.sampled, &again.sampled);
        prop_assert_eq!(r.prototypes.centers(), again.prototypes.centers());
        for w in r.reconstruction_trace.windows(2) {
            prop_assert!(w[1].1 <= w[0].1);
        }
        // the residual recorded for s equals Σ D² for the first s picks
        for &(s, rs) in &r.reconstruction_trace {
            let d2: f64 = brute_d2(&ds, &r.sampled[..s]).iter().sum();
            prop_assert!((rs - d2).abs() <= 1e-9 * d2.max(1.0));
        }
        let sampled = PrototypeSet::from_indices(&ds, &r.sampled).unwrap();
        let total: f64 = brute_d2(&ds, &r.sampled).iter().sum();
        prop_assert!((reconstruction(&ds, &sampled).unwrap() - total).abs() <= 1e-9 * total.max(1.0));
        // no duplicate picks while positive mass remained
        for (s, &j) in r.sampled.iter().enumerate().skip(1) {
            let d2 = brute_d2(&ds, &r.sampled[..s]);
            if d2.iter().any(|&x| x > 0.0) {
                prop_assert!(d2[j] > 0.0);
            }
        }
        prop_assert!(r.s_star >= 1 && r.s_star == r.prototypes.k());
        prop_assert!(!r.partition.has_empty());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn smkm_cycles(seed in any::<u64>(), k in 2usize..6) {
        let ds: Dataset<f64> = generate_synthetic(&GeneratorSpec::GaussianGrid { rows: 2, cols: 3, per_cluster: 15, sigma: 0.1 }, seed).unwrap();
        let out = smkm(&ds, k, seed, 20).unwrap();
        prop_assert_eq!(out.partition.k(), k);
        prop_assert_eq!(out.prototypes.k(), k);
        prop_assert_eq!(out.step_log.len() % 2, 0);
        for pair in out.step_log.chunks(2) {
            prop_assert_eq!(pair[0].action, SmkmAction::Split);
            prop_assert_eq!(pair[1].action, SmkmAction::Merge);
        }
        let start = lloyd(&ds, &kmeanspp_seed(&ds, k, mckm::seed::derive(seed, &[0])).unwrap(), LloydConfig::default()).unwrap();
        prop_assert!(out.cost <= start.cost);
        if !out.step_log.is_empty() {
            prop_assert!(out.cost < start.cost);
        }
    }

    #[test]
    fn mckm_covers_every_sample(seed in any::<u64>(), gamma in 0.0f64..2.0) {
        let ds: Dataset<f64> = generate_synthetic(&GeneratorSpec::TwoMoons { n: 120, noise: 0.05 }, seed).unwrap();
        let spec = AlgorithmSpec::new(Params::Mckm(MckmParams::new(1.0, gamma, 2)), seed);
        let out = run(&ds, &spec).unwrap();
        prop_assert_eq!(out.partition.len(), ds.n());
        prop_assert!(!out.partition.has_empty());
        prop_assert_eq!(out.partition.k(), out.report.k_star);
        let t = &out.report.details["timings"];
        let stages: f64 = ["mps_seconds", "graph_seconds", "merge_seconds"].iter().map(|k| t[k].as_f64().unwrap()).sum();
        prop_assert!(stages <= out.report.runtime_seconds);
    }
}

#[test]
fn smkm_beats_kmeanspp_on_grid() {
    let spec = GeneratorSpec::GaussianGrid { rows: 3, cols: 5, per_cluster: 50, sigma: 0.01 };
    let mut wins = 0;
    for t in 0..20 {
        let seed = mckm::seed::trial_seed(11, t);
        let ds: Dataset<f64> = generate_synthetic(&spec, seed).unwrap();
        let sm = run(&ds, &AlgorithmSpec::new(Params::Smkm { k: 15, max_cycles: 50 }, seed)).unwrap().report.metrics.cost;
        let pp = run(&ds, &AlgorithmSpec::new(Params::Kmeanspp { k: 15 }, seed)).unwrap().report.metrics.cost;
        wins += usize::from(sm <= pp);
    }
    assert!(wins >= 18, "{wins}/20");
}

#[test]
fn smkm_from_optimum_changes_nothing() {
    let ds = Dataset::from_rows(&[vec![0.0, 0.0], vec![0.0, 0.0], vec![4.0, 0.0], vec![4.0, 0.0], vec![0.0, 4.0], vec![0.0, 4.0]], None, "x").unwrap();
    let out = smkm(&ds, 3, 1, 10).unwrap();
    assert!(out.step_log.is_empty());
    assert_eq!(out.cost, 0.0);
    let expected = Partition::from_labels(&[1, 1, 2, 2, 3, 3]);
    assert!(out.partition.same_up_to_relabeling(&expected));
}

#[test]
fn mps_s_star_on_iris() {
    let ds = mckm::dataset::iris::<f64>().unwrap().normalize().unwrap();
    for t in 0..20 {
        let r = mps(&ds, &MpsConfig::new(mckm::seed::trial_seed(3, t)).with_rho(0.8)).unwrap();
        assert!(r.s_star >= 3 && r.s_star < ds.n(), "s* = {}", r.s_star);
    }
}

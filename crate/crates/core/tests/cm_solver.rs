use mckm::cm::{admm_solve, cm_objective, extract_clusters, CmConfig};
use mckm::graph::{build_graph, WeightedEdgeGraph};
use ndarray::Array2;
use proptest::prelude::*;

/// Projected gradient on the dual: μ = V − Dᵀλ with ‖λ_l‖ ≤ γ w_l.
fn dual_oracle(v: &Array2<f64>, g: &WeightedEdgeGraph<f64>, gamma: f64, iters: usize) -> Array2<f64> {
    let (m, p) = v.dim();
    let edges = g.edges();
    let max_deg = g.degrees().into_iter().max().unwrap_or(1).max(1) as f64;
    let step = 1.0 / (2.0 * max_deg);
    let mut lambda = Array2::<f64>::zeros((edges.len(), p));
    let primal = |lambda: &Array2<f64>| {
        let mut mu = v.clone();
        for (l, e) in edges.iter().enumerate() {
            for c in 0..p {
                mu[[e.l1, c]] -= lambda[[l, c]];
                mu[[e.l2, c]] += lambda[[l, c]];
            }
        }
        mu
    };
    for _ in 0..iters {
        let mu = primal(&lambda);
        for (l, e) in edges.iter().enumerate() {
            let mut norm = 0.0;
            for c in 0..p {
                lambda[[l, c]] += step * (mu[[e.l1, c]] - mu[[e.l2, c]]);
                norm += lambda[[l, c]] * lambda[[l, c]];
            }
            let radius = gamma * e.weight;
            let norm = norm.sqrt();
            if norm > radius {
                for c in 0..p {
                    lambda[[l, c]] *= radius / norm;
                }
            }
        }
    }
    assert_eq!(m, v.nrows());
    primal(&lambda)
}

fn tight(gamma: f64) -> CmConfig {
    CmConfig { tol: 1e-10, max_iter: 200_000, ..CmConfig::new(gamma) }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn admm_matches_dual_oracle(
        pts in prop::collection::vec((-1.5f64..1.5, -1.5f64..1.5), 5),
        gamma in 0.0f64..3.0,
        q in 1usize..4,
    ) {
        let v = Array2::from_shape_fn((5, 2), |(i, c)| if c == 0 { pts[i].0 } else { pts[i].1 });
        let g = build_graph(&v, q, 0.9).unwrap();
        let s = admm_solve(&v, &g, &tight(gamma)).unwrap();
        prop_assert!(s.converged);
        let oracle = dual_oracle(&v, &g, gamma, 200_000);
        for (a, b) in s.mu.iter().zip(oracle.iter()) {
            prop_assert!((a - b).abs() < 1e-5, "admm {} oracle {}", a, b);
        }
        let fa = cm_objective(&v, &g, gamma, &s.mu);
        let fo = cm_objective(&v, &g, gamma, &oracle);
        prop_assert!(fa <= fo + 1e-7);
    }

    #[test]
    fn translation_and_permutation(
        pts in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 6),
        shift in (-5.0f64..5.0, -5.0f64..5.0),
        gamma in 0.0f64..2.0,
    ) {
        let v = Array2::from_shape_fn((6, 2), |(i, c)| if c == 0 { pts[i].0 } else { pts[i].1 });
        let cfg = tight(gamma);
        let g = build_graph(&v, 2, 0.9).unwrap();
        let base = admm_solve(&v, &g, &cfg).unwrap();

        let moved = Array2::from_shape_fn((6, 2), |(i, c)| v[[i, c]] + if c == 0 { shift.0 } else { shift.1 });
        let gm = build_graph(&moved, 2, 0.9).unwrap();
        let sm = admm_solve(&moved, &gm, &cfg).unwrap();
        for i in 0..6 {
            prop_assert!((sm.mu[[i, 0]] - base.mu[[i, 0]] - shift.0).abs() < 1e-8);
            prop_assert!((sm.mu[[i, 1]] - base.mu[[i, 1]] - shift.1).abs() < 1e-8);
        }
        prop_assert_eq!(extract_clusters(&sm.mu, 1e-6).k(), extract_clusters(&base.mu, 1e-6).k());

        let perm = [3usize, 0, 5, 1, 4, 2];
        let pv = Array2::from_shape_fn((6, 2), |(i, c)| v[[perm[i], c]]);
        // permuting nodes relabels the graph but leaves pairwise weights intact
        let gp = build_graph(&pv, 2, 0.9).unwrap();
        let same_graph = (0..6).all(|i| (0..6).all(|j| i == j || gp.weight(i, j) == g.weight(perm[i], perm[j])));
        if same_graph {
            let sp = admm_solve(&pv, &gp, &cfg).unwrap();
            for i in 0..6 {
                for c in 0..2 {
                    prop_assert!((sp.mu[[i, c]] - base.mu[[perm[i], c]]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn feasibility_and_mean_preservation(
        pts in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 3..12),
        gamma in 0.0f64..5.0,
    ) {
        let m = pts.len();
        let v = Array2::from_shape_fn((m, 2), |(i, c)| if c == 0 { pts[i].0 } else { pts[i].1 });
        let g = build_graph(&v, 1, 0.9).unwrap();
        let s = admm_solve(&v, &g, &CmConfig::new(gamma)).unwrap();
        prop_assert!(s.converged);
        prop_assert!(s.max_constraint_violation(&g) <= 1e-6);
        // fidelity term is the only non-translation-invariant piece, so the mean is kept
        for c in 0..2 {
            let a: f64 = s.mu.column(c).sum() / m as f64;
            let b: f64 = v.column(c).sum() / m as f64;
            prop_assert!((a - b).abs() < 1e-6);
        }
        let at_mu = cm_objective(&v, &g, gamma, &s.mu);
        let at_v = cm_objective(&v, &g, gamma, &v);
        prop_assert!(at_mu <= at_v + 1e-12);
        if gamma > 1e-3 {
            prop_assert!(at_mu < at_v);
        }
        let k = extract_clusters(&s.mu, 1e-6).k();
        prop_assert!((1..=m).contains(&k));
    }
}

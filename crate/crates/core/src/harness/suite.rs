//! The desk-scale acceptance suite. Each criterion runs a fixed, seeded
//! experiment and compares it with a pinned threshold. Wall-clock time is
//! reported next to the budget but never decides the outcome.

use std::fmt;
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::oracle;
use crate::cm::{admm_solve, cm_objective, gamma_path, AdmmState, CmConfig};
use crate::dataset::{generate_synthetic, iris, Dataset, GeneratorSpec, Partition};
use crate::error::Result;
use crate::graph::build_graph;
use crate::kmeans::{assign, kmeans_cost, kmeanspp_seed, lloyd, pairwise_cost, update_centroids, D2Sampler, LloydConfig};
use crate::metrics::{ari, f_star, nmi};
use crate::mps::{epsilon_from_rho, mps, theorem3_experiment, BoundStatus, MpsConfig, StopReason};
use crate::pipeline::{run, AlgorithmSpec, MckmParams, Params};
use crate::seed::{derive, trial_seed};

/// Base seed for every suite experiment.
pub const SUITE_SEED: u64 = 20_220_405;
pub const TRIALS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub elapsed_seconds: f64,
    pub budget_seconds: f64,
}

impl fmt::Display for CriterionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {:>2}. {:<28} {} ({:.2}s, budget {}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.elapsed_seconds,
            self.budget_seconds
        )
    }
}

/// `(id, name, budget in seconds)` for every criterion.
pub const CRITERIA: [(u8, &str, f64); 11] = [
    (1, "cost identity", 1.0),
    (2, "lloyd monotone + fixed point", 5.0),
    (3, "k-means++ sampling law", 5.0),
    (4, "admm correctness", 30.0),
    (5, "mps properties", 5.0),
    (6, "approximation bound", 30.0),
    (7, "grid proxy k*=15", 120.0),
    (8, "iris reproduction", 60.0),
    (9, "cost-gap dominance", 180.0),
    (10, "metric oracles", 5.0),
    (11, "scale s* << n", 300.0),
];

/// Runs criterion `id` (1..=11).
pub fn criterion(id: u8) -> Result<CriterionReport> {
    let (_, name, budget) = CRITERIA.iter().copied().find(|c| c.0 == id).ok_or_else(|| crate::error::invalid(format!("no criterion {id}")))?;
    let start = Instant::now();
    let (passed, detail) = match id {
        1 => cost_identity()?,
        2 => lloyd_monotone()?,
        3 => kmeanspp_law()?,
        4 => admm_correctness()?,
        5 => mps_properties()?,
        6 => approximation_bound()?,
        7 => grid_proxy()?,
        8 => iris_reproduction()?,
        9 => cost_gap_dominance()?,
        10 => metric_oracles()?,
        _ => scale()?,
    };
    Ok(CriterionReport { id, name: name.to_string(), passed, detail, elapsed_seconds: start.elapsed().as_secs_f64(), budget_seconds: budget })
}

pub fn all() -> Result<Vec<CriterionReport>> {
    CRITERIA.iter().map(|c| criterion(c.0)).collect()
}

type Outcome = Result<(bool, String)>;

fn random_dataset(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Result<Dataset<f64>> {
    let pts = Array2::from_shape_fn((n, p), |_| rng.random_range(-3.0..3.0));
    Dataset::new(pts, None, "random")
}

fn cost_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SUITE_SEED);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(5..=100);
        let p = rng.random_range(1..=5);
        let k = rng.random_range(1..=5);
        let ds = random_dataset(&mut rng, n, p)?;
        // every cluster non-empty: the first k samples seed the ids
        let labels: Vec<usize> = (0..n).map(|j| if j < k { j } else { rng.random_range(0..k) }).collect();
        let part = Partition::new(labels, k)?;
        let centers = update_centroids(&ds, &part)?;
        let a = kmeans_cost(&ds, &centers, &part)?;
        let b = pairwise_cost(&ds, &part)?;
        worst = worst.max((a - b).abs() / a.abs().max(f64::MIN_POSITIVE));
    }
    Ok((worst <= 1e-9, format!("max relative difference {worst:.2e} over 50 instances (tol 1e-9)")))
}

fn lloyd_monotone() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SUITE_SEED + 2);
    let (mut increases, mut not_fixed) = (0, 0);
    let strict = LloydConfig { tol: 1e-15, max_iter: 1000 };
    for run in 0..100 {
        let n = rng.random_range(10..=120);
        let p = rng.random_range(1..=4);
        let k = rng.random_range(2..=6).min(n);
        let ds = random_dataset(&mut rng, n, p)?;
        let fit = lloyd(&ds, &kmeanspp_seed(&ds, k, run)?, strict)?;
        increases += fit.cost_trace.windows(2).filter(|w| w[1] > w[0]).count();
        let centers = update_centroids(&ds, &fit.partition)?;
        if assign(&ds, &centers)? == fit.partition {
            let again = lloyd(&ds, &centers, strict)?;
            if again.iterations != 1 || again.partition != fit.partition || again.prototypes != centers {
                not_fixed += 1;
            }
        } else {
            not_fixed += 1;
        }
    }
    Ok((increases == 0 && not_fixed == 0, format!("{increases} cost increases, {not_fixed} non-fixed restarts over 100 runs")))
}

fn kmeanspp_law() -> Outcome {
    let ds = Dataset::from_rows(&[vec![0.0], vec![1.0], vec![3.0]], None, "three")?;
    let sampler = D2Sampler::new(&ds, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(SUITE_SEED + 3);
    let draws = 100_000;
    let mut counts = [0usize; 3];
    for _ in 0..draws {
        counts[sampler.sample(&mut rng).expect("positive mass")] += 1;
    }
    let freq: Vec<f64> = counts.iter().map(|&c| c as f64 / draws as f64).collect();
    let expected = [0.0, 0.1, 0.9];
    let dev = freq.iter().zip(expected).map(|(f, e)| (f - e).abs()).fold(0.0, f64::max);
    Ok((dev <= 0.01, format!("frequencies ({:.4}, {:.4}, {:.4}), max deviation {dev:.4} (tol 0.01)", freq[0], freq[1], freq[2])))
}

fn random_nodes(rng: &mut ChaCha8Rng, m: usize, p: usize) -> Array2<f64> {
    Array2::from_shape_fn((m, p), |_| rng.random_range(0.0..1.0))
}

fn admm_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SUITE_SEED + 4);
    let mut residual_ok = true;
    let mut check = |s: &AdmmState<f64>| {
        residual_ok &= !s.converged || (s.primal_residual <= 1e-6 && s.dual_residual <= 1e-6);
        s.converged
    };
    // (a) γ = 0
    let mut a_err: f64 = 0.0;
    let mut all_converged = true;
    for _ in 0..10 {
        let v = random_nodes(&mut rng, 8, 3);
        let g = build_graph(&v, 2, 0.9)?;
        let s = admm_solve(&v, &g, &CmConfig::new(0.0))?;
        all_converged &= check(&s);
        a_err = a_err.max((&s.mu - &v).iter().fold(0.0, |m, x| m.max(x.abs())));
    }
    // (b) full fusion on a complete graph
    let mut b_err: f64 = 0.0;
    for _ in 0..10 {
        let v = random_nodes(&mut rng, 6, 2);
        let g = build_graph(&v, 5, 0.9)?;
        let s = admm_solve(&v, &g, &CmConfig { tol: 1e-9, ..CmConfig::new(100.0) })?;
        all_converged &= check(&s);
        let mean = v.mean_axis(ndarray::Axis(0)).expect("rows");
        for row in s.mu.rows() {
            b_err = b_err.max((&row - &mean).iter().fold(0.0, |m, x| m.max(x.abs())));
        }
    }
    // (c) objective against subgradient descent on 5-node instances
    let mut c_err: f64 = 0.0;
    for _ in 0..10 {
        let v = random_nodes(&mut rng, 5, 2);
        let q = rng.random_range(1..=4);
        let gamma = rng.random_range(0.05..1.0);
        let g = build_graph(&v, q, 0.9)?;
        let s = admm_solve(&v, &g, &CmConfig { tol: 1e-9, max_iter: 100_000, ..CmConfig::new(gamma) })?;
        all_converged &= check(&s);
        let rows: Vec<Vec<f64>> = v.rows().into_iter().map(|r| r.to_vec()).collect();
        let edges: Vec<(usize, usize, f64)> = g.edges().iter().map(|e| (e.l1, e.l2, e.weight)).collect();
        let reference = oracle::subgradient_fusion(&rows, &edges, gamma, 4_000_000);
        c_err = c_err.max((cm_objective(&v, &g, gamma, &s.mu) - reference).abs());
    }
    let passed = a_err <= 1e-8 && b_err <= 1e-6 && c_err <= 1e-5 && residual_ok && all_converged;
    Ok((passed, format!("(a) {a_err:.1e} (b) {b_err:.1e} (c) {c_err:.1e} (d) residuals {}", if residual_ok && all_converged { "ok" } else { "FAILED" })))
}

fn mps_properties() -> Outcome {
    let eps_ok = (epsilon_from_rho(150, 4, 0.8) - 0.051031).abs() <= 1e-6;
    let sets: Vec<Dataset<f64>> = vec![
        iris::<f64>()?.normalize()?,
        generate_synthetic(&GeneratorSpec::TwoMoons { n: 300, noise: 0.05 }, 1)?,
        generate_synthetic(&GeneratorSpec::GaussianGrid { rows: 3, cols: 5, per_cluster: 50, sigma: 0.01 }, 2)?,
    ];
    let (mut runs, mut bad_trace, mut bad_stop) = (0, 0, 0);
    for ds in &sets {
        for t in 0..TRIALS {
            for rho in [0.5, 1.0, 2.0] {
                let cfg = MpsConfig::new(trial_seed(SUITE_SEED, t)).with_rho(rho);
                let r = mps(ds, &cfg)?;
                runs += 1;
                if r.reconstruction_trace.windows(2).any(|w| w[1].1 > w[0].1) {
                    bad_trace += 1;
                }
                let rates = r.relative_rates();
                let (head, last) = match rates.split_last() {
                    Some((last, head)) => (head, Some(*last)),
                    None => (&rates[..], None),
                };
                let head_ok = head.iter().all(|&x| x > r.epsilon);
                let last_ok = match r.stop_reason {
                    StopReason::Threshold => last.is_some_and(|x| x <= r.epsilon),
                    StopReason::ZeroResidual => r.reconstruction_trace.last().is_some_and(|x| x.1 == 0.0),
                    StopReason::Exhausted => r.sampled.len() == ds.n(),
                };
                let dropped = MpsConfig { drop_last: true, ..cfg };
                let d = mps(ds, &dropped)?;
                let drop_ok = r.stop_reason != StopReason::Threshold || d.sampled.len() + 1 == r.sampled.len();
                if !(head_ok && last_ok && drop_ok && r.s_star <= r.sampled.len() && r.s_star >= 1) {
                    bad_stop += 1;
                }
            }
        }
    }
    let passed = eps_ok && bad_trace == 0 && bad_stop == 0;
    Ok((passed, format!("eps(150,4,0.8)={:.6}; {bad_trace} increasing traces, {bad_stop} stop-rule violations over {runs} runs", epsilon_from_rho(150, 4, 0.8))))
}

fn approximation_bound() -> Outcome {
    let ds = generate_synthetic::<f64>(&GeneratorSpec::GaussianGrid { rows: 2, cols: 2, per_cluster: 50, sigma: 0.02 }, SUITE_SEED)?;
    let seeds: Vec<u64> = (0..TRIALS).map(|t| trial_seed(SUITE_SEED, t)).collect();
    let report = theorem3_experiment(&ds, &MpsConfig::new(0), &seeds)?;
    Ok((
        report.status == BoundStatus::Holds,
        format!("mean J = {:.4} vs mean bound {:.4} ({:?}, eps {:.4})", report.mean_j_x, report.mean_rhs, report.status, report.epsilon),
    ))
}

pub const GRID_GAMMAS: [f64; 8] = [0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0];

fn grid_spec() -> GeneratorSpec {
    GeneratorSpec::GaussianGrid { rows: 3, cols: 5, per_cluster: 50, sigma: 0.01 }
}

fn grid_proxy() -> Outcome {
    let (mut hits, mut at_default_gamma) = (0, 0);
    for t in 0..TRIALS {
        let seed = trial_seed(SUITE_SEED, t);
        let ds = generate_synthetic::<f64>(&grid_spec(), seed)?;
        let params = MckmParams::new(1.0, 0.0, 1);
        let sampled = mps(&ds, &params.mps_config(derive(seed, &[0])))?;
        let nodes = sampled.prototypes.centers();
        let graph = build_graph(nodes, 1, params.merge.kappa)?;
        let truth = ds.truth().expect("generated data is labelled");
        let path = gamma_path(nodes, &graph, &params.merge.cm_config(), &GRID_GAMMAS)?;
        let mut hit = false;
        for pt in &path {
            if pt.k_star != 15 {
                continue;
            }
            let labels: Vec<usize> = sampled.partition.assignments().iter().map(|&a| pt.partition.assignments()[a]).collect();
            let score = ari(&truth, &Partition::from_labels(&labels))?;
            if score >= 0.90 {
                hit = true;
                if pt.gamma == 0.1 {
                    at_default_gamma += 1;
                }
            }
        }
        hits += usize::from(hit);
    }
    Ok((hits >= 15, format!("{hits}/20 seeds reach k*=15 with ARI>=0.90 on the gamma sweep (need 15); {at_default_gamma}/20 at gamma=0.1")))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 0 {
        (v[m - 1] + v[m]) / 2.0
    } else {
        v[m]
    }
}

fn iris_reproduction() -> Outcome {
    let ds = iris::<f64>()?.normalize()?;
    let (mut ks, mut fs, mut aris) = (vec![], vec![], vec![]);
    for t in 0..TRIALS {
        let spec = AlgorithmSpec::new(Params::Mckm(MckmParams::new(0.8, 0.5, 2)), trial_seed(SUITE_SEED, t));
        let m = run(&ds, &spec)?.report;
        ks.push(m.k_star as f64);
        fs.push(m.metrics.f_star.expect("labelled"));
        aris.push(m.metrics.ari.expect("labelled"));
    }
    let (k, f, a) = (median(ks), median(fs), median(aris));
    let j_truth = pairwise_cost(&ds, &ds.truth().expect("labelled"))?;
    Ok((
        k == 3.0 && f >= 0.85 && a >= 0.65,
        format!("median k*={k} F*={f:.4} ARI={a:.4} (need 3, >=0.85, >=0.65); J* of labels {j_truth:.4} (half: {:.4})", j_truth / 2.0),
    ))
}

fn cost_gap_dominance() -> Outcome {
    let (mut mckm_le_smkm, mut both_beat) = (0, 0);
    for t in 0..TRIALS {
        let seed = trial_seed(SUITE_SEED, t);
        let ds = generate_synthetic::<f64>(&grid_spec(), seed)?;
        let gap = |p: Params| -> Result<f64> { Ok(run(&ds, &AlgorithmSpec::new(p, seed))?.report.metrics.cost_gap.expect("labelled")) };
        let mc = gap(Params::Mckm(MckmParams::new(1.0, 0.1, 1)))?;
        let sm = gap(Params::Smkm { k: 15, max_cycles: 50 })?;
        let km = gap(Params::Kmeans { k: 15 })?;
        mckm_le_smkm += usize::from(mc <= sm);
        both_beat += usize::from(mc < km && sm < km);
    }
    Ok((
        mckm_le_smkm >= 14 && both_beat >= 18,
        format!("mckm <= smkm in {mckm_le_smkm}/20 (need 14); both beat k-means in {both_beat}/20 (need 18)"),
    ))
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SUITE_SEED + 10);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let ka = rng.random_range(1..=5);
        let kb = rng.random_range(1..=5);
        let a: Vec<usize> = (0..12).map(|_| rng.random_range(1..=ka)).collect();
        let b: Vec<usize> = (0..12).map(|_| rng.random_range(1..=kb)).collect();
        let (pa, pb) = (Partition::from_labels(&a), Partition::from_labels(&b));
        worst = worst
            .max((ari(&pa, &pb)? - oracle::ari_by_pairs(&a, &b)).abs())
            .max((nmi(&pa, &pb)? - oracle::nmi_by_entropy(&a, &b)).abs())
            .max((f_star(&pa, &pb)? - oracle::f_star_by_sets(&a, &b)).abs());
    }
    let mut identical_ok = true;
    for _ in 0..20 {
        let k = rng.random_range(1..=5);
        let a: Vec<usize> = (0..12).map(|_| rng.random_range(1..=k)).collect();
        let relabeled: Vec<usize> = a.iter().map(|&x| 10 - x).collect();
        let (pa, pb) = (Partition::from_labels(&a), Partition::from_labels(&relabeled));
        identical_ok &= ari(&pa, &pb)? == 1.0 && nmi(&pa, &pb)? == 1.0 && f_star(&pa, &pb)? == 1.0;
    }
    Ok((worst <= 1e-12 && identical_ok, format!("max deviation {worst:.1e} over 100 pairs (tol 1e-12); identical partitions score 1: {identical_ok}")))
}

fn scale() -> Outcome {
    let ds = generate_synthetic::<f64>(&GeneratorSpec::GaussianGrid { rows: 1, cols: 2, per_cluster: 2500, sigma: 0.1 }, SUITE_SEED)?;
    let t0 = Instant::now();
    let m = run(&ds, &AlgorithmSpec::new(Params::Mckm(MckmParams::new(1.0, 0.5, 2)), SUITE_SEED))?.report;
    let mckm_time = t0.elapsed().as_secs_f64();
    let s_star = m.details["s_star"].as_u64().unwrap_or(u64::MAX) as usize;
    let t1 = Instant::now();
    let c = run(&ds, &AlgorithmSpec::new(Params::Cc(crate::pipeline::MergeParams::new(0.5, 5)), SUITE_SEED))?.report;
    let cc_time = t1.elapsed().as_secs_f64();
    Ok((
        s_star <= ds.n() / 20,
        format!(
            "s*={s_star} (limit {}), mckm k*={} in {mckm_time:.2}s; cc k*={} in {cc_time:.2}s ({}; informational)",
            ds.n() / 20,
            m.k_star,
            c.k_star,
            if mckm_time < cc_time { "mckm faster" } else { "cc faster" }
        ),
    ))
}

//! Multi-prototype sampling: grow a prototype set by D² sampling until one more
//! prototype no longer improves the reconstruction residual by a relative
//! margin ε, then refine the set with Lloyd iterations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Partition};
use crate::error::{invalid, Result};
use crate::kmeans::{kmeans_cost, kmeanspp_seed_with, lloyd, nearest, update_centroids, D2Sampler, LloydConfig, PrototypeSet};
use crate::scalar::{sq_dist, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpsConfig {
    /// Scale in ε = 1 / (ρ √(n p)); larger ρ keeps more prototypes.
    pub rho: f64,
    /// Explicit ε in (0, 1), overriding `rho`.
    pub epsilon_override: Option<f64>,
    pub seed: u64,
    /// Discard the prototype whose addition triggered the stop.
    pub drop_last: bool,
    pub lloyd: LloydConfig,
}

impl MpsConfig {
    pub fn new(seed: u64) -> Self {
        Self { rho: 1.0, epsilon_override: None, seed, drop_last: false, lloyd: LloydConfig::default() }
    }

    pub fn with_rho(mut self, rho: f64) -> Self {
        self.rho = rho;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(invalid(format!("rho must be positive, got {}", self.rho)));
        }
        if let Some(e) = self.epsilon_override {
            if !(e > 0.0 && e < 1.0) {
                return Err(invalid(format!("epsilon must lie in (0, 1), got {e}")));
            }
        }
        Ok(())
    }

    pub fn epsilon(&self, n: usize, p: usize) -> f64 {
        self.epsilon_override.unwrap_or_else(|| epsilon_from_rho(n, p, self.rho))
    }
}

/// ε = 1 / (ρ √(n·p)).
pub fn epsilon_from_rho(n: usize, p: usize, rho: f64) -> f64 {
    1.0 / (rho * ((n * p) as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    /// Relative reconstruction gain fell to ε or below.
    Threshold,
    /// The residual reached zero.
    ZeroResidual,
    /// Every sample became a prototype.
    Exhausted,
}

#[derive(Debug, Clone)]
pub struct MpsResult<T> {
    /// Refined prototypes, one per non-empty cluster.
    pub prototypes: PrototypeSet<T>,
    /// Sample-to-prototype assignment after refinement.
    pub partition: Partition,
    pub s_star: usize,
    /// `(s, R(s))` after each addition, starting at `s = 1`.
    pub reconstruction_trace: Vec<(usize, T)>,
    /// Sample indices picked by the sampling loop, before refinement.
    pub sampled: Vec<usize>,
    pub epsilon: f64,
    pub stop_reason: StopReason,
    pub lloyd_iterations: usize,
}

impl<T: Scalar> MpsResult<T> {
    /// Relative reconstruction rates (R(s−1) − R(s)) / R(s−1) for s = 2, 3, ...
    pub fn relative_rates(&self) -> Vec<f64> {
        relative_rates(&self.reconstruction_trace)
    }
}

pub fn relative_rates<T: Scalar>(trace: &[(usize, T)]) -> Vec<f64> {
    trace
        .windows(2)
        .map(|w| {
            let (prev, cur) = (w[0].1.as_f64(), w[1].1.as_f64());
            (prev - cur) / prev
        })
        .collect()
}

/// R = Σ_j ‖x_j − x̂_j‖², where x̂_j is the nearest prototype.
pub fn reconstruction<T: Scalar>(ds: &Dataset<T>, protos: &PrototypeSet<T>) -> Result<T> {
    if ds.p() != protos.p() {
        return Err(invalid("dimension mismatch"));
    }
    Ok((0..ds.n()).map(|j| nearest(ds.row(j), protos).1).sum())
}

pub fn mps<T: Scalar>(ds: &Dataset<T>, cfg: &MpsConfig) -> Result<MpsResult<T>> {
    cfg.validate()?;
    let n = ds.n();
    if n < 2 {
        return Err(invalid("multi-prototype sampling needs at least two samples"));
    }
    let epsilon = cfg.epsilon(n, ds.p());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut sampler = D2Sampler::new(ds, rng.random_range(0..n));
    let mut residual = sampler.total();
    let mut trace = vec![(1, residual)];
    let mut stop = StopReason::Exhausted;
    if residual == T::zero() {
        stop = StopReason::ZeroResidual;
    }
    while stop == StopReason::Exhausted && sampler.chosen().len() < n {
        let Some(next) = sampler.sample(&mut rng) else {
            stop = StopReason::ZeroResidual;
            break;
        };
        sampler.add(next);
        let current = sampler.total();
        trace.push((sampler.chosen().len(), current));
        if current == T::zero() {
            stop = StopReason::ZeroResidual;
        } else if ((residual - current) / residual).as_f64() <= epsilon {
            stop = StopReason::Threshold;
        } else {
            residual = current;
        }
    }

    let mut sampled = sampler.chosen().to_vec();
    if cfg.drop_last && stop == StopReason::Threshold && sampled.len() > 1 {
        sampled.pop();
    }
    let init = PrototypeSet::from_indices(ds, &sampled)?;
    let refined = lloyd(ds, &init, cfg.lloyd)?;
    let (partition, map) = refined.partition.compact();
    let (prototypes, partition) = if partition.k() < refined.partition.k() {
        let keep: Vec<usize> = (0..map.len()).filter(|&i| map[i].is_some()).collect();
        (refined.prototypes.select(&keep)?, partition)
    } else {
        (refined.prototypes, partition)
    };
    Ok(MpsResult {
        s_star: prototypes.k(),
        prototypes,
        partition,
        reconstruction_trace: trace,
        sampled,
        epsilon,
        stop_reason: stop,
        lloyd_iterations: refined.iterations,
    })
}

/// How the unobservable optimum in the approximation bound was stood in for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimumProxy {
    /// Ground-truth partition and its centroids.
    GroundTruth,
    /// Best of this many K-Means++ + Lloyd restarts at k = s*.
    BestOfRestarts(usize),
}

/// One MPS run measured against the approximation bound
/// J ≤ 2(1−ε)(3·J_opt + 2·n_a·Δ) with Δ = ε·J.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundTrial {
    pub j_x: f64,
    pub j_opt_proxy: f64,
    pub n_a: usize,
    pub delta: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundStatus {
    Holds,
    Violated,
    /// ε ≥ 1 makes the right-hand side non-positive; nothing to check.
    Vacuous,
}

/// Empirical check of the expectation bound over several runs. This is a
/// measurement with a proxy optimum, not a proof.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub epsilon: f64,
    pub proxy: OptimumProxy,
    pub trials: Vec<BoundTrial>,
    pub mean_j_x: f64,
    pub mean_rhs: f64,
    pub status: BoundStatus,
}

pub const PROXY_RESTARTS: usize = 50;

/// Reference prototypes `v*` and the cost `J_opt` standing in for the optimum.
pub fn optimum_proxy<T: Scalar>(ds: &Dataset<T>, k: usize, seed: u64) -> Result<(PrototypeSet<T>, Partition, f64, OptimumProxy)> {
    if let Some(truth) = ds.truth() {
        let centers = update_centroids(ds, &truth)?;
        let cost = kmeans_cost(ds, &centers, &truth)?.as_f64();
        return Ok((centers, truth, cost, OptimumProxy::GroundTruth));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(PrototypeSet<T>, Partition, f64)> = None;
    for _ in 0..PROXY_RESTARTS {
        let init = kmeanspp_seed_with(ds, k, &mut rng)?;
        let run = lloyd(ds, &init, LloydConfig::default())?;
        let cost = run.cost.as_f64();
        if best.as_ref().is_none_or(|b| cost < b.2) {
            best = Some((run.prototypes, run.partition, cost));
        }
    }
    let (v, part, cost) = best.expect("at least one restart");
    Ok((v, part, cost, OptimumProxy::BestOfRestarts(PROXY_RESTARTS)))
}

/// Measures one MPS result against reference prototypes `v_opt` (with the
/// assignment `opt_part` defining `v*(x)`) and reference cost `j_opt`.
pub fn check_theorem3_bound<T: Scalar>(
    ds: &Dataset<T>,
    result: &MpsResult<T>,
    epsilon: f64,
    v_opt: &PrototypeSet<T>,
    opt_part: &Partition,
    j_opt: f64,
) -> Result<BoundTrial> {
    if opt_part.len() != ds.n() {
        return Err(invalid("reference partition does not cover the dataset"));
    }
    let mut j_x = 0.0;
    let mut n_a = 0;
    for j in 0..ds.n() {
        let x = ds.row(j);
        let (i, d2) = nearest(x, &result.prototypes);
        j_x += d2.as_f64();
        let v_star = v_opt.center(opt_part.assignments()[j]);
        if sq_dist(result.prototypes.center(i), v_star) >= sq_dist(x, v_star) {
            n_a += 1;
        }
    }
    let delta = epsilon * j_x;
    let rhs = 2.0 * (1.0 - epsilon) * (3.0 * j_opt + 2.0 * n_a as f64 * delta);
    Ok(BoundTrial { j_x, j_opt_proxy: j_opt, n_a, delta, rhs })
}

/// Runs MPS for every seed and compares the mean cost with the mean bound.
pub fn theorem3_experiment<T: Scalar>(ds: &Dataset<T>, cfg: &MpsConfig, seeds: &[u64]) -> Result<BoundReport> {
    let epsilon = cfg.epsilon(ds.n(), ds.p());
    let mut trials = Vec::with_capacity(seeds.len());
    let mut proxy_kind = OptimumProxy::GroundTruth;
    for &seed in seeds {
        let run = mps(ds, &MpsConfig { seed, ..*cfg })?;
        let (v_opt, opt_part, j_opt, kind) = optimum_proxy(ds, run.s_star, seed)?;
        proxy_kind = kind;
        trials.push(check_theorem3_bound(ds, &run, epsilon, &v_opt, &opt_part, j_opt)?);
    }
    Ok(summarize_bound(epsilon, proxy_kind, trials))
}

pub fn summarize_bound(epsilon: f64, proxy: OptimumProxy, trials: Vec<BoundTrial>) -> BoundReport {
    let m = trials.len().max(1) as f64;
    let mean_j_x = trials.iter().map(|t| t.j_x).sum::<f64>() / m;
    let mean_rhs = trials.iter().map(|t| t.rhs).sum::<f64>() / m;
    let status = if epsilon >= 1.0 || !mean_rhs.is_finite() {
        BoundStatus::Vacuous
    } else if mean_j_x <= mean_rhs {
        BoundStatus::Holds
    } else {
        BoundStatus::Violated
    };
    BoundReport { epsilon, proxy, trials, mean_j_x, mean_rhs, status }
}

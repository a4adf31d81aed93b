//! Uniform algorithm interface: typed specs, MCKM composition and run reports.
//!
//! Every algorithm draws its initial randomness from stream 0 of the run seed
//! ([`crate::seed::derive`]`(seed, &[0])`). K-Means++, SMKM and MPS therefore start
//! from the same first sample for a given seed, and trials in a sweep are paired.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cm::{convex_merge, AdmmSummary, CmConfig, MergeResult};
use crate::dataset::{Dataset, Partition};
use crate::error::{invalid, Error, Result};
use crate::graph::build_graph;
use crate::kmeans::{kmeanspp_seed, lloyd, pairwise_cost, random_seed_with, LloydConfig};
use crate::metrics::{cost_gap, scores};
use crate::mps::{mps, MpsConfig, MpsResult};
use crate::scalar::Scalar;
use crate::seed::derive;
use crate::smkm::smkm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Kmeans,
    Kmeanspp,
    Smkm,
    Cc,
    Mckm,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [Algorithm::Kmeans, Algorithm::Kmeanspp, Algorithm::Smkm, Algorithm::Cc, Algorithm::Mckm];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Kmeans => "kmeans",
            Algorithm::Kmeanspp => "kmeanspp",
            Algorithm::Smkm => "smkm",
            Algorithm::Cc => "cc",
            Algorithm::Mckm => "mckm",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown algorithm '{s}' (expected kmeans, kmeanspp, smkm, cc or mckm)")))
    }
}

/// Graph and solver settings shared by `cc` and `mckm`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeParams {
    pub gamma: f64,
    pub q: usize,
    pub kappa: f64,
    pub nu: f64,
    pub eta: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl MergeParams {
    pub fn new(gamma: f64, q: usize) -> Self {
        Self { gamma, q, kappa: 0.9, nu: 1.0, eta: 1e-6, tol: 1e-6, max_iter: 10_000 }
    }

    pub fn cm_config(&self) -> CmConfig {
        CmConfig { gamma: self.gamma, nu: self.nu, eta_merge: self.eta, tol: self.tol, max_iter: self.max_iter }
    }

    fn validate(&self) -> Result<()> {
        if self.q == 0 {
            return Err(invalid("q must be at least 1"));
        }
        if !(self.kappa > 0.0) {
            return Err(invalid(format!("kappa must be positive, got {}", self.kappa)));
        }
        self.cm_config().validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MckmParams {
    pub rho: f64,
    pub epsilon: Option<f64>,
    pub drop_last: bool,
    #[serde(flatten)]
    pub merge: MergeParams,
}

impl MckmParams {
    pub fn new(rho: f64, gamma: f64, q: usize) -> Self {
        Self { rho, epsilon: None, drop_last: false, merge: MergeParams::new(gamma, q) }
    }

    pub fn mps_config(&self, seed: u64) -> MpsConfig {
        MpsConfig { rho: self.rho, epsilon_override: self.epsilon, seed, drop_last: self.drop_last, lloyd: LloydConfig::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum Params {
    Kmeans { k: usize },
    Kmeanspp { k: usize },
    Smkm { k: usize, max_cycles: usize },
    Cc(MergeParams),
    Mckm(MckmParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSpec {
    pub params: Params,
    pub seed: u64,
}

pub const DEFAULT_MAX_CYCLES: usize = 50;
pub const DEFAULT_Q_MCKM: usize = 2;
pub const DEFAULT_Q_CC: usize = 5;

fn get<V: FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<V>> {
    map.get(key)
        .map(|s| s.parse::<V>().map_err(|_| Error::Usage(format!("invalid value '{s}' for {key}"))))
        .transpose()
}

fn require<V: FromStr>(map: &BTreeMap<String, String>, key: &str, algo: Algorithm) -> Result<V> {
    get(map, key)?.ok_or_else(|| Error::Usage(format!("{algo} requires {key}")))
}

impl AlgorithmSpec {
    pub fn new(params: Params, seed: u64) -> Self {
        Self { params, seed }
    }

    pub fn algorithm(&self) -> Algorithm {
        match self.params {
            Params::Kmeans { .. } => Algorithm::Kmeans,
            Params::Kmeanspp { .. } => Algorithm::Kmeanspp,
            Params::Smkm { .. } => Algorithm::Smkm,
            Params::Cc(_) => Algorithm::Cc,
            Params::Mckm(_) => Algorithm::Mckm,
        }
    }

    /// Builds a spec from string parameters, filling defaults. Unknown keys are
    /// rejected so that misspelt flags do not silently fall back to defaults.
    pub fn from_map(algo: Algorithm, map: &BTreeMap<String, String>, seed: u64) -> Result<Self> {
        let allowed: &[&str] = match algo {
            Algorithm::Kmeans | Algorithm::Kmeanspp => &["k"],
            Algorithm::Smkm => &["k", "max_cycles"],
            Algorithm::Cc => &["gamma", "q", "kappa", "nu", "eta", "tol", "max_iter"],
            Algorithm::Mckm => &["gamma", "q", "kappa", "nu", "eta", "tol", "max_iter", "rho", "epsilon", "drop_last"],
        };
        if let Some(bad) = map.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::Usage(format!("{algo} does not take parameter {bad}")));
        }
        let merge = |default_q: usize| -> Result<MergeParams> {
            let mut m = MergeParams::new(require(map, "gamma", algo)?, get(map, "q")?.unwrap_or(default_q));
            m.kappa = get(map, "kappa")?.unwrap_or(m.kappa);
            m.nu = get(map, "nu")?.unwrap_or(m.nu);
            m.eta = get(map, "eta")?.unwrap_or(m.eta);
            m.tol = get(map, "tol")?.unwrap_or(m.tol);
            m.max_iter = get(map, "max_iter")?.unwrap_or(m.max_iter);
            Ok(m)
        };
        let params = match algo {
            Algorithm::Kmeans => Params::Kmeans { k: require(map, "k", algo)? },
            Algorithm::Kmeanspp => Params::Kmeanspp { k: require(map, "k", algo)? },
            Algorithm::Smkm => Params::Smkm { k: require(map, "k", algo)?, max_cycles: get(map, "max_cycles")?.unwrap_or(DEFAULT_MAX_CYCLES) },
            Algorithm::Cc => Params::Cc(merge(DEFAULT_Q_CC)?),
            Algorithm::Mckm => Params::Mckm(MckmParams {
                rho: get(map, "rho")?.unwrap_or(1.0),
                epsilon: get(map, "epsilon")?,
                drop_last: get(map, "drop_last")?.unwrap_or(false),
                merge: merge(DEFAULT_Q_MCKM)?,
            }),
        };
        let spec = Self { params, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match &self.params {
            Params::Kmeans { k } | Params::Kmeanspp { k } if *k == 0 => Err(invalid("k must be at least 1")),
            Params::Smkm { k, .. } if *k < 2 => Err(invalid("smkm needs k >= 2")),
            Params::Cc(m) => m.validate(),
            Params::Mckm(p) => {
                p.merge.validate()?;
                p.mps_config(self.seed).validate()
            }
            _ => Ok(()),
        }
    }

    /// Parameters as a flat JSON object, without the algorithm name.
    pub fn params_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self.params).expect("params serialize");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("name");
        }
        v
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub mps_seconds: f64,
    pub graph_seconds: f64,
    pub merge_seconds: f64,
}

impl StageTimings {
    pub fn total(&self) -> f64 {
        self.mps_seconds + self.graph_seconds + self.merge_seconds
    }
}

#[derive(Debug, Clone)]
pub struct MckmOutcome<T> {
    pub mps: MpsResult<T>,
    pub merge: MergeResult<T>,
    pub timings: StageTimings,
}

impl<T> MckmOutcome<T> {
    pub fn s_star(&self) -> usize {
        self.mps.s_star
    }

    pub fn k_star(&self) -> usize {
        self.merge.k_star
    }
}

/// MPS, prototype graph, convex merging, label propagation.
pub fn mckm<T: Scalar>(ds: &Dataset<T>, params: &MckmParams, seed: u64) -> Result<MckmOutcome<T>> {
    params.merge.validate()?;
    let t0 = Instant::now();
    let sampled = mps(ds, &params.mps_config(derive(seed, &[0])))?;
    let t1 = Instant::now();
    let centers = sampled.prototypes.centers();
    let mut timings = StageTimings { mps_seconds: (t1 - t0).as_secs_f64(), ..Default::default() };
    if centers.nrows() < 2 {
        // a single prototype leaves nothing to merge
        let merge = MergeResult {
            mu_star: centers.clone(),
            k_star: 1,
            sample_partition: Partition::new(vec![0; ds.n()], 1)?,
            prototype_partition: Partition::new(vec![0], 1)?,
            fusion_trace: None,
            admm: AdmmSummary { iterations: 0, primal_residual: 0.0, dual_residual: 0.0, converged: true },
        };
        return Ok(MckmOutcome { mps: sampled, merge, timings });
    }
    let graph = build_graph(centers, params.merge.q.min(centers.nrows() - 1), params.merge.kappa)?;
    let t2 = Instant::now();
    let merge = convex_merge(centers, &sampled.partition, &graph, &params.merge.cm_config())?;
    timings.graph_seconds = (t2 - t1).as_secs_f64();
    timings.merge_seconds = t2.elapsed().as_secs_f64();
    Ok(MckmOutcome { mps: sampled, merge, timings })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub f_star: Option<f64>,
    pub nmi: Option<f64>,
    pub ari: Option<f64>,
    /// Pairwise K-Means cost of the result.
    pub cost: f64,
    /// |cost − cost of the reference labels|.
    pub cost_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub dataset: String,
    pub algorithm: Algorithm,
    pub params: serde_json::Value,
    pub seed: u64,
    pub k_star: usize,
    pub metrics: Metrics,
    pub runtime_seconds: f64,
    pub assignments_path: Option<String>,
    /// Algorithm-specific diagnostics (s*, stage timings, solver status, ...).
    pub details: serde_json::Map<String, serde_json::Value>,
}

impl RunReport {
    /// The report with every wall-clock field zeroed, for reproducibility checks.
    pub fn without_timings(&self) -> Self {
        let mut r = self.clone();
        r.runtime_seconds = 0.0;
        r.details.remove("timings");
        r
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub partition: Partition,
}

pub fn evaluate<T: Scalar>(ds: &Dataset<T>, pred: &Partition) -> Result<Metrics> {
    let cost = pairwise_cost(ds, pred)?.as_f64();
    Ok(match ds.truth() {
        Some(truth) => {
            let s = scores(&truth, pred)?;
            let gap = cost_gap(ds, pred)?;
            Metrics { f_star: Some(s.f_star), nmi: Some(s.nmi), ari: Some(s.ari), cost, cost_gap: Some(gap.gap) }
        }
        None => Metrics { f_star: None, nmi: None, ari: None, cost, cost_gap: None },
    })
}

/// Runs `spec` on `ds` and fills a report. Deterministic given the spec seed,
/// apart from timing fields.
pub fn run<T: Scalar>(ds: &Dataset<T>, spec: &AlgorithmSpec) -> Result<RunOutput> {
    use serde_json::json;
    spec.validate()?;
    let start = Instant::now();
    let init_seed = derive(spec.seed, &[0]);
    let mut details = serde_json::Map::new();
    let partition = match spec.params {
        Params::Kmeans { k } => {
            let init = random_seed_with(ds, k, &mut ChaCha8Rng::seed_from_u64(init_seed))?;
            let fit = lloyd(ds, &init, LloydConfig::default())?;
            details.insert("iterations".into(), json!(fit.iterations));
            fit.partition
        }
        Params::Kmeanspp { k } => {
            let init = kmeanspp_seed(ds, k, init_seed)?;
            let fit = lloyd(ds, &init, LloydConfig::default())?;
            details.insert("iterations".into(), json!(fit.iterations));
            fit.partition
        }
        Params::Smkm { k, max_cycles } => {
            let out = smkm(ds, k, spec.seed, max_cycles)?;
            details.insert("accepted_cycles".into(), json!(out.step_log.len() / 2));
            out.partition
        }
        Params::Cc(m) => {
            let t0 = Instant::now();
            let graph = build_graph(ds.points(), m.q.min(ds.n().saturating_sub(1)).max(1), m.kappa)?;
            let t1 = Instant::now();
            let identity = Partition::new((0..ds.n()).collect(), ds.n())?;
            let out = convex_merge(ds.points(), &identity, &graph, &m.cm_config())?;
            let timings = StageTimings { mps_seconds: 0.0, graph_seconds: (t1 - t0).as_secs_f64(), merge_seconds: t1.elapsed().as_secs_f64() };
            details.insert("admm_nodes".into(), json!(ds.n()));
            details.insert("admm".into(), json!(out.admm));
            details.insert("timings".into(), json!(timings));
            out.sample_partition
        }
        Params::Mckm(p) => {
            let out = mckm(ds, &p, spec.seed)?;
            details.insert("s_star".into(), json!(out.s_star()));
            details.insert("admm_nodes".into(), json!(out.s_star()));
            details.insert("epsilon".into(), json!(out.mps.epsilon));
            details.insert("mps_stop".into(), json!(out.mps.stop_reason));
            details.insert("admm".into(), json!(out.merge.admm));
            details.insert("timings".into(), json!(out.timings));
            out.merge.sample_partition
        }
    };
    let partition = partition.compact().0;
    let metrics = evaluate(ds, &partition)?;
    let report = RunReport {
        dataset: ds.name().to_string(),
        algorithm: spec.algorithm(),
        params: spec.params_json(),
        seed: spec.seed,
        k_star: partition.k(),
        metrics,
        runtime_seconds: start.elapsed().as_secs_f64(),
        assignments_path: None,
        details,
    };
    Ok(RunOutput { report, partition })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, GeneratorSpec};

    fn two_clouds() -> Dataset<f64> {
        generate_synthetic(&GeneratorSpec::GaussianGrid { rows: 1, cols: 2, per_cluster: 40, sigma: 0.0 }, 3).unwrap()
    }

    fn map(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn spec_from_map() {
        let s = AlgorithmSpec::from_map(Algorithm::Mckm, &map(&[("gamma", "0.5")]), 1).unwrap();
        let Params::Mckm(p) = s.params else { panic!() };
        assert_eq!((p.rho, p.merge.q, p.merge.kappa, p.merge.eta), (1.0, 2, 0.9, 1e-6));
        let s = AlgorithmSpec::from_map(Algorithm::Cc, &map(&[("gamma", "0.5")]), 1).unwrap();
        assert!(matches!(s.params, Params::Cc(MergeParams { q: 5, .. })));
        assert!(matches!(AlgorithmSpec::from_map(Algorithm::Kmeans, &map(&[]), 1), Err(Error::Usage(_))));
        assert!(matches!(AlgorithmSpec::from_map(Algorithm::Kmeans, &map(&[("k", "2"), ("gamma", "1")]), 1), Err(Error::Usage(_))));
        assert!(AlgorithmSpec::from_map(Algorithm::Mckm, &map(&[("gamma", "-1")]), 1).is_err());
        assert!(matches!("dbscan".parse::<Algorithm>(), Err(Error::Usage(_))));
        let json = s.params_json();
        assert!(json.get("name").is_none() && json.get("gamma").is_some());
    }

    #[test]
    fn separable_runs_are_perfect() {
        let ds = two_clouds();
        for spec in [
            Params::Kmeanspp { k: 2 },
            Params::Smkm { k: 2, max_cycles: 5 },
            Params::Mckm(MckmParams::new(1.0, 0.5, 1)),
            Params::Cc(MergeParams::new(0.5, 5)),
        ] {
            let out = run(&ds, &AlgorithmSpec::new(spec, 9)).unwrap();
            assert_eq!(out.report.k_star, 2, "{spec:?}");
            assert_eq!(out.report.metrics.ari, Some(1.0), "{spec:?}");
            assert_eq!(out.report.metrics.cost_gap, Some(0.0));
        }
    }

    #[test]
    fn reports_are_deterministic() {
        let ds = two_clouds();
        let spec = AlgorithmSpec::new(Params::Mckm(MckmParams::new(1.0, 0.5, 2)), 5);
        let a = run(&ds, &spec).unwrap().report.without_timings();
        let b = run(&ds, &spec).unwrap().report.without_timings();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}

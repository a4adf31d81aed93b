//! Experiment plumbing: dataset sources, seed sweeps with mean ± std summaries,
//! γ-path traces, and the acceptance suite.

pub mod oracle;
pub mod suite;

use std::fmt::Write as _;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cm::{gamma_path, CmConfig};
use crate::dataset::{generate_synthetic, load_csv, Dataset, GeneratorSpec};
use crate::error::{invalid, Error, Result};
use crate::graph::build_graph;
use crate::mps::mps;
use crate::pipeline::{run, Algorithm, AlgorithmSpec, Params, RunReport};
use crate::scalar::Scalar;
use crate::seed::{derive, trial_seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataSource {
    File(PathBuf),
    Generator(GeneratorSpec),
}

impl DataSource {
    /// Loads the data; generators draw with `seed`.
    pub fn load<T: Scalar>(&self, normalize: bool, seed: u64) -> Result<Dataset<T>> {
        let ds = match self {
            DataSource::File(path) => {
                let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                load_csv(path)?.with_name(name)
            }
            DataSource::Generator(spec) => generate_synthetic(spec, seed)?,
        };
        if normalize {
            ds.normalize()
        } else {
            Ok(ds)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub source: DataSource,
    pub normalize: bool,
    pub algorithms: Vec<Params>,
    pub trials: usize,
    pub seed_base: u64,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        if self.algorithms.is_empty() {
            return Err(invalid("no algorithms to run"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(xs: &[f64]) -> Stat {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() > 1 { (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    Stat { mean, std }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub dataset: String,
    pub algorithm: Algorithm,
    pub params: serde_json::Value,
    pub trials: usize,
    pub seed_base: u64,
    pub k_star: Stat,
    pub f_star: Option<Stat>,
    pub nmi: Option<Stat>,
    pub ari: Option<Stat>,
    pub cost: Stat,
    pub cost_gap: Option<Stat>,
    pub runtime_seconds: Stat,
    pub runs: Vec<RunReport>,
}

impl SweepSummary {
    pub fn from_runs(seed_base: u64, runs: Vec<RunReport>) -> Result<Self> {
        let first = runs.first().ok_or_else(|| invalid("no runs to summarise"))?;
        let col = |f: &dyn Fn(&RunReport) -> f64| mean_std(&runs.iter().map(f).collect::<Vec<_>>());
        let opt = |f: &dyn Fn(&RunReport) -> Option<f64>| -> Option<Stat> {
            runs.iter().map(f).collect::<Option<Vec<_>>>().map(|v| mean_std(&v))
        };
        Ok(Self {
            dataset: first.dataset.clone(),
            algorithm: first.algorithm,
            params: first.params.clone(),
            trials: runs.len(),
            seed_base,
            k_star: col(&|r| r.k_star as f64),
            f_star: opt(&|r| r.metrics.f_star),
            nmi: opt(&|r| r.metrics.nmi),
            ari: opt(&|r| r.metrics.ari),
            cost: col(&|r| r.metrics.cost),
            cost_gap: opt(&|r| r.metrics.cost_gap),
            runtime_seconds: col(&|r| r.runtime_seconds),
            runs,
        })
    }

    /// One line in `metric mean±std` table style.
    pub fn table_row(&self) -> String {
        let mut s = format!("{:<9} k*={:.2}±{:.2}", self.algorithm.name(), self.k_star.mean, self.k_star.std);
        for (name, stat) in [("F*", self.f_star), ("NMI", self.nmi), ("ARI", self.ari), ("|J-J*|", self.cost_gap)] {
            if let Some(st) = stat {
                let _ = write!(s, "  {name}={:.4}±{:.4}", st.mean, st.std);
            }
        }
        let _ = write!(s, "  J={:.4}±{:.4}  time={:.4}s±{:.4}", self.cost.mean, self.cost.std, self.runtime_seconds.mean, self.runtime_seconds.std);
        s
    }
}

/// Runs `params` for `trials` paired trial seeds on a fixed dataset, in parallel.
pub fn sweep<T: Scalar>(ds: &Dataset<T>, params: Params, trials: usize, seed_base: u64) -> Result<SweepSummary> {
    if trials == 0 {
        return Err(invalid("trials must be at least 1"));
    }
    let runs = (0..trials)
        .into_par_iter()
        .map(|t| run(ds, &AlgorithmSpec::new(params, trial_seed(seed_base, t))).map(|o| o.report))
        .collect::<Result<Vec<_>>>()?;
    SweepSummary::from_runs(seed_base, runs)
}

/// Every algorithm of `cfg` swept on the configured dataset (generated once from
/// the seed base).
pub fn run_experiment<T: Scalar>(cfg: &ExperimentConfig) -> Result<Vec<SweepSummary>> {
    cfg.validate()?;
    let ds: Dataset<T> = cfg.source.load(cfg.normalize, cfg.seed_base)?;
    cfg.algorithms.iter().map(|&p| sweep(&ds, p, cfg.trials, cfg.seed_base)).collect()
}

/// Parses `a:b:steps` into `steps` evenly spaced values from `a` to `b`.
pub fn parse_gamma_range(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || Error::Usage(format!("expected a gamma range 'start:end:steps', got '{s}'"));
    let [a, b, steps] = parts.as_slice() else { return Err(bad()) };
    let a: f64 = a.trim().parse().map_err(|_| bad())?;
    let b: f64 = b.trim().parse().map_err(|_| bad())?;
    let steps: usize = steps.trim().parse().map_err(|_| bad())?;
    if steps == 0 || !(a >= 0.0) || !(b >= a) {
        return Err(bad());
    }
    if steps == 1 {
        return Ok(vec![a]);
    }
    Ok((0..steps).map(|i| a + (b - a) * i as f64 / (steps - 1) as f64).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionRow {
    pub gamma: f64,
    pub k_star: usize,
    pub iterations: usize,
    pub converged: bool,
}

/// k* along a warm-started γ path. For `mckm` the nodes are the MPS prototypes
/// of `seed`; for `cc` they are the samples. The `gamma` inside `params` is ignored.
pub fn gamma_trace<T: Scalar>(ds: &Dataset<T>, params: &Params, seed: u64, gammas: &[f64]) -> Result<Vec<FusionRow>> {
    let (nodes, merge) = match params {
        Params::Mckm(p) => (mps(ds, &p.mps_config(derive(seed, &[0])))?.prototypes.centers().clone(), p.merge),
        Params::Cc(m) => (ds.points().clone(), *m),
        _ => return Err(Error::Usage("gamma-path applies to mckm and cc".into())),
    };
    if nodes.nrows() < 2 {
        return Ok(gammas.iter().map(|&gamma| FusionRow { gamma, k_star: 1, iterations: 0, converged: true }).collect());
    }
    let graph = build_graph(&nodes, merge.q.min(nodes.nrows() - 1), merge.kappa)?;
    let cfg = CmConfig { gamma: 0.0, ..merge.cm_config() };
    Ok(gamma_path(&nodes, &graph, &cfg, gammas)?
        .into_iter()
        .map(|pt| FusionRow { gamma: pt.gamma, k_star: pt.k_star, iterations: pt.admm.iterations, converged: pt.admm.converged })
        .collect())
}

pub fn fusion_csv(rows: &[FusionRow]) -> String {
    let mut out = String::from("gamma,k_star,iterations,converged\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.gamma, r.k_star, r.iterations, r.converged);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{MckmParams, MergeParams};

    #[test]
    fn stats() {
        let s = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!((s.mean, s.std), (2.0, 1.0));
        assert_eq!(mean_std(&[4.0]).std, 0.0);
    }

    #[test]
    fn gamma_ranges() {
        assert_eq!(parse_gamma_range("0:1:3").unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(parse_gamma_range("0.2:0.2:1").unwrap(), vec![0.2]);
        for bad in ["1:0:3", "0:1", "0:1:0", "a:1:2", "-1:1:2"] {
            assert!(matches!(parse_gamma_range(bad), Err(Error::Usage(_))), "{bad}");
        }
    }

    #[test]
    fn sweep_and_trace_on_two_clouds() {
        let ds: Dataset<f64> = generate_synthetic(&GeneratorSpec::GaussianGrid { rows: 1, cols: 2, per_cluster: 30, sigma: 0.02 }, 1).unwrap();
        let s = sweep(&ds, Params::Kmeanspp { k: 2 }, 4, 9).unwrap();
        assert_eq!(s.runs.len(), 4);
        assert_eq!(s.ari.unwrap().mean, 1.0);
        assert!(s.table_row().starts_with("kmeanspp"));
        let rows = gamma_trace(&ds, &Params::Mckm(MckmParams::new(1.0, 0.0, 2)), 3, &[0.0, 0.5, 50.0]).unwrap();
        assert!(rows[0].k_star > 2);
        assert!(rows.iter().any(|r| r.k_star == 2));
        assert_eq!(rows[2].k_star, 1);
        assert!(fusion_csv(&rows).starts_with("gamma,k_star"));
        assert!(gamma_trace(&ds, &Params::Kmeans { k: 2 }, 3, &[0.0]).is_err());
        let cc = gamma_trace(&ds, &Params::Cc(MergeParams::new(0.0, 5)), 3, &[0.0]).unwrap();
        assert_eq!(cc[0].k_star, 60);
    }
}

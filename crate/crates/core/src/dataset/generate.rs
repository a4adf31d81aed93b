use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub size: usize,
    pub mean: Vec<f64>,
    pub sigma: f64,
}

/// Synthetic dataset families used as stand-ins for the benchmark sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GeneratorSpec {
    /// Two interleaved half circles of radius 1; `n / 2` points on the upper moon.
    TwoMoons { n: usize, noise: f64 },
    /// Isotropic Gaussian blobs with individual sizes, means and spreads.
    UnbalancedGaussians { components: Vec<GaussianComponent> },
    /// `rows x cols` Gaussian blobs on the unit lattice; blob `(r, c)` is centered
    /// at `(c, r)` and labeled `r * cols + c + 1`.
    GaussianGrid { rows: usize, cols: usize, per_cluster: usize, sigma: f64 },
}

fn spec_err(msg: impl Into<String>) -> Error {
    Error::InvalidSpec(msg.into())
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            GeneratorSpec::TwoMoons { n, noise } => {
                if *n < 2 {
                    return Err(spec_err("two-moons needs n >= 2"));
                }
                check_sigma(*noise)
            }
            GeneratorSpec::UnbalancedGaussians { components } => {
                if components.is_empty() {
                    return Err(spec_err("unbalanced-gaussians needs at least one component"));
                }
                let p = components[0].mean.len();
                if p == 0 {
                    return Err(spec_err("component means must have at least one coordinate"));
                }
                for c in components {
                    if c.size == 0 {
                        return Err(spec_err("component sizes must be positive"));
                    }
                    if c.mean.len() != p {
                        return Err(spec_err("component means differ in dimension"));
                    }
                    if c.mean.iter().any(|m| !m.is_finite()) {
                        return Err(spec_err("component means must be finite"));
                    }
                    check_sigma(c.sigma)?;
                }
                Ok(())
            }
            GeneratorSpec::GaussianGrid { rows, cols, per_cluster, sigma } => {
                if *rows == 0 || *cols == 0 || *per_cluster == 0 {
                    return Err(spec_err("gaussian-grid counts must be positive"));
                }
                check_sigma(*sigma)
            }
        }
    }

    pub fn true_k(&self) -> usize {
        match self {
            GeneratorSpec::TwoMoons { .. } => 2,
            GeneratorSpec::UnbalancedGaussians { components } => components.len(),
            GeneratorSpec::GaussianGrid { rows, cols, .. } => rows * cols,
        }
    }
}

fn check_sigma(s: f64) -> Result<()> {
    if s.is_finite() && s >= 0.0 {
        Ok(())
    } else {
        Err(spec_err(format!("spread must be a finite value >= 0, got {s}")))
    }
}

/// Draws a labeled dataset; identical `(spec, seed)` gives identical output.
pub fn generate_synthetic<T: Scalar>(spec: &GeneratorSpec, seed: u64) -> Result<Dataset<T>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise = |sigma: f64| -> f64 {
        let z: f64 = StandardNormal.sample(&mut rng);
        sigma * z
    };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    match spec {
        GeneratorSpec::TwoMoons { n, noise: sigma } => {
            let upper = n / 2;
            let lower = n - upper;
            for (count, label) in [(upper, 1), (lower, 2)] {
                for i in 0..count {
                    let t = if count > 1 { PI * i as f64 / (count - 1) as f64 } else { 0.0 };
                    let (x, y) = if label == 1 {
                        (t.cos(), t.sin())
                    } else {
                        (1.0 - t.cos(), 0.5 - t.sin())
                    };
                    rows.push(vec![x + noise(*sigma), y + noise(*sigma)]);
                    labels.push(label);
                }
            }
        }
        GeneratorSpec::UnbalancedGaussians { components } => {
            for (c, comp) in components.iter().enumerate() {
                for _ in 0..comp.size {
                    rows.push(comp.mean.iter().map(|&m| m + noise(comp.sigma)).collect());
                    labels.push(c + 1);
                }
            }
        }
        GeneratorSpec::GaussianGrid { rows: nr, cols: nc, per_cluster, sigma } => {
            for r in 0..*nr {
                for c in 0..*nc {
                    for _ in 0..*per_cluster {
                        rows.push(vec![c as f64 + noise(*sigma), r as f64 + noise(*sigma)]);
                        labels.push(r * nc + c + 1);
                    }
                }
            }
        }
    }
    let p = rows[0].len();
    let flat: Vec<T> = rows.into_iter().flatten().map(T::of).collect();
    let points = Array2::from_shape_vec((labels.len(), p), flat).map_err(|e| spec_err(e.to_string()))?;
    Dataset::new(points, Some(labels), spec.to_string())
}

impl fmt::Display for GeneratorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeneratorSpec::TwoMoons { n, noise } => write!(f, "two-moons:{n},{noise}"),
            GeneratorSpec::UnbalancedGaussians { components } => {
                write!(f, "unbalanced-gaussians:")?;
                for (i, c) in components.iter().enumerate() {
                    if i > 0 {
                        write!(f, ";")?;
                    }
                    let mean: Vec<String> = c.mean.iter().map(f64::to_string).collect();
                    write!(f, "{}@{}@{}", c.size, mean.join(","), c.sigma)?;
                }
                Ok(())
            }
            GeneratorSpec::GaussianGrid { rows, cols, per_cluster, sigma } => {
                write!(f, "gaussian-grid:{rows},{cols},{per_cluster},{sigma}")
            }
        }
    }
}

/// Parses `two-moons:N,NOISE`, `gaussian-grid:ROWS,COLS,PER,SIGMA` or
/// `unbalanced-gaussians:SIZE@X,Y,..@SIGMA;SIZE@..@SIGMA`.
impl FromStr for GeneratorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, args) = s.split_once(':').ok_or_else(|| spec_err(format!("missing ':' in {s:?}")))?;
        let spec = match kind.trim() {
            "two-moons" => {
                let a = split_nums(args, 2)?;
                GeneratorSpec::TwoMoons { n: to_count(a[0])?, noise: a[1] }
            }
            "gaussian-grid" => {
                let a = split_nums(args, 4)?;
                GeneratorSpec::GaussianGrid {
                    rows: to_count(a[0])?,
                    cols: to_count(a[1])?,
                    per_cluster: to_count(a[2])?,
                    sigma: a[3],
                }
            }
            "unbalanced-gaussians" => {
                let mut components = Vec::new();
                for part in args.split(';') {
                    let fields: Vec<&str> = part.split('@').collect();
                    if fields.len() != 3 {
                        return Err(spec_err(format!("component {part:?} is not SIZE@MEAN@SIGMA")));
                    }
                    components.push(GaussianComponent {
                        size: to_count(parse_num(fields[0])?)?,
                        mean: fields[1].split(',').map(parse_num).collect::<Result<_>>()?,
                        sigma: parse_num(fields[2])?,
                    });
                }
                GeneratorSpec::UnbalancedGaussians { components }
            }
            other => return Err(spec_err(format!("unknown generator {other:?}"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn parse_num(s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| spec_err(format!("not a number: {s:?}")))
}

fn split_nums(args: &str, expected: usize) -> Result<Vec<f64>> {
    let v: Vec<f64> = args.split(',').map(parse_num).collect::<Result<_>>()?;
    if v.len() != expected {
        return Err(spec_err(format!("expected {expected} arguments, got {}", v.len())));
    }
    Ok(v)
}

fn to_count(x: f64) -> Result<usize> {
    if x >= 1.0 && x.fract() == 0.0 && x < 1e12 {
        Ok(x as usize)
    } else {
        Err(spec_err(format!("count must be a positive integer, got {x}")))
    }
}

//! Lloyd iterations, K-Means++ seeding and the two equivalent K-Means cost forms.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Partition};
use crate::error::{invalid, Result};
use crate::scalar::{sq_dist, Scalar};

const PAR_THRESHOLD: usize = 2048;

/// Where a prototype came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    /// Copied from the sample with this (0-based) index.
    Sampled(usize),
    /// Mean of the samples assigned to it.
    CentroidUpdate,
}

/// Ordered cluster centers, `k x p`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeSet<T> {
    centers: Array2<T>,
    provenance: Vec<Provenance>,
}

impl<T: Scalar> PrototypeSet<T> {
    pub fn new(centers: Array2<T>, provenance: Vec<Provenance>) -> Result<Self> {
        if centers.nrows() == 0 || centers.ncols() == 0 {
            return Err(invalid("prototype set must be non-empty"));
        }
        if provenance.len() != centers.nrows() {
            return Err(invalid("one provenance tag per center required"));
        }
        if centers.iter().any(|x| !x.is_finite()) {
            return Err(invalid("non-finite prototype coordinate"));
        }
        Ok(Self { centers: centers.as_standard_layout().into_owned(), provenance })
    }

    /// Prototypes copied from the given sample indices.
    pub fn from_indices(ds: &Dataset<T>, indices: &[usize]) -> Result<Self> {
        let p = ds.p();
        let mut flat = Vec::with_capacity(indices.len() * p);
        for &j in indices {
            if j >= ds.n() {
                return Err(invalid(format!("sample index {j} out of range")));
            }
            flat.extend_from_slice(ds.row(j));
        }
        let centers = Array2::from_shape_vec((indices.len(), p), flat).map_err(|e| invalid(e.to_string()))?;
        Self::new(centers, indices.iter().map(|&j| Provenance::Sampled(j)).collect())
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(invalid("ragged prototype rows"));
        }
        let flat: Vec<T> = rows.iter().flatten().copied().collect();
        let centers = Array2::from_shape_vec((rows.len(), p), flat).map_err(|e| invalid(e.to_string()))?;
        Self::new(centers, vec![Provenance::CentroidUpdate; rows.len()])
    }

    pub fn k(&self) -> usize {
        self.centers.nrows()
    }

    pub fn p(&self) -> usize {
        self.centers.ncols()
    }

    #[inline]
    pub fn center(&self, i: usize) -> &[T] {
        let p = self.p();
        &self.centers.as_slice().expect("standard layout")[i * p..(i + 1) * p]
    }

    pub fn centers(&self) -> &Array2<T> {
        &self.centers
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    /// Keeps only the listed centers, in the given order.
    pub fn select(&self, keep: &[usize]) -> Result<Self> {
        let rows: Vec<Vec<T>> = keep.iter().map(|&i| self.center(i).to_vec()).collect();
        let mut out = Self::from_rows(&rows)?;
        out.provenance = keep.iter().map(|&i| self.provenance[i]).collect();
        Ok(out)
    }
}

/// Index and squared distance of the nearest center; ties go to the lowest index.
#[inline]
pub fn nearest<T: Scalar>(x: &[T], protos: &PrototypeSet<T>) -> (usize, T) {
    let mut best = (0, sq_dist(x, protos.center(0)));
    for i in 1..protos.k() {
        let d = sq_dist(x, protos.center(i));
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn check_dims<T: Scalar>(ds: &Dataset<T>, protos: &PrototypeSet<T>) -> Result<()> {
    if ds.p() != protos.p() {
        return Err(invalid(format!("dimension mismatch: data p={}, prototypes p={}", ds.p(), protos.p())));
    }
    Ok(())
}

fn nearest_all<T: Scalar>(ds: &Dataset<T>, protos: &PrototypeSet<T>) -> Vec<(usize, T)> {
    if ds.n() >= PAR_THRESHOLD {
        (0..ds.n()).into_par_iter().map(|j| nearest(ds.row(j), protos)).collect()
    } else {
        (0..ds.n()).map(|j| nearest(ds.row(j), protos)).collect()
    }
}

/// Assignment step: every sample goes to its nearest center.
///
/// The returned partition has `k = protos.k()` and may contain empty clusters.
pub fn assign<T: Scalar>(ds: &Dataset<T>, protos: &PrototypeSet<T>) -> Result<Partition> {
    check_dims(ds, protos)?;
    let labels = nearest_all(ds, protos).into_iter().map(|(i, _)| i).collect();
    Partition::new(labels, protos.k())
}

/// Update step: each center becomes the mean of its members.
///
/// Empty clusters are re-seeded, in id order, to the sample farthest from its own
/// cluster's centroid (lowest index on ties, each sample used at most once).
pub fn update_centroids<T: Scalar>(ds: &Dataset<T>, part: &Partition) -> Result<PrototypeSet<T>> {
    if part.len() != ds.n() {
        return Err(invalid(format!("partition covers {} samples, dataset has {}", part.len(), ds.n())));
    }
    let (k, p) = (part.k(), ds.p());
    if k == 0 {
        return Err(invalid("partition has no clusters"));
    }
    let mut sums = Array2::<T>::zeros((k, p));
    let mut counts = vec![0usize; k];
    for (j, &a) in part.assignments().iter().enumerate() {
        counts[a] += 1;
        for (s, &x) in sums.row_mut(a).iter_mut().zip(ds.row(j)) {
            *s += x;
        }
    }
    let mut provenance = vec![Provenance::CentroidUpdate; k];
    for (i, mut row) in sums.rows_mut().into_iter().enumerate() {
        if counts[i] > 0 {
            let c = T::from_usize(counts[i]).expect("count fits scalar");
            row.mapv_inplace(|s| s / c);
        }
    }
    let empties: Vec<usize> = (0..k).filter(|&i| counts[i] == 0).collect();
    if !empties.is_empty() {
        let mut far: Vec<T> = part
            .assignments()
            .iter()
            .enumerate()
            .map(|(j, &a)| if counts[a] > 0 { sq_dist(ds.row(j), sums.row(a).as_slice().unwrap()) } else { T::zero() })
            .collect();
        let mut used = vec![false; ds.n()];
        for i in empties {
            let pick = (0..ds.n())
                .filter(|&j| !used[j])
                .fold(None, |best: Option<usize>, j| match best {
                    Some(b) if far[b] >= far[j] => Some(b),
                    _ => Some(j),
                });
            let Some(j) = pick else { break };
            used[j] = true;
            far[j] = T::zero();
            sums.row_mut(i).assign(&ds.row_view(j));
            provenance[i] = Provenance::Sampled(j);
        }
    }
    PrototypeSet::new(sums, provenance)
}

/// Stopping parameters for [`lloyd`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LloydConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LloydConfig {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 300 }
    }
}

#[derive(Debug, Clone)]
pub struct LloydResult<T> {
    pub prototypes: PrototypeSet<T>,
    pub partition: Partition,
    pub cost: T,
    pub iterations: usize,
    /// Cost after the initial assignment, then after every iteration.
    pub cost_trace: Vec<T>,
}

/// Alternates assignment and centroid updates until the relative cost decrease is
/// at most `tol`, the assignments stop changing, or `max_iter` iterations ran.
pub fn lloyd<T: Scalar>(ds: &Dataset<T>, init: &PrototypeSet<T>, cfg: LloydConfig) -> Result<LloydResult<T>> {
    check_dims(ds, init)?;
    if init.k() > ds.n() {
        return Err(invalid(format!("k = {} exceeds n = {}", init.k(), ds.n())));
    }
    if !(cfg.tol > 0.0) || cfg.max_iter == 0 {
        return Err(invalid("lloyd needs tol > 0 and max_iter >= 1"));
    }
    let tol = T::of(cfg.tol);
    let mut protos = init.clone();
    let mut part = assign(ds, &protos)?;
    let mut cost = kmeans_cost(ds, &protos, &part)?;
    let mut trace = vec![cost];
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        let next_protos = update_centroids(ds, &part)?;
        let next_part = assign(ds, &next_protos)?;
        let next_cost = kmeans_cost(ds, &next_protos, &next_part)?;
        let unchanged = next_part == part;
        let small_gain = cost - next_cost <= tol * cost;
        protos = next_protos;
        part = next_part;
        cost = next_cost;
        trace.push(cost);
        if unchanged || small_gain {
            break;
        }
    }
    Ok(LloydResult { prototypes: protos, partition: part, cost, iterations, cost_trace: trace })
}

/// Incremental D² state: squared distance from every sample to its nearest chosen
/// prototype, and their sum.
#[derive(Debug, Clone)]
pub struct D2Sampler<'a, T> {
    ds: &'a Dataset<T>,
    min_d2: Vec<T>,
    chosen: Vec<usize>,
    total: T,
}

impl<'a, T: Scalar> D2Sampler<'a, T> {
    pub fn new(ds: &'a Dataset<T>, first: usize) -> Self {
        let mut s = Self { ds, min_d2: vec![T::infinity(); ds.n()], chosen: Vec::new(), total: T::zero() };
        s.add(first);
        s
    }

    /// Adds sample `j` as a prototype.
    pub fn add(&mut self, j: usize) {
        let c = self.ds.row(j);
        let ds = self.ds;
        let update = |(x, d): (usize, &mut T)| {
            let nd = sq_dist(ds.row(x), c);
            if nd < *d {
                *d = nd;
            }
        };
        if ds.n() >= PAR_THRESHOLD {
            self.min_d2.par_iter_mut().enumerate().for_each(update);
        } else {
            self.min_d2.iter_mut().enumerate().for_each(update);
        }
        self.total = self.min_d2.iter().copied().sum();
        self.chosen.push(j);
    }

    /// Draws a sample with probability D(x)²/ΣD², or `None` when every D is zero.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<usize> {
        let total = self.total.as_f64();
        if !(total > 0.0) {
            return None;
        }
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut last_positive = None;
        for (j, d) in self.min_d2.iter().enumerate() {
            let w = d.as_f64();
            if w > 0.0 {
                acc += w;
                last_positive = Some(j);
                if acc > u {
                    return Some(j);
                }
            }
        }
        last_positive
    }

    /// Selection probabilities of the next draw.
    pub fn probabilities(&self) -> Vec<f64> {
        let total = self.total.as_f64();
        self.min_d2.iter().map(|d| if total > 0.0 { d.as_f64() / total } else { 0.0 }).collect()
    }

    pub fn min_d2(&self) -> &[T] {
        &self.min_d2
    }

    /// ΣD² over all samples, i.e. the reconstruction residual of the chosen set.
    pub fn total(&self) -> T {
        self.total
    }

    pub fn chosen(&self) -> &[usize] {
        &self.chosen
    }
}

/// K-Means++ seeding from an explicit RNG.
pub fn kmeanspp_seed_with<T: Scalar, R: Rng + ?Sized>(ds: &Dataset<T>, k: usize, rng: &mut R) -> Result<PrototypeSet<T>> {
    if k == 0 || k > ds.n() {
        return Err(invalid(format!("k = {k} must be in 1..={}", ds.n())));
    }
    let mut sampler = D2Sampler::new(ds, rng.random_range(0..ds.n()));
    while sampler.chosen().len() < k {
        let next = match sampler.sample(rng) {
            Some(j) => j,
            None => {
                let remaining: Vec<usize> = (0..ds.n()).filter(|j| !sampler.chosen().contains(j)).collect();
                remaining[rng.random_range(0..remaining.len())]
            }
        };
        sampler.add(next);
    }
    PrototypeSet::from_indices(ds, sampler.chosen())
}

/// K-Means++ seeding: first center uniform, the rest by D² sampling.
pub fn kmeanspp_seed<T: Scalar>(ds: &Dataset<T>, k: usize, seed: u64) -> Result<PrototypeSet<T>> {
    kmeanspp_seed_with(ds, k, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// `k` distinct samples chosen uniformly (Forgy initialization).
pub fn random_seed_with<T: Scalar, R: Rng + ?Sized>(ds: &Dataset<T>, k: usize, rng: &mut R) -> Result<PrototypeSet<T>> {
    if k == 0 || k > ds.n() {
        return Err(invalid(format!("k = {k} must be in 1..={}", ds.n())));
    }
    let idx = rand::seq::index::sample(rng, ds.n(), k).into_vec();
    PrototypeSet::from_indices(ds, &idx)
}

/// Σ_i Σ_{j∈C_i} ‖x_j − v_i‖².
pub fn kmeans_cost<T: Scalar>(ds: &Dataset<T>, protos: &PrototypeSet<T>, part: &Partition) -> Result<T> {
    check_dims(ds, protos)?;
    if part.len() != ds.n() || part.k() > protos.k() {
        return Err(invalid("partition does not match dataset and prototypes"));
    }
    Ok(part
        .assignments()
        .iter()
        .enumerate()
        .map(|(j, &a)| sq_dist(ds.row(j), protos.center(a)))
        .sum())
}

/// Σ_i (1 / 2|C_i|) Σ_{j,j'∈C_i} ‖x_j − x_j'‖², over ordered pairs.
///
/// Equals [`kmeans_cost`] evaluated at the centroids of `part`.
pub fn pairwise_cost<T: Scalar>(ds: &Dataset<T>, part: &Partition) -> Result<T> {
    if part.len() != ds.n() {
        return Err(invalid("partition does not match dataset"));
    }
    let mut total = T::zero();
    for members in part.members() {
        if members.len() < 2 {
            continue;
        }
        let mut within = T::zero();
        for (a, &j) in members.iter().enumerate() {
            for &jj in &members[a + 1..] {
                within += sq_dist(ds.row(j), ds.row(jj));
            }
        }
        // unordered pairs counted once: 2·within / (2|C|)
        total += within / T::from_usize(members.len()).unwrap();
    }
    Ok(total)
}

//! Split-merge K-Means: alternately splits one cluster in two and merges the
//! cheapest pair back, keeping `k` fixed, for as long as the cost drops.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Partition};
use crate::error::{invalid, Result};
use crate::kmeans::{kmeanspp_seed, lloyd, LloydConfig, PrototypeSet, Provenance};
use crate::scalar::{sq_dist, Scalar};
use crate::seed::derive;

/// Restarts of the inner 2-means per cluster.
pub const SPLIT_RESTARTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SmkmAction {
    Split,
    Merge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmkmStep {
    pub action: SmkmAction,
    pub clusters: Vec<usize>,
    pub cost_delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmkmState<T> {
    pub partition: Partition,
    pub prototypes: PrototypeSet<T>,
    pub cost: T,
    pub step_log: Vec<SmkmStep>,
}

#[derive(Debug, Clone)]
pub struct SplitChoice<T> {
    pub cluster: usize,
    /// J_C(v) − J_C({v₁, v₂}).
    pub gain: T,
    pub sub_prototypes: PrototypeSet<T>,
    /// 0 or 1 for each member of the cluster, in sample order.
    pub halves: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeChoice<T> {
    pub i: usize,
    pub c: usize,
    pub increment: T,
    pub merged: Vec<T>,
}

/// Best 2-means split of one cluster, or `None` when it cannot be split.
fn split_cluster<T: Scalar>(ds: &Dataset<T>, members: &[usize], center: &[T], seed: u64) -> Result<Option<SplitChoice<T>>> {
    if members.len() < 2 {
        return Ok(None);
    }
    let sub = ds.select(members)?;
    let before: T = members.iter().map(|&j| sq_dist(ds.row(j), center)).sum();
    let mut best: Option<(T, PrototypeSet<T>, Partition)> = None;
    for r in 0..SPLIT_RESTARTS {
        let init = kmeanspp_seed(&sub, 2, derive(seed, &[r as u64]))?;
        let fit = lloyd(&sub, &init, LloydConfig::default())?;
        if best.as_ref().is_none_or(|b| fit.cost < b.0) {
            best = Some((fit.cost, fit.prototypes, fit.partition));
        }
    }
    let (after, protos, part) = best.expect("at least one restart");
    let gain = before - after;
    if !(gain > T::zero()) || part.has_empty() {
        return Ok(None);
    }
    Ok(Some(SplitChoice { cluster: 0, gain, sub_prototypes: protos, halves: part.assignments().to_vec() }))
}

/// Cluster with the largest 2-means gain. Singletons and clusters whose split
/// does not lower the cost are skipped; `None` means nothing can be split.
pub fn smkm_split_select<T: Scalar>(ds: &Dataset<T>, state: &SmkmState<T>, seed: u64) -> Result<Option<SplitChoice<T>>> {
    let members = state.partition.members();
    let choices = members
        .par_iter()
        .enumerate()
        .map(|(i, m)| {
            split_cluster(ds, m, state.prototypes.center(i), derive(seed, &[i as u64])).map(|c| c.map(|c| SplitChoice { cluster: i, ..c }))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best: Option<SplitChoice<T>> = None;
    for c in choices.into_iter().flatten() {
        if best.as_ref().is_none_or(|b| c.gain > b.gain) {
            best = Some(c);
        }
    }
    Ok(best)
}

struct Stats<T> {
    size: usize,
    sum: Vec<T>,
}

fn stats<T: Scalar>(ds: &Dataset<T>, part: &Partition) -> Vec<Stats<T>> {
    let mut out: Vec<Stats<T>> = (0..part.k()).map(|_| Stats { size: 0, sum: vec![T::zero(); ds.p()] }).collect();
    for (j, &a) in part.assignments().iter().enumerate() {
        out[a].size += 1;
        for (s, &x) in out[a].sum.iter_mut().zip(ds.row(j)) {
            *s += x;
        }
    }
    out
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// `J(C, v) − Σ_{x∈C}‖x‖² = |C|‖v‖² − 2 v·Σx`.
fn shifted_cost<T: Scalar>(size: usize, sum: &[T], v: &[T]) -> T {
    T::from_usize(size).unwrap() * dot(v, v) - T::of(2.0) * dot(v, sum)
}

/// Pair whose merge raises the cost least, with the size-weighted merged prototype.
pub fn smkm_merge_select<T: Scalar>(ds: &Dataset<T>, state: &SmkmState<T>) -> Result<MergeChoice<T>> {
    let k = state.partition.k();
    if k < 2 {
        return Err(invalid("merging needs at least two clusters"));
    }
    let st = stats(ds, &state.partition);
    let mut best: Option<MergeChoice<T>> = None;
    for i in 0..k {
        for c in i + 1..k {
            let (a, b) = (&st[i], &st[c]);
            let total = a.size + b.size;
            let merged: Vec<T> = if total == 0 {
                state.prototypes.center(i).to_vec()
            } else {
                let (na, nb, nt) = (T::from_usize(a.size).unwrap(), T::from_usize(b.size).unwrap(), T::from_usize(total).unwrap());
                let (vi, vc) = (state.prototypes.center(i), state.prototypes.center(c));
                vi.iter().zip(vc).map(|(&x, &y)| (na * x + nb * y) / nt).collect()
            };
            let sum: Vec<T> = a.sum.iter().zip(&b.sum).map(|(&x, &y)| x + y).collect();
            let increment = shifted_cost(total, &sum, &merged)
                - shifted_cost(a.size, &a.sum, state.prototypes.center(i))
                - shifted_cost(b.size, &b.sum, state.prototypes.center(c));
            if best.as_ref().is_none_or(|m| increment < m.increment) {
                best = Some(MergeChoice { i, c, increment, merged });
            }
        }
    }
    Ok(best.expect("k >= 2"))
}

fn apply_split<T: Scalar>(ds: &Dataset<T>, state: &mut SmkmState<T>, choice: &SplitChoice<T>) -> Result<()> {
    let k = state.partition.k();
    let mut labels = state.partition.assignments().to_vec();
    let mut h = choice.halves.iter();
    for l in labels.iter_mut() {
        if *l == choice.cluster && *h.next().expect("one half per member") == 1 {
            *l = k;
        }
    }
    let mut centers = Array2::zeros((k + 1, ds.p()));
    for i in 0..k {
        centers.row_mut(i).assign(&state.prototypes.centers().row(i));
    }
    centers.row_mut(choice.cluster).assign(&choice.sub_prototypes.centers().row(0));
    centers.row_mut(k).assign(&choice.sub_prototypes.centers().row(1));
    state.partition = Partition::new(labels, k + 1)?;
    state.prototypes = PrototypeSet::new(centers, vec![Provenance::CentroidUpdate; k + 1])?;
    state.step_log.push(SmkmStep { action: SmkmAction::Split, clusters: vec![choice.cluster, k], cost_delta: -choice.gain.as_f64() });
    Ok(())
}

fn apply_merge<T: Scalar>(state: &mut SmkmState<T>, choice: &MergeChoice<T>) -> Result<()> {
    let k = state.partition.k();
    let labels = state
        .partition
        .assignments()
        .iter()
        .map(|&l| match l {
            l if l == choice.c => choice.i,
            l if l > choice.c => l - 1,
            l => l,
        })
        .collect();
    let keep: Vec<usize> = (0..k).filter(|&i| i != choice.c).collect();
    let mut protos = state.prototypes.select(&keep)?;
    let mut centers = protos.centers().clone();
    for (d, &x) in centers.row_mut(choice.i).iter_mut().zip(&choice.merged) {
        *d = x;
    }
    protos = PrototypeSet::new(centers, vec![Provenance::CentroidUpdate; k - 1])?;
    state.partition = Partition::new(labels, k - 1)?;
    state.prototypes = protos;
    state.step_log.push(SmkmStep { action: SmkmAction::Merge, clusters: vec![choice.i, choice.c], cost_delta: choice.increment.as_f64() });
    Ok(())
}

/// Split-merge K-Means from a K-Means++ start. A cycle (split, merge, Lloyd
/// refinement) is kept only if it lowers the cost; the first cycle that does not
/// is rolled back and ends the search.
pub fn smkm<T: Scalar>(ds: &Dataset<T>, k: usize, seed: u64, max_cycles: usize) -> Result<SmkmState<T>> {
    if k < 2 || k > ds.n() {
        return Err(invalid(format!("smkm needs 2 <= k <= n, got k = {k}, n = {}", ds.n())));
    }
    let init = kmeanspp_seed(ds, k, derive(seed, &[0]))?;
    let fit = lloyd(ds, &init, LloydConfig::default())?;
    let mut state = SmkmState { partition: fit.partition, prototypes: fit.prototypes, cost: fit.cost, step_log: Vec::new() };
    for cycle in 0..max_cycles {
        let Some(split) = smkm_split_select(ds, &state, derive(seed, &[1, cycle as u64]))? else { break };
        let mut next = state.clone();
        apply_split(ds, &mut next, &split)?;
        let merge = smkm_merge_select(ds, &next)?;
        apply_merge(&mut next, &merge)?;
        let fit = lloyd(ds, &next.prototypes, LloydConfig::default())?;
        if !(fit.cost < state.cost * (T::one() - T::of(1e-12))) {
            break;
        }
        next.partition = fit.partition;
        next.prototypes = fit.prototypes;
        next.cost = fit.cost;
        state = next;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kmeans::kmeans_cost;

    fn line(xs: &[f64]) -> Dataset<f64> {
        Dataset::from_rows(&xs.iter().map(|&x| vec![x]).collect::<Vec<_>>(), None, "line").unwrap()
    }

    fn state_of(ds: &Dataset<f64>, labels: Vec<usize>, k: usize) -> SmkmState<f64> {
        let partition = Partition::new(labels, k).unwrap();
        let prototypes = crate::kmeans::update_centroids(ds, &partition).unwrap();
        let cost = kmeans_cost(ds, &prototypes, &partition).unwrap();
        SmkmState { partition, prototypes, cost, step_log: vec![] }
    }

    #[test]
    fn dumbbell_is_split() {
        let ds = line(&[0.0, 0.0, 4.0, 4.0, 10.0, 20.0]);
        let st = state_of(&ds, vec![0, 0, 0, 0, 1, 2], 3);
        let choice = smkm_split_select(&ds, &st, 1).unwrap().unwrap();
        assert_eq!(choice.cluster, 0);
        assert!((choice.gain - 16.0).abs() < 1e-12);
    }

    #[test]
    fn coincident_clusters_do_not_split() {
        let ds = line(&[1.0, 1.0, 1.0, 5.0]);
        let st = state_of(&ds, vec![0, 0, 0, 1], 2);
        assert!(smkm_split_select(&ds, &st, 1).unwrap().is_none());
    }

    #[test]
    fn merge_examples() {
        let ds = line(&[0.0, 4.0, 4.0, 4.0, 9.0, 9.0]);
        let st = state_of(&ds, vec![0, 1, 1, 1, 2, 3], 4);
        let m = smkm_merge_select(&ds, &st).unwrap();
        assert_eq!((m.i, m.c), (2, 3));
        assert_eq!(m.increment, 0.0);
        let st = state_of(&ds, vec![0, 1, 1, 1, 2, 2], 3);
        let (mut best, mut arg) = (f64::INFINITY, (0, 0));
        for i in 0..3 {
            for c in i + 1..3 {
                let labels = st.partition.assignments().iter().map(|&l| if l == c { i } else { l }).collect();
                let merged = state_of(&ds, labels, 3);
                let f = merged.cost - st.cost;
                if f < best {
                    best = f;
                    arg = (i, c);
                }
            }
        }
        let m = smkm_merge_select(&ds, &st).unwrap();
        assert_eq!((m.i, m.c), arg);
        assert!((m.increment - best).abs() < 1e-9);
        assert_eq!(m.i, 0);
        assert_eq!(m.merged, vec![3.0]);
    }

    #[test]
    fn optimum_is_left_alone() {
        let ds = line(&[0.0, 0.0, 5.0, 5.0, 9.0, 9.0]);
        let out = smkm(&ds, 3, 4, 50).unwrap();
        assert_eq!(out.cost, 0.0);
        assert!(out.step_log.is_empty());
    }

    #[test]
    fn bad_k() {
        let ds = line(&[0.0, 1.0]);
        assert!(smkm(&ds, 1, 0, 5).is_err());
        assert!(smkm(&ds, 3, 0, 5).is_err());
    }
}

//! q-nearest-neighbor Gaussian weights over a set of nodes.

use std::collections::BTreeSet;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::scalar::{sq_dist, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge<T> {
    pub l1: usize,
    pub l2: usize,
    pub weight: T,
}

/// Pair weights `w = exp(−κ‖x_i − x_j‖²)` on the symmetric union `E` of the
/// q-nearest-neighbor relations, zero on every other pair.
///
/// Only the pairs in `E` are stored; [`WeightedEdgeGraph::all_pairs`] expands the
/// complete upper-triangular list with the zero weights filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedEdgeGraph<T> {
    m: usize,
    q: usize,
    kappa: f64,
    edges: Vec<Edge<T>>,
}

impl<T: Scalar> WeightedEdgeGraph<T> {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// The pairs in `E`, sorted by `(l1, l2)` with `l1 < l2`.
    pub fn edges(&self) -> &[Edge<T>] {
        &self.edges
    }

    pub fn weight(&self, i: usize, j: usize) -> T {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.edges
            .binary_search_by(|e| (e.l1, e.l2).cmp(&(a, b)))
            .map_or(T::zero(), |k| self.edges[k].weight)
    }

    pub fn pair_count(&self) -> usize {
        self.m * self.m.saturating_sub(1) / 2
    }

    /// Every pair `l1 < l2` in lexicographic order, zero-weighted off `E`.
    pub fn all_pairs(&self) -> impl Iterator<Item = Edge<T>> + '_ {
        let mut next = self.edges.iter().peekable();
        (0..self.m).flat_map(move |i| (i + 1..self.m).map(move |j| (i, j))).map(move |(l1, l2)| {
            match next.peek() {
                Some(e) if e.l1 == l1 && e.l2 == l2 => *next.next().unwrap(),
                _ => Edge { l1, l2, weight: T::zero() },
            }
        })
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.m];
        for e in &self.edges {
            deg[e.l1] += 1;
            deg[e.l2] += 1;
        }
        deg
    }
}

/// Indices of the `q` nearest other rows of `j`, ties broken by lower index.
fn knn<T: Scalar>(points: &Array2<T>, j: usize, q: usize) -> Vec<usize> {
    let p = points.ncols();
    let data = points.as_slice().expect("standard layout");
    let xj = &data[j * p..(j + 1) * p];
    let mut cand: Vec<(T, usize)> = (0..points.nrows())
        .filter(|&i| i != j)
        .map(|i| (sq_dist(xj, &data[i * p..(i + 1) * p]), i))
        .collect();
    let order = |a: &(T, usize), b: &(T, usize)| a.0.partial_cmp(&b.0).expect("finite distances").then(a.1.cmp(&b.1));
    if q < cand.len() {
        cand.select_nth_unstable_by(q - 1, order);
        cand.truncate(q);
    }
    cand.into_iter().map(|(_, i)| i).collect()
}

pub fn build_graph<T: Scalar>(points: &Array2<T>, q: usize, kappa: f64) -> Result<WeightedEdgeGraph<T>> {
    let m = points.nrows();
    if m < 2 {
        return Err(invalid(format!("graph needs at least two nodes, got {m}")));
    }
    if q == 0 || q > m - 1 {
        return Err(invalid(format!("q = {q} must be in 1..={}", m - 1)));
    }
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(invalid(format!("kappa must be positive, got {kappa}")));
    }
    let points = points.as_standard_layout();
    let points = points.to_owned();
    let neighbor_lists: Vec<Vec<usize>> = (0..m).into_par_iter().map(|j| knn(&points, j, q)).collect();
    let pairs: BTreeSet<(usize, usize)> = neighbor_lists
        .iter()
        .enumerate()
        .flat_map(|(j, nn)| nn.iter().map(move |&i| if i < j { (i, j) } else { (j, i) }))
        .collect();
    let p = points.ncols();
    let data = points.as_slice().expect("standard layout");
    let k = T::of(kappa);
    let edges = pairs
        .into_iter()
        .map(|(l1, l2)| {
            let d2 = sq_dist(&data[l1 * p..(l1 + 1) * p], &data[l2 * p..(l2 + 1) * p]);
            Edge { l1, l2, weight: (-k * d2).exp() }
        })
        .collect();
    Ok(WeightedEdgeGraph { m, q, kappa, edges })
}

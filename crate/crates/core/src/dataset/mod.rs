//! Data model shared by every other module: datasets, partitions, normalization,
//! synthetic generators and file I/O.

mod generate;
mod io;

pub use generate::{generate_synthetic, GaussianComponent, GeneratorSpec};
pub use io::{
    iris, load_csv, parse_csv, save_assignments, save_csv, to_csv_string, write_atomic, write_json,
};

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::scalar::Scalar;

/// `n` samples of dimension `p`, with optional ground-truth labels.
///
/// Labels are stored 1-based and consecutive; anything else is remapped on
/// construction by sorted distinct value.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    points: Array2<T>,
    labels: Option<Vec<usize>>,
    name: String,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(points: Array2<T>, labels: Option<Vec<usize>>, name: impl Into<String>) -> Result<Self> {
        let (n, p) = points.dim();
        if n == 0 || p == 0 {
            return Err(invalid(format!("dataset must be non-empty, got {n}x{p}")));
        }
        if let Some(bad) = points.iter().position(|x| !x.is_finite()) {
            return Err(invalid(format!("non-finite coordinate in row {}", bad / p + 1)));
        }
        let points = points.as_standard_layout().into_owned();
        let labels = match labels {
            Some(l) if l.len() != n => {
                return Err(invalid(format!("{} labels for {n} samples", l.len())));
            }
            Some(l) => Some(Partition::from_labels(&l).one_based()),
            None => None,
        };
        Ok(Self { points, labels, name: name.into() })
    }

    /// Builds a dataset from row vectors.
    pub fn from_rows(rows: &[Vec<T>], labels: Option<Vec<usize>>, name: impl Into<String>) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().position(|r| r.len() != p) {
            return Err(invalid(format!("row {} has {} columns, expected {p}", r + 1, rows[r].len())));
        }
        let flat: Vec<T> = rows.iter().flatten().copied().collect();
        let points = Array2::from_shape_vec((n, p), flat).map_err(|e| invalid(e.to_string()))?;
        Self::new(points, labels, name)
    }

    pub fn n(&self) -> usize {
        self.points.nrows()
    }

    pub fn p(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> &Array2<T> {
        &self.points
    }

    /// Row `j` as a contiguous slice.
    #[inline]
    pub fn row(&self, j: usize) -> &[T] {
        let p = self.p();
        &self.points.as_slice().expect("standard layout")[j * p..(j + 1) * p]
    }

    pub fn row_view(&self, j: usize) -> ArrayView1<'_, T> {
        self.points.row(j)
    }

    /// 1-based ground-truth labels, if present.
    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Ground truth as a 0-based partition.
    pub fn truth(&self) -> Option<Partition> {
        self.labels.as_deref().map(Partition::from_labels)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Subset of rows, labels dropped.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        let p = self.p();
        let mut flat = Vec::with_capacity(rows.len() * p);
        for &j in rows {
            flat.extend_from_slice(self.row(j));
        }
        let points = Array2::from_shape_vec((rows.len(), p), flat).map_err(|e| invalid(e.to_string()))?;
        Self::new(points, None, format!("{}[subset]", self.name))
    }

    /// Per-feature min-max scaling to `[0, 1]`; constant columns map to 0.
    pub fn normalize(&self) -> Result<Self> {
        if self.n() < 2 {
            return Err(invalid("normalization needs at least two samples"));
        }
        let mut points = self.points.clone();
        for mut col in points.columns_mut() {
            let lo = col.iter().copied().fold(T::infinity(), T::min);
            let hi = col.iter().copied().fold(T::neg_infinity(), T::max);
            let range = hi - lo;
            if range > T::zero() {
                col.mapv_inplace(|x| ((x - lo) / range).min(T::one()));
            } else {
                col.fill(T::zero());
            }
        }
        Ok(Self { points, labels: self.labels.clone(), name: self.name.clone() })
    }
}

/// Hard assignment of `m` items to clusters `0..k`.
///
/// Cluster ids are 0-based in memory and written 1-based in reports. A
/// finalized partition (see [`Partition::compact`]) has no empty clusters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    assignments: Vec<usize>,
    k: usize,
}

impl Partition {
    pub fn new(assignments: Vec<usize>, k: usize) -> Result<Self> {
        if let Some(j) = assignments.iter().position(|&a| a >= k) {
            return Err(invalid(format!("assignment {} of item {j} outside 0..{k}", assignments[j])));
        }
        Ok(Self { assignments, k })
    }

    /// Compacts arbitrary integer labels to `0..k` by sorted distinct value.
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut ids: BTreeMap<usize, usize> = labels.iter().map(|&l| (l, 0)).collect();
        for (next, id) in ids.values_mut().enumerate() {
            *id = next;
        }
        Self { assignments: labels.iter().map(|l| ids[l]).collect(), k: ids.len() }
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }

    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.k];
        for (j, &a) in self.assignments.iter().enumerate() {
            members[a].push(j);
        }
        members
    }

    pub fn has_empty(&self) -> bool {
        self.sizes().contains(&0)
    }

    /// Drops empty clusters, preserving the order of the remaining ids.
    /// Returns the compacted partition and the old-to-new id map.
    pub fn compact(&self) -> (Partition, Vec<Option<usize>>) {
        let sizes = self.sizes();
        let mut map = vec![None; self.k];
        let mut next = 0;
        for (i, &s) in sizes.iter().enumerate() {
            if s > 0 {
                map[i] = Some(next);
                next += 1;
            }
        }
        let assignments = self.assignments.iter().map(|&a| map[a].expect("non-empty")).collect();
        (Partition { assignments, k: next }, map)
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.assignments.iter().map(|a| a + 1).collect()
    }

    /// True when the two partitions differ only by a renaming of cluster ids.
    pub fn same_up_to_relabeling(&self, other: &Partition) -> bool {
        if self.len() != other.len() {
            return false;
        }
        let mut fwd = vec![usize::MAX; self.k];
        let mut bwd = vec![usize::MAX; other.k];
        for (&a, &b) in self.assignments.iter().zip(&other.assignments) {
            if fwd[a] == usize::MAX && bwd[b] == usize::MAX {
                fwd[a] = b;
                bwd[b] = a;
            } else if fwd[a] != b || bwd[b] != a {
                return false;
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn ds(rows: &[Vec<f64>]) -> Dataset<f64> {
        Dataset::from_rows(rows, None, "t").unwrap()
    }

    #[test]
    fn normalize_column_endpoints() {
        let d = ds(&[vec![0.0], vec![5.0], vec![10.0]]).normalize().unwrap();
        assert_eq!(d.points().column(0).to_vec(), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn normalize_constant_column() {
        let d = ds(&[vec![3.0], vec![3.0], vec![3.0]]).normalize().unwrap();
        assert_eq!(d.points().column(0).to_vec(), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn normalize_two_features() {
        let d = ds(&[vec![0.0, 2.0], vec![4.0, 2.0], vec![2.0, 2.0]]).normalize().unwrap();
        assert_eq!(d.points(), &array![[0.0, 0.0], [1.0, 0.0], [0.5, 0.0]]);
    }

    #[test]
    fn normalize_needs_two_samples() {
        assert!(ds(&[vec![1.0, 2.0]]).normalize().is_err());
    }

    #[test]
    fn rejects_ragged_and_nonfinite() {
        assert!(Dataset::<f64>::from_rows(&[vec![1.0], vec![1.0, 2.0]], None, "x").is_err());
        assert!(Dataset::<f64>::from_rows(&[vec![f64::NAN]], None, "x").is_err());
        assert!(Dataset::<f64>::from_rows(&[], None, "x").is_err());
    }

    #[test]
    fn labels_are_remapped_to_consecutive() {
        let d = Dataset::from_rows(&[vec![0.0], vec![1.0], vec![2.0]], Some(vec![7, 3, 7]), "x").unwrap();
        assert_eq!(d.labels().unwrap(), &[2, 1, 2]);
        let d = Dataset::from_rows(&[vec![0.0], vec![1.0]], Some(vec![1, 2]), "x").unwrap();
        assert_eq!(d.labels().unwrap(), &[1, 2]);
    }

    #[test]
    fn partition_compaction() {
        let p = Partition::new(vec![0, 2, 2, 0], 3).unwrap();
        assert!(p.has_empty());
        let (c, map) = p.compact();
        assert_eq!(c.assignments(), &[0, 1, 1, 0]);
        assert_eq!(c.k(), 2);
        assert_eq!(map, vec![Some(0), None, Some(1)]);
        assert!(Partition::new(vec![3], 3).is_err());
    }

    #[test]
    fn relabeling_equivalence() {
        let a = Partition::from_labels(&[1, 1, 2, 3]);
        let b = Partition::from_labels(&[5, 5, 4, 9]);
        let c = Partition::from_labels(&[1, 2, 2, 3]);
        assert!(a.same_up_to_relabeling(&b));
        assert!(!a.same_up_to_relabeling(&c));
    }
}

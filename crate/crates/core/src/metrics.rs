//! External validity metrics against a reference partition, and the cost gap.

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Partition};
use crate::error::{invalid, Error, Result};
use crate::kmeans::pairwise_cost;
use crate::scalar::Scalar;

/// `counts[i][l] = |Ĉ_i ∩ C_l|` for predicted cluster `i` and true cluster `l`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    counts: Vec<Vec<usize>>,
    /// Predicted cluster sizes `t_i`.
    row_sums: Vec<usize>,
    /// True cluster sizes `s_l`.
    col_sums: Vec<usize>,
    n: usize,
}

impl ContingencyTable {
    pub fn new(truth: &Partition, pred: &Partition) -> Result<Self> {
        if truth.len() != pred.len() {
            return Err(invalid(format!("partitions cover {} and {} samples", truth.len(), pred.len())));
        }
        let mut counts = vec![vec![0usize; truth.k()]; pred.k()];
        for (&l, &i) in truth.assignments().iter().zip(pred.assignments()) {
            counts[i][l] += 1;
        }
        let row_sums = counts.iter().map(|r| r.iter().sum()).collect();
        let col_sums = (0..truth.k()).map(|l| counts.iter().map(|r| r[l]).sum()).collect();
        Ok(Self { counts, row_sums, col_sums, n: truth.len() })
    }

    pub fn counts(&self) -> &[Vec<usize>] {
        &self.counts
    }

    pub fn row_sums(&self) -> &[usize] {
        &self.row_sums
    }

    pub fn col_sums(&self) -> &[usize] {
        &self.col_sums
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

fn identical(truth: &Partition, pred: &Partition) -> bool {
    truth.same_up_to_relabeling(pred)
}

/// Size-weighted best-match F-measure: Σ_l (n_l/n) max_i 2n_i^l / (n_l + n̂_i).
pub fn f_star(truth: &Partition, pred: &Partition) -> Result<f64> {
    let t = ContingencyTable::new(truth, pred)?;
    if t.n == 0 {
        return Err(invalid("empty partitions"));
    }
    // exact 1 rather than a sum of rounded size fractions
    if identical(truth, pred) {
        return Ok(1.0);
    }
    let n = t.n as f64;
    Ok((0..truth.k())
        .filter(|&l| t.col_sums[l] > 0)
        .map(|l| {
            let nl = t.col_sums[l] as f64;
            let best = (0..pred.k())
                .map(|i| 2.0 * t.counts[i][l] as f64 / (nl + t.row_sums[i] as f64))
                .fold(0.0, f64::max);
            nl / n * best
        })
        .sum())
}

fn entropy_term(sizes: &[usize], n: f64) -> f64 {
    sizes.iter().filter(|&&s| s > 0).map(|&s| s as f64 * (s as f64 / n).ln()).sum()
}

/// Mutual information normalised by the geometric mean of the two entropies
/// (natural log). When either side has zero entropy the score is 1 for
/// identical partitions and 0 otherwise.
pub fn nmi(truth: &Partition, pred: &Partition) -> Result<f64> {
    let t = ContingencyTable::new(truth, pred)?;
    if t.n == 0 {
        return Err(invalid("empty partitions"));
    }
    let n = t.n as f64;
    let hp = entropy_term(&t.row_sums, n);
    let ht = entropy_term(&t.col_sums, n);
    if identical(truth, pred) {
        return Ok(1.0);
    }
    if hp == 0.0 || ht == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (i, row) in t.counts.iter().enumerate() {
        for (l, &c) in row.iter().enumerate() {
            if c > 0 {
                mi += c as f64 * (n * c as f64 / (t.row_sums[i] as f64 * t.col_sums[l] as f64)).ln();
            }
        }
    }
    Ok((mi / (hp * ht).sqrt()).clamp(0.0, 1.0))
}

fn choose2(x: usize) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index. A zero denominator yields 1 for identical partitions and
/// 0 otherwise.
pub fn ari(truth: &Partition, pred: &Partition) -> Result<f64> {
    let t = ContingencyTable::new(truth, pred)?;
    if t.n < 2 {
        return Err(invalid("ARI needs at least two samples"));
    }
    let index: f64 = t.counts.iter().flatten().map(|&c| choose2(c)).sum();
    let a: f64 = t.row_sums.iter().map(|&x| choose2(x)).sum();
    let b: f64 = t.col_sums.iter().map(|&x| choose2(x)).sum();
    let expected = a * b / choose2(t.n);
    let max = 0.5 * (a + b);
    let denom = max - expected;
    if denom == 0.0 {
        return Ok(if identical(truth, pred) { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / denom)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostGap {
    pub j_pred: f64,
    pub j_truth: f64,
    pub gap: f64,
}

/// Pairwise K-Means cost of `pred` and of the dataset's labels, and their distance.
pub fn cost_gap<T: Scalar>(ds: &Dataset<T>, pred: &Partition) -> Result<CostGap> {
    let truth = ds.truth().ok_or_else(|| Error::Unsupported(format!("dataset '{}' has no labels", ds.name())))?;
    let j_pred = pairwise_cost(ds, pred)?.as_f64();
    let j_truth = pairwise_cost(ds, &truth)?.as_f64();
    Ok(CostGap { j_pred, j_truth, gap: (j_pred - j_truth).abs() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub f_star: f64,
    pub nmi: f64,
    pub ari: f64,
}

pub fn scores(truth: &Partition, pred: &Partition) -> Result<Scores> {
    Ok(Scores { f_star: f_star(truth, pred)?, nmi: nmi(truth, pred)?, ari: ari(truth, pred)? })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(labels: &[usize]) -> Partition {
        Partition::from_labels(labels)
    }

    #[test]
    fn small_examples() {
        let truth = p(&[1, 1, 2, 2]);
        let pred = p(&[1, 2, 2, 2]);
        assert!((f_star(&truth, &pred).unwrap() - 11.0 / 15.0).abs() < 1e-15);
        assert_eq!(ari(&truth, &pred).unwrap(), 0.0);
        assert_eq!(nmi(&truth, &p(&[1, 2, 1, 2])).unwrap(), 0.0);
        for m in [f_star, nmi, ari] {
            assert_eq!(m(&truth, &truth).unwrap(), 1.0);
        }
    }

    #[test]
    fn single_cluster_prediction() {
        let truth = p(&[1, 1, 1, 2, 2, 2]);
        let one = p(&[1; 6]);
        assert!((f_star(&truth, &one).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(nmi(&truth, &one).unwrap(), 0.0);
        assert_eq!(nmi(&one, &one).unwrap(), 1.0);
        assert_eq!(ari(&one, &one).unwrap(), 1.0);
        let singles = p(&[1, 2, 3, 4, 5, 6]);
        assert_eq!(ari(&singles, &singles).unwrap(), 1.0);
        assert_eq!(ari(&singles, &one).unwrap(), 0.0);
    }

    #[test]
    fn length_mismatch() {
        assert!(f_star(&p(&[1, 2]), &p(&[1, 2, 2])).is_err());
        assert!(ari(&p(&[1]), &p(&[1])).is_err());
    }

    #[test]
    fn cost_gap_needs_labels() {
        let ds = Dataset::from_rows(&[vec![0.0], vec![1.0]], None, "x").unwrap();
        assert!(matches!(cost_gap(&ds, &p(&[1, 1])), Err(Error::Unsupported(_))));
        let ds = Dataset::from_rows(&[vec![0.0], vec![1.0], vec![5.0]], Some(vec![1, 1, 2]), "x").unwrap();
        let g = cost_gap(&ds, &p(&[1, 1, 2])).unwrap();
        assert_eq!(g.gap, 0.0);
        let g = cost_gap(&ds, &p(&[1, 2, 2])).unwrap();
        assert!((g.j_truth - 0.5).abs() < 1e-12 && (g.j_pred - 8.0).abs() < 1e-12 && (g.gap - 7.5).abs() < 1e-12);
    }
}

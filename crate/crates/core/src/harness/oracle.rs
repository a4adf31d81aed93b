//! Reference computations used by the acceptance suite. They deliberately share
//! no code with the routines they check.

use std::collections::{HashMap, HashSet};

/// `½ Σ‖μ_i − v_i‖² + γ Σ w ‖μ_a − μ_b‖` over an explicit edge list.
pub fn fusion_objective(v: &[Vec<f64>], edges: &[(usize, usize, f64)], gamma: f64, mu: &[Vec<f64>]) -> f64 {
    let fid: f64 = mu.iter().zip(v).map(|(m, x)| m.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>()).sum();
    let pen: f64 = edges
        .iter()
        .map(|&(a, b, w)| w * mu[a].iter().zip(&mu[b]).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt())
        .sum();
    0.5 * fid + gamma * pen
}

/// Subgradient descent with steps 2/(t+1) and t-weighted averaging, which suits
/// the 1-strongly-convex fusion objective. Returns the lower objective of the
/// last and the averaged iterate.
pub fn subgradient_fusion(v: &[Vec<f64>], edges: &[(usize, usize, f64)], gamma: f64, iters: usize) -> f64 {
    let p = v.first().map_or(0, |r| r.len());
    let mut mu: Vec<Vec<f64>> = v.to_vec();
    let mut avg = vec![vec![0.0; p]; v.len()];
    let mut weight = 0.0;
    let mut g = vec![vec![0.0; p]; v.len()];
    for t in 1..=iters {
        for (gi, (m, x)) in g.iter_mut().zip(mu.iter().zip(v)) {
            for c in 0..p {
                gi[c] = m[c] - x[c];
            }
        }
        for &(a, b, w) in edges {
            let d: Vec<f64> = (0..p).map(|c| mu[a][c] - mu[b][c]).collect();
            let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                for c in 0..p {
                    let s = gamma * w * d[c] / norm;
                    g[a][c] += s;
                    g[b][c] -= s;
                }
            }
        }
        let step = 2.0 / (t as f64 + 1.0);
        for (m, gi) in mu.iter_mut().zip(&g) {
            for c in 0..p {
                m[c] -= step * gi[c];
            }
        }
        let wt = t as f64;
        weight += wt;
        for (a, m) in avg.iter_mut().zip(&mu) {
            for c in 0..p {
                a[c] += wt * m[c];
            }
        }
    }
    let avg: Vec<Vec<f64>> = avg.into_iter().map(|r| r.into_iter().map(|x| x / weight).collect()).collect();
    fusion_objective(v, edges, gamma, &mu).min(fusion_objective(v, edges, gamma, &avg))
}

/// Pair counts (same/same, same/different, different/same, different/different).
fn pair_counts(a: &[usize], b: &[usize]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            let idx = match (a[i] == a[j], b[i] == b[j]) {
                (true, true) => 0,
                (true, false) => 1,
                (false, true) => 2,
                (false, false) => 3,
            };
            out[idx] += 1.0;
        }
    }
    out
}

fn same_structure(a: &[usize], b: &[usize]) -> bool {
    let [_, only_a, only_b, _] = pair_counts(a, b);
    only_a == 0.0 && only_b == 0.0
}

/// ARI from agreement counts over all sample pairs.
pub fn ari_by_pairs(truth: &[usize], pred: &[usize]) -> f64 {
    let [a, b, c, d] = pair_counts(truth, pred);
    let denom = (a + b) * (b + d) + (a + c) * (c + d);
    if denom == 0.0 {
        return if same_structure(truth, pred) { 1.0 } else { 0.0 };
    }
    2.0 * (a * d - b * c) / denom
}

fn probabilities(labels: &[usize]) -> HashMap<usize, f64> {
    let mut m = HashMap::new();
    for &l in labels {
        *m.entry(l).or_insert(0.0) += 1.0;
    }
    let n = labels.len() as f64;
    m.values_mut().for_each(|v| *v /= n);
    m
}

/// I(U;V) / √(H(U) H(V)) from empirical probabilities.
pub fn nmi_by_entropy(truth: &[usize], pred: &[usize]) -> f64 {
    let pu = probabilities(truth);
    let pv = probabilities(pred);
    let joint: Vec<(usize, usize)> = truth.iter().copied().zip(pred.iter().copied()).collect();
    let mut pj: HashMap<(usize, usize), f64> = HashMap::new();
    for &k in &joint {
        *pj.entry(k).or_insert(0.0) += 1.0 / truth.len() as f64;
    }
    let h = |p: &HashMap<usize, f64>| -p.values().map(|&x| x * x.ln()).sum::<f64>();
    let (hu, hv) = (h(&pu), h(&pv));
    if hu == 0.0 || hv == 0.0 {
        return if same_structure(truth, pred) { 1.0 } else { 0.0 };
    }
    let mi: f64 = pj.iter().map(|(&(u, v), &p)| p * (p / (pu[&u] * pv[&v])).ln()).sum();
    mi / (hu * hv).sqrt()
}

/// F* from explicit member sets.
pub fn f_star_by_sets(truth: &[usize], pred: &[usize]) -> f64 {
    let sets = |labels: &[usize]| {
        let mut m: HashMap<usize, HashSet<usize>> = HashMap::new();
        for (j, &l) in labels.iter().enumerate() {
            m.entry(l).or_default().insert(j);
        }
        m.into_values().collect::<Vec<_>>()
    };
    let (ts, ps) = (sets(truth), sets(pred));
    let n = truth.len() as f64;
    ts.iter()
        .map(|t| {
            let best = ps
                .iter()
                .map(|p| 2.0 * t.intersection(p).count() as f64 / (t.len() + p.len()) as f64)
                .fold(0.0, f64::max);
            t.len() as f64 / n * best
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_examples() {
        let (t, p) = ([1, 1, 2, 2], [1, 2, 2, 2]);
        assert_eq!(ari_by_pairs(&t, &p), 0.0);
        assert!((f_star_by_sets(&t, &p) - 11.0 / 15.0).abs() < 1e-15);
        assert!(nmi_by_entropy(&t, &[1, 2, 1, 2]).abs() < 1e-15);
    }

    #[test]
    fn subgradient_two_points() {
        let v = vec![vec![0.0], vec![2.0]];
        // optimum: gap shrinks by 2γw, objective γw(2 − γw) for γw < 1
        let f = subgradient_fusion(&v, &[(0, 1, 0.5)], 1.0, 200_000);
        assert!((f - 0.75).abs() < 1e-5, "{f}");
    }
}

//! Convex merging: solves the sum-of-norms fusion problem
//!
//! ```text
//! min_μ  ½ Σ_i ‖μ_i − v_i‖² + γ Σ_{i<j} w_ij ‖μ_i − μ_j‖
//! ```
//!
//! by ADMM over the split `y_l = μ_{l1} − μ_{l2}` for every pair `l`, then reads
//! clusters off the fused solution and carries them back to the samples.
//!
//! Auxiliary variables exist for all `m(m−1)/2` pairs, which makes the μ-update
//! a closed form with coefficient `1 + mν`. Pairs with zero weight are never
//! stored: with `λ⁰ = 0` and `y⁰ = μ⁰`-differences their multiplier stays zero and
//! their `y` always equals the current μ-difference, so their contribution is
//! summed implicitly from node totals. The iterates are identical to the dense
//! all-pairs scheme.

use ndarray::{Array2, Axis};
use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Partition};
use crate::error::{invalid, Error, Result};
use crate::graph::{build_graph, WeightedEdgeGraph};
use crate::scalar::{sq_dist, sq_norm, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CmConfig {
    /// Fusion strength γ ≥ 0.
    pub gamma: f64,
    /// Augmented-Lagrangian penalty ν > 0.
    pub nu: f64,
    /// Two nodes share a cluster when their solutions are within this distance.
    pub eta_merge: f64,
    /// Primal and dual residual target.
    pub tol: f64,
    pub max_iter: usize,
}

impl CmConfig {
    pub fn new(gamma: f64) -> Self {
        Self { gamma, nu: 1.0, eta_merge: 1e-6, tol: 1e-6, max_iter: 10_000 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.gamma >= 0.0
            && self.gamma.is_finite()
            && self.nu > 0.0
            && self.nu.is_finite()
            && self.eta_merge > 0.0
            && self.tol > 0.0
            && self.max_iter >= 1;
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("invalid merge configuration {self:?}")))
        }
    }
}

/// Solver state. `y` and `lambda` rows follow `graph.edges()`; zero-weight pairs
/// are implicit (see the module docs).
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState<T> {
    pub mu: Array2<T>,
    pub y: Array2<T>,
    pub lambda: Array2<T>,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iter: usize,
    pub converged: bool,
}

impl<T: Scalar> AdmmState<T> {
    /// Cold start: μ⁰ = V, y⁰ = differences of V, λ⁰ = 0.
    pub fn initial(v: &Array2<T>, graph: &WeightedEdgeGraph<T>) -> Self {
        let p = v.ncols();
        let mut y = Array2::zeros((graph.edges().len(), p));
        for (l, e) in graph.edges().iter().enumerate() {
            for c in 0..p {
                y[[l, c]] = v[[e.l1, c]] - v[[e.l2, c]];
            }
        }
        Self {
            mu: v.to_owned(),
            lambda: Array2::zeros(y.raw_dim()),
            y,
            primal_residual: f64::INFINITY,
            dual_residual: f64::INFINITY,
            iter: 0,
            converged: false,
        }
    }

    /// `(y_l, λ_l)` for any pair, including the implicit zero-weight ones.
    pub fn pair_variables(&self, graph: &WeightedEdgeGraph<T>, i: usize, j: usize) -> (Vec<T>, Vec<T>) {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        match graph.edges().binary_search_by(|e| (e.l1, e.l2).cmp(&(a, b))) {
            Ok(l) => (self.y.row(l).to_vec(), self.lambda.row(l).to_vec()),
            Err(_) => {
                let d = self.mu.row(a).iter().zip(self.mu.row(b).iter()).map(|(&x, &z)| x - z).collect();
                (d, vec![T::zero(); self.mu.ncols()])
            }
        }
    }

    /// max_l ‖y_l − μ_{l1} + μ_{l2}‖ over all pairs.
    pub fn max_constraint_violation(&self, graph: &WeightedEdgeGraph<T>) -> f64 {
        graph
            .edges()
            .iter()
            .enumerate()
            .map(|(l, e)| {
                let d2: T = (0..self.mu.ncols())
                    .map(|c| {
                        let r = self.y[[l, c]] - self.mu[[e.l1, c]] + self.mu[[e.l2, c]];
                        r * r
                    })
                    .sum();
                d2.as_f64().sqrt()
            })
            .fold(0.0, f64::max)
    }
}

/// Proximal map of σ‖·‖₂: `max(0, 1 − σ/‖v‖)·v`.
pub fn block_soft_threshold<T: Scalar>(v: &[T], sigma: T) -> Vec<T> {
    let mut out = v.to_vec();
    block_soft_threshold_in_place(&mut out, sigma);
    out
}

pub fn block_soft_threshold_in_place<T: Scalar>(v: &mut [T], sigma: T) {
    let norm = sq_norm(v).sqrt();
    if norm <= sigma || norm == T::zero() {
        v.iter_mut().for_each(|x| *x = T::zero());
    } else {
        let scale = T::one() - sigma / norm;
        v.iter_mut().for_each(|x| *x = *x * scale);
    }
}

/// ½ Σ‖μ_i − v_i‖² + γ Σ_l w_l ‖μ_{l1} − μ_{l2}‖.
pub fn cm_objective<T: Scalar>(v: &Array2<T>, graph: &WeightedEdgeGraph<T>, gamma: f64, mu: &Array2<T>) -> f64 {
    let p = v.ncols();
    let row = |a: &Array2<T>, i: usize| -> Vec<T> { a.row(i).to_vec() };
    let fidelity: f64 = (0..v.nrows()).map(|i| sq_dist(&row(mu, i), &row(v, i)).as_f64()).sum::<f64>() * 0.5;
    let penalty: f64 = graph
        .edges()
        .iter()
        .map(|e| {
            let d: T = (0..p).map(|c| (mu[[e.l1, c]] - mu[[e.l2, c]]).powi(2)).sum();
            e.weight.as_f64() * d.as_f64().sqrt()
        })
        .sum();
    fidelity + gamma * penalty
}

fn check_inputs<T: Scalar>(v: &Array2<T>, graph: &WeightedEdgeGraph<T>, cfg: &CmConfig) -> Result<()> {
    cfg.validate()?;
    if v.nrows() != graph.m() {
        return Err(invalid(format!("graph has {} nodes, prototypes {}", graph.m(), v.nrows())));
    }
    Ok(())
}

pub fn admm_solve<T: Scalar>(v: &Array2<T>, graph: &WeightedEdgeGraph<T>, cfg: &CmConfig) -> Result<AdmmState<T>> {
    check_inputs(v, graph, cfg)?;
    admm_solve_from(v, graph, cfg, AdmmState::initial(v, graph))
}

/// Continues ADMM from `state` (warm start along a γ path).
pub fn admm_solve_from<T: Scalar>(
    v: &Array2<T>,
    graph: &WeightedEdgeGraph<T>,
    cfg: &CmConfig,
    mut state: AdmmState<T>,
) -> Result<AdmmState<T>> {
    check_inputs(v, graph, cfg)?;
    let (m, p) = v.dim();
    let edges = graph.edges();
    if state.mu.dim() != (m, p) || state.y.dim() != (edges.len(), p) || state.lambda.dim() != (edges.len(), p) {
        return Err(invalid("warm-start state does not match the problem"));
    }
    let v = v.as_standard_layout().to_owned();
    let nu = T::of(cfg.nu);
    let m_t = T::from_usize(m).unwrap();
    let denom = T::one() + m_t * nu;
    let vbar = v.mean_axis(Axis(0)).expect("m >= 1");
    let shift: Vec<T> = vbar.iter().map(|&x| m_t * nu * x / denom).collect();
    let sigmas: Vec<T> = edges.iter().map(|e| T::of(cfg.gamma) * e.weight / nu).collect();
    let degrees = graph.degrees();
    let mut incident: Vec<Vec<(usize, bool)>> = vec![Vec::new(); m];
    for (l, e) in edges.iter().enumerate() {
        incident[e.l1].push((l, true));
        incident[e.l2].push((l, false));
    }

    let mut z = Array2::<T>::zeros((m, p));
    let mut diff = vec![T::zero(); p];
    let mut y_new = vec![T::zero(); p];
    state.converged = false;
    for _ in 0..cfg.max_iter {
        let total = state.mu.sum_axis(Axis(0));
        // z_i = v_i + Σ_{l1=i}(λ_l + νy_l) − Σ_{l2=i}(λ_l + νy_l), zero-weight pairs included
        for i in 0..m {
            let implicit = T::from_usize(m - 1 - degrees[i]).unwrap();
            for c in 0..p {
                let mut acc = v[[i, c]];
                let mut nbr = T::zero();
                for &(l, head) in &incident[i] {
                    let term = state.lambda[[l, c]] + nu * state.y[[l, c]];
                    let other = if head { edges[l].l2 } else { edges[l].l1 };
                    nbr += state.mu[[other, c]];
                    if head {
                        acc += term;
                    } else {
                        acc -= term;
                    }
                }
                let mu_ic = state.mu[[i, c]];
                acc += nu * (implicit * mu_ic - (total[c] - mu_ic - nbr));
                z[[i, c]] = acc;
            }
        }
        let prev_mu = std::mem::replace(&mut state.mu, z.mapv(|x| x / denom));
        for i in 0..m {
            for c in 0..p {
                state.mu[[i, c]] += shift[c];
            }
        }

        let mut primal_sq = T::zero();
        let mut dual_sq = T::zero();
        let mut edge_delta_sq = T::zero();
        for (l, e) in edges.iter().enumerate() {
            for c in 0..p {
                diff[c] = state.mu[[e.l1, c]] - state.mu[[e.l2, c]];
                y_new[c] = diff[c] - state.lambda[[l, c]] / nu;
                let dl = (state.mu[[e.l1, c]] - prev_mu[[e.l1, c]]) - (state.mu[[e.l2, c]] - prev_mu[[e.l2, c]]);
                edge_delta_sq += dl * dl;
            }
            block_soft_threshold_in_place(&mut y_new, sigmas[l]);
            for c in 0..p {
                let r = y_new[c] - diff[c];
                primal_sq += r * r;
                let dy = y_new[c] - state.y[[l, c]];
                dual_sq += dy * dy;
                state.y[[l, c]] = y_new[c];
                state.lambda[[l, c]] += nu * r;
            }
        }
        // implicit pairs: y moves with μ, so ‖Δy_l‖² = ‖Δ_{l1} − Δ_{l2}‖²
        let delta = &state.mu - &prev_mu;
        let delta_total = delta.sum_axis(Axis(0));
        let all_pairs_sq = m_t * delta.iter().map(|&x| x * x).sum::<T>() - sq_norm(delta_total.as_slice().unwrap());
        let implicit_sq = (all_pairs_sq - edge_delta_sq).max(T::zero());
        dual_sq += implicit_sq;

        state.iter += 1;
        state.primal_residual = primal_sq.as_f64().sqrt();
        state.dual_residual = cfg.nu * dual_sq.as_f64().sqrt();
        if state.primal_residual.max(state.dual_residual) <= cfg.tol {
            state.converged = true;
            break;
        }
        if !state.primal_residual.is_finite() || !state.dual_residual.is_finite() {
            return Err(Error::Internal("ADMM iterates diverged".into()));
        }
    }
    Ok(state)
}

/// Connected components of the graph joining nodes whose solutions lie within
/// `eta` of each other. Cluster ids follow first appearance in node order.
pub fn extract_clusters<T: Scalar>(mu: &Array2<T>, eta: f64) -> Partition {
    let m = mu.nrows();
    let eta_t = T::of(eta);
    let eta_sq = eta_t * eta_t;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| mu[[a, 0]].partial_cmp(&mu[[b, 0]]).expect("finite").then(a.cmp(&b)));
    let mut uf = UnionFind::<usize>::new(m);
    let rows: Vec<Vec<T>> = (0..m).map(|i| mu.row(i).to_vec()).collect();
    for (pos, &i) in order.iter().enumerate() {
        for &j in &order[pos + 1..] {
            if rows[j][0] - rows[i][0] > eta_t {
                break;
            }
            if sq_dist(&rows[i], &rows[j]) <= eta_sq {
                uf.union(i, j);
            }
        }
    }
    let roots: Vec<usize> = (0..m).map(|i| uf.find(i)).collect();
    let mut id_of_root = vec![usize::MAX; m];
    let mut next = 0;
    let labels = roots
        .iter()
        .map(|&r| {
            if id_of_root[r] == usize::MAX {
                id_of_root[r] = next;
                next += 1;
            }
            id_of_root[r]
        })
        .collect();
    Partition::new(labels, next).expect("ids are in range")
}

/// Sample `j` joins merged cluster `l` iff its prototype belongs to `l`.
pub fn propagate_labels(mps_partition: &Partition, proto_partition: &Partition) -> Result<Partition> {
    let protos = proto_partition.assignments();
    let labels = mps_partition
        .assignments()
        .iter()
        .enumerate()
        .map(|(j, &a)| {
            protos
                .get(a)
                .copied()
                .ok_or_else(|| Error::Internal(format!("sample {j} points at prototype {a}, only {} exist", protos.len())))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Partition::new(labels, proto_partition.k())?.compact().0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmmSummary {
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub converged: bool,
}

impl<T> From<&AdmmState<T>> for AdmmSummary {
    fn from(s: &AdmmState<T>) -> Self {
        Self { iterations: s.iter, primal_residual: s.primal_residual, dual_residual: s.dual_residual, converged: s.converged }
    }
}

#[derive(Debug, Clone)]
pub struct MergeResult<T> {
    pub mu_star: Array2<T>,
    /// Merged clusters over the prototypes.
    pub prototype_partition: Partition,
    pub k_star: usize,
    /// Merged clusters over the samples.
    pub sample_partition: Partition,
    pub fusion_trace: Option<Vec<(f64, usize)>>,
    pub admm: AdmmSummary,
}

/// Solve, extract and propagate for prototypes `v` with sample assignment `mps_partition`.
pub fn convex_merge<T: Scalar>(
    v: &Array2<T>,
    mps_partition: &Partition,
    graph: &WeightedEdgeGraph<T>,
    cfg: &CmConfig,
) -> Result<MergeResult<T>> {
    let state = admm_solve(v, graph, cfg)?;
    let prototype_partition = extract_clusters(&state.mu, cfg.eta_merge);
    let sample_partition = propagate_labels(mps_partition, &prototype_partition)?;
    Ok(MergeResult {
        admm: AdmmSummary::from(&state),
        k_star: prototype_partition.k(),
        mu_star: state.mu,
        prototype_partition,
        sample_partition,
        fusion_trace: None,
    })
}

#[derive(Debug, Clone)]
pub struct FusionPoint<T> {
    pub gamma: f64,
    pub k_star: usize,
    pub partition: Partition,
    pub mu: Array2<T>,
    pub admm: AdmmSummary,
}

/// Solves for each γ in ascending order, warm-starting from the previous solution.
pub fn gamma_path<T: Scalar>(
    v: &Array2<T>,
    graph: &WeightedEdgeGraph<T>,
    cfg: &CmConfig,
    gammas: &[f64],
) -> Result<Vec<FusionPoint<T>>> {
    if gammas.windows(2).any(|w| w[1] < w[0]) || gammas.iter().any(|&g| !(g >= 0.0)) {
        return Err(invalid("gammas must be non-negative and ascending"));
    }
    let mut state = AdmmState::initial(v, graph);
    let mut out = Vec::with_capacity(gammas.len());
    for &gamma in gammas {
        let step = CmConfig { gamma, ..*cfg };
        state.iter = 0;
        state = admm_solve_from(v, graph, &step, state)?;
        let partition = extract_clusters(&state.mu, cfg.eta_merge);
        out.push(FusionPoint { gamma, k_star: partition.k(), partition, mu: state.mu.clone(), admm: AdmmSummary::from(&state) });
    }
    Ok(out)
}

/// Convex clustering baseline: the same solver with every sample as a node.
pub fn convex_cluster<T: Scalar>(ds: &Dataset<T>, q: usize, kappa: f64, cfg: &CmConfig) -> Result<MergeResult<T>> {
    let graph = build_graph(ds.points(), q, kappa)?;
    let identity = Partition::new((0..ds.n()).collect(), ds.n())?;
    convex_merge(ds.points(), &identity, &graph, cfg)
}

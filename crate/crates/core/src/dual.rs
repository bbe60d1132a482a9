//! The unconstrained dual of the tree-reweighted free energy.
//!
//! One real table `β_uv(x_u, x_v)` lives on every canonical edge. Each
//! directed edge `p -> c` owns a copy of the edge potential carrying half of
//! `θ_uv` plus `δ·β_uv`, where `δ = -1` when the parent is `u` (the smaller
//! endpoint) and `δ = +1` when the parent is `v`. The log normalizer of that
//! copy over the child's states gives the λ table of the directed edge, a
//! function of the parent's state:
//!
//! ```text
//! λ_{p->c}(x_p) = -ρ_{p->c} log Σ_{x_c} exp((θ_uv/2 + δ β_uv) / ρ_{p->c})
//! F_D(β)        = Σ_i ρ_i log Σ_{x_i} exp((θ_i(x_i) - Σ_{c ∈ N(i)} λ_{i->c}(x_i)) / ρ_i)
//! ```
//!
//! with `ρ_i` the root probability of `i`. The same exponents, normalized,
//! give the singleton marginals and the child-given-parent conditionals.

use crate::error::{Error, Result};
use crate::math::{entropy, log_sum_exp, neg_p_log_p};
use crate::model::{Graph, PairwiseMrf};
use crate::spanning::{DirectedTree, EdgeProbabilities};

/// Sign of `β` in the copy owned by directed edge `d`.
#[inline]
pub fn delta(d: usize) -> f64 {
    if d % 2 == 0 {
        -1.0
    } else {
        1.0
    }
}

/// Directed edge id of `i -> nb` given the undirected edge index.
#[inline]
pub(crate) fn outgoing_id(graph: &Graph, i: usize, e: usize) -> usize {
    if graph.edge(e).0 == i {
        2 * e
    } else {
        2 * e + 1
    }
}

/// Index into a canonical `k_u × k_v` table for directed edge `d` at
/// parent state `xp` and child state `xc`.
#[inline]
pub(crate) fn canonical_index(d: usize, xp: usize, xc: usize, ku: usize, kv: usize) -> usize {
    debug_assert!(xp < if d % 2 == 0 { ku } else { kv });
    if d % 2 == 0 {
        xp * kv + xc
    } else {
        xc * kv + xp
    }
}

/// Checks that `ep` matches `mrf` and every probability the dual divides by
/// is positive.
pub fn check_dual_probs(mrf: &PairwiseMrf, ep: &EdgeProbabilities) -> Result<()> {
    let g = &mrf.graph;
    if ep.rho_root.len() != g.num_nodes() || ep.rho_dir.len() != g.num_directed() {
        return Err(Error::InvalidProbs("shape does not match the model graph".into()));
    }
    if let Some(i) = ep.rho_root.iter().position(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(Error::InvalidProbs(format!(
            "root probability of {i} must be positive, found {}",
            ep.rho_root[i]
        )));
    }
    if let Some(d) = ep.rho_dir.iter().position(|r| !(r.is_finite() && *r > 0.0)) {
        let (p, c) = g.directed_edge(d);
        return Err(Error::InvalidProbs(format!(
            "probability of directed edge {p} -> {c} must be positive, found {}",
            ep.rho_dir[d]
        )));
    }
    Ok(())
}

/// Dual variables with cached λ tables.
#[derive(Debug, Clone)]
pub struct DualState<'a> {
    mrf: &'a PairwiseMrf,
    ep: &'a EdgeProbabilities,
    pub(crate) beta: Vec<Vec<f64>>,
    pub(crate) lambda: Vec<Vec<f64>>,
}

impl<'a> DualState<'a> {
    /// State at `β = 0`.
    pub fn new(mrf: &'a PairwiseMrf, ep: &'a EdgeProbabilities) -> Result<Self> {
        let beta = mrf.edge_pot.iter().map(|t| vec![0.0; t.len()]).collect();
        Self::with_beta(mrf, ep, beta)
    }

    pub fn with_beta(
        mrf: &'a PairwiseMrf,
        ep: &'a EdgeProbabilities,
        beta: Vec<Vec<f64>>,
    ) -> Result<Self> {
        check_dual_probs(mrf, ep)?;
        if beta.len() != mrf.num_edges()
            || beta.iter().zip(&mrf.edge_pot).any(|(b, t)| b.len() != t.len())
        {
            return Err(Error::InvalidArgument("β shape does not match the model".into()));
        }
        if beta.iter().flatten().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite("β".into()));
        }
        let mut state = DualState {
            mrf,
            ep,
            beta,
            lambda: vec![Vec::new(); mrf.graph.num_directed()],
        };
        for d in 0..mrf.graph.num_directed() {
            state.lambda[d] = state.compute_lambda(d);
        }
        Ok(state)
    }

    pub fn mrf(&self) -> &'a PairwiseMrf {
        self.mrf
    }

    pub fn probs(&self) -> &'a EdgeProbabilities {
        self.ep
    }

    pub fn beta(&self) -> &[Vec<f64>] {
        &self.beta
    }

    /// Replaces the β table of edge `e` and refreshes both λ caches.
    pub fn set_beta(&mut self, e: usize, table: Vec<f64>) -> Result<()> {
        if table.len() != self.beta[e].len() {
            return Err(Error::InvalidArgument(format!("β table for edge {e} has wrong size")));
        }
        if table.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite(format!("β table for edge {e}")));
        }
        self.beta[e] = table;
        self.refresh_edge(e);
        Ok(())
    }

    /// All β entries in edge order, row-major within an edge.
    pub fn beta_flat(&self) -> Vec<f64> {
        self.beta.iter().flatten().copied().collect()
    }

    pub fn set_beta_flat(&mut self, flat: &[f64]) -> Result<()> {
        let total: usize = self.beta.iter().map(Vec::len).sum();
        if flat.len() != total {
            return Err(Error::InvalidArgument("flat β has wrong length".into()));
        }
        if flat.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite("β".into()));
        }
        let mut offset = 0;
        for table in &mut self.beta {
            let len = table.len();
            table.copy_from_slice(&flat[offset..offset + len]);
            offset += len;
        }
        for d in 0..self.lambda.len() {
            self.lambda[d] = self.compute_lambda(d);
        }
        Ok(())
    }

    pub(crate) fn refresh_edge(&mut self, e: usize) {
        self.lambda[2 * e] = self.compute_lambda(2 * e);
        self.lambda[2 * e + 1] = self.compute_lambda(2 * e + 1);
    }

    /// Exponent `θ_uv/2 + δ β_uv` of the copy owned by `d`, as a
    /// `k_parent × k_child` row-major table.
    fn copy_potential(&self, d: usize) -> (usize, usize, Vec<f64>) {
        let g = &self.mrf.graph;
        let e = d / 2;
        let (u, v) = g.edge(e);
        let (ku, kv) = (self.mrf.cards[u], self.mrf.cards[v]);
        let (kp, kc) = if d % 2 == 0 { (ku, kv) } else { (kv, ku) };
        let sign = delta(d);
        let theta = &self.mrf.edge_pot[e];
        let beta = &self.beta[e];
        let mut table = Vec::with_capacity(kp * kc);
        for xp in 0..kp {
            for xc in 0..kc {
                let idx = canonical_index(d, xp, xc, ku, kv);
                table.push(0.5 * theta[idx] + sign * beta[idx]);
            }
        }
        (kp, kc, table)
    }

    fn compute_lambda(&self, d: usize) -> Vec<f64> {
        let rho = self.ep.rho_dir[d];
        let (kp, kc, pot) = self.copy_potential(d);
        let mut row = vec![0.0; kc];
        (0..kp)
            .map(|xp| {
                for xc in 0..kc {
                    row[xc] = pot[xp * kc + xc] / rho;
                }
                -rho * log_sum_exp(&row)
            })
            .collect()
    }

    /// λ table of `parent -> child` over the parent's states.
    pub fn lambda_table(&self, parent: usize, child: usize) -> Result<&[f64]> {
        let d = self
            .mrf
            .graph
            .directed_id(parent, child)
            .ok_or_else(|| Error::InvalidArgument(format!("{parent} -> {child} is not an edge")))?;
        Ok(&self.lambda[d])
    }

    /// Largest difference between the cached λ tables and a full recompute.
    pub fn verify_cache(&self) -> f64 {
        (0..self.lambda.len())
            .flat_map(|d| {
                let fresh = self.compute_lambda(d);
                self.lambda[d]
                    .iter()
                    .zip(fresh)
                    .map(|(a, b)| (a - b).abs())
                    .collect::<Vec<_>>()
            })
            .fold(0.0, f64::max)
    }

    /// Unnormalized log-weights of the singleton marginal of `i`.
    pub(crate) fn node_exponents(&self, i: usize) -> Vec<f64> {
        let g = &self.mrf.graph;
        let rho = self.ep.rho_root[i];
        let mut a = self.mrf.node_pot[i].clone();
        for nb in g.neighbors(i) {
            let d = outgoing_id(g, i, nb.edge);
            for (ax, l) in a.iter_mut().zip(&self.lambda[d]) {
                *ax -= l;
            }
        }
        for ax in &mut a {
            *ax /= rho;
        }
        a
    }

    /// Contribution of node `i` to the dual objective.
    pub(crate) fn node_term(&self, i: usize) -> f64 {
        self.ep.rho_root[i] * log_sum_exp(&self.node_exponents(i))
    }

    /// Normalized log singleton marginal of `i`.
    pub fn node_log_marginal(&self, i: usize) -> Vec<f64> {
        let mut a = self.node_exponents(i);
        let z = log_sum_exp(&a);
        for x in &mut a {
            *x -= z;
        }
        a
    }

    /// Log child-given-parent conditional of `d`, `k_parent × k_child`
    /// row-major. Rows are normalized through λ rather than by summing.
    pub fn log_conditional(&self, d: usize) -> Vec<f64> {
        let rho = self.ep.rho_dir[d];
        let (kp, kc, mut table) = self.copy_potential(d);
        for xp in 0..kp {
            let shift = self.lambda[d][xp] / rho;
            for xc in 0..kc {
                table[xp * kc + xc] = table[xp * kc + xc] / rho + shift;
            }
        }
        table
    }

    pub fn dual_objective(&self) -> f64 {
        (0..self.mrf.num_nodes()).map(|i| self.node_term(i)).sum()
    }

    /// Primal marginals obtained from the current β.
    pub fn to_primal(&self) -> PrimalMarginals {
        let n = self.mrf.num_nodes();
        let mu_node = (0..n)
            .map(|i| self.node_log_marginal(i).into_iter().map(f64::exp).collect())
            .collect();
        let mu_cond = (0..self.mrf.graph.num_directed())
            .map(|d| self.log_conditional(d).into_iter().map(f64::exp).collect())
            .collect();
        PrimalMarginals { mu_node, mu_cond }
    }

    /// `∂F_D/∂β_uv(x_u, x_v) = μ_{u|v}(x_u|x_v) μ_v(x_v) - μ_{v|u}(x_v|x_u) μ_u(x_u)`
    /// per canonical edge.
    pub fn dual_gradient(&self) -> Vec<Vec<f64>> {
        signed_copy_difference(&self.to_primal(), &self.mrf.graph)
    }
}

/// Singleton marginals and child-given-parent conditionals.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalMarginals {
    pub mu_node: Vec<Vec<f64>>,
    /// Per directed edge `p -> c`, a `k_p × k_c` row-major table of
    /// `μ(x_c | x_p)`.
    pub mu_cond: Vec<Vec<f64>>,
}

impl PrimalMarginals {
    /// Uniform marginals for the given cardinalities.
    pub fn uniform(graph: &Graph, cards: &[usize]) -> Self {
        let mu_node = cards.iter().map(|&k| vec![1.0 / k as f64; k]).collect();
        let mu_cond = (0..graph.num_directed())
            .map(|d| {
                let (p, c) = graph.directed_edge(d);
                vec![1.0 / cards[c] as f64; cards[p] * cards[c]]
            })
            .collect();
        PrimalMarginals { mu_node, mu_cond }
    }

    pub fn card(&self, i: usize) -> usize {
        self.mu_node[i].len()
    }

    /// The joint copy owned by `d`, `μ(x_c | x_p) μ_p(x_p)`, laid out as a
    /// canonical `k_u × k_v` table.
    pub fn joint_copy(&self, graph: &Graph, d: usize) -> Vec<f64> {
        let (u, v) = graph.edge(d / 2);
        let (ku, kv) = (self.card(u), self.card(v));
        let (p, c) = graph.directed_edge(d);
        let kc = self.card(c);
        let mut joint = vec![0.0; ku * kv];
        for xp in 0..self.card(p) {
            let mp = self.mu_node[p][xp];
            for xc in 0..kc {
                joint[canonical_index(d, xp, xc, ku, kv)] = self.mu_cond[d][xp * kc + xc] * mp;
            }
        }
        joint
    }

    /// Smallest entry over all singleton and conditional tables.
    pub fn min_entry(&self) -> f64 {
        self.mu_node
            .iter()
            .chain(&self.mu_cond)
            .flatten()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Smallest entry over singleton tables and joint copies.
    pub fn min_joint_entry(&self, graph: &Graph) -> f64 {
        let node_min = self.mu_node.iter().flatten().copied().fold(f64::INFINITY, f64::min);
        (0..graph.num_directed())
            .flat_map(|d| self.joint_copy(graph, d))
            .fold(node_min, f64::min)
    }
}

/// `J_{v->u} - J_{u->v}` per canonical edge, where `J_d` is the joint copy
/// of directed edge `d`.
fn signed_copy_difference(m: &PrimalMarginals, graph: &Graph) -> Vec<Vec<f64>> {
    (0..graph.num_edges())
        .map(|e| {
            let from_v = m.joint_copy(graph, 2 * e + 1);
            let from_u = m.joint_copy(graph, 2 * e);
            from_v.iter().zip(&from_u).map(|(a, b)| a - b).collect()
        })
        .collect()
}

/// Entrywise disagreement between the two joint copies of every edge.
pub fn copy_discrepancy(m: &PrimalMarginals, graph: &Graph) -> Vec<Vec<f64>> {
    signed_copy_difference(m, graph)
        .into_iter()
        .map(|t| t.into_iter().map(f64::abs).collect())
        .collect()
}

/// Max-norm violation of the dual optimality condition: the two joint copies
/// of each edge must coincide.
pub fn optimality_residual(m: &PrimalMarginals, graph: &Graph) -> f64 {
    copy_discrepancy(m, graph)
        .iter()
        .flatten()
        .copied()
        .fold(0.0, f64::max)
}

/// Largest violation over the directed consistency constraints: copy
/// equality, singleton normalization, conditional row normalization (the
/// copies' parent marginals then match the singletons) and nonnegativity.
pub fn consistency_check(m: &PrimalMarginals, graph: &Graph) -> f64 {
    let mut worst = optimality_residual(m, graph);
    for table in &m.mu_node {
        worst = worst.max((table.iter().sum::<f64>() - 1.0).abs());
    }
    for (d, table) in m.mu_cond.iter().enumerate() {
        let (_, c) = graph.directed_edge(d);
        for row in table.chunks(m.card(c)) {
            worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
        }
    }
    for v in m.mu_node.iter().chain(&m.mu_cond).flatten() {
        worst = worst.max(-v);
    }
    worst
}

/// How tree entropies are assembled from the marginals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntropyForm {
    /// Root entropy plus child-given-parent conditional entropies.
    Conditional,
    /// Sum of singleton entropies minus edge mutual informations.
    MutualInfo,
}

/// `H(X_c | X_p)` from the joint copy of `d`; rows weighted by the copy's own
/// parent marginal.
fn conditional_entropy(m: &PrimalMarginals, graph: &Graph, d: usize) -> f64 {
    let (p, c) = graph.directed_edge(d);
    let kc = m.card(c);
    m.mu_cond[d]
        .chunks(kc)
        .zip(&m.mu_node[p])
        .map(|(row, &w)| if w > 0.0 { w * entropy(row) } else { 0.0 })
        .sum()
}

/// Mutual information computed from the joint copy of `d` alone.
fn copy_mutual_information(m: &PrimalMarginals, graph: &Graph, d: usize) -> f64 {
    let (u, v) = graph.edge(d / 2);
    let (ku, kv) = (m.card(u), m.card(v));
    let joint = m.joint_copy(graph, d);
    let mut mu = vec![0.0; ku];
    let mut mv = vec![0.0; kv];
    for xu in 0..ku {
        for xv in 0..kv {
            mu[xu] += joint[xu * kv + xv];
            mv[xv] += joint[xu * kv + xv];
        }
    }
    entropy(&mu) + entropy(&mv) - joint.iter().copied().map(neg_p_log_p).sum::<f64>()
}

/// Entropy of a tree-structured distribution with the given marginals.
pub fn tree_entropy(m: &PrimalMarginals, graph: &Graph, tree: &DirectedTree, form: EntropyForm) -> f64 {
    let parent_edges = tree
        .parent
        .iter()
        .enumerate()
        .filter_map(|(c, p)| p.map(|p| graph.directed_id(p, c).expect("tree edge in graph")));
    match form {
        EntropyForm::Conditional => {
            entropy(&m.mu_node[tree.root])
                + parent_edges.map(|d| conditional_entropy(m, graph, d)).sum::<f64>()
        }
        EntropyForm::MutualInfo => {
            m.mu_node.iter().map(|t| entropy(t)).sum::<f64>()
                - parent_edges
                    .map(|d| copy_mutual_information(m, graph, d))
                    .sum::<f64>()
        }
    }
}

/// Expected potential `μ·θ`. Each edge potential is weighed against the
/// average of its two joint copies.
pub fn expected_potential(m: &PrimalMarginals, mrf: &PairwiseMrf) -> f64 {
    let g = &mrf.graph;
    let nodes: f64 = m
        .mu_node
        .iter()
        .zip(&mrf.node_pot)
        .map(|(mu, th)| mu.iter().zip(th).map(|(a, b)| a * b).sum::<f64>())
        .sum();
    let edges: f64 = (0..g.num_edges())
        .map(|e| {
            let a = m.joint_copy(g, 2 * e);
            let b = m.joint_copy(g, 2 * e + 1);
            mrf.edge_pot[e]
                .iter()
                .zip(a.iter().zip(&b))
                .map(|(t, (x, y))| t * 0.5 * (x + y))
                .sum::<f64>()
        })
        .sum();
    nodes + edges
}

/// Tree-reweighted free energy `-μ·θ - Σ_T ρ_T H(μ; T)`, with the tree
/// average expressed through root and directed-edge probabilities.
///
/// Consistency is not required. With [`EntropyForm::Conditional`] the edge
/// terms are conditional entropies; with [`EntropyForm::MutualInfo`] they
/// are mutual informations of the joint copies, and every node entropy
/// carries weight one.
pub fn primal_objective(
    m: &PrimalMarginals,
    ep: &EdgeProbabilities,
    mrf: &PairwiseMrf,
    form: EntropyForm,
) -> Result<f64> {
    check_marginal_shapes(m, mrf)?;
    let g = &mrf.graph;
    let entropy_term = match form {
        EntropyForm::Conditional => {
            let nodes: f64 = m
                .mu_node
                .iter()
                .zip(&ep.rho_root)
                .map(|(t, r)| r * entropy(t))
                .sum();
            let edges: f64 = (0..g.num_directed())
                .map(|d| ep.rho_dir[d] * conditional_entropy(m, g, d))
                .sum();
            nodes + edges
        }
        EntropyForm::MutualInfo => {
            let nodes: f64 = m.mu_node.iter().map(|t| entropy(t)).sum();
            let edges: f64 = (0..g.num_directed())
                .map(|d| ep.rho_dir[d] * copy_mutual_information(m, g, d))
                .sum();
            nodes - edges
        }
    };
    Ok(-expected_potential(m, mrf) - entropy_term)
}

pub(crate) fn check_marginal_shapes(m: &PrimalMarginals, mrf: &PairwiseMrf) -> Result<()> {
    let g = &mrf.graph;
    let ok = m.mu_node.len() == mrf.num_nodes()
        && m.mu_node.iter().zip(&mrf.cards).all(|(t, &k)| t.len() == k)
        && m.mu_cond.len() == g.num_directed()
        && (0..g.num_directed()).all(|d| {
            let (p, c) = g.directed_edge(d);
            m.mu_cond[d].len() == mrf.cards[p] * mrf.cards[c]
        });
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidArgument("marginal shapes do not match the model".into()))
    }
}

//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trw_core::{DualState, Graph, PairwiseMrf};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random labelled tree: vertex `i > 0` hangs off a uniform earlier vertex.
pub fn random_tree(rng: &mut impl Rng, n: usize) -> Graph {
    let edges = (1..n).map(|i| (rng.gen_range(0..i), i)).collect();
    Graph::new(n, edges).unwrap()
}

/// Random tree plus each remaining pair with probability `extra`.
pub fn random_connected(rng: &mut impl Rng, n: usize, extra: f64) -> Graph {
    let mut edges: Vec<(usize, usize)> = random_tree(rng, n).edges().to_vec();
    for u in 0..n {
        for v in u + 1..n {
            if !edges.contains(&(u, v)) && rng.gen_bool(extra) {
                edges.push((u, v));
            }
        }
    }
    Graph::new(n, edges).unwrap()
}

/// Potentials drawn uniformly from `[-scale, scale]`.
pub fn random_model(rng: &mut impl Rng, graph: Graph, cards: Vec<usize>, scale: f64) -> PairwiseMrf {
    let node_pot = cards
        .iter()
        .map(|&k| (0..k).map(|_| rng.gen_range(-scale..=scale)).collect())
        .collect();
    let edge_pot = graph
        .edges()
        .iter()
        .map(|&(u, v)| (0..cards[u] * cards[v]).map(|_| rng.gen_range(-scale..=scale)).collect())
        .collect();
    PairwiseMrf::new(graph, cards, node_pot, edge_pot).unwrap()
}

pub fn random_cards(rng: &mut impl Rng, n: usize, choices: &[usize]) -> Vec<usize> {
    (0..n).map(|_| choices[rng.gen_range(0..choices.len())]).collect()
}

pub fn random_beta(rng: &mut impl Rng, mrf: &PairwiseMrf, scale: f64) -> Vec<Vec<f64>> {
    mrf.edge_pot
        .iter()
        .map(|t| t.iter().map(|_| rng.gen_range(-scale..=scale)).collect())
        .collect()
}

pub fn random_state<'a>(
    rng: &mut impl Rng,
    mrf: &'a PairwiseMrf,
    ep: &'a trw_core::EdgeProbabilities,
    scale: f64,
) -> DualState<'a> {
    DualState::with_beta(mrf, ep, random_beta(rng, mrf, scale)).unwrap()
}

pub fn random_assignment(rng: &mut impl Rng, cards: &[usize]) -> Vec<usize> {
    cards.iter().map(|&k| rng.gen_range(0..k)).collect()
}

/// Brute-force oracle written independently of the library: recursive
/// enumeration with direct table lookups.
pub struct Brute {
    pub log_z: f64,
    pub node: Vec<Vec<f64>>,
    /// Per canonical edge, `k_u × k_v` joint.
    pub pair: Vec<Vec<f64>>,
}

pub fn brute_force(mrf: &PairwiseMrf) -> Brute {
    let n = mrf.cards.len();
    let mut scores = Vec::new();
    let mut configs = Vec::new();
    let mut x = vec![0usize; n];
    fn rec(
        i: usize,
        x: &mut Vec<usize>,
        mrf: &PairwiseMrf,
        scores: &mut Vec<f64>,
        configs: &mut Vec<Vec<usize>>,
    ) {
        if i == x.len() {
            let mut s = 0.0;
            for (j, &xj) in x.iter().enumerate() {
                s += mrf.node_pot[j][xj];
            }
            for (e, &(u, v)) in mrf.graph.edges().iter().enumerate() {
                s += mrf.edge_pot[e][x[u] * mrf.cards[v] + x[v]];
            }
            scores.push(s);
            configs.push(x.clone());
            return;
        }
        for s in 0..mrf.cards[i] {
            x[i] = s;
            rec(i + 1, x, mrf, scores, configs);
        }
    }
    rec(0, &mut x, mrf, &mut scores, &mut configs);
    let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = scores.iter().map(|s| (s - top).exp()).sum();
    let log_z = top + z.ln();
    let mut node: Vec<Vec<f64>> = mrf.cards.iter().map(|&k| vec![0.0; k]).collect();
    let mut pair: Vec<Vec<f64>> = mrf.edge_pot.iter().map(|t| vec![0.0; t.len()]).collect();
    for (s, x) in scores.iter().zip(&configs) {
        let p = (s - log_z).exp();
        for (j, &xj) in x.iter().enumerate() {
            node[j][xj] += p;
        }
        for (e, &(u, v)) in mrf.graph.edges().iter().enumerate() {
            pair[e][x[u] * mrf.cards[v] + x[v]] += p;
        }
    }
    Brute { log_z, node, pair }
}

/// Root and directed-edge frequencies over all directed spanning trees,
/// found by testing every `(n-1)`-subset of edges for acyclicity and then
/// orienting away from each root. Shares no code with the library.
pub struct SubsetTreeProbs {
    pub root: Vec<f64>,
    /// Indexed by `(parent, child)`.
    pub dir: std::collections::HashMap<(usize, usize), f64>,
    pub count: usize,
}

pub fn subset_tree_probs(graph: &Graph) -> SubsetTreeProbs {
    let n = graph.num_nodes();
    let m = graph.num_edges();
    let edges = graph.edges();
    let mut root = vec![0.0; n];
    let mut dir = std::collections::HashMap::new();
    let mut count = 0usize;
    let mut chosen = Vec::new();
    fn find(p: &mut [usize], a: usize) -> usize {
        let mut a = a;
        while p[a] != a {
            a = p[a];
        }
        a
    }
    fn subsets(
        start: usize,
        need: usize,
        m: usize,
        chosen: &mut Vec<usize>,
        out: &mut dyn FnMut(&[usize]),
    ) {
        if need == 0 {
            out(chosen);
            return;
        }
        for e in start..m {
            if m - e < need {
                break;
            }
            chosen.push(e);
            subsets(e + 1, need - 1, m, chosen, out);
            chosen.pop();
        }
    }
    let mut visit = |subset: &[usize]| {
        let mut p: Vec<usize> = (0..n).collect();
        for &e in subset {
            let (u, v) = edges[e];
            let (a, b) = (find(&mut p, u), find(&mut p, v));
            if a == b {
                return;
            }
            p[a] = b;
        }
        for r in 0..n {
            count += 1;
            root[r] += 1.0;
            // Breadth-first orientation away from r.
            let mut seen = vec![false; n];
            seen[r] = true;
            let mut queue = vec![r];
            while let Some(a) = queue.pop() {
                for &e in subset {
                    let (u, v) = edges[e];
                    let b = if u == a { v } else if v == a { u } else { continue };
                    if !seen[b] {
                        seen[b] = true;
                        *dir.entry((a, b)).or_insert(0.0) += 1.0;
                        queue.push(b);
                    }
                }
            }
        }
    };
    subsets(0, n - 1, m, &mut chosen, &mut visit);
    for r in &mut root {
        *r /= count as f64;
    }
    for v in dir.values_mut() {
        *v /= count as f64;
    }
    SubsetTreeProbs { root, dir, count }
}

/// Gradient magnitude above which a step-1e-5 central difference resolves a
/// relative error of 1e-6. Its own absolute error is about 1e-10 here.
pub const FD_RELATIVE_FLOOR: f64 = 1e-3;

/// Outcome of comparing analytic and central-difference gradients.
pub struct FdCheck {
    pub worst_relative: f64,
    pub relative_count: usize,
    pub worst_absolute_small: f64,
    pub small_count: usize,
}

/// Compares `dual_gradient` with central differences of the dual objective
/// at step `h` on the given flat coordinates.
pub fn fd_check(state: &DualState<'_>, coords: &[usize], h: f64) -> FdCheck {
    let grad: Vec<f64> = state.dual_gradient().into_iter().flatten().collect();
    let base = state.beta_flat();
    let mut probe = state.clone();
    let mut out = FdCheck { worst_relative: 0.0, relative_count: 0, worst_absolute_small: 0.0, small_count: 0 };
    for &k in coords {
        let mut b = base.clone();
        b[k] = base[k] + h;
        probe.set_beta_flat(&b).unwrap();
        let up = probe.dual_objective();
        b[k] = base[k] - h;
        probe.set_beta_flat(&b).unwrap();
        let down = probe.dual_objective();
        let fd = (up - down) / (2.0 * h);
        let g = grad[k];
        if g.abs() >= FD_RELATIVE_FLOOR {
            out.worst_relative = out.worst_relative.max((fd - g).abs() / g.abs());
            out.relative_count += 1;
        } else {
            out.worst_absolute_small = out.worst_absolute_small.max((fd - g).abs());
            out.small_count += 1;
        }
    }
    out
}

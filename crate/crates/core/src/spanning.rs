//! Root and directed-edge probabilities of distributions over directed
//! spanning trees.
//!
//! Storage convention: directed quantities are keyed by `(parent, child)`
//! through [`Graph::directed_id`]. The appearance probability of the edge
//! `parent -> child` is what the usual subscript notation writes as
//! `ρ_{child|parent}`.

use std::fmt::Write as _;

use log::warn;
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::math::fmt17;
use crate::model::{parse_f64, parse_usize, Graph, LineReader, ValidationReport};

/// Largest graph [`enumerate_directed_trees`] accepts.
pub const MAX_ENUMERATION_NODES: usize = 12;

/// Condition number above which a matrix-tree minor triggers a warning.
pub const CONDITION_WARNING: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeProbabilities {
    /// Probability that vertex `i` is the root.
    pub rho_root: Vec<f64>,
    /// Probability of each directed edge, indexed by directed edge id.
    pub rho_dir: Vec<f64>,
}

impl EdgeProbabilities {
    pub fn root(&self, i: usize) -> f64 {
        self.rho_root[i]
    }

    /// Appearance probability of `parent -> child`.
    pub fn dir(&self, graph: &Graph, parent: usize, child: usize) -> Option<f64> {
        graph.directed_id(parent, child).map(|d| self.rho_dir[d])
    }

    /// Undirected appearance probability of canonical edge `e`.
    pub fn undirected(&self, e: usize) -> f64 {
        self.rho_dir[2 * e] + self.rho_dir[2 * e + 1]
    }

    /// Renders the TRWRHO text format.
    pub fn to_text(&self, graph: &Graph) -> String {
        let mut out = String::from("TRWRHO 1\n");
        for (i, r) in self.rho_root.iter().enumerate() {
            let _ = writeln!(out, "root {i} {}", fmt17(*r));
        }
        for d in 0..graph.num_directed() {
            let (parent, child) = graph.directed_edge(d);
            let _ = writeln!(out, "dir {parent} {child} {}", fmt17(self.rho_dir[d]));
        }
        out
    }

    /// Parses the TRWRHO text format against `graph`. Entries may appear in
    /// any order but every root and directed edge must be present once.
    pub fn from_text(text: &str, graph: &Graph) -> Result<Self> {
        let n = graph.num_nodes();
        let mut lines = LineReader::new(text);
        let (ln, toks) = lines.next_required("header")?;
        if toks != ["TRWRHO", "1"] {
            return Err(Error::parse(ln, "expected header `TRWRHO 1`"));
        }
        let mut root: Vec<Option<f64>> = vec![None; n];
        let mut dir: Vec<Option<f64>> = vec![None; graph.num_directed()];
        while let Some((ln, toks)) = lines.next() {
            match toks.first().copied() {
                Some("root") => {
                    if toks.len() != 3 {
                        return Err(Error::parse(ln, "expected `root i value`"));
                    }
                    let i = parse_usize(ln, toks[1])?;
                    if i >= n {
                        return Err(Error::parse(ln, format!("unknown vertex {i}")));
                    }
                    if root[i].replace(parse_f64(ln, toks[2])?).is_some() {
                        return Err(Error::parse(ln, format!("duplicate root entry {i}")));
                    }
                }
                Some("dir") => {
                    if toks.len() != 4 {
                        return Err(Error::parse(ln, "expected `dir parent child value`"));
                    }
                    let parent = parse_usize(ln, toks[1])?;
                    let child = parse_usize(ln, toks[2])?;
                    let d = graph.directed_id(parent, child).ok_or_else(|| {
                        Error::parse(ln, format!("unknown edge {parent} -> {child}"))
                    })?;
                    if dir[d].replace(parse_f64(ln, toks[3])?).is_some() {
                        return Err(Error::parse(
                            ln,
                            format!("duplicate entry for {parent} -> {child}"),
                        ));
                    }
                }
                _ => return Err(Error::parse(ln, "expected `root` or `dir` line")),
            }
        }
        let rho_root = root
            .into_iter()
            .enumerate()
            .map(|(i, r)| r.ok_or_else(|| Error::InvalidProbs(format!("missing root entry {i}"))))
            .collect::<Result<Vec<_>>>()?;
        let rho_dir = dir
            .into_iter()
            .enumerate()
            .map(|(d, r)| {
                r.ok_or_else(|| {
                    let (p, c) = graph.directed_edge(d);
                    Error::InvalidProbs(format!("missing dir entry {p} -> {c}"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EdgeProbabilities { rho_root, rho_dir })
    }
}

/// A spanning tree with all edges oriented away from `root`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DirectedTree {
    pub root: usize,
    /// `parent[i]` is `None` only for the root.
    pub parent: Vec<Option<usize>>,
}

impl DirectedTree {
    /// Checks the tree against `graph`.
    pub fn check(&self, graph: &Graph) -> Result<()> {
        let n = graph.num_nodes();
        if self.parent.len() != n || self.root >= n {
            return Err(Error::InvalidArgument("tree size does not match graph".into()));
        }
        for (i, p) in self.parent.iter().enumerate() {
            match p {
                None if i != self.root => {
                    return Err(Error::InvalidArgument(format!("vertex {i} has no parent")))
                }
                Some(_) if i == self.root => {
                    return Err(Error::InvalidArgument("root has a parent".into()))
                }
                Some(p) if graph.find_edge(*p, i).is_none() => {
                    return Err(Error::InvalidArgument(format!(
                        "parent edge {p} -> {i} is not a graph edge"
                    )))
                }
                _ => {}
            }
        }
        for start in 0..n {
            let mut v = start;
            let mut steps = 0;
            while let Some(p) = self.parent[v] {
                v = p;
                steps += 1;
                if steps > n {
                    return Err(Error::InvalidArgument("parent pointers form a cycle".into()));
                }
            }
        }
        Ok(())
    }
}

/// Every directed spanning tree of `graph`: each undirected spanning tree
/// once per choice of root.
pub fn enumerate_directed_trees(graph: &Graph) -> Result<Vec<DirectedTree>> {
    let n = graph.num_nodes();
    if n > MAX_ENUMERATION_NODES {
        return Err(Error::SizeGuard(format!(
            "{n} nodes exceeds the enumeration limit of {MAX_ENUMERATION_NODES}"
        )));
    }
    if !graph.is_connected() {
        return Err(Error::Disconnected);
    }
    let mut undirected = Vec::new();
    let mut chosen = Vec::with_capacity(n.saturating_sub(1));
    let mut uf = UnionFind::new(n);
    collect_spanning_trees(graph, 0, &mut uf, &mut chosen, &mut undirected);

    let mut trees = Vec::with_capacity(undirected.len() * n);
    for edges in &undirected {
        let mut adj = vec![Vec::new(); n];
        for &e in edges {
            let (u, v) = graph.edge(e);
            adj[u].push(v);
            adj[v].push(u);
        }
        for root in 0..n {
            let mut parent = vec![None; n];
            let mut seen = vec![false; n];
            let mut stack = vec![root];
            seen[root] = true;
            while let Some(i) = stack.pop() {
                for &j in &adj[i] {
                    if !seen[j] {
                        seen[j] = true;
                        parent[j] = Some(i);
                        stack.push(j);
                    }
                }
            }
            trees.push(DirectedTree { root, parent });
        }
    }
    Ok(trees)
}

fn collect_spanning_trees(
    graph: &Graph,
    next: usize,
    uf: &mut UnionFind,
    chosen: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    let needed = graph.num_nodes() - 1;
    if chosen.len() == needed {
        out.push(chosen.clone());
        return;
    }
    if graph.num_edges() - next < needed - chosen.len() {
        return;
    }
    let (u, v) = graph.edge(next);
    if uf.find(u) != uf.find(v) {
        let snapshot = uf.clone();
        uf.union(u, v);
        chosen.push(next);
        collect_spanning_trees(graph, next + 1, uf, chosen, out);
        chosen.pop();
        *uf = snapshot;
    }
    collect_spanning_trees(graph, next + 1, uf, chosen, out);
}

#[derive(Clone)]
struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        self.parent[ra] = rb;
    }
}

/// Root and edge probabilities of a weighted list of directed trees.
pub fn probs_from_trees(graph: &Graph, trees: &[(DirectedTree, f64)]) -> Result<EdgeProbabilities> {
    let mut total = 0.0;
    for (tree, w) in trees {
        if !(*w >= 0.0) || !w.is_finite() {
            return Err(Error::InvalidArgument(format!("tree weight {w} is not a probability")));
        }
        total += w;
        tree.check(graph)?;
    }
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "tree weights sum to {total}, expected 1"
        )));
    }
    let mut rho_root = vec![0.0; graph.num_nodes()];
    let mut rho_dir = vec![0.0; graph.num_directed()];
    for (tree, w) in trees {
        rho_root[tree.root] += w;
        for (child, p) in tree.parent.iter().enumerate() {
            if let Some(p) = p {
                let d = graph.directed_id(*p, child).expect("checked above");
                rho_dir[d] += w;
            }
        }
    }
    Ok(EdgeProbabilities { rho_root, rho_dir })
}

/// Probabilities under the uniform distribution over directed spanning trees.
///
/// For each root `r` the reduced Laplacian (row and column `r` removed) is
/// inverted; with unit weights the marginal of `h -> m` among trees rooted
/// at `r` is `L⁻¹[m][m] - L⁻¹[m][h]`, the second term dropped when `h = r`.
/// Every root carries the same number of trees, so roots are averaged with
/// weight `1/n`.
pub fn uniform_tree_probs(graph: &Graph) -> Result<EdgeProbabilities> {
    let n = graph.num_nodes();
    if !graph.is_connected() {
        return Err(Error::Disconnected);
    }
    let mut rho_dir = vec![0.0; graph.num_directed()];
    if n == 1 {
        return Ok(EdgeProbabilities {
            rho_root: vec![1.0],
            rho_dir,
        });
    }
    let mut per_root = vec![0.0; graph.num_directed()];
    for r in 0..n {
        let inv = reduced_laplacian_inverse(graph, r)?;
        let idx = |v: usize| if v < r { v } else { v - 1 };
        for (d, slot) in per_root.iter_mut().enumerate() {
            let (h, m) = graph.directed_edge(d);
            *slot = if m == r {
                0.0
            } else {
                let mm = inv[(idx(m), idx(m))];
                if h == r {
                    mm
                } else {
                    mm - inv[(idx(m), idx(h))]
                }
            };
        }
        for (acc, p) in rho_dir.iter_mut().zip(&per_root) {
            *acc += p;
        }
    }
    let inv_n = 1.0 / n as f64;
    for p in &mut rho_dir {
        *p *= inv_n;
    }
    Ok(EdgeProbabilities {
        rho_root: vec![inv_n; n],
        rho_dir,
    })
}

fn reduced_laplacian_inverse(graph: &Graph, root: usize) -> Result<DMatrix<f64>> {
    let n = graph.num_nodes();
    let idx = |v: usize| if v < root { v } else { v - 1 };
    let mut lap = DMatrix::<f64>::zeros(n - 1, n - 1);
    for v in (0..n).filter(|&v| v != root) {
        lap[(idx(v), idx(v))] = graph.degree(v) as f64;
    }
    for &(u, v) in graph.edges() {
        if u != root && v != root {
            lap[(idx(u), idx(v))] = -1.0;
            lap[(idx(v), idx(u))] = -1.0;
        }
    }
    let norm1 = column_sum_norm(&lap);
    let inv = lap
        .lu()
        .try_inverse()
        .ok_or(Error::SingularMinor(root))?;
    let cond = norm1 * column_sum_norm(&inv);
    if !cond.is_finite() {
        return Err(Error::SingularMinor(root));
    }
    if cond > CONDITION_WARNING {
        warn!("matrix-tree minor for root {root} has condition number {cond:e}");
    }
    Ok(inv)
}

fn column_sum_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Lists every violated invariant of `ep` on `graph`. With `strict_positive`
/// every root and directed-edge probability must also be positive.
pub fn validate_probs(ep: &EdgeProbabilities, graph: &Graph, strict_positive: bool) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = graph.num_nodes();
    if ep.rho_root.len() != n || ep.rho_dir.len() != graph.num_directed() {
        report.push(format!(
            "shape mismatch: {} roots and {} directed entries for {} nodes and {} directed edges",
            ep.rho_root.len(),
            ep.rho_dir.len(),
            n,
            graph.num_directed()
        ));
        return report;
    }
    for (i, &r) in ep.rho_root.iter().enumerate() {
        if !r.is_finite() || r < 0.0 {
            report.push(format!("root probability of {i} is {r}"));
        } else if strict_positive && r == 0.0 {
            report.push(format!("root probability of {i} is zero"));
        }
    }
    for (d, &p) in ep.rho_dir.iter().enumerate() {
        let (parent, child) = graph.directed_edge(d);
        if !p.is_finite() || p < 0.0 {
            report.push(format!("probability of directed edge {parent} -> {child} is {p}"));
        } else if strict_positive && p == 0.0 {
            report.push(format!("probability of directed edge {parent} -> {child} is zero"));
        }
    }
    let mass: f64 = ep.rho_root.iter().sum();
    if (mass - 1.0).abs() > 1e-12 {
        let shown = format!("{mass:.12}");
        let shown = shown.trim_end_matches('0').trim_end_matches('.');
        report.push(format!("root mass {shown} ≠ 1"));
    }
    for i in 0..n {
        let incoming: f64 = graph
            .neighbors(i)
            .iter()
            .map(|nb| ep.rho_dir[graph.directed_id(nb.vertex, i).expect("neighbor edge")])
            .sum();
        let total = ep.rho_root[i] + incoming;
        if (total - 1.0).abs() > 1e-10 {
            report.push(format!(
                "vertex {i}: root plus incoming edge probability is {total}, expected 1"
            ));
        }
    }
    for (e, &(u, v)) in graph.edges().iter().enumerate() {
        let both = ep.undirected(e);
        if both > 1.0 + 1e-12 {
            report.push(format!("edge ({u}, {v}): both orientations sum to {both} > 1"));
        }
    }
    report
}

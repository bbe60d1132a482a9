//! Pairwise Markov random fields over discrete variables.
//!
//! Potentials are stored in the natural-log domain. Every undirected edge is
//! kept in canonical orientation `(u, v)` with `u < v`; edge tables are
//! row-major with the row indexed by `x_u`.
//!
//! The text format read and written here looks like
//!
//! ```text
//! TRWMRF 1
//! nodes 2
//! cards 2 2
//! edges 1
//! 0 1
//! nodepot 0 0 0
//! nodepot 1 0 0
//! edgepot 0 1 1 -1 -1 1
//! ```
//!
//! Lines starting with `#` are comments.

use std::collections::{HashSet, VecDeque};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math::fmt17;

/// A neighbor of a vertex together with the index of the connecting edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Neighbor {
    pub vertex: usize,
    pub edge: usize,
}

/// Undirected simple graph with canonical edge order.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<Neighbor>>,
}

impl Graph {
    /// Builds a graph from canonical edges. Rejects self-loops, duplicates,
    /// out-of-range indices and `u > v`. Connectivity is not checked here,
    /// see [`Graph::is_connected`].
    pub fn new(n: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(edges.len());
        for &(u, v) in &edges {
            if u >= n || v >= n {
                return Err(Error::InvalidModel(format!(
                    "edge ({u}, {v}) out of range for {n} nodes"
                )));
            }
            if u == v {
                return Err(Error::InvalidModel(format!("self-loop at {u}")));
            }
            if u > v {
                return Err(Error::InvalidModel(format!(
                    "edge ({u}, {v}) not in canonical orientation"
                )));
            }
            if !seen.insert((u, v)) {
                return Err(Error::InvalidModel(format!("duplicate edge ({u}, {v})")));
            }
        }
        let mut adjacency = vec![Vec::new(); n];
        for (e, &(u, v)) in edges.iter().enumerate() {
            adjacency[u].push(Neighbor { vertex: v, edge: e });
            adjacency[v].push(Neighbor { vertex: u, edge: e });
        }
        Ok(Graph {
            n,
            edges,
            adjacency,
        })
    }

    /// 4-neighbor grid, vertex `r * cols + c`.
    pub fn grid(rows: usize, cols: usize) -> Self {
        let mut edges = Vec::with_capacity(2 * rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let v = r * cols + c;
                if c + 1 < cols {
                    edges.push((v, v + 1));
                }
                if r + 1 < rows {
                    edges.push((v, v + cols));
                }
            }
        }
        Graph::new(rows * cols, edges).expect("grid edges are canonical")
    }

    pub fn complete(n: usize) -> Self {
        let edges = (0..n)
            .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
            .collect();
        Graph::new(n, edges).expect("complete graph edges are canonical")
    }

    pub fn path(n: usize) -> Self {
        Graph::new(n, (1..n).map(|v| (v - 1, v)).collect()).expect("path edges are canonical")
    }

    pub fn cycle(n: usize) -> Self {
        let mut edges: Vec<_> = (1..n).map(|v| (v - 1, v)).collect();
        edges.push((0, n - 1));
        Graph::new(n, edges).expect("cycle edges are canonical")
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> (usize, usize) {
        self.edges[e]
    }

    pub fn neighbors(&self, i: usize) -> &[Neighbor] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    /// Index of the edge joining `a` and `b`, in either orientation.
    pub fn find_edge(&self, a: usize, b: usize) -> Option<usize> {
        self.adjacency
            .get(a)?
            .iter()
            .find(|nb| nb.vertex == b)
            .map(|nb| nb.edge)
    }

    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return false;
        }
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for nb in &self.adjacency[i] {
                if !seen[nb.vertex] {
                    seen[nb.vertex] = true;
                    count += 1;
                    queue.push_back(nb.vertex);
                }
            }
        }
        count == self.n
    }

    /// Number of directed edges, two per undirected edge.
    pub fn num_directed(&self) -> usize {
        2 * self.edges.len()
    }

    /// Directed edge id for `parent -> child`.
    ///
    /// For canonical edge `e = (u, v)`, id `2e` is `u -> v` and id `2e + 1`
    /// is `v -> u`.
    pub fn directed_id(&self, parent: usize, child: usize) -> Option<usize> {
        let e = self.find_edge(parent, child)?;
        let (u, _) = self.edges[e];
        Some(if parent == u { 2 * e } else { 2 * e + 1 })
    }

    /// `(parent, child)` of a directed edge id.
    #[inline]
    pub fn directed_edge(&self, d: usize) -> (usize, usize) {
        let (u, v) = self.edges[d / 2];
        if d % 2 == 0 {
            (u, v)
        } else {
            (v, u)
        }
    }

    /// True when the graph is connected and has exactly `n - 1` edges.
    pub fn is_tree(&self) -> bool {
        self.edges.len() + 1 == self.n && self.is_connected()
    }
}

/// Pairwise MRF `p(x) ∝ exp(Σ_ij θ_ij(x_i, x_j) + Σ_i θ_i(x_i))`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseMrf {
    pub graph: Graph,
    pub cards: Vec<usize>,
    pub node_pot: Vec<Vec<f64>>,
    /// Row-major `k_u × k_v` table per canonical edge.
    pub edge_pot: Vec<Vec<f64>>,
}

/// Problems found by [`PairwiseMrf::validate`]. Empty means valid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<String>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    pub(crate) fn push(&mut self, issue: impl Into<String>) {
        self.issues.push(issue.into());
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for issue in &self.issues {
            writeln!(f, "{issue}")?;
        }
        Ok(())
    }
}

impl PairwiseMrf {
    /// Validated constructor: fails with every problem in the message.
    pub fn new(
        graph: Graph,
        cards: Vec<usize>,
        node_pot: Vec<Vec<f64>>,
        edge_pot: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let mrf = PairwiseMrf {
            graph,
            cards,
            node_pot,
            edge_pot,
        };
        let report = mrf.validate();
        if !report.is_empty() {
            if report.issues.iter().any(|s| s == "disconnected") && report.issues.len() == 1 {
                return Err(Error::Disconnected);
            }
            return Err(Error::InvalidModel(report.issues.join("; ")));
        }
        Ok(mrf)
    }

    /// All-zero potentials on `graph` with the given cardinalities.
    pub fn zeros(graph: Graph, cards: Vec<usize>) -> Result<Self> {
        let node_pot = cards.iter().map(|&k| vec![0.0; k]).collect();
        let edge_pot = graph
            .edges()
            .iter()
            .map(|&(u, v)| vec![0.0; cards.get(u).unwrap_or(&0) * cards.get(v).unwrap_or(&0)])
            .collect();
        PairwiseMrf::new(graph, cards, node_pot, edge_pot)
    }

    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    pub fn num_edges(&self) -> usize {
        self.graph.num_edges()
    }

    /// `θ_uv(x_u, x_v)` for canonical edge `e = (u, v)`.
    #[inline]
    pub fn edge_value(&self, e: usize, xu: usize, xv: usize) -> f64 {
        let (_, v) = self.graph.edge(e);
        self.edge_pot[e][xu * self.cards[v] + xv]
    }

    /// Lists every violated invariant.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let n = self.graph.num_nodes();
        if n == 0 {
            report.push("graph has no nodes");
            return report;
        }
        if self.cards.len() != n {
            report.push(format!("cards has {} entries, expected {n}", self.cards.len()));
        }
        for (i, &k) in self.cards.iter().enumerate() {
            if k < 2 {
                report.push(format!("node {i} has cardinality {k} < 2"));
            }
        }
        if self.node_pot.len() != n {
            report.push(format!(
                "node_pot has {} tables, expected {n}",
                self.node_pot.len()
            ));
        }
        for (i, table) in self.node_pot.iter().enumerate() {
            if let Some(&k) = self.cards.get(i) {
                if table.len() != k {
                    report.push(format!(
                        "node_pot[{i}] has {} entries, expected {k}",
                        table.len()
                    ));
                }
            }
            for (x, v) in table.iter().enumerate() {
                if !v.is_finite() {
                    report.push(format!("node_pot[{i}][{x}] is not finite ({v})"));
                }
            }
        }
        let m = self.graph.num_edges();
        if self.edge_pot.len() != m {
            report.push(format!(
                "edge_pot has {} tables, expected {m}",
                self.edge_pot.len()
            ));
        }
        for (e, table) in self.edge_pot.iter().enumerate() {
            if e < m {
                let (u, v) = self.graph.edge(e);
                if let (Some(&ku), Some(&kv)) = (self.cards.get(u), self.cards.get(v)) {
                    if table.len() != ku * kv {
                        report.push(format!(
                            "edge_pot[{e}] ({u}, {v}) has {} entries, expected {}",
                            table.len(),
                            ku * kv
                        ));
                    }
                }
            }
            for (idx, val) in table.iter().enumerate() {
                if !val.is_finite() {
                    report.push(format!("edge_pot[{e}][{idx}] is not finite ({val})"));
                }
            }
        }
        if !self.graph.is_connected() {
            report.push("disconnected");
        }
        report
    }

    /// Log-unnormalized probability of a full assignment.
    pub fn score(&self, x: &[usize]) -> Result<f64> {
        self.check_assignment(x)?;
        let mut s: f64 = x
            .iter()
            .enumerate()
            .map(|(i, &xi)| self.node_pot[i][xi])
            .sum();
        for (e, &(u, v)) in self.graph.edges().iter().enumerate() {
            s += self.edge_value(e, x[u], x[v]);
        }
        Ok(s)
    }

    pub(crate) fn check_assignment(&self, x: &[usize]) -> Result<()> {
        if x.len() != self.num_nodes() {
            return Err(Error::InvalidArgument(format!(
                "assignment has {} entries, expected {}",
                x.len(),
                self.num_nodes()
            )));
        }
        for (i, (&xi, &k)) in x.iter().zip(&self.cards).enumerate() {
            if xi >= k {
                return Err(Error::InvalidArgument(format!(
                    "state {xi} out of range for node {i} with {k} states"
                )));
            }
        }
        Ok(())
    }

    /// Renders the model in the TRWMRF text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("TRWMRF 1\n");
        let _ = writeln!(out, "nodes {}", self.num_nodes());
        out.push_str("cards");
        for k in &self.cards {
            let _ = write!(out, " {k}");
        }
        out.push('\n');
        let _ = writeln!(out, "edges {}", self.num_edges());
        for &(u, v) in self.graph.edges() {
            let _ = writeln!(out, "{u} {v}");
        }
        for (i, table) in self.node_pot.iter().enumerate() {
            let _ = write!(out, "nodepot {i}");
            for &v in table {
                let _ = write!(out, " {}", fmt17(v));
            }
            out.push('\n');
        }
        for (e, table) in self.edge_pot.iter().enumerate() {
            let (u, v) = self.graph.edge(e);
            let _ = write!(out, "edgepot {u} {v}");
            for &val in table {
                let _ = write!(out, " {}", fmt17(val));
            }
            out.push('\n');
        }
        out
    }

    /// Parses the TRWMRF text format and validates the result.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = LineReader::new(text);

        let (ln, toks) = lines.next_required("header")?;
        if toks != ["TRWMRF", "1"] {
            return Err(Error::parse(ln, "expected header `TRWMRF 1`"));
        }
        let (ln, toks) = lines.next_required("nodes line")?;
        let n = keyword_count(ln, &toks, "nodes")?;
        if n == 0 {
            return Err(Error::parse(ln, "model must have at least one node"));
        }

        let (ln, toks) = lines.next_required("cards line")?;
        if toks.first() != Some(&"cards") {
            return Err(Error::parse(ln, "expected `cards`"));
        }
        if toks.len() != n + 1 {
            return Err(Error::parse(
                ln,
                format!("expected {n} cardinalities, found {}", toks.len() - 1),
            ));
        }
        let cards = toks[1..]
            .iter()
            .map(|t| parse_usize(ln, t))
            .collect::<Result<Vec<_>>>()?;
        if let Some(i) = cards.iter().position(|&k| k < 2) {
            return Err(Error::parse(ln, format!("node {i} has cardinality < 2")));
        }

        let (ln, toks) = lines.next_required("edges line")?;
        let m = keyword_count(ln, &toks, "edges")?;
        let mut edges = Vec::with_capacity(m);
        let mut seen = HashSet::with_capacity(m);
        for _ in 0..m {
            let (ln, toks) = lines.next_required("edge line")?;
            if toks.len() != 2 {
                return Err(Error::parse(ln, "expected `u v`"));
            }
            let u = parse_usize(ln, toks[0])?;
            let v = parse_usize(ln, toks[1])?;
            if u >= n || v >= n {
                return Err(Error::parse(ln, format!("edge ({u}, {v}) out of range")));
            }
            if u == v {
                return Err(Error::parse(ln, format!("self-loop at {u}")));
            }
            if u > v {
                return Err(Error::parse(ln, "edge not in canonical orientation"));
            }
            if !seen.insert((u, v)) {
                return Err(Error::parse(ln, format!("duplicate edge ({u}, {v})")));
            }
            edges.push((u, v));
        }
        let graph = Graph::new(n, edges)?;

        let mut node_pot = Vec::with_capacity(n);
        for i in 0..n {
            let (ln, toks) = lines.next_required("nodepot line")?;
            if toks.len() < 2 || toks[0] != "nodepot" {
                return Err(Error::parse(ln, "expected `nodepot i ...`"));
            }
            if parse_usize(ln, toks[1])? != i {
                return Err(Error::parse(ln, format!("expected nodepot for node {i}")));
            }
            let values = parse_values(ln, &toks[2..])?;
            if values.len() != cards[i] {
                return Err(Error::parse(
                    ln,
                    format!(
                        "shape mismatch: node {i} expects {} values, found {}",
                        cards[i],
                        values.len()
                    ),
                ));
            }
            node_pot.push(values);
        }

        let mut edge_pot = Vec::with_capacity(m);
        for e in 0..m {
            let (u, v) = graph.edge(e);
            let (ln, toks) = lines.next_required("edgepot line")?;
            if toks.len() < 3 || toks[0] != "edgepot" {
                return Err(Error::parse(ln, "expected `edgepot u v ...`"));
            }
            let (pu, pv) = (parse_usize(ln, toks[1])?, parse_usize(ln, toks[2])?);
            if (pu, pv) != (u, v) {
                return Err(Error::parse(
                    ln,
                    format!("expected edgepot for edge ({u}, {v}), found ({pu}, {pv})"),
                ));
            }
            let values = parse_values(ln, &toks[3..])?;
            let expected = cards[u] * cards[v];
            if values.len() != expected {
                return Err(Error::parse(
                    ln,
                    format!(
                        "shape mismatch: edge ({u}, {v}) expects {expected} values, found {}",
                        values.len()
                    ),
                ));
            }
            edge_pot.push(values);
        }

        if let Some((ln, _)) = lines.next() {
            return Err(Error::parse(ln, "unexpected trailing content"));
        }
        if !graph.is_connected() {
            return Err(Error::Disconnected);
        }
        PairwiseMrf::new(graph, cards, node_pot, edge_pot)
    }
}

/// Parameters of a random ±1 Ising grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsingSpec {
    pub rows: usize,
    pub cols: usize,
    /// Fields are drawn from `[-alpha_field, alpha_field]`.
    pub alpha_field: f64,
    /// Couplings are drawn from `[-alpha_inter, alpha_inter]`.
    pub alpha_inter: f64,
    pub seed: u64,
}

/// Spin value of a binary state: state 0 is `+1`, state 1 is `-1`.
#[inline]
pub fn spin(state: usize) -> f64 {
    if state == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Symmetric uniform draw `alpha * (2u - 1)` where `u` is the generator's
/// standard 53-bit float in `[0, 1)`.
fn symmetric_uniform(rng: &mut ChaCha8Rng, alpha: f64) -> f64 {
    let u: f64 = rng.gen();
    alpha * (2.0 * u - 1.0)
}

/// Random Ising grid.
///
/// The generator is ChaCha8 seeded with `seed_from_u64(spec.seed)`. Fields are
/// drawn first in vertex order, then couplings in canonical edge order.
pub fn gen_ising_grid(spec: &IsingSpec) -> Result<PairwiseMrf> {
    if spec.rows == 0 || spec.cols == 0 || spec.rows * spec.cols < 2 {
        return Err(Error::InvalidArgument(format!(
            "grid {}x{} needs at least two nodes",
            spec.rows, spec.cols
        )));
    }
    if !(spec.alpha_field >= 0.0 && spec.alpha_field.is_finite())
        || !(spec.alpha_inter >= 0.0 && spec.alpha_inter.is_finite())
    {
        return Err(Error::InvalidArgument(
            "field and interaction ranges must be finite and non-negative".into(),
        ));
    }
    let graph = Graph::grid(spec.rows, spec.cols);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let node_pot = (0..graph.num_nodes())
        .map(|_| {
            let h = symmetric_uniform(&mut rng, spec.alpha_field);
            vec![h * spin(0), h * spin(1)]
        })
        .collect();
    let edge_pot = (0..graph.num_edges())
        .map(|_| {
            let w = symmetric_uniform(&mut rng, spec.alpha_inter);
            let mut t = Vec::with_capacity(4);
            for a in 0..2 {
                for b in 0..2 {
                    t.push(w * spin(a) * spin(b));
                }
            }
            t
        })
        .collect();
    let n = graph.num_nodes();
    PairwiseMrf::new(graph, vec![2; n], node_pot, edge_pot)
}

pub(crate) struct LineReader<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> LineReader<'a> {
    pub(crate) fn new(text: &'a str) -> Self {
        LineReader {
            inner: text.lines().enumerate(),
        }
    }

    pub(crate) fn next(&mut self) -> Option<(usize, Vec<&'a str>)> {
        for (idx, line) in self.inner.by_ref() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            return Some((idx + 1, trimmed.split_whitespace().collect()));
        }
        None
    }

    pub(crate) fn next_required(&mut self, what: &str) -> Result<(usize, Vec<&'a str>)> {
        let last = self.inner.clone().last().map(|(i, _)| i + 1);
        self.next().ok_or_else(|| {
            Error::parse(last.unwrap_or(0) + 1, format!("unexpected end of input, expected {what}"))
        })
    }
}

pub(crate) fn parse_usize(line: usize, tok: &str) -> Result<usize> {
    tok.parse()
        .map_err(|_| Error::parse(line, format!("invalid index `{tok}`")))
}

pub(crate) fn parse_f64(line: usize, tok: &str) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| Error::parse(line, format!("invalid number `{tok}`")))?;
    if !v.is_finite() {
        return Err(Error::parse(line, format!("non-finite value `{tok}`")));
    }
    Ok(v)
}

fn parse_values(line: usize, toks: &[&str]) -> Result<Vec<f64>> {
    toks.iter().map(|t| parse_f64(line, t)).collect()
}

fn keyword_count(line: usize, toks: &[&str], keyword: &str) -> Result<usize> {
    if toks.len() != 2 || toks[0] != keyword {
        return Err(Error::parse(line, format!("expected `{keyword} <count>`")));
    }
    parse_usize(line, toks[1])
}

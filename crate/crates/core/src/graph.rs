//! Tripartite benchmark–author–institution graph.
//!
//! Edges are authorship (benchmark–author) and affiliation
//! (author–institution); institutions reach benchmarks only through
//! authors. Author identity is the exact name string.
//!
//! The structural algorithms (peeling, Brandes betweenness) live on
//! [`SimpleGraph`], a plain undirected graph over dense indices, so they can be
//! exercised on arbitrary shapes; [`TripartiteGraph`] wraps one with typed
//! nodes and enforces the edge schema.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::BenchmarkRecord;
use crate::metrics;

/// Undirected simple graph with sorted adjacency lists.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SimpleGraph {
    adj: Vec<Vec<usize>>,
    edges: usize,
}

impl SimpleGraph {
    pub fn new(n: usize) -> Self {
        SimpleGraph {
            adj: vec![Vec::new(); n],
            edges: 0,
        }
    }

    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut g = Self::new(n);
        for (u, v) in edges {
            g.add_edge(u, v)?;
        }
        Ok(g)
    }

    /// Returns false if the edge already existed.
    pub fn add_edge(&mut self, u: usize, v: usize) -> Result<bool> {
        let n = self.adj.len();
        if u >= n || v >= n {
            return Err(Error::Graph(format!("edge ({u}, {v}) out of range for {n} nodes")));
        }
        if u == v {
            return Err(Error::Graph(format!("self-loop on node {u}")));
        }
        match self.adj[u].binary_search(&v) {
            Ok(_) => Ok(false),
            Err(pos) => {
                self.adj[u].insert(pos, v);
                let pos = self.adj[v].binary_search(&u).unwrap_err();
                self.adj[v].insert(pos, u);
                self.edges += 1;
                Ok(true)
            }
        }
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(u, ns)| ns.iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
    }

    /// Subgraph induced by `nodes` (sorted, deduplicated), re-indexed densely
    /// in that order.
    pub fn induced(&self, nodes: &[usize]) -> SimpleGraph {
        let pos: HashMap<usize, usize> = nodes.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut g = SimpleGraph::new(nodes.len());
        for (i, &v) in nodes.iter().enumerate() {
            for w in &self.adj[v] {
                if let Some(&j) = pos.get(w) {
                    if i < j {
                        g.add_edge(i, j).expect("induced edges are valid");
                    }
                }
            }
        }
        g
    }

    /// Connected components, each sorted, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        self.components_within(&vec![true; self.node_count()])
    }

    fn components_within(&self, alive: &[bool]) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.node_count()];
        let mut out = Vec::new();
        for start in 0..self.node_count() {
            if !alive[start] || seen[start] {
                continue;
            }
            let mut comp = vec![start];
            seen[start] = true;
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                for &w in &self.adj[u] {
                    if alive[w] && !seen[w] {
                        seen[w] = true;
                        comp.push(w);
                        queue.push_back(w);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// Nodes of the k-core (every node keeps degree >= k), all components.
    pub fn k_core_nodes(&self, k: usize) -> Vec<usize> {
        let n = self.node_count();
        let mut degree: Vec<usize> = (0..n).map(|v| self.degree(v)).collect();
        let mut alive = vec![true; n];
        let mut queue: VecDeque<usize> = (0..n).filter(|&v| degree[v] < k).collect();
        for &v in &queue {
            alive[v] = false;
        }
        while let Some(v) = queue.pop_front() {
            for &w in &self.adj[v] {
                if alive[w] {
                    degree[w] -= 1;
                    if degree[w] < k {
                        alive[w] = false;
                        queue.push_back(w);
                    }
                }
            }
        }
        (0..n).filter(|&v| alive[v]).collect()
    }

    /// Largest connected component of the k-core; ties go to the component
    /// with the smallest node index.
    pub fn largest_k_core_component(&self, k: usize) -> Vec<usize> {
        let members = self.k_core_nodes(k);
        let mut alive = vec![false; self.node_count()];
        for &v in &members {
            alive[v] = true;
        }
        self.components_within(&alive)
            .into_iter()
            .fold(Vec::new(), |best, c| if c.len() > best.len() { c } else { best })
    }

    /// Normalized shortest-path betweenness (Brandes), divided by the
    /// undirected pair count `(n−1)(n−2)/2`. Graphs with fewer than three
    /// nodes score zero everywhere.
    ///
    /// Sources are accumulated in fixed-size chunks and the chunks are summed
    /// in index order, so `parallel` never changes a single bit of the result.
    pub fn betweenness(&self, parallel: bool) -> Vec<f64> {
        let n = self.node_count();
        if n < 3 {
            return vec![0.0; n];
        }
        let chunk = (n / 64).max(64);
        let starts: Vec<usize> = (0..n).step_by(chunk).collect();
        let run_chunk = |&start: &usize| -> Vec<f64> {
            let mut acc = vec![0.0; n];
            let mut scratch = BrandesScratch::new(n);
            for s in start..(start + chunk).min(n) {
                self.accumulate_source(s, &mut acc, &mut scratch);
            }
            acc
        };
        let partials: Vec<Vec<f64>> = if parallel {
            starts.par_iter().map(run_chunk).collect()
        } else {
            starts.iter().map(run_chunk).collect()
        };
        let mut total = vec![0.0; n];
        for part in &partials {
            for (t, p) in total.iter_mut().zip(part) {
                *t += p;
            }
        }
        // ordered-pair sums count every unordered pair twice
        let norm = ((n - 1) * (n - 2)) as f64;
        total.iter().map(|x| x / norm).collect()
    }

    fn accumulate_source(&self, s: usize, acc: &mut [f64], sc: &mut BrandesScratch) {
        sc.reset();
        sc.sigma[s] = 1.0;
        sc.dist[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            sc.order.push(v);
            for &w in &self.adj[v] {
                if sc.dist[w] < 0 {
                    sc.dist[w] = sc.dist[v] + 1;
                    queue.push_back(w);
                }
                if sc.dist[w] == sc.dist[v] + 1 {
                    sc.sigma[w] += sc.sigma[v];
                    sc.preds[w].push(v);
                }
            }
        }
        while let Some(w) = sc.order.pop() {
            for &v in &sc.preds[w] {
                sc.delta[v] += sc.sigma[v] / sc.sigma[w] * (1.0 + sc.delta[w]);
            }
            if w != s {
                acc[w] += sc.delta[w];
            }
        }
    }
}

struct BrandesScratch {
    sigma: Vec<f64>,
    dist: Vec<i64>,
    delta: Vec<f64>,
    preds: Vec<Vec<usize>>,
    order: Vec<usize>,
}

impl BrandesScratch {
    fn new(n: usize) -> Self {
        BrandesScratch {
            sigma: vec![0.0; n],
            dist: vec![-1; n],
            delta: vec![0.0; n],
            preds: vec![Vec::new(); n],
            order: Vec::with_capacity(n),
        }
    }

    fn reset(&mut self) {
        self.sigma.fill(0.0);
        self.dist.fill(-1);
        self.delta.fill(0.0);
        self.preds.iter_mut().for_each(Vec::clear);
        self.order.clear();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Benchmark,
    Author,
    Institution,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Benchmark => "benchmark",
            NodeKind::Author => "author",
            NodeKind::Institution => "institution",
        }
    }

    fn may_link(self, other: NodeKind) -> bool {
        use NodeKind::*;
        matches!(
            (self, other),
            (Benchmark, Author) | (Author, Benchmark) | (Author, Institution) | (Institution, Author)
        )
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NodeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "benchmark" => Ok(NodeKind::Benchmark),
            "author" => Ok(NodeKind::Author),
            "institution" => Ok(NodeKind::Institution),
            other => Err(Error::Graph(format!("unknown node kind `{other}`"))),
        }
    }
}

/// Stable node identifier: the node's rank in `(kind, label)` order of the
/// graph it was first built in. Subgraphs keep their parent's ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EcoNode {
    pub id: NodeId,
    pub kind: NodeKind,
    pub label: String,
}

pub type NodeScores = BTreeMap<NodeId, f64>;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TripartiteGraph {
    nodes: Vec<EcoNode>,
    graph: SimpleGraph,
}

impl TripartiteGraph {
    /// Builds a graph from `(kind, label)` nodes and edges between them.
    /// Node ids follow `(kind, label)` order.
    pub fn from_parts(
        nodes: BTreeSet<(NodeKind, String)>,
        edges: impl IntoIterator<Item = ((NodeKind, String), (NodeKind, String))>,
    ) -> Result<Self> {
        let nodes: Vec<EcoNode> = nodes
            .into_iter()
            .enumerate()
            .map(|(i, (kind, label))| EcoNode {
                id: NodeId(i as u32),
                kind,
                label,
            })
            .collect();
        let index: HashMap<(NodeKind, &str), usize> = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| ((n.kind, n.label.as_str()), i))
            .collect();
        let mut g = TripartiteGraph {
            graph: SimpleGraph::new(nodes.len()),
            nodes: nodes.clone(),
        };
        for ((ka, la), (kb, lb)) in edges {
            let lookup = |k: NodeKind, l: &str| {
                index
                    .get(&(k, l))
                    .copied()
                    .ok_or_else(|| Error::Graph(format!("edge references unknown node {k}:{l}")))
            };
            let (a, b) = (lookup(ka, &la)?, lookup(kb, &lb)?);
            g.link(a, b)?;
        }
        Ok(g)
    }

    fn link(&mut self, a: usize, b: usize) -> Result<bool> {
        let (ka, kb) = (self.nodes[a].kind, self.nodes[b].kind);
        if !ka.may_link(kb) {
            return Err(Error::Graph(format!(
                "{ka}:{} -- {kb}:{} violates the benchmark-author / author-institution schema",
                self.nodes[a].label, self.nodes[b].label
            )));
        }
        self.graph.add_edge(a, b)
    }

    /// Adds an edge between two existing nodes, enforcing the kind schema.
    pub fn add_edge(&mut self, a: NodeId, b: NodeId) -> Result<bool> {
        let (pa, pb) = (self.position(a)?, self.position(b)?);
        self.link(pa, pb)
    }

    fn position(&self, id: NodeId) -> Result<usize> {
        self.nodes
            .binary_search_by_key(&id, |n| n.id)
            .map_err(|_| Error::Graph(format!("unknown node id {}", id.0)))
    }

    pub fn nodes(&self) -> &[EcoNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Option<&EcoNode> {
        self.position(id).ok().map(|p| &self.nodes[p])
    }

    pub fn find(&self, kind: NodeKind, label: &str) -> Option<&EcoNode> {
        self.nodes.iter().find(|n| n.kind == kind && n.label == label)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.graph.edge_count()
    }

    pub fn degree(&self, id: NodeId) -> Option<usize> {
        self.position(id).ok().map(|p| self.graph.degree(p))
    }

    pub fn edges(&self) -> impl Iterator<Item = (&EcoNode, &EcoNode)> + '_ {
        self.graph.edges().map(|(u, v)| (&self.nodes[u], &self.nodes[v]))
    }

    pub fn structure(&self) -> &SimpleGraph {
        &self.graph
    }

    fn subgraph(&self, positions: &[usize]) -> TripartiteGraph {
        TripartiteGraph {
            nodes: positions.iter().map(|&p| self.nodes[p].clone()).collect(),
            graph: self.graph.induced(positions),
        }
    }

    fn scores(&self, values: Vec<f64>) -> NodeScores {
        self.nodes.iter().map(|n| n.id).zip(values).collect()
    }
}

/// One benchmark node per record, one author node per distinct name, one
/// institution node per distinct institution.
pub fn build_graph(records: &[BenchmarkRecord]) -> Result<TripartiteGraph> {
    if records.is_empty() {
        return Err(Error::InsufficientData("no benchmark records".into()));
    }
    let mut ids = BTreeSet::new();
    let mut name_counts: HashMap<&str, usize> = HashMap::new();
    for r in records {
        if !ids.insert(r.id.as_str()) {
            return Err(Error::Graph(format!("duplicate benchmark id `{}`", r.id)));
        }
        *name_counts.entry(r.name.as_str()).or_default() += 1;
    }
    let bench_label = |r: &BenchmarkRecord| -> String {
        if r.name.is_empty() {
            r.id.clone()
        } else if name_counts[r.name.as_str()] > 1 {
            format!("{} [{}]", r.name, r.id)
        } else {
            r.name.clone()
        }
    };

    let mut nodes = BTreeSet::new();
    let mut edges = BTreeSet::new();
    for r in records {
        let b = (NodeKind::Benchmark, bench_label(r));
        nodes.insert(b.clone());
        for author in &r.authors {
            let a = (NodeKind::Author, author.clone());
            nodes.insert(a.clone());
            edges.insert((b.clone(), a));
        }
        for aff in &r.affiliations {
            if aff.author.is_empty() || aff.institution.is_empty() {
                continue;
            }
            let a = (NodeKind::Author, aff.author.clone());
            let i = (NodeKind::Institution, aff.institution.clone());
            nodes.insert(a.clone());
            nodes.insert(i.clone());
            edges.insert((a, i));
        }
    }
    TripartiteGraph::from_parts(nodes, edges)
}

/// `deg(v) / (N − 1)` for every node.
pub fn degree_centrality(g: &TripartiteGraph) -> Result<NodeScores> {
    let n = g.node_count();
    if n < 2 {
        return Err(Error::InsufficientData(format!("degree centrality needs N >= 2, got {n}")));
    }
    let denom = (n - 1) as f64;
    Ok(g.scores((0..n).map(|v| g.graph.degree(v) as f64 / denom).collect()))
}

/// Largest connected component of the k-core.
pub fn k_core(g: &TripartiteGraph, k: usize) -> Result<TripartiteGraph> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    Ok(g.subgraph(&g.graph.largest_k_core_component(k)))
}

/// The whole k-core, every component kept.
pub fn k_core_all(g: &TripartiteGraph, k: usize) -> Result<TripartiteGraph> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    Ok(g.subgraph(&g.graph.k_core_nodes(k)))
}

pub fn betweenness(g: &TripartiteGraph) -> NodeScores {
    g.scores(g.graph.betweenness(true))
}

/// Gini of degree centralities, optionally restricted to some node kinds.
pub fn degree_gini(g: &TripartiteGraph, kinds: Option<&[NodeKind]>) -> Result<f64> {
    if g.edge_count() == 0 {
        return Err(Error::Undefined("degree Gini (edgeless graph)"));
    }
    let dc = degree_centrality(g)?;
    let values: Vec<f64> = g
        .nodes()
        .iter()
        .filter(|n| kinds.is_none_or(|ks| ks.contains(&n.kind)))
        .map(|n| dc[&n.id])
        .collect();
    metrics::gini(&values)
}

/// Writes `kind:label<TAB>kind:label` lines, LF-terminated.
pub fn write_edge_list<W: Write>(g: &TripartiteGraph, mut w: W) -> Result<()> {
    for (a, b) in g.edges() {
        for n in [a, b] {
            if n.label.contains(['\t', '\n', '\r']) {
                return Err(Error::Graph(format!("label {:?} cannot be written to an edge list", n.label)));
            }
        }
        writeln!(w, "{}:{}\t{}:{}", a.kind, a.label, b.kind, b.label).map_err(|e| Error::io("<edge list>", e))?;
    }
    Ok(())
}

pub fn read_edge_list<R: BufRead>(r: R) -> Result<TripartiteGraph> {
    let mut nodes = BTreeSet::new();
    let mut edges = Vec::new();
    let parse_end = |s: &str, line: usize| -> Result<(NodeKind, String)> {
        let (kind, label) = s
            .split_once(':')
            .ok_or_else(|| Error::Graph(format!("line {line}: expected kind:label, got `{s}`")))?;
        Ok((kind.parse()?, label.to_string()))
    };
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<edge list>", e))?;
        if line.is_empty() {
            continue;
        }
        let (a, b) = line
            .split_once('\t')
            .ok_or_else(|| Error::Graph(format!("line {}: expected two tab-separated endpoints", i + 1)))?;
        let (a, b) = (parse_end(a, i + 1)?, parse_end(b, i + 1)?);
        nodes.insert(a.clone());
        nodes.insert(b.clone());
        edges.push((a, b));
    }
    TripartiteGraph::from_parts(nodes, edges)
}

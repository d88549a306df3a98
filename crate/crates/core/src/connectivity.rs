//! Inter-WASG connectivity: the WASG graph, Edmonds-Karp max-flow, a
//! Gomory-Hu (Gusfield) flow tree, and the loss of pairwise max-flow when
//! WASGs fail.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::io::{Read, Write};

use serde::Serialize;
use thiserror::Error;

use crate::overlap::PairCounts;

#[derive(Debug, Error, PartialEq)]
pub enum ConnectivityError {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("source and sink are both `{0}`")]
    SameEndpoints(String),
    #[error("every node of the graph failed")]
    AllNodesFailed,
    #[error("edge list row {row}: {reason}")]
    MalformedEdgeList { row: usize, reason: String },
}

/// Undirected capacitated graph over WASG ids. Node indices follow the
/// sorted id order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WasgGraph {
    nodes: Vec<String>,
    /// `(u, v)` with `u < v` -> capacity (> 0).
    edges: BTreeMap<(usize, usize), u64>,
}

impl WasgGraph {
    /// Builds a graph from `(a, b, capacity)` triples. Self-loops and zero
    /// capacities are dropped; repeated pairs accumulate.
    pub fn from_edges<'a, I>(nodes: impl IntoIterator<Item = &'a str>, edges: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, &'a str, u64)>,
    {
        let edges: Vec<_> = edges.into_iter().collect();
        let mut names: BTreeSet<&str> = nodes.into_iter().collect();
        for (a, b, _) in &edges {
            names.insert(a);
            names.insert(b);
        }
        let nodes: Vec<String> = names.into_iter().map(str::to_string).collect();
        let idx = |s: &str| nodes.binary_search_by(|n| n.as_str().cmp(s)).expect("collected above");
        let mut map = BTreeMap::new();
        for (a, b, c) in edges {
            if a == b || c == 0 {
                continue;
            }
            let (i, j) = (idx(a), idx(b));
            *map.entry((i.min(j), i.max(j))).or_insert(0) += c;
        }
        Self { nodes, edges: map }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.nodes.binary_search_by(|n| n.as_str().cmp(id)).ok()
    }

    /// `(u, v, capacity)` with `u < v` by id.
    pub fn edges(&self) -> impl Iterator<Item = (&str, &str, u64)> {
        self.edges
            .iter()
            .map(|(&(u, v), &c)| (self.nodes[u].as_str(), self.nodes[v].as_str(), c))
    }

    pub fn capacity(&self, a: &str, b: &str) -> u64 {
        match (self.index_of(a), self.index_of(b)) {
            (Some(i), Some(j)) => self.edges.get(&(i.min(j), i.max(j))).copied().unwrap_or(0),
            _ => 0,
        }
    }

    pub fn average_degree(&self) -> f64 {
        if self.nodes.is_empty() {
            0.0
        } else {
            2.0 * self.edges.len() as f64 / self.nodes.len() as f64
        }
    }

    /// Subgraph with `removed` nodes and their edges deleted.
    pub fn without(&self, removed: &BTreeSet<String>) -> WasgGraph {
        let keep: Vec<&str> = self
            .nodes
            .iter()
            .filter(|n| !removed.contains(*n))
            .map(String::as_str)
            .collect();
        WasgGraph::from_edges(
            keep.iter().copied(),
            self.edges()
                .filter(|(a, b, _)| !removed.contains(*a) && !removed.contains(*b)),
        )
    }

    pub fn max_flow(&self, s: &str, t: &str) -> Result<u64, ConnectivityError> {
        let si = self.index_of(s).ok_or_else(|| ConnectivityError::UnknownNode(s.into()))?;
        let ti = self.index_of(t).ok_or_else(|| ConnectivityError::UnknownNode(t.into()))?;
        if si == ti {
            return Err(ConnectivityError::SameEndpoints(s.into()));
        }
        Ok(FlowNetwork::new(self).max_flow(si, ti).0)
    }

    /// Node indices grouped into connected components, each sorted.
    fn components(&self) -> Vec<Vec<usize>> {
        let n = self.nodes.len();
        let mut adj = vec![Vec::new(); n];
        for &(u, v) in self.edges.keys() {
            adj[u].push(v);
            adj[v].push(u);
        }
        let mut comp = vec![usize::MAX; n];
        let mut out = Vec::new();
        for start in 0..n {
            if comp[start] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut members = vec![start];
            comp[start] = id;
            let mut q = VecDeque::from([start]);
            while let Some(u) = q.pop_front() {
                for &v in &adj[u] {
                    if comp[v] == usize::MAX {
                        comp[v] = id;
                        members.push(v);
                        q.push_back(v);
                    }
                }
            }
            members.sort_unstable();
            out.push(members);
        }
        out
    }

    /// Edge list CSV `u,v,capacity`.
    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        write_edge_csv(w, self.edges())
    }

    /// Reads an edge list CSV `u,v,capacity`.
    pub fn read_csv<R: Read>(r: R) -> Result<WasgGraph, ConnectivityError> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut rows: Vec<(String, String, u64)> = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let bad = |reason: String| ConnectivityError::MalformedEdgeList { row: i + 1, reason };
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            if rec.len() < 3 {
                return Err(bad("expected u,v,capacity".into()));
            }
            let cap = rec[2]
                .trim()
                .parse()
                .map_err(|_| bad(format!("bad capacity `{}`", &rec[2])))?;
            rows.push((rec[0].trim().to_string(), rec[1].trim().to_string(), cap));
        }
        Ok(WasgGraph::from_edges(
            std::iter::empty(),
            rows.iter().map(|(a, b, c)| (a.as_str(), b.as_str(), *c)),
        ))
    }
}

fn write_edge_csv<'a, W: Write>(w: W, edges: impl Iterator<Item = (&'a str, &'a str, u64)>) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["u", "v", "capacity"])?;
    for (u, v, c) in edges {
        wtr.write_record([u, v, &c.to_string()])?;
    }
    wtr.flush()
}

/// WASG graph from inter-WASG link counts. Same-WASG pairs are dropped.
/// Pass registry ids as `nodes` to keep isolated WASGs in the graph.
pub fn build_graph<'a>(pairs: &'a PairCounts, nodes: impl IntoIterator<Item = &'a str>) -> WasgGraph {
    WasgGraph::from_edges(
        nodes,
        pairs
            .pairs
            .iter()
            .filter(|(p, _)| !p.is_intra())
            .map(|(p, &c)| (p.first(), p.second(), c)),
    )
}

/// Residual network for Edmonds-Karp. Each undirected edge becomes a pair
/// of opposing arcs, each with the full capacity.
struct FlowNetwork {
    head: Vec<usize>,
    cap: Vec<u64>,
    adj: Vec<Vec<usize>>,
}

impl FlowNetwork {
    fn new(g: &WasgGraph) -> Self {
        let n = g.nodes.len();
        let mut net = FlowNetwork {
            head: Vec::with_capacity(g.edges.len() * 2),
            cap: Vec::with_capacity(g.edges.len() * 2),
            adj: vec![Vec::new(); n],
        };
        for (&(u, v), &c) in &g.edges {
            let e = net.head.len();
            net.head.push(v);
            net.cap.push(c);
            net.adj[u].push(e);
            net.head.push(u);
            net.cap.push(c);
            net.adj[v].push(e + 1);
        }
        net
    }

    /// Shortest augmenting paths. Returns the flow value and the source
    /// side of a minimum cut.
    fn max_flow(&mut self, s: usize, t: usize) -> (u64, Vec<bool>) {
        let n = self.adj.len();
        let mut flow = 0u64;
        let mut pred = vec![usize::MAX; n];
        loop {
            pred.iter_mut().for_each(|p| *p = usize::MAX);
            let mut seen = vec![false; n];
            seen[s] = true;
            let mut q = VecDeque::from([s]);
            while let Some(u) = q.pop_front() {
                if u == t {
                    break;
                }
                for &e in &self.adj[u] {
                    let v = self.head[e];
                    if !seen[v] && self.cap[e] > 0 {
                        seen[v] = true;
                        pred[v] = e;
                        q.push_back(v);
                    }
                }
            }
            if !seen[t] {
                return (flow, seen);
            }
            let mut bottleneck = u64::MAX;
            let mut v = t;
            while v != s {
                let e = pred[v];
                bottleneck = bottleneck.min(self.cap[e]);
                v = self.head[e ^ 1];
            }
            let mut v = t;
            while v != s {
                let e = pred[v];
                self.cap[e] -= bottleneck;
                self.cap[e ^ 1] += bottleneck;
                v = self.head[e ^ 1];
            }
            flow += bottleneck;
        }
    }
}

/// Equivalent flow tree: the minimum edge on the tree path between two
/// nodes equals their max-flow in the source graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GomoryHuTree {
    nodes: Vec<String>,
    /// `parent[i]` and the cut capacity of edge `(i, parent[i])`; the root
    /// of each component has no parent.
    parent: Vec<Option<(usize, u64)>>,
    /// Max-flow computations used to build the tree.
    pub flow_calls: usize,
}

impl GomoryHuTree {
    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    /// `|V| - 1` edges `(child, parent, capacity)`. Components of a
    /// disconnected graph are joined by zero-capacity edges.
    pub fn edges(&self) -> Vec<(&str, &str, u64)> {
        let roots: Vec<usize> = (0..self.nodes.len()).filter(|&i| self.parent[i].is_none()).collect();
        let mut out: Vec<(&str, &str, u64)> = self
            .parent
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.map(|(j, c)| (self.nodes[i].as_str(), self.nodes[j].as_str(), c)))
            .collect();
        for w in roots.windows(2) {
            out.push((self.nodes[w[1]].as_str(), self.nodes[w[0]].as_str(), 0));
        }
        out
    }

    fn path_min(&self, a: usize, b: usize) -> u64 {
        // Walk both nodes to the root, recording the running minimum.
        let mut best_from_a: BTreeMap<usize, u64> = BTreeMap::new();
        let (mut v, mut m) = (a, u64::MAX);
        best_from_a.insert(v, m);
        while let Some((p, c)) = self.parent[v] {
            m = m.min(c);
            v = p;
            best_from_a.insert(v, m);
        }
        let (mut v, mut m) = (b, u64::MAX);
        loop {
            if let Some(&ma) = best_from_a.get(&v) {
                return ma.min(m);
            }
            match self.parent[v] {
                Some((p, c)) => {
                    m = m.min(c);
                    v = p;
                }
                // different components
                None => return 0,
            }
        }
    }

    /// Minimum s-t cut value read off the tree.
    pub fn min_cut(&self, s: &str, t: &str) -> Result<u64, ConnectivityError> {
        let idx = |x: &str| {
            self.nodes
                .binary_search_by(|n| n.as_str().cmp(x))
                .map_err(|_| ConnectivityError::UnknownNode(x.into()))
        };
        let (i, j) = (idx(s)?, idx(t)?);
        if i == j {
            return Err(ConnectivityError::SameEndpoints(s.into()));
        }
        Ok(self.path_min(i, j))
    }

    /// All pairwise values, indexed like `nodes()`.
    pub fn all_pairs(&self) -> Vec<Vec<u64>> {
        let n = self.nodes.len();
        let mut m = vec![vec![0u64; n]; n];
        // One traversal per source over the tree adjacency.
        let mut adj = vec![Vec::new(); n];
        for (i, p) in self.parent.iter().enumerate() {
            if let Some((j, c)) = *p {
                adj[i].push((j, c));
                adj[j].push((i, c));
            }
        }
        for s in 0..n {
            let mut stack = vec![(s, usize::MAX, u64::MAX)];
            while let Some((u, from, lo)) = stack.pop() {
                if u != s {
                    m[s][u] = lo;
                }
                for &(v, c) in &adj[u] {
                    if v != from {
                        stack.push((v, u, lo.min(c)));
                    }
                }
            }
        }
        m
    }

    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        write_edge_csv(w, self.edges().into_iter())
    }
}

/// Gusfield's construction, run per connected component so that each
/// component of size `k` costs `k - 1` max-flow computations.
pub fn gomory_hu(g: &WasgGraph) -> GomoryHuTree {
    let mut parent: Vec<Option<(usize, u64)>> = vec![None; g.nodes.len()];
    let mut calls = 0;
    for comp in g.components() {
        let k = comp.len();
        // positions within `comp`; p[s] < s always, so the result is a tree
        let mut p = vec![0usize; k];
        let mut fl = vec![0u64; k];
        for s in 1..k {
            let t = p[s];
            let (f, side) = FlowNetwork::new(g).max_flow(comp[s], comp[t]);
            calls += 1;
            fl[s] = f;
            for i in s + 1..k {
                if side[comp[i]] && p[i] == t {
                    p[i] = s;
                }
            }
        }
        for s in 1..k {
            parent[comp[s]] = Some((comp[p[s]], fl[s]));
        }
    }
    GomoryHuTree {
        nodes: g.nodes.clone(),
        parent,
        flow_calls: calls,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairReduction {
    pub a: String,
    pub b: String,
    pub before: u64,
    pub after: u64,
    pub reduction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowReduction {
    pub scenario: String,
    pub failed: BTreeSet<String>,
    /// Mean of `reduction` over surviving pairs with non-zero prior flow;
    /// zero when there are none.
    pub mean_reduction: f64,
    /// Surviving pairs whose prior flow was zero (left out of the mean).
    pub excluded_pairs: usize,
    pub pairs: Vec<PairReduction>,
}

/// Loss of pairwise max-flow among surviving WASGs after removing the
/// failed ones. Failed ids absent from the graph are ignored.
pub fn flow_reduction(g: &WasgGraph, scenario: &str, failed: &BTreeSet<String>) -> Result<FlowReduction, ConnectivityError> {
    if g.node_count() > 0 && g.nodes.iter().all(|n| failed.contains(n)) {
        return Err(ConnectivityError::AllNodesFailed);
    }
    let before = gomory_hu(g).all_pairs();
    let reduced = g.without(failed);
    let after = gomory_hu(&reduced).all_pairs();
    let survivors: Vec<usize> = (0..g.node_count()).filter(|&i| !failed.contains(&g.nodes[i])).collect();

    let mut pairs = Vec::new();
    let mut excluded = 0;
    for (x, &i) in survivors.iter().enumerate() {
        for (y, &j) in survivors.iter().enumerate().skip(x + 1) {
            // survivors keep their relative order in the reduced graph
            let (b, a) = (before[i][j], after[x][y]);
            if b == 0 {
                excluded += 1;
                continue;
            }
            pairs.push(PairReduction {
                a: g.nodes[i].clone(),
                b: g.nodes[j].clone(),
                before: b,
                after: a,
                reduction: ((b - a.min(b)) as f64 / b as f64).clamp(0.0, 1.0),
            });
        }
    }
    let mean_reduction = if pairs.is_empty() {
        0.0
    } else {
        pairs.iter().map(|p| p.reduction).sum::<f64>() / pairs.len() as f64
    };
    Ok(FlowReduction {
        scenario: scenario.to_string(),
        failed: failed.iter().filter(|f| g.index_of(f).is_some()).cloned().collect(),
        mean_reduction,
        excluded_pairs: excluded,
        pairs,
    })
}

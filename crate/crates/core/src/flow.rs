//! Minimum-cost flow over source/sink DAGs with unit node capacities.
//!
//! Every node is split into `in -> out` with capacity one, so the returned
//! paths are node-disjoint. Two modes are supported: `Free` returns the
//! cheapest flow of any size, `CoverAll` forces one unit through every
//! `must_cover` node.
//!
//! The unit lower bounds of `CoverAll` are realised as a penalty of `-M` on
//! each mandatory split arc, with `M` larger than the sum of all absolute
//! costs. A minimum-cost solution of the penalised problem therefore covers as
//! many mandatory nodes as possible before it minimises the original cost.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use ordered_float::OrderedFloat;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Vertex {
    Source,
    Sink,
    Node(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowNode {
    pub cost: f64,
    pub must_cover: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowEdge {
    pub from: Vertex,
    pub to: Vertex,
    pub cost: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlowGraph {
    nodes: Vec<FlowNode>,
    edges: Vec<FlowEdge>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Free,
    CoverAll,
}

/// Shortest-path routine used for each augmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PathSearch {
    /// Dijkstra on reduced costs, potentials seeded by a DAG relaxation.
    #[default]
    Potentials,
    /// Plain Bellman-Ford on raw residual costs each round.
    BellmanFord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSolution {
    /// Node sequences of the source-to-sink paths, ordered by first node.
    pub paths: Vec<Vec<usize>>,
    pub cost: f64,
}

impl FlowGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, cost: f64, must_cover: bool) -> usize {
        self.nodes.push(FlowNode { cost, must_cover });
        self.nodes.len() - 1
    }

    pub fn add_edge(&mut self, from: Vertex, to: Vertex, cost: f64) {
        self.edges.push(FlowEdge { from, to, cost });
    }

    pub fn nodes(&self) -> &[FlowNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[FlowEdge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        for node in &self.nodes {
            if !node.cost.is_finite() {
                return Err(Error::Config("non-finite node cost".into()));
            }
        }
        let mut indeg = vec![0usize; n];
        let mut adj = vec![Vec::new(); n];
        for e in &self.edges {
            if !e.cost.is_finite() {
                return Err(Error::Config("non-finite edge cost".into()));
            }
            let in_range = |v: Vertex| match v {
                Vertex::Node(i) => i < n,
                _ => true,
            };
            if !in_range(e.from) || !in_range(e.to) {
                return Err(Error::Config("edge references unknown node".into()));
            }
            match (e.from, e.to) {
                (Vertex::Node(u), Vertex::Node(v)) => {
                    if u == v {
                        return Err(Error::Cyclic);
                    }
                    adj[u].push(v);
                    indeg[v] += 1;
                }
                (Vertex::Source, Vertex::Node(_)) | (Vertex::Node(_), Vertex::Sink) => {}
                _ => {
                    return Err(Error::Config(format!(
                        "edge {:?} -> {:?} is not source->node, node->node or node->sink",
                        e.from, e.to
                    )))
                }
            }
        }
        topo_order(&adj, indeg).map(|_| ())
    }
}

fn topo_order(adj: &[Vec<usize>], mut indeg: Vec<usize>) -> Result<Vec<usize>> {
    let mut queue: VecDeque<usize> = (0..adj.len()).filter(|&v| indeg[v] == 0).collect();
    let mut order = Vec::with_capacity(adj.len());
    while let Some(u) = queue.pop_front() {
        order.push(u);
        for &v in &adj[u] {
            indeg[v] -= 1;
            if indeg[v] == 0 {
                queue.push_back(v);
            }
        }
    }
    if order.len() != adj.len() {
        return Err(Error::Cyclic);
    }
    Ok(order)
}

/// One arc of the node-split graph.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitArc {
    pub from: usize,
    pub to: usize,
    pub cost: f64,
    /// Index of the originating `FlowEdge`, `None` for a node's own split arc.
    pub edge: Option<usize>,
}

/// Node-split view: node `v` becomes `2v -> 2v + 1`; source and sink are
/// appended after the `2n` split vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitGraph {
    pub split_nodes: usize,
    pub arcs: Vec<SplitArc>,
}

impl SplitGraph {
    pub fn source(&self) -> usize {
        self.split_nodes
    }

    pub fn sink(&self) -> usize {
        self.split_nodes + 1
    }

    pub fn vertex_count(&self) -> usize {
        self.split_nodes + 2
    }
}

pub fn node_split(g: &FlowGraph) -> SplitGraph {
    let n = g.nodes.len();
    let (src, snk) = (2 * n, 2 * n + 1);
    let mut arcs = Vec::with_capacity(n + g.edges.len());
    for (v, node) in g.nodes.iter().enumerate() {
        arcs.push(SplitArc {
            from: 2 * v,
            to: 2 * v + 1,
            cost: node.cost,
            edge: None,
        });
    }
    for (k, e) in g.edges.iter().enumerate() {
        let from = match e.from {
            Vertex::Source => src,
            Vertex::Node(u) => 2 * u + 1,
            Vertex::Sink => snk,
        };
        let to = match e.to {
            Vertex::Sink => snk,
            Vertex::Node(v) => 2 * v,
            Vertex::Source => src,
        };
        arcs.push(SplitArc {
            from,
            to,
            cost: e.cost,
            edge: Some(k),
        });
    }
    SplitGraph {
        split_nodes: 2 * n,
        arcs,
    }
}

pub fn solve_paths(g: &FlowGraph, mode: Mode) -> Result<FlowSolution> {
    solve_paths_with(g, mode, PathSearch::default())
}

pub fn solve_paths_with(g: &FlowGraph, mode: Mode, search: PathSearch) -> Result<FlowSolution> {
    g.validate()?;
    let split = node_split(g);
    let penalty = match mode {
        Mode::Free => 0.0,
        Mode::CoverAll => {
            1.0 + g.nodes.iter().map(|n| n.cost.abs()).sum::<f64>()
                + g.edges.iter().map(|e| e.cost.abs()).sum::<f64>()
        }
    };
    let mut net = Residual::new(split.vertex_count());
    for arc in &split.arcs {
        let mut cost = arc.cost;
        if arc.edge.is_none() && g.nodes[arc.from / 2].must_cover {
            cost -= penalty;
        }
        net.add_arc(arc.from, arc.to, cost);
    }
    let (src, snk) = (split.source(), split.sink());

    match search {
        PathSearch::Potentials => net.run_potentials(src, snk, &split),
        PathSearch::BellmanFord => net.run_bellman_ford(src, snk),
    }

    // Read back paths from saturated forward arcs.
    let n = g.nodes.len();
    let mut next = vec![None; split.vertex_count()];
    let mut starts = Vec::new();
    let mut covered = vec![false; n];
    let mut cost = 0.0;
    for (k, arc) in split.arcs.iter().enumerate() {
        if net.cap[2 * k] != 0 {
            continue;
        }
        cost += arc.cost;
        match arc.edge {
            None => covered[arc.from / 2] = true,
            Some(_) => {
                if arc.from == src {
                    starts.push(arc.to / 2);
                } else if arc.to != snk {
                    next[arc.from / 2] = Some(arc.to / 2);
                }
            }
        }
    }
    if mode == Mode::CoverAll {
        let missing: Vec<usize> = (0..n)
            .filter(|&v| g.nodes[v].must_cover && !covered[v])
            .collect();
        if !missing.is_empty() {
            return Err(Error::Infeasible(missing));
        }
    }
    starts.sort_unstable();
    let paths = starts
        .into_iter()
        .map(|s| {
            let mut path = vec![s];
            let mut cur = s;
            while let Some(nx) = next[cur] {
                path.push(nx);
                cur = nx;
            }
            path
        })
        .collect();
    Ok(FlowSolution { paths, cost })
}

/// Residual network with paired forward/backward arcs (`2k`, `2k + 1`).
struct Residual {
    head: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<u8>,
    cost: Vec<f64>,
}

impl Residual {
    fn new(n: usize) -> Self {
        Self {
            head: vec![Vec::new(); n],
            to: Vec::new(),
            cap: Vec::new(),
            cost: Vec::new(),
        }
    }

    fn add_arc(&mut self, u: usize, v: usize, cost: f64) {
        self.head[u].push(self.to.len());
        self.to.push(v);
        self.cap.push(1);
        self.cost.push(cost);
        self.head[v].push(self.to.len());
        self.to.push(u);
        self.cap.push(0);
        self.cost.push(-cost);
    }

    fn augment(&mut self, src: usize, snk: usize, prev: &[Option<usize>]) -> f64 {
        let mut v = snk;
        let mut total = 0.0;
        let mut arcs = Vec::new();
        while v != src {
            let a = prev[v].expect("augmenting path is connected");
            arcs.push(a);
            v = self.to[a ^ 1];
        }
        for &a in arcs.iter().rev() {
            total += self.cost[a];
        }
        for a in arcs {
            self.cap[a] -= 1;
            self.cap[a ^ 1] += 1;
        }
        total
    }

    fn path_cost(&self, src: usize, snk: usize, prev: &[Option<usize>]) -> f64 {
        let mut v = snk;
        let mut arcs = Vec::new();
        while v != src {
            let a = prev[v].expect("path is connected");
            arcs.push(a);
            v = self.to[a ^ 1];
        }
        arcs.iter().rev().map(|&a| self.cost[a]).sum()
    }

    /// Successive shortest paths with Dijkstra on reduced costs.
    fn run_potentials(&mut self, src: usize, snk: usize, split: &SplitGraph) {
        let n = self.head.len();
        let forward: Vec<(usize, usize, f64)> = (0..split.arcs.len())
            .map(|k| (self.to[2 * k + 1], self.to[2 * k], self.cost[2 * k]))
            .collect();
        let mut pot = dag_distances(&forward, src, n);
        let mut dist = vec![f64::INFINITY; n];
        let mut prev: Vec<Option<usize>> = vec![None; n];
        loop {
            dist.fill(f64::INFINITY);
            prev.fill(None);
            dist[src] = 0.0;
            let mut heap = BinaryHeap::new();
            heap.push(Reverse((OrderedFloat(0.0), src)));
            let mut done = vec![false; n];
            while let Some(Reverse((OrderedFloat(d), u))) = heap.pop() {
                if done[u] {
                    continue;
                }
                done[u] = true;
                for &a in &self.head[u] {
                    if self.cap[a] == 0 {
                        continue;
                    }
                    let v = self.to[a];
                    if done[v] || !pot[v].is_finite() {
                        continue;
                    }
                    let reduced = (self.cost[a] + pot[u] - pot[v]).max(0.0);
                    let nd = d + reduced;
                    if nd < dist[v] {
                        dist[v] = nd;
                        prev[v] = Some(a);
                        heap.push(Reverse((OrderedFloat(nd), v)));
                    }
                }
            }
            if !dist[snk].is_finite() || self.path_cost(src, snk, &prev) >= 0.0 {
                break;
            }
            self.augment(src, snk, &prev);
            for v in 0..n {
                if dist[v].is_finite() {
                    pot[v] += dist[v];
                }
            }
        }
    }

    /// Successive shortest paths with a fresh Bellman-Ford search per round.
    fn run_bellman_ford(&mut self, src: usize, snk: usize) {
        let n = self.head.len();
        loop {
            let mut dist = vec![f64::INFINITY; n];
            let mut prev: Vec<Option<usize>> = vec![None; n];
            dist[src] = 0.0;
            for _ in 0..n {
                let mut changed = false;
                for u in 0..n {
                    if !dist[u].is_finite() {
                        continue;
                    }
                    for &a in &self.head[u] {
                        if self.cap[a] == 0 {
                            continue;
                        }
                        let v = self.to[a];
                        let nd = dist[u] + self.cost[a];
                        if nd < dist[v] {
                            dist[v] = nd;
                            prev[v] = Some(a);
                            changed = true;
                        }
                    }
                }
                if !changed {
                    break;
                }
            }
            if !dist[snk].is_finite() || self.path_cost(src, snk, &prev) >= 0.0 {
                break;
            }
            self.augment(src, snk, &prev);
        }
    }
}

/// Shortest distances from `src` over the (acyclic) split graph.
/// Shortest distances from `src` over `(from, to, cost)` arcs of a DAG.
fn dag_distances(arcs: &[(usize, usize, f64)], src: usize, n: usize) -> Vec<f64> {
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut indeg = vec![0usize; n];
    for &(from, to, cost) in arcs {
        adj[from].push((to, cost));
        indeg[to] += 1;
    }
    let plain: Vec<Vec<usize>> = adj.iter().map(|a| a.iter().map(|x| x.0).collect()).collect();
    let order = topo_order(&plain, indeg).expect("validated graph is acyclic");
    let mut dist = vec![f64::INFINITY; n];
    dist[src] = 0.0;
    for u in order {
        if !dist[u].is_finite() {
            continue;
        }
        for &(v, c) in &adj[u] {
            if dist[u] + c < dist[v] {
                dist[v] = dist[u] + c;
            }
        }
    }
    dist
}

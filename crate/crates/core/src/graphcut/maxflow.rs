//! Exact max-flow / min-cut on small-to-medium directed networks (Dinic).

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Residual capacities at or below this are treated as saturated.
const EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arc {
    pub from: usize,
    pub to: usize,
    pub capacity: f64,
}

/// Directed network with a distinguished source and sink.
#[derive(Debug, Clone)]
pub struct FlowNetwork {
    nodes: usize,
    source: usize,
    sink: usize,
    arcs: Vec<Arc>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinCut {
    pub flow: f64,
    /// `true` for nodes on the source side of the minimum cut.
    pub source_side: Vec<bool>,
}

impl MinCut {
    /// Total capacity of arcs leaving the source side.
    pub fn capacity(&self, net: &FlowNetwork) -> f64 {
        net.arcs
            .iter()
            .filter(|a| self.source_side[a.from] && !self.source_side[a.to])
            .map(|a| a.capacity)
            .sum()
    }
}

impl FlowNetwork {
    pub fn new(nodes: usize, source: usize, sink: usize) -> Result<Self> {
        if source >= nodes || sink >= nodes {
            return Err(Error::invalid("source or sink outside the network"));
        }
        if source == sink {
            return Err(Error::invalid("source and sink must differ"));
        }
        Ok(Self { nodes, source, sink, arcs: Vec::new() })
    }

    pub fn with_capacity(nodes: usize, source: usize, sink: usize, arcs: usize) -> Result<Self> {
        let mut net = Self::new(nodes, source, sink)?;
        net.arcs.reserve(arcs);
        Ok(net)
    }

    pub fn add_arc(&mut self, from: usize, to: usize, capacity: f64) -> Result<()> {
        if from >= self.nodes || to >= self.nodes {
            return Err(Error::invalid(format!("arc {from}->{to} outside the network")));
        }
        if !(capacity.is_finite() && capacity >= 0.0) {
            return Err(Error::invalid(format!("arc capacity {capacity} must be finite and non-negative")));
        }
        self.arcs.push(Arc { from, to, capacity });
        Ok(())
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn sink(&self) -> usize {
        self.sink
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    /// Maximum flow value together with the source side of a minimum cut.
    pub fn max_flow(&self) -> MinCut {
        let mut residual = Residual::build(self);
        let mut flow = 0.0;
        while residual.levels(self.source, self.sink) {
            residual.cursor.iter_mut().for_each(|c| *c = 0);
            loop {
                let pushed = residual.augment(self.source, self.sink, f64::INFINITY);
                if pushed <= EPS {
                    break;
                }
                flow += pushed;
            }
        }
        // levels() left the final BFS reachability in `level`
        let source_side = residual.level.iter().map(|&l| l >= 0).collect();
        MinCut { flow, source_side }
    }
}

struct Residual {
    // compressed adjacency: edges of node v are edge_ids[start[v]..start[v + 1]]
    start: Vec<usize>,
    edge_ids: Vec<usize>,
    to: Vec<usize>,
    cap: Vec<f64>,
    level: Vec<i32>,
    cursor: Vec<usize>,
}

impl Residual {
    fn build(net: &FlowNetwork) -> Self {
        let m = net.arcs.len();
        let mut to = Vec::with_capacity(2 * m);
        let mut cap = Vec::with_capacity(2 * m);
        let mut degree = vec![0usize; net.nodes + 1];
        let mut tail = Vec::with_capacity(2 * m);
        for a in &net.arcs {
            // edge 2i forward, 2i + 1 reverse
            to.push(a.to);
            cap.push(a.capacity);
            tail.push(a.from);
            to.push(a.from);
            cap.push(0.0);
            tail.push(a.to);
            degree[a.from] += 1;
            degree[a.to] += 1;
        }
        let mut start = vec![0usize; net.nodes + 1];
        for v in 0..net.nodes {
            start[v + 1] = start[v] + degree[v];
        }
        let mut fill = start.clone();
        let mut edge_ids = vec![0usize; 2 * m];
        for (e, &t) in tail.iter().enumerate() {
            edge_ids[fill[t]] = e;
            fill[t] += 1;
        }
        Self {
            start,
            edge_ids,
            to,
            cap,
            level: vec![-1; net.nodes],
            cursor: vec![0; net.nodes],
        }
    }

    fn levels(&mut self, s: usize, t: usize) -> bool {
        self.level.iter_mut().for_each(|l| *l = -1);
        self.level[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            for &e in &self.edge_ids[self.start[v]..self.start[v + 1]] {
                let w = self.to[e];
                if self.cap[e] > EPS && self.level[w] < 0 {
                    self.level[w] = self.level[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        self.level[t] >= 0
    }

    /// One augmenting path in the level graph, iterative DFS with per-node cursors.
    fn augment(&mut self, s: usize, t: usize, limit: f64) -> f64 {
        let mut path: Vec<usize> = Vec::new();
        let mut v = s;
        loop {
            if v == t {
                let pushed = path.iter().map(|&e| self.cap[e]).fold(limit, f64::min);
                for &e in &path {
                    self.cap[e] -= pushed;
                    self.cap[e ^ 1] += pushed;
                }
                return pushed;
            }
            let deg = self.start[v + 1] - self.start[v];
            let mut advanced = false;
            while self.cursor[v] < deg {
                let e = self.edge_ids[self.start[v] + self.cursor[v]];
                let w = self.to[e];
                if self.cap[e] > EPS && self.level[w] == self.level[v] + 1 {
                    path.push(e);
                    v = w;
                    advanced = true;
                    break;
                }
                self.cursor[v] += 1;
            }
            if !advanced {
                if v == s {
                    return 0.0;
                }
                // dead end: retreat and skip the edge that led here
                self.level[v] = -2;
                let e = path.pop().expect("non-source node has an incoming path edge");
                v = self.to[e ^ 1];
                self.cursor[v] += 1;
            }
        }
    }
}

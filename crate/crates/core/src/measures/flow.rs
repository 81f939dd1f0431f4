//! Successive-shortest-path min-cost flow with real-valued supplies.
//!
//! Arcs are uncapacitated (the flat-metric networks never need capacities);
//! residual reverse arcs carry the pushed flow. Dijkstra runs on reduced costs
//! with node potentials, from all nodes with remaining excess at once.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Debug, Clone)]
pub(crate) struct FlowNetwork {
    adj: Vec<Vec<usize>>,
    head: Vec<usize>,
    cost: Vec<f64>,
    // residual capacity; INFINITY on forward arcs
    residual: Vec<f64>,
}

#[derive(Clone, Copy, PartialEq)]
struct Candidate {
    dist: f64,
    node: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl FlowNetwork {
    pub(crate) fn new(n_nodes: usize) -> Self {
        Self {
            adj: vec![Vec::new(); n_nodes],
            head: Vec::new(),
            cost: Vec::new(),
            residual: Vec::new(),
        }
    }

    /// Adds an uncapacitated arc `from -> to` with nonnegative unit cost.
    pub(crate) fn add_arc(&mut self, from: usize, to: usize, cost: f64) {
        debug_assert!(cost >= 0.0);
        let e = self.head.len();
        self.adj[from].push(e);
        self.head.push(to);
        self.cost.push(cost);
        self.residual.push(f64::INFINITY);
        self.adj[to].push(e + 1);
        self.head.push(from);
        self.cost.push(-cost);
        self.residual.push(0.0);
    }

    /// Minimum cost of routing `supply` (positive = source, negative = sink).
    ///
    /// Supplies must sum to zero up to round-off and every source must be able
    /// to reach every sink.
    pub(crate) fn min_cost(mut self, mut supply: Vec<f64>) -> f64 {
        let n = self.adj.len();
        assert_eq!(supply.len(), n);
        let scale: f64 = supply.iter().map(|s| s.abs()).sum::<f64>().max(1.0);
        let tol = 1e-14 * scale;

        let mut potential = vec![0.0; n];
        let mut dist = vec![f64::INFINITY; n];
        let mut parent = vec![usize::MAX; n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        let mut total = 0.0;

        loop {
            if supply.iter().all(|&s| s <= tol) {
                break;
            }
            dist.fill(f64::INFINITY);
            parent.fill(usize::MAX);
            done.fill(false);
            heap.clear();
            for (v, &s) in supply.iter().enumerate() {
                if s > tol {
                    dist[v] = 0.0;
                    heap.push(Candidate { dist: 0.0, node: v });
                }
            }
            let mut sink = None;
            while let Some(Candidate { dist: d, node: u }) = heap.pop() {
                if done[u] {
                    continue;
                }
                done[u] = true;
                if supply[u] < -tol {
                    sink = Some(u);
                    break;
                }
                for &e in &self.adj[u] {
                    if self.residual[e] <= tol {
                        continue;
                    }
                    let v = self.head[e];
                    let reduced = (self.cost[e] + potential[u] - potential[v]).max(0.0);
                    let nd = d + reduced;
                    if nd < dist[v] {
                        dist[v] = nd;
                        parent[v] = e;
                        heap.push(Candidate { dist: nd, node: v });
                    }
                }
            }
            let Some(sink) = sink else {
                // Remaining excess is round-off: nothing left can reach a sink.
                break;
            };
            let d_sink = dist[sink];
            for v in 0..n {
                potential[v] += dist[v].min(d_sink);
            }

            let mut push = -supply[sink];
            let mut v = sink;
            while parent[v] != usize::MAX {
                let e = parent[v];
                push = push.min(self.residual[e]);
                v = self.head[e ^ 1];
            }
            let source = v;
            push = push.min(supply[source]);

            let mut v = sink;
            while parent[v] != usize::MAX {
                let e = parent[v];
                self.residual[e] -= push;
                if self.residual[e] <= tol {
                    self.residual[e] = 0.0;
                }
                self.residual[e ^ 1] += push;
                total += push * self.cost[e];
                v = self.head[e ^ 1];
            }
            supply[source] -= push;
            supply[sink] += push;
        }
        total.max(0.0)
    }
}

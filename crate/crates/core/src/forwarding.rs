//! Routing-based packet forwarding (PF) baseline.
//!
//! Every node quantizes its own message once, with the quantizer of its first
//! hop, and the packet travels unmodified along a hop-count shortest path to
//! the gateway. Each edge carries at most one packet per slot. Queues are
//! FIFO; packets arriving in the same slot are ordered by source node id.
//! Packets are created at `t = 1` and the first transmissions happen at
//! `t = 2`. The gateway's own message never crosses a link and counts as
//! delivered, unquantized, at `t = 1`.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use crate::error::{QncError, Result};
use crate::network::Deployment;
use crate::quantizer::QuantizerSpec;

/// Shortest-path next hops towards the gateway.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Routes {
    /// Outgoing edge id used by each node; `None` at the gateway.
    pub next_edge: Vec<Option<usize>>,
    /// Hop count to the gateway.
    pub hops: Vec<usize>,
}

impl Routes {
    pub fn next_hop(&self, d: &Deployment, v: usize) -> Option<usize> {
        self.next_edge[v].map(|e| d.edge(e).head)
    }
}

/// Dijkstra over reversed edges with unit weights, then per node the
/// lowest-id outgoing edge on a shortest path.
pub fn compute_routes(d: &Deployment) -> Result<Routes> {
    let n = d.num_nodes();
    let mut dist = vec![usize::MAX; n];
    let mut heap = BinaryHeap::new();
    dist[d.gateway()] = 0;
    heap.push(Reverse((0usize, d.gateway())));
    while let Some(Reverse((cost, v))) = heap.pop() {
        if cost > dist[v] {
            continue;
        }
        for &e in d.in_edges(v) {
            let u = d.edge(e).tail;
            let next = cost + 1;
            if next < dist[u] {
                dist[u] = next;
                heap.push(Reverse((next, u)));
            }
        }
    }
    let mut next_edge = vec![None; n];
    for v in 0..n {
        if v == d.gateway() {
            continue;
        }
        if dist[v] == usize::MAX {
            return Err(QncError::UnreachableNode(v));
        }
        next_edge[v] = d
            .out_edges(v)
            .iter()
            .copied()
            .find(|&e| dist[d.edge(e).head].checked_add(1) == Some(dist[v]));
    }
    Ok(Routes {
        next_edge,
        hops: dist,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Packet {
    source: usize,
    value: f64,
}

/// Slot-by-slot forwarding state.
#[derive(Debug, Clone)]
pub struct PfState<'a> {
    deployment: &'a Deployment,
    routes: Routes,
    queues: Vec<VecDeque<Packet>>,
    delivered: Vec<Option<(usize, f64)>>,
    t: usize,
}

impl<'a> PfState<'a> {
    /// State at `t = 1`: every packet quantized and queued at its source.
    pub fn new(d: &'a Deployment, x: &[f64], q: &QuantizerSpec) -> Result<Self> {
        if x.len() != d.num_nodes() || q.num_edges() != d.num_edges() {
            return Err(QncError::InvalidParameters("dimension mismatch".into()));
        }
        if let Some(v) = x.iter().position(|xv| xv.abs() > q.q_max() * (1.0 + 1e-12)) {
            return Err(QncError::InvalidParameters(format!("message {v} exceeds q_max")));
        }
        let routes = compute_routes(d)?;
        let mut queues = vec![VecDeque::new(); d.num_edges()];
        let mut delivered = vec![None; d.num_nodes()];
        for v in 0..d.num_nodes() {
            match routes.next_edge[v] {
                None => delivered[v] = Some((1, x[v])),
                Some(e) => queues[e].push_back(Packet {
                    source: v,
                    value: q.quantize(e, x[v]),
                }),
            }
        }
        Ok(PfState {
            deployment: d,
            routes,
            queues,
            delivered,
            t: 1,
        })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn routes(&self) -> &Routes {
        &self.routes
    }

    /// Advances one slot: each edge forwards the head of its queue.
    pub fn step(&mut self) {
        self.t += 1;
        let d = self.deployment;
        let mut arrivals: Vec<(usize, Packet)> = Vec::new();
        for e in 0..self.queues.len() {
            if let Some(p) = self.queues[e].pop_front() {
                arrivals.push((d.edge(e).head, p));
            }
        }
        arrivals.sort_by_key(|(_, p)| p.source);
        for (node, p) in arrivals {
            match self.routes.next_edge[node] {
                None => self.delivered[p.source] = Some((self.t, p.value)),
                Some(e) => self.queues[e].push_back(p),
            }
        }
    }

    /// Current estimate: delivered values, zero elsewhere.
    pub fn estimate(&self) -> Vec<f64> {
        self.delivered
            .iter()
            .map(|d| d.map_or(0.0, |(_, v)| v))
            .collect()
    }

    pub fn delivered_count(&self) -> usize {
        self.delivered.iter().filter(|d| d.is_some()).count()
    }

    pub fn in_flight(&self) -> usize {
        self.queues.iter().map(VecDeque::len).sum()
    }

    /// Delivery time of each source's packet, if delivered yet.
    pub fn delivery_times(&self) -> Vec<Option<usize>> {
        self.delivered.iter().map(|d| d.map(|(t, _)| t)).collect()
    }
}

/// Estimates and delivery counts for `t = 1..=t_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct PfRun {
    /// `estimates[t - 1]` is `x_hat_PF(t)`.
    pub estimates: Vec<Vec<f64>>,
    /// Packets received by the gateway up to each `t`.
    pub delivered: Vec<usize>,
    pub delivery_times: Vec<Option<usize>>,
}

pub fn run_pf(d: &Deployment, x: &[f64], q: &QuantizerSpec, t_max: usize) -> Result<PfRun> {
    if t_max < 1 {
        return Err(QncError::InvalidParameters("t_max must be >= 1".into()));
    }
    let mut state = PfState::new(d, x, q)?;
    let mut estimates = vec![state.estimate()];
    let mut delivered = vec![state.delivered_count()];
    for _ in 2..=t_max {
        state.step();
        estimates.push(state.estimate());
        delivered.push(state.delivered_count());
    }
    Ok(PfRun {
        estimates,
        delivered,
        delivery_times: state.delivery_times(),
    })
}

/// Slot at which the last packet reaches the gateway. The schedule depends on
/// routes and queues only, never on message values.
pub fn completion_time(d: &Deployment) -> Result<usize> {
    let q = QuantizerSpec::lossless(d, 1.0);
    let mut state = PfState::new(d, &vec![0.0; d.num_nodes()], &q)?;
    // every packet moves at least once per |E| slots while queues are non-empty
    let limit = 1 + d.num_nodes() * d.num_edges().max(1);
    while state.delivered_count() < d.num_nodes() {
        if state.t() > limit {
            return Err(QncError::Degenerate("forwarding did not drain".into()));
        }
        state.step();
    }
    Ok(state.t())
}

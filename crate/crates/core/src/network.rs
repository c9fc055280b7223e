//! Directed-graph model of the sensor network.
//!
//! Nodes are indexed `0..n` in memory. The JSON file format numbers nodes
//! `1..=n`, and edges appear in canonical order (lexicographic by
//! `(tail, head)`), so edge ids are the positions in that list.

use std::collections::VecDeque;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{QncError, Result};

/// Rejection-sampling budget for [`generate_deployment`].
pub const MAX_DEPLOYMENT_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub tail: usize,
    pub head: usize,
    /// Bits per channel use.
    pub capacity: u32,
}

/// An immutable network deployment with a designated gateway.
#[derive(Debug, Clone, PartialEq)]
pub struct Deployment {
    n: usize,
    edges: Vec<Edge>,
    gateway: usize,
    seed: u64,
    incoming: Vec<Vec<usize>>,
    outgoing: Vec<Vec<usize>>,
}

impl Deployment {
    /// Builds a deployment from an edge list, sorting edges into canonical order.
    ///
    /// Fails on out-of-range ids, self-loops, duplicated pairs, zero capacities
    /// or a node that has no directed path to the gateway.
    pub fn new(n: usize, mut edges: Vec<Edge>, gateway: usize, seed: u64) -> Result<Self> {
        if n < 2 {
            return Err(QncError::InvalidParameters(format!("need n >= 2, got {n}")));
        }
        if gateway >= n {
            return Err(QncError::InvalidParameters(format!(
                "gateway {gateway} out of range for n={n}"
            )));
        }
        for e in &edges {
            if e.tail >= n || e.head >= n {
                return Err(QncError::InvalidParameters(format!(
                    "edge {}->{} out of range for n={n}",
                    e.tail, e.head
                )));
            }
            if e.tail == e.head {
                return Err(QncError::InvalidParameters(format!("self-loop at node {}", e.tail)));
            }
            if e.capacity == 0 {
                return Err(QncError::InvalidParameters(format!(
                    "edge {}->{} has zero capacity",
                    e.tail, e.head
                )));
            }
        }
        edges.sort_by_key(|e| (e.tail, e.head));
        if let Some(w) = edges.windows(2).find(|w| (w[0].tail, w[0].head) == (w[1].tail, w[1].head)) {
            return Err(QncError::InvalidParameters(format!(
                "duplicated edge {}->{}",
                w[0].tail, w[0].head
            )));
        }

        let mut incoming = vec![Vec::new(); n];
        let mut outgoing = vec![Vec::new(); n];
        for (id, e) in edges.iter().enumerate() {
            incoming[e.head].push(id);
            outgoing[e.tail].push(id);
        }
        let d = Deployment {
            n,
            edges,
            gateway,
            seed,
            incoming,
            outgoing,
        };
        if let Some(v) = d.first_unreachable() {
            return Err(QncError::UnreachableNode(v));
        }
        Ok(d)
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: usize) -> Edge {
        self.edges[id]
    }

    pub fn gateway(&self) -> usize {
        self.gateway
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Edges whose head is `v`, in ascending id order.
    pub fn in_edges(&self, v: usize) -> &[usize] {
        &self.incoming[v]
    }

    /// Edges whose tail is `v`, in ascending id order.
    pub fn out_edges(&self, v: usize) -> &[usize] {
        &self.outgoing[v]
    }

    pub fn capacities(&self) -> Vec<u32> {
        self.edges.iter().map(|e| e.capacity).collect()
    }

    /// Number of packets the gateway receives per time index.
    pub fn measurements_per_step(&self) -> usize {
        self.incoming[self.gateway].len()
    }

    /// Reverse BFS from the gateway; returns the first node that cannot reach it.
    fn first_unreachable(&self) -> Option<usize> {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([self.gateway]);
        seen[self.gateway] = true;
        while let Some(v) = queue.pop_front() {
            for &e in &self.incoming[v] {
                let u = self.edges[e].tail;
                if !seen[u] {
                    seen[u] = true;
                    queue.push_back(u);
                }
            }
        }
        seen.iter().position(|&s| !s)
    }

    pub fn build_gateway_selector(&self) -> GatewaySelector {
        GatewaySelector {
            rows: self.incoming[self.gateway].clone(),
            num_edges: self.edges.len(),
        }
    }

    pub fn to_file(&self) -> DeploymentFile {
        DeploymentFile {
            n: self.n,
            gateway: self.gateway + 1,
            seed: self.seed,
            edges: self
                .edges
                .iter()
                .map(|e| [e.tail as u64 + 1, e.head as u64 + 1, e.capacity as u64])
                .collect(),
        }
    }

    pub fn from_file(file: DeploymentFile) -> Result<Self> {
        if file.gateway == 0 {
            return Err(QncError::InvalidParameters("node ids start at 1".into()));
        }
        let edges = file
            .edges
            .iter()
            .map(|&[tail, head, capacity]| {
                if tail == 0 || head == 0 {
                    return Err(QncError::InvalidParameters("node ids start at 1".into()));
                }
                Ok(Edge {
                    tail: tail as usize - 1,
                    head: head as usize - 1,
                    capacity: u32::try_from(capacity)
                        .map_err(|_| QncError::InvalidParameters("capacity too large".into()))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Deployment::new(file.n, edges, file.gateway - 1, file.seed)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(f, &self.to_file())?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::from_file(serde_json::from_reader(f)?)
    }
}

/// On-disk form of a [`Deployment`]; node ids are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentFile {
    pub n: usize,
    pub gateway: usize,
    pub seed: u64,
    /// `[tail, head, capacity]` triples in canonical order.
    pub edges: Vec<[u64; 3]>,
}

/// The 0/1 matrix picking the gateway's incoming edges out of the edge-content vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GatewaySelector {
    rows: Vec<usize>,
    num_edges: usize,
}

impl GatewaySelector {
    /// Edge id selected by each row.
    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn select(&self, y: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|&e| y[e]).collect()
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(self.rows.len(), self.num_edges);
        for (i, &e) in self.rows.iter().enumerate() {
            b[(i, e)] = 1.0;
        }
        b
    }
}

/// Samples a random deployment with unit capacities.
pub fn generate_deployment(n: usize, num_edges: usize, seed: u64) -> Result<Deployment> {
    generate_deployment_with_capacity(n, num_edges, 1, seed)
}

/// Samples `num_edges` distinct ordered pairs uniformly and a uniform gateway,
/// resampling the whole deployment until every node reaches the gateway.
pub fn generate_deployment_with_capacity(
    n: usize,
    num_edges: usize,
    capacity: u32,
    seed: u64,
) -> Result<Deployment> {
    if n < 2 {
        return Err(QncError::InvalidParameters(format!("need n >= 2, got {n}")));
    }
    let max_edges = n * (n - 1);
    if num_edges > max_edges {
        return Err(QncError::InvalidParameters(format!(
            "{num_edges} edges requested but only {max_edges} ordered pairs exist for n={n}"
        )));
    }
    if capacity == 0 {
        return Err(QncError::InvalidParameters("capacity must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_DEPLOYMENT_ATTEMPTS {
        let edges = index::sample(&mut rng, max_edges, num_edges)
            .into_iter()
            .map(|pair| {
                let tail = pair / (n - 1);
                let offset = pair % (n - 1);
                let head = if offset >= tail { offset + 1 } else { offset };
                Edge { tail, head, capacity }
            })
            .collect();
        let gateway = rng.gen_range(0..n);
        match Deployment::new(n, edges, gateway, seed) {
            Ok(d) => return Ok(d),
            Err(QncError::UnreachableNode(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(QncError::NonConvergence {
        attempts: MAX_DEPLOYMENT_ATTEMPTS,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge(tail: usize, head: usize) -> Edge {
        Edge { tail, head, capacity: 1 }
    }

    #[test]
    fn chain_incidence() {
        let d = Deployment::new(3, vec![edge(1, 2), edge(0, 1)], 2, 0).unwrap();
        // canonical order puts 0->1 first
        assert_eq!(d.edge(0), edge(0, 1));
        assert_eq!(d.in_edges(1), &[0]);
        assert_eq!(d.out_edges(1), &[1]);
        assert!(d.in_edges(0).is_empty());
    }

    #[test]
    fn selector_for_star() {
        let d = Deployment::new(3, vec![edge(0, 2), edge(1, 2)], 2, 0).unwrap();
        let b = d.build_gateway_selector().to_matrix();
        assert_eq!(b, DMatrix::identity(2, 2));
    }

    #[test]
    fn selector_single_incoming_edge() {
        // six edges, the gateway (node 3) only fed by 2->3, which sorts last
        let edges = vec![edge(0, 1), edge(1, 0), edge(0, 2), edge(2, 0), edge(3, 0), edge(2, 3)];
        let d = Deployment::new(4, edges, 3, 0).unwrap();
        let b = d.build_gateway_selector().to_matrix();
        assert_eq!(b.nrows(), 1);
        assert_eq!(b.row(0).iter().copied().collect::<Vec<_>>(), vec![0., 0., 0., 0., 1., 0.]);
        assert_eq!(&b * b.transpose(), DMatrix::identity(1, 1));
    }

    #[test]
    fn rejects_bad_graphs() {
        assert!(matches!(
            Deployment::new(3, vec![edge(0, 0)], 2, 0),
            Err(QncError::InvalidParameters(_))
        ));
        assert!(matches!(
            Deployment::new(3, vec![edge(0, 2), edge(0, 2), edge(1, 2)], 2, 0),
            Err(QncError::InvalidParameters(_))
        ));
        assert!(matches!(
            Deployment::new(3, vec![edge(0, 2)], 2, 0),
            Err(QncError::UnreachableNode(1))
        ));
    }

    #[test]
    fn smallest_connected_case() {
        let d = generate_deployment(2, 1, 11).unwrap();
        assert_eq!(d.num_edges(), 1);
        assert_eq!(d.edge(0).head, d.gateway());
    }

    #[test]
    fn too_many_edges() {
        assert!(matches!(
            generate_deployment(3, 7, 0),
            Err(QncError::InvalidParameters(_))
        ));
        assert!(generate_deployment(3, 6, 0).is_ok());
    }

    #[test]
    fn sparse_graph_fails_to_connect() {
        // 50 nodes cannot all reach a gateway with 10 edges
        assert!(matches!(
            generate_deployment(50, 10, 1),
            Err(QncError::NonConvergence { .. })
        ));
    }

    #[test]
    fn full_scale_deployment() {
        let d = generate_deployment(100, 1100, 5).unwrap();
        assert_eq!(d.num_nodes(), 100);
        assert_eq!(d.num_edges(), 1100);
        let in_count = d.edges().iter().filter(|e| e.head == d.gateway()).count();
        assert_eq!(d.measurements_per_step(), in_count);
        assert_eq!(d.build_gateway_selector().num_rows(), in_count);
    }

    #[test]
    fn json_round_trip() {
        let d = generate_deployment(12, 40, 3).unwrap();
        let text = serde_json::to_string(&d.to_file()).unwrap();
        let back = Deployment::from_file(serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back, d);
    }
}

//! Random connected topologies with a prescribed connectivity ratio.
//!
//! The connectivity ratio `c` is the fraction of the `N(N-1)/2` possible
//! undirected edges that are active, so the average degree is `c(N-1)`.
//! Generation draws a uniform spanning tree of the complete graph with
//! Wilson's algorithm and then tops the edge set up with uniformly chosen
//! non-edges, which keeps every sample connected without rejection.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::io::Write;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};

/// Undirected simple graph on nodes `0..n_nodes`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTopology {
    n_nodes: usize,
    /// Sorted `(m, n)` pairs with `m < n`.
    edges: Vec<(usize, usize)>,
    /// Sorted neighbor list per node.
    adjacency: Vec<Vec<usize>>,
}

/// Number of possible undirected edges on `n` nodes.
pub fn max_edges(n_nodes: usize) -> usize {
    n_nodes * n_nodes.saturating_sub(1) / 2
}

/// Edge budget `round(c * N(N-1)/2)`.
pub fn edge_budget(n_nodes: usize, connectivity: f64) -> usize {
    (connectivity * max_edges(n_nodes) as f64).round() as usize
}

/// Smallest connectivity ratio that still admits a spanning tree, `2/N`.
pub fn min_connectivity(n_nodes: usize) -> f64 {
    if n_nodes < 2 {
        0.0
    } else {
        (n_nodes - 1) as f64 / max_edges(n_nodes) as f64
    }
}

/// Checks that `(n_nodes, connectivity)` describes a feasible connected graph.
pub fn check_feasible(n_nodes: usize, connectivity: f64) -> Result<()> {
    if n_nodes == 0 {
        return Err(Error::invalid("n_nodes", "must be positive"));
    }
    if !(0.0..=1.0).contains(&connectivity) {
        return Err(Error::invalid(
            "connectivity",
            format!("{connectivity} is outside [0, 1]"),
        ));
    }
    if edge_budget(n_nodes, connectivity) + 1 < n_nodes {
        return Err(Error::InfeasibleConnectivity {
            n_nodes,
            connectivity,
            min_connectivity: min_connectivity(n_nodes),
        });
    }
    Ok(())
}

/// Samples a connected graph with exactly `edge_budget(n_nodes, connectivity)`
/// edges.
pub fn generate_random_topology<R: Rng + ?Sized>(
    n_nodes: usize,
    connectivity: f64,
    rng: &mut R,
) -> Result<NetworkTopology> {
    check_feasible(n_nodes, connectivity)?;
    let budget = edge_budget(n_nodes, connectivity);

    let mut present = vec![false; n_nodes * n_nodes];
    let mut edges = wilson_spanning_tree(n_nodes, rng);
    for &(m, n) in &edges {
        present[m * n_nodes + n] = true;
    }

    let extra = budget - edges.len();
    if extra > 0 {
        let candidates: Vec<(usize, usize)> = (0..n_nodes)
            .flat_map(|m| ((m + 1)..n_nodes).map(move |n| (m, n)))
            .filter(|&(m, n)| !present[m * n_nodes + n])
            .collect();
        for i in index::sample(rng, candidates.len(), extra) {
            edges.push(candidates[i]);
        }
    }
    NetworkTopology::from_edges(n_nodes, &edges)
}

/// Uniform spanning tree of the complete graph `K_n` via loop-erased random
/// walks rooted at node 0.
fn wilson_spanning_tree<R: Rng + ?Sized>(n_nodes: usize, rng: &mut R) -> Vec<(usize, usize)> {
    let mut in_tree = vec![false; n_nodes];
    let mut next = vec![usize::MAX; n_nodes];
    let mut edges = Vec::with_capacity(n_nodes.saturating_sub(1));
    if n_nodes == 0 {
        return edges;
    }
    in_tree[0] = true;
    for start in 1..n_nodes {
        let mut u = start;
        while !in_tree[u] {
            // uniform neighbor of u in K_n
            let mut v = rng.random_range(0..n_nodes - 1);
            if v >= u {
                v += 1;
            }
            next[u] = v;
            u = v;
        }
        let mut u = start;
        while !in_tree[u] {
            in_tree[u] = true;
            edges.push((u.min(next[u]), u.max(next[u])));
            u = next[u];
        }
    }
    edges
}

impl NetworkTopology {
    /// Builds a topology from an explicit edge list. Edges may be given in any
    /// orientation; self-loops, duplicates and out-of-range ids are rejected.
    /// Connectivity is not required here, see [`NetworkTopology::is_connected`].
    pub fn from_edges(n_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n_nodes == 0 {
            return Err(Error::invalid("n_nodes", "must be positive"));
        }
        let mut normalized: Vec<(usize, usize)> = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a == b || a >= n_nodes || b >= n_nodes {
                return Err(Error::InvalidEdge(a, b));
            }
            normalized.push((a.min(b), a.max(b)));
        }
        normalized.sort_unstable();
        if let Some(w) = normalized.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidEdge(w[0].0, w[0].1));
        }
        let mut adjacency = vec![Vec::new(); n_nodes];
        for &(m, n) in &normalized {
            adjacency[m].push(n);
            adjacency[n].push(m);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Self {
            n_nodes,
            edges: normalized,
            adjacency,
        })
    }

    pub fn path(n_nodes: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n_nodes).map(|n| (n - 1, n)).collect();
        Self::from_edges(n_nodes, &edges)
    }

    pub fn complete(n_nodes: usize) -> Result<Self> {
        let edges: Vec<_> = (0..n_nodes)
            .flat_map(|m| ((m + 1)..n_nodes).map(move |n| (m, n)))
            .collect();
        Self::from_edges(n_nodes, &edges)
    }

    /// Star with node 0 at the center.
    pub fn star(n_nodes: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n_nodes).map(|n| (0, n)).collect();
        Self::from_edges(n_nodes, &edges)
    }

    pub fn ring(n_nodes: usize) -> Result<Self> {
        let mut edges: Vec<_> = (1..n_nodes).map(|n| (n - 1, n)).collect();
        if n_nodes > 2 {
            edges.push((0, n_nodes - 1));
        }
        Self::from_edges(n_nodes, &edges)
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Number of directed messages exchanged per round, `2|E|`.
    pub fn n_directed_edges(&self) -> usize {
        2 * self.edges.len()
    }

    /// Active fraction of all possible edges.
    pub fn connectivity(&self) -> f64 {
        let max = max_edges(self.n_nodes);
        if max == 0 {
            0.0
        } else {
            self.edges.len() as f64 / max as f64
        }
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adjacency.iter().map(Vec::len).collect()
    }

    pub fn average_degree(&self) -> f64 {
        2.0 * self.edges.len() as f64 / self.n_nodes as f64
    }

    /// Sorted neighbors of `node`.
    pub fn neighbors(&self, node: usize) -> Result<&[usize]> {
        self.adjacency
            .get(node)
            .map(Vec::as_slice)
            .ok_or(Error::NodeOutOfRange {
                node,
                n_nodes: self.n_nodes,
            })
    }

    /// Same as [`neighbors`](Self::neighbors) for ids already known to be valid.
    pub(crate) fn adj(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    /// Position of `other` in the sorted neighbor list of `node`.
    pub fn neighbor_slot(&self, node: usize, other: usize) -> Option<usize> {
        self.adjacency.get(node)?.binary_search(&other).ok()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.neighbor_slot(a, b).is_some()
    }

    /// Breadth-first reachability from node 0.
    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n_nodes];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut visited = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &self.adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    visited += 1;
                    queue.push_back(v);
                }
            }
        }
        visited == self.n_nodes
    }

    pub fn is_tree(&self) -> bool {
        self.edges.len() + 1 == self.n_nodes && self.is_connected()
    }

    /// Longest shortest-path distance; `None` for disconnected graphs.
    pub fn diameter(&self) -> Option<usize> {
        let mut diameter = 0;
        for src in 0..self.n_nodes {
            let mut dist = vec![usize::MAX; self.n_nodes];
            dist[src] = 0;
            let mut queue = VecDeque::from([src]);
            while let Some(u) = queue.pop_front() {
                for &v in &self.adjacency[u] {
                    if dist[v] == usize::MAX {
                        dist[v] = dist[u] + 1;
                        queue.push_back(v);
                    }
                }
            }
            diameter = diameter.max(*dist.iter().max()?);
            if dist.contains(&usize::MAX) {
                return None;
            }
        }
        Some(diameter)
    }

    /// Dense combinatorial Laplacian `D - A`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let n = self.n_nodes;
        let mut l = DMatrix::zeros(n, n);
        for &(a, b) in &self.edges {
            l[(a, b)] = -1.0;
            l[(b, a)] = -1.0;
            l[(a, a)] += 1.0;
            l[(b, b)] += 1.0;
        }
        l
    }

    /// Debug export: node count on the first line, then one `m n` pair per edge.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("{}\n", self.n_nodes);
        for &(m, n) in &self.edges {
            let _ = writeln!(out, "{m} {n}");
        }
        out
    }

    pub fn write_edge_list<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(self.to_edge_list().as_bytes())
    }

    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let bad = |line: &str| Error::Config {
            key: "edge_list".into(),
            reason: format!("malformed line `{line}`"),
        };
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines.next().ok_or_else(|| bad(""))?;
        let n_nodes: usize = header.parse().map_err(|_| bad(header))?;
        let mut edges = Vec::new();
        for line in lines {
            let mut parts = line.split_whitespace();
            let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(bad(line));
            };
            edges.push((
                a.parse().map_err(|_| bad(line))?,
                b.parse().map_err(|_| bad(line))?,
            ));
        }
        Self::from_edges(n_nodes, &edges)
    }
}

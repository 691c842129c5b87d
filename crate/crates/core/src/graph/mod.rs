//! Undirected simple graphs and the path-distance statistics built on them.

mod generate;
mod io;
mod stats;

pub use generate::{generate_er, generate_rgg, generate_rgg_with_positions};
pub use io::{parse_edge_list, read_edge_list, write_edge_list};
pub use stats::{hac_bandwidth, GraphStats};

use std::collections::VecDeque;
use std::sync::OnceLock;

use crate::error::{invalid, Result};

/// Path distance between two units. Unreachable pairs carry [`UNREACHABLE`].
pub type Distance = u32;

/// Sentinel for "infinite" path distance.
pub const UNREACHABLE: Distance = Distance::MAX;

/// Immutable undirected simple graph in compressed adjacency form.
///
/// Neighbor lists are sorted and duplicate free; no unit is its own neighbor.
#[derive(Debug, Clone)]
pub struct Graph {
    offsets: Vec<usize>,
    adjacency: Vec<usize>,
    stats: OnceLock<GraphStats>,
}

impl PartialEq for Graph {
    fn eq(&self, other: &Self) -> bool {
        self.offsets == other.offsets && self.adjacency == other.adjacency
    }
}

impl Eq for Graph {}

impl Graph {
    /// Builds a graph on `n` units from an undirected edge list. Duplicate
    /// edges (in either orientation) collapse; self-links are rejected.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut lists = vec![Vec::new(); n];
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(invalid(format!("edge ({i}, {j}) out of range for n = {n}")));
            }
            if i == j {
                return Err(invalid(format!("self-link at unit {i}")));
            }
            lists[i].push(j);
            lists[j].push(i);
        }
        Ok(Self::from_lists(lists))
    }

    /// Builds a graph from per-unit neighbor lists. Lists are symmetrized,
    /// sorted and deduplicated; self-links are dropped.
    pub fn from_adjacency_lists(lists: Vec<Vec<usize>>) -> Result<Self> {
        let n = lists.len();
        let mut sym = vec![Vec::new(); n];
        for (i, list) in lists.iter().enumerate() {
            for &j in list {
                if j >= n {
                    return Err(invalid(format!("neighbor {j} of {i} out of range")));
                }
                if j != i {
                    sym[i].push(j);
                    sym[j].push(i);
                }
            }
        }
        Ok(Self::from_lists(sym))
    }

    fn from_lists(mut lists: Vec<Vec<usize>>) -> Self {
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        offsets.push(0);
        let mut adjacency = Vec::new();
        for list in lists.iter_mut() {
            list.sort_unstable();
            list.dedup();
            adjacency.extend_from_slice(list);
            offsets.push(adjacency.len());
        }
        Self {
            offsets,
            adjacency,
            stats: OnceLock::new(),
        }
    }

    /// Graph with `n` units and no links.
    pub fn empty(n: usize) -> Self {
        Self::from_lists(vec![Vec::new(); n])
    }

    pub fn complete(n: usize) -> Self {
        Self::from_lists((0..n).map(|i| (0..n).filter(|&j| j != i).collect()).collect())
    }

    /// Path `0 - 1 - ... - (n-1)`.
    pub fn path(n: usize) -> Self {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::from_edges(n, &edges).expect("path edges are valid")
    }

    pub fn cycle(n: usize) -> Self {
        assert!(n >= 3, "cycle needs at least 3 units");
        let mut edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        edges.push((n - 1, 0));
        Self::from_edges(n, &edges).expect("cycle edges are valid")
    }

    /// Star with center 0 and `leaves` leaves.
    pub fn star(leaves: usize) -> Self {
        let edges: Vec<_> = (1..=leaves).map(|j| (0, j)).collect();
        Self::from_edges(leaves + 1, &edges).expect("star edges are valid")
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.offsets.len() - 1
    }

    #[inline]
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[self.offsets[i]..self.offsets[i + 1]]
    }

    #[inline]
    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.n()).map(|i| self.degree(i)).collect()
    }

    /// Number of undirected links.
    pub fn edge_count(&self) -> usize {
        self.adjacency.len() / 2
    }

    /// CSR offsets: neighbors of `i` occupy `offsets[i]..offsets[i + 1]`
    /// of [`Graph::adjacency`].
    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn adjacency(&self) -> &[usize] {
        &self.adjacency
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors(i).binary_search(&j).is_ok()
    }

    /// Undirected links as `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.n())
            .flat_map(|i| self.neighbors(i).iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
            .collect()
    }

    /// Mean over neighbors of `values`, zero for isolated units.
    pub fn neighbor_mean(&self, values: &[f64], i: usize) -> f64 {
        let nbrs = self.neighbors(i);
        if nbrs.is_empty() {
            0.0
        } else {
            nbrs.iter().map(|&j| values[j]).sum::<f64>() / nbrs.len() as f64
        }
    }

    pub fn neighbor_means(&self, values: &[f64]) -> Vec<f64> {
        (0..self.n()).map(|i| self.neighbor_mean(values, i)).collect()
    }

    /// Relabels units: unit `i` of `self` becomes unit `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n();
        if perm.len() != n {
            return Err(invalid("permutation length differs from n"));
        }
        let mut seen = vec![false; n];
        for &p in perm {
            if p >= n || seen[p] {
                return Err(invalid("not a permutation"));
            }
            seen[p] = true;
        }
        let mut lists = vec![Vec::new(); n];
        for i in 0..n {
            lists[perm[i]] = self.neighbors(i).iter().map(|&j| perm[j]).collect();
        }
        Ok(Self::from_lists(lists))
    }

    /// Single-source shortest path lengths from `source`.
    pub fn bfs_distances(&self, source: usize) -> Vec<Distance> {
        let mut dist = vec![UNREACHABLE; self.n()];
        let mut queue = VecDeque::new();
        dist[source] = 0;
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            let next = dist[u] + 1;
            for &v in self.neighbors(u) {
                if dist[v] == UNREACHABLE {
                    dist[v] = next;
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Units within path distance `radius` of `i`, grouped by distance:
    /// entry `s` holds the boundary `{j : l(i, j) = s}` (sorted).
    pub fn shells(&self, i: usize, radius: usize) -> Vec<Vec<usize>> {
        let mut shells = vec![vec![i]];
        let mut seen = std::collections::HashSet::from([i]);
        for _ in 0..radius {
            let mut next = Vec::new();
            for &u in shells.last().expect("non-empty") {
                for &v in self.neighbors(u) {
                    if seen.insert(v) {
                        next.push(v);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            next.sort_unstable();
            shells.push(next);
        }
        shells
    }

    /// `N(i, K)`: sorted units at path distance at most `radius` from `i`.
    pub fn k_neighborhood(&self, i: usize, radius: usize) -> Vec<usize> {
        let mut all: Vec<usize> = self.shells(i, radius).into_iter().flatten().collect();
        all.sort_unstable();
        all
    }

    /// `N^∂(i, s)`: sorted units at path distance exactly `s` from `i`.
    pub fn neighborhood_boundary(&self, i: usize, s: usize) -> Vec<usize> {
        self.shells(i, s).into_iter().nth(s).unwrap_or_default()
    }

    /// Subgraph induced by `units`, relabeled in increasing order of the
    /// original labels.
    pub fn induced_subgraph(&self, units: &[usize]) -> Result<InducedSubgraph> {
        if units.is_empty() {
            return Err(invalid("induced subgraph of an empty unit set"));
        }
        let mut original = units.to_vec();
        original.sort_unstable();
        original.dedup();
        if *original.last().expect("non-empty") >= self.n() {
            return Err(invalid("unit out of range"));
        }
        let lists = original
            .iter()
            .map(|&u| {
                self.neighbors(u)
                    .iter()
                    .filter_map(|v| original.binary_search(v).ok())
                    .collect()
            })
            .collect();
        Ok(InducedSubgraph {
            graph: Self::from_lists(lists),
            original,
        })
    }

    /// Summary statistics, computed once and cached.
    pub fn stats(&self) -> &GraphStats {
        self.stats.get_or_init(|| GraphStats::compute(self))
    }
}

/// Result of [`Graph::induced_subgraph`].
#[derive(Debug, Clone)]
pub struct InducedSubgraph {
    pub graph: Graph,
    /// `original[k]` is the label in the parent graph of local unit `k`.
    pub original: Vec<usize>,
}

impl InducedSubgraph {
    /// Local label of parent unit `unit`, if it belongs to the subgraph.
    pub fn local(&self, unit: usize) -> Option<usize> {
        self.original.binary_search(&unit).ok()
    }
}

//! Immutable weighted undirected graph in compressed sparse row form.

use crate::error::{Error, Result};

/// Weighted undirected graph.
///
/// Every edge `{i, j}` is stored twice, once in each endpoint's row, and each
/// row is sorted by neighbor index. Zero-weight edges are kept: they carry no
/// cut weight but still count towards a vertex's neighborhood size.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Graph {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    weights: Vec<i64>,
    total_abs_weight: i64,
}

impl Graph {
    /// Builds a graph from an undirected edge list. Each unordered pair may
    /// appear at most once, in either orientation.
    pub fn from_edges<I>(n_vertices: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, i64)>,
    {
        let mut rows: Vec<Vec<(usize, i64)>> = vec![Vec::new(); n_vertices];
        for (u, v, w) in edges {
            for x in [u, v] {
                if x >= n_vertices {
                    return Err(Error::Index {
                        vertex: x,
                        n_vertices,
                    });
                }
            }
            if u == v {
                return Err(Error::Argument(format!("self-loop at vertex {u}")));
            }
            rows[u].push((v, w));
            rows[v].push((u, w));
        }

        let mut offsets = Vec::with_capacity(n_vertices + 1);
        let mut neighbors = Vec::new();
        let mut weights = Vec::new();
        let mut total_abs_weight = 0;
        offsets.push(0);
        for (i, row) in rows.iter_mut().enumerate() {
            row.sort_unstable_by_key(|&(j, _)| j);
            for pair in row.windows(2) {
                if pair[0].0 == pair[1].0 {
                    return Err(Error::Argument(format!(
                        "duplicate edge ({i}, {})",
                        pair[0].0
                    )));
                }
            }
            for &(j, w) in row.iter() {
                neighbors.push(j);
                weights.push(w);
                if i < j {
                    total_abs_weight += w.abs();
                }
            }
            offsets.push(neighbors.len());
        }

        Ok(Self {
            offsets,
            neighbors,
            weights,
            total_abs_weight,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of undirected edges, zero-weight edges included.
    pub fn n_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn total_abs_weight(&self) -> i64 {
        self.total_abs_weight
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    /// Neighbor indices of `v`, sorted ascending.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    /// Edge weights aligned with [`Graph::neighbors`].
    pub fn weights(&self, v: usize) -> &[i64] {
        &self.weights[self.offsets[v]..self.offsets[v + 1]]
    }

    /// `(neighbor, weight)` pairs of `v`.
    pub fn adjacent(&self, v: usize) -> impl Iterator<Item = (usize, i64)> + '_ {
        self.neighbors(v)
            .iter()
            .copied()
            .zip(self.weights(v).iter().copied())
    }

    /// Each undirected edge once, as `(i, j, w)` with `i < j`, in row order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, i64)> + '_ {
        (0..self.n_vertices()).flat_map(move |i| {
            self.adjacent(i)
                .filter(move |&(j, _)| i < j)
                .map(move |(j, w)| (i, j, w))
        })
    }

    /// Relabels vertex `v` as `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n_vertices() {
            return Err(Error::Dimension {
                expected: self.n_vertices(),
                got: perm.len(),
            });
        }
        Self::from_edges(
            self.n_vertices(),
            self.edges().map(|(i, j, w)| (perm[i], perm[j], w)),
        )
    }
}

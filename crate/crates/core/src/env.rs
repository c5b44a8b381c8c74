//! Exact cut algebra and the incrementally maintained flip environment.
//!
//! Cut values and peeks are kept as exact integers. Real-valued quantities
//! only appear in [`observe`] and [`reward`], where they are normalized by the
//! vertex count.

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Sentinel stored in `last_flip_step` for vertices that were never flipped.
pub const NEVER_FLIPPED: i64 = -1;

fn check_len(graph: &Graph, labels: &[bool]) -> Result<()> {
    if labels.len() != graph.n_vertices() {
        return Err(Error::Dimension {
            expected: graph.n_vertices(),
            got: labels.len(),
        });
    }
    Ok(())
}

#[inline]
fn spin(z: bool) -> i64 {
    if z {
        1
    } else {
        -1
    }
}

/// Total weight of edges whose endpoints carry different labels.
pub fn cut_value(graph: &Graph, labels: &[bool]) -> Result<i64> {
    check_len(graph, labels)?;
    Ok(graph
        .edges()
        .filter(|&(i, j, _)| labels[i] != labels[j])
        .map(|(_, _, w)| w)
        .sum())
}

/// Change in cut value from flipping each vertex:
/// `peek_i = sum_j w_ij (2 z_i - 1)(2 z_j - 1)`.
pub fn compute_peeks(graph: &Graph, labels: &[bool]) -> Result<Vec<i64>> {
    check_len(graph, labels)?;
    Ok((0..graph.n_vertices())
        .map(|i| {
            let si = spin(labels[i]);
            graph
                .adjacent(i)
                .map(|(j, w)| w * si * spin(labels[j]))
                .sum()
        })
        .collect())
}

/// Compact copy of everything needed to rebuild a [`CutState`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EnvSnapshot {
    pub labels: Vec<bool>,
    pub last_flip_step: Vec<i32>,
    pub step: i64,
    pub best_cut: i64,
    pub best_labels: Vec<bool>,
}

/// Mutable labeling with cached cut value, peeks, flip timestamps and the
/// best labeling seen so far.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CutState {
    labels: Vec<bool>,
    cut_value: i64,
    peeks: Vec<i64>,
    last_flip_step: Vec<i64>,
    step: i64,
    best_cut: i64,
    best_labels: Vec<bool>,
}

impl CutState {
    pub fn new(graph: &Graph, labels: Vec<bool>) -> Result<Self> {
        let cut = cut_value(graph, &labels)?;
        let peeks = compute_peeks(graph, &labels)?;
        Ok(Self {
            best_labels: labels.clone(),
            labels,
            cut_value: cut,
            peeks,
            last_flip_step: vec![NEVER_FLIPPED; graph.n_vertices()],
            step: 0,
            best_cut: cut,
        })
    }

    pub fn from_snapshot(graph: &Graph, snap: &EnvSnapshot) -> Result<Self> {
        let mut state = Self::new(graph, snap.labels.clone())?;
        check_len(graph, &snap.best_labels)?;
        if snap.last_flip_step.len() != graph.n_vertices() {
            return Err(Error::Dimension {
                expected: graph.n_vertices(),
                got: snap.last_flip_step.len(),
            });
        }
        state.last_flip_step = snap.last_flip_step.iter().map(|&s| s as i64).collect();
        state.step = snap.step;
        state.best_cut = snap.best_cut;
        state.best_labels = snap.best_labels.clone();
        Ok(state)
    }

    pub fn snapshot(&self) -> EnvSnapshot {
        EnvSnapshot {
            labels: self.labels.clone(),
            last_flip_step: self.last_flip_step.iter().map(|&s| s as i32).collect(),
            step: self.step,
            best_cut: self.best_cut,
            best_labels: self.best_labels.clone(),
        }
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn cut_value(&self) -> i64 {
        self.cut_value
    }

    pub fn peeks(&self) -> &[i64] {
        &self.peeks
    }

    pub fn last_flip_step(&self) -> &[i64] {
        &self.last_flip_step
    }

    pub fn step(&self) -> i64 {
        self.step
    }

    pub fn best_cut(&self) -> i64 {
        self.best_cut
    }

    pub fn best_labels(&self) -> &[bool] {
        &self.best_labels
    }

    pub fn n_vertices(&self) -> usize {
        self.labels.len()
    }

    /// Largest peek, or 0 for an empty graph.
    pub fn max_peek(&self) -> i64 {
        self.peeks.iter().copied().max().unwrap_or(0)
    }

    /// Flips `vertex` in O(deg(vertex)).
    ///
    /// A neighbor's peek term `w_ij s_i s_j` changes sign when `s_i` does, so
    /// its peek moves by twice the pre-flip term.
    pub fn apply_flip(&mut self, graph: &Graph, vertex: usize) -> Result<()> {
        let n = self.labels.len();
        if vertex >= n {
            return Err(Error::Index {
                vertex,
                n_vertices: n,
            });
        }
        let si = spin(self.labels[vertex]);
        for (j, w) in graph.adjacent(vertex) {
            self.peeks[j] -= 2 * w * si * spin(self.labels[j]);
        }
        self.cut_value += self.peeks[vertex];
        self.peeks[vertex] = -self.peeks[vertex];
        self.labels[vertex] = !self.labels[vertex];
        self.last_flip_step[vertex] = self.step;
        self.step += 1;
        if self.cut_value > self.best_cut {
            self.best_cut = self.cut_value;
            self.best_labels.copy_from_slice(&self.labels);
        }
        Ok(())
    }
}

/// Per-vertex and global features handed to the policy.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    /// Rows of `(label, peek / |V|, steps since flip / budget)`.
    pub per_vertex: Vec<[f64; 3]>,
    /// `((best - current) / |V|, max peek / |V|)`.
    pub global: [f64; 2],
}

/// Per-vertex observation row of vertex `i`.
#[inline]
pub fn vertex_features(state: &CutState, i: usize, episode_budget: usize) -> [f64; 3] {
    let n = state.n_vertices() as f64;
    let budget = episode_budget as f64;
    let since = match state.last_flip_step[i] {
        NEVER_FLIPPED => 1.0,
        t => ((state.step - t) as f64).min(budget) / budget,
    };
    [
        if state.labels[i] { 1.0 } else { 0.0 },
        state.peeks[i] as f64 / n,
        since,
    ]
}

#[inline]
pub fn global_features(state: &CutState) -> [f64; 2] {
    let n = state.n_vertices().max(1) as f64;
    [
        (state.best_cut - state.cut_value) as f64 / n,
        state.max_peek() as f64 / n,
    ]
}

pub fn observe(state: &CutState, episode_budget: usize) -> Observation {
    assert!(episode_budget > 0, "episode budget must be positive");
    Observation {
        per_vertex: (0..state.n_vertices())
            .map(|i| vertex_features(state, i, episode_budget))
            .collect(),
        global: global_features(state),
    }
}

/// Normalized, clipped improvement of the best cut.
pub fn reward(state_after_flip: &CutState, prev_best: i64, n_vertices: usize) -> f64 {
    ((state_after_flip.cut_value - prev_best) as f64 / n_vertices as f64).max(0.0)
}

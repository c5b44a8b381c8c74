//! Random instance families.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Values an edge weight is drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSet {
    /// `{0, 1}`
    Binary,
    /// `{0, -1, 1}`
    Signed,
}

/// Weight distribution of included edges: uniform over the set, or over the
/// set without 0 when `nonzero` is true.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub set: WeightSet,
    pub nonzero: bool,
}

impl WeightSpec {
    pub fn values(&self) -> &'static [i64] {
        match (self.set, self.nonzero) {
            (WeightSet::Binary, false) => &[0, 1],
            (WeightSet::Binary, true) => &[1],
            (WeightSet::Signed, false) => &[-1, 0, 1],
            (WeightSet::Signed, true) => &[-1, 1],
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        *self.values().choose(rng).expect("weight sets are non-empty")
    }
}

/// Includes each unordered pair independently with probability `edge_prob`.
pub fn generate_er(n: usize, edge_prob: f64, weights: WeightSpec, seed: u64) -> Result<Graph> {
    if !(0.0..=1.0).contains(&edge_prob) {
        return Err(Error::Argument(format!("edge probability {edge_prob} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(edge_prob) {
                edges.push((i, j, weights.draw(&mut rng)));
            }
        }
    }
    Graph::from_edges(n, edges)
}

/// Preferential attachment grown from a complete graph on `attachment`
/// vertices; every later vertex links to `attachment` distinct earlier
/// vertices chosen with probability proportional to degree.
pub fn generate_ba(n: usize, attachment: usize, weights: WeightSpec, seed: u64) -> Result<Graph> {
    if attachment < 1 || attachment >= n {
        return Err(Error::Argument(format!(
            "attachment {attachment} must satisfy 1 <= attachment < n = {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    // every vertex appears once per incident edge
    let mut endpoints: Vec<usize> = Vec::new();
    for i in 0..attachment {
        for j in i + 1..attachment {
            edges.push((i, j, weights.draw(&mut rng)));
            endpoints.extend([i, j]);
        }
    }
    let mut targets = Vec::with_capacity(attachment);
    for v in attachment..n {
        targets.clear();
        while targets.len() < attachment {
            let t = if endpoints.is_empty() {
                rng.random_range(0..v)
            } else {
                endpoints[rng.random_range(0..endpoints.len())]
            };
            if !targets.contains(&t) {
                targets.push(t);
            }
        }
        for &t in &targets {
            edges.push((t, v, weights.draw(&mut rng)));
            endpoints.extend([t, v]);
        }
    }
    Graph::from_edges(n, edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SIGNED: WeightSpec = WeightSpec {
        set: WeightSet::Signed,
        nonzero: false,
    };

    fn connected(g: &Graph) -> bool {
        let mut seen = vec![false; g.n_vertices()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &u in g.neighbors(v) {
                if !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        seen.iter().all(|&s| s)
    }

    #[test]
    fn er_extremes() {
        assert_eq!(generate_er(10, 0.0, SIGNED, 1).unwrap().n_edges(), 0);
        assert_eq!(generate_er(4, 1.0, SIGNED, 1).unwrap().n_edges(), 6);
        assert!(generate_er(4, 1.5, SIGNED, 1).is_err());
    }

    #[test]
    fn er_is_seeded_and_respects_weights() {
        let spec = WeightSpec {
            set: WeightSet::Signed,
            nonzero: true,
        };
        let a = generate_er(60, 0.2, spec, 9).unwrap();
        assert_eq!(a, generate_er(60, 0.2, spec, 9).unwrap());
        assert_ne!(a, generate_er(60, 0.2, spec, 10).unwrap());
        assert!(a.edges().all(|(_, _, w)| w == 1 || w == -1));
        let binary = WeightSpec {
            set: WeightSet::Binary,
            nonzero: false,
        };
        let b = generate_er(500, 0.1, binary, 3).unwrap();
        assert!(b.edges().all(|(_, _, w)| w == 0 || w == 1));
        let ones = b.edges().filter(|e| e.2 == 1).count() as f64 / b.n_edges() as f64;
        assert!((ones - 0.5).abs() < 0.02);
        let density = b.n_edges() as f64 / (500.0 * 499.0 / 2.0);
        assert!((density - 0.1).abs() < 0.005);
    }

    #[test]
    fn ba_small_and_counts() {
        let g = generate_ba(2, 1, SIGNED, 0).unwrap();
        assert_eq!(g.n_edges(), 1);
        for (n, m) in [(10, 1), (30, 4), (100, 3)] {
            let g = generate_ba(n, m, SIGNED, 5).unwrap();
            assert_eq!(g.n_edges(), m * (m - 1) / 2 + m * (n - m));
            assert!(connected(&g));
        }
        assert!(generate_ba(5, 0, SIGNED, 0).is_err());
        assert!(generate_ba(5, 5, SIGNED, 0).is_err());
        assert_eq!(generate_ba(50, 4, SIGNED, 2).unwrap(), generate_ba(50, 4, SIGNED, 2).unwrap());
    }

    #[test]
    fn ba_degrees_are_heavy_tailed() {
        for seed in 0..20 {
            let g = generate_ba(1000, 4, SIGNED, seed).unwrap();
            let max = (0..1000).map(|v| g.degree(v)).max().unwrap() as f64;
            let mean = 2.0 * g.n_edges() as f64 / 1000.0;
            assert!(max > 5.0 * mean, "seed {seed}: max {max}, mean {mean}");
        }
    }
}

//! Exhaustive Max-Cut for small instances and the approximation ratio.

use crate::env::compute_peeks;
use crate::error::{Error, Result};
use crate::graph::Graph;

/// Largest instance [`brute_force_max_cut`] accepts.
pub const BRUTE_FORCE_CAP: usize = 26;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OracleResult {
    pub best_cut: i64,
    pub best_labels: Vec<bool>,
    /// Optimal labelings counted once per complementary pair.
    pub n_optima: u64,
}

/// Enumerates all labelings with vertex 0 pinned to `false`, walking them in
/// Gray-code order so each step is a single flip.
pub fn brute_force_max_cut(graph: &Graph) -> Result<OracleResult> {
    brute_force_max_cut_capped(graph, BRUTE_FORCE_CAP)
}

pub fn brute_force_max_cut_capped(graph: &Graph, cap: usize) -> Result<OracleResult> {
    let n = graph.n_vertices();
    if n > cap || n > 63 {
        return Err(Error::Capacity {
            n_vertices: n,
            cap,
        });
    }
    if n <= 1 {
        return Ok(OracleResult {
            best_cut: 0,
            best_labels: vec![false; n],
            n_optima: 1,
        });
    }

    let mut labels = vec![false; n];
    let mut peeks = compute_peeks(graph, &labels)?;
    let mut mask: u64 = 0;
    let mut cut = 0i64;
    let mut best = 0i64;
    let mut best_mask = 0u64;
    let mut n_optima = 1u64;

    for k in 1u64..(1u64 << (n - 1)) {
        let v = 1 + k.trailing_zeros() as usize;
        let sv: i64 = if labels[v] { 1 } else { -1 };
        for (j, w) in graph.adjacent(v) {
            let sj: i64 = if labels[j] { 1 } else { -1 };
            peeks[j] -= 2 * w * sv * sj;
        }
        cut += peeks[v];
        peeks[v] = -peeks[v];
        labels[v] = !labels[v];
        mask ^= 1 << v;

        if cut > best {
            best = cut;
            best_mask = mask;
            n_optima = 1;
        } else if cut == best {
            n_optima += 1;
        }
    }

    Ok(OracleResult {
        best_cut: best,
        best_labels: (0..n).map(|i| best_mask >> i & 1 == 1).collect(),
        n_optima,
    })
}

/// `found / reference`; the reference must be positive.
pub fn approximation_ratio(found_cut: i64, reference_cut: i64) -> Result<f64> {
    if reference_cut <= 0 {
        return Err(Error::UndefinedRatio(reference_cut));
    }
    Ok(found_cut as f64 / reference_cut as f64)
}

use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::heuristics::argmax_lowest;
use crate::neuro::{softmax_with_temperature, Scalar};

/// How long each trajectory runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Budget {
    /// Fixed number of flips.
    Steps(usize),
    /// `ceil(factor * |V|)` flips.
    StepsPerVertex(f64),
    /// Wall-clock limit per graph.
    Time(Duration),
}

impl Budget {
    /// Step cap for a graph with `n` vertices; `None` for time budgets.
    pub fn steps_for(&self, n: usize) -> Option<usize> {
        match *self {
            Budget::Steps(s) => Some(s),
            Budget::StepsPerVertex(f) => Some((f * n as f64).ceil() as usize),
            Budget::Time(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    /// Softmax temperature over Q-values; 0 acts greedily.
    pub temperature: f64,
    /// Probability of a uniformly random action.
    pub epsilon: f64,
    pub rng_seed: u64,
    pub budget: Budget,
}

impl PolicyConfig {
    pub fn greedy(budget: Budget, rng_seed: u64) -> Self {
        Self {
            temperature: 0.0,
            epsilon: 0.0,
            rng_seed,
            budget,
        }
    }
}

/// Epsilon-soft action choice: uniform with probability `epsilon`, else a
/// draw from `softmax(q / temperature)`, or the lowest-index argmax when the
/// temperature is zero.
pub fn select_action<T: Scalar, R: Rng + ?Sized>(q: &[T], temperature: f64, epsilon: f64, rng: &mut R) -> usize {
    assert!(!q.is_empty(), "no actions to choose from");
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        return rng.random_range(0..q.len());
    }
    if temperature <= 0.0 {
        return argmax_lowest(q).expect("non-empty");
    }
    let q64: Vec<f64> = q.iter().map(|v| v.to_f64().unwrap()).collect();
    let (probs, _) = softmax_with_temperature(&q64, temperature).expect("positive temperature");
    let mut u = rng.random::<f64>();
    for (i, p) in probs.iter().enumerate() {
        u -= p;
        if u < 0.0 {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(q.len() - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn greedy_low_index_tie_break() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(select_action(&[0.3f64, 0.9, 0.9], 0.0, 0.0, &mut rng), 1);
    }

    #[test]
    fn epsilon_one_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut counts = [0usize; 4];
        let n = 20_000;
        for _ in 0..n {
            counts[select_action(&[5.0f64, 0.0, 0.0, 0.0], 0.0, 1.0, &mut rng)] += 1;
        }
        let e = n as f64 / 4.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        // 3 dof, p = 0.001
        assert!(chi2 < 16.27, "{counts:?}");
    }

    #[test]
    fn unit_temperature_matches_softmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 40_000;
        let hits = (0..n)
            .filter(|_| select_action(&[1.0f64, 0.0], 1.0, 0.0, &mut rng) == 0)
            .count();
        let p = 1f64.exp() / (1.0 + 1f64.exp());
        let freq = hits as f64 / n as f64;
        // four standard errors
        assert!((freq - p).abs() < 4.0 * (p * (1.0 - p) / n as f64).sqrt(), "{freq}");
    }

    #[test]
    fn budgets() {
        assert_eq!(Budget::StepsPerVertex(2.0).steps_for(40), Some(80));
        assert_eq!(Budget::Steps(7).steps_for(40), Some(7));
        assert_eq!(Budget::Time(Duration::from_secs(1)).steps_for(40), None);
    }
}

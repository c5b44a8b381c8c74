//! Greedy (MCA) and soft-greedy (MCA-soft) flip heuristics, plus the
//! temperature grid search used to tune the soft variant.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::CutState;
use crate::error::{Error, Result};
use crate::graph::Graph;

/// Temperature grid for the small-graph benchmarks.
pub const FINE_TEMPERATURE_GRID: [f64; 9] = [0.0, 0.001, 0.003, 0.01, 0.03, 0.1, 0.3, 1.0, 3.0];
/// Temperature grid for the large-graph benchmarks.
pub const COARSE_TEMPERATURE_GRID: [f64; 6] = [0.0, 1e-4, 1e-3, 1e-2, 1e-1, 1.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftPolicyConfig {
    pub temperature: f64,
    pub max_steps: usize,
    pub n_restarts: usize,
    pub rng_seed: u64,
}

impl SoftPolicyConfig {
    fn validate(&self) -> Result<()> {
        if !(self.temperature >= 0.0) || !self.temperature.is_finite() {
            return Err(Error::Argument(format!(
                "temperature must be finite and non-negative, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HeuristicOutcome {
    pub best_cut: i64,
    pub best_labels: Vec<bool>,
    pub steps_taken: usize,
}

impl HeuristicOutcome {
    fn from_state(state: &CutState, steps_taken: usize) -> Self {
        Self {
            best_cut: state.best_cut(),
            best_labels: state.best_labels().to_vec(),
            steps_taken,
        }
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax_lowest<T: PartialOrd + Copy>(values: &[T]) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if !(v > b) => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

/// Action probabilities of the soft-greedy policy. `temperature == 0` puts
/// all mass on the lowest-index argmax.
pub fn soft_greedy_probabilities(peeks: &[i64], temperature: f64) -> Vec<f64> {
    let mut probs = vec![0.0; peeks.len()];
    if peeks.is_empty() {
        return probs;
    }
    if temperature == 0.0 {
        probs[argmax_lowest(peeks).unwrap()] = 1.0;
        return probs;
    }
    let max = *peeks.iter().max().unwrap() as f64;
    let mut total = 0.0;
    for (p, &k) in probs.iter_mut().zip(peeks) {
        *p = ((k as f64 - max) / temperature).exp();
        total += *p;
    }
    probs.iter_mut().for_each(|p| *p /= total);
    probs
}

/// Draws a vertex from the soft-greedy policy without allocating.
pub fn sample_soft_greedy<R: Rng + ?Sized>(peeks: &[i64], temperature: f64, rng: &mut R) -> usize {
    if temperature == 0.0 {
        return argmax_lowest(peeks).expect("empty peek vector");
    }
    let max = *peeks.iter().max().expect("empty peek vector") as f64;
    let weight = |k: i64| ((k as f64 - max) / temperature).exp();
    let total: f64 = peeks.iter().map(|&k| weight(k)).sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &k) in peeks.iter().enumerate() {
        u -= weight(k);
        if u < 0.0 {
            return i;
        }
    }
    // rounding left a sliver of mass; fall back to the last positive weight
    peeks
        .iter()
        .rposition(|&k| weight(k) > 0.0)
        .unwrap_or(peeks.len() - 1)
}

/// Greedy descent: flip the best-peek vertex while that improves the cut.
pub fn mca_run(graph: &Graph, initial_labels: Vec<bool>, max_steps: usize) -> Result<HeuristicOutcome> {
    let mut state = CutState::new(graph, initial_labels)?;
    let mut steps = 0;
    while steps < max_steps {
        match argmax_lowest(state.peeks()) {
            Some(v) if state.peeks()[v] > 0 => state.apply_flip(graph, v)?,
            _ => break,
        }
        steps += 1;
    }
    Ok(HeuristicOutcome::from_state(&state, steps))
}

/// Soft-greedy walk of exactly `config.max_steps` flips, keeping the best
/// labeling seen. Uses `config.rng_seed` directly.
pub fn mca_soft_run(
    graph: &Graph,
    initial_labels: Vec<bool>,
    config: &SoftPolicyConfig,
) -> Result<HeuristicOutcome> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut state = CutState::new(graph, initial_labels)?;
    if graph.n_vertices() == 0 {
        return Ok(HeuristicOutcome::from_state(&state, 0));
    }
    for _ in 0..config.max_steps {
        let v = sample_soft_greedy(state.peeks(), config.temperature, &mut rng);
        state.apply_flip(graph, v)?;
    }
    Ok(HeuristicOutcome::from_state(&state, config.max_steps))
}

pub(crate) fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ restart as u64)
}

pub fn random_labels<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<bool> {
    (0..n).map(|_| rng.random()).collect()
}

/// Result of several independent restarts on one graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RestartOutcome {
    pub best: HeuristicOutcome,
    /// Flips performed by each restart.
    pub steps_per_restart: Vec<usize>,
}

fn best_of(outcomes: Vec<HeuristicOutcome>) -> RestartOutcome {
    let steps_per_restart = outcomes.iter().map(|o| o.steps_taken).collect();
    let best = outcomes
        .into_iter()
        .reduce(|a, b| if b.best_cut > a.best_cut { b } else { a })
        .expect("at least one restart");
    RestartOutcome {
        best,
        steps_per_restart,
    }
}

/// MCA from `n_restarts` random labelings; restart `r` draws its labeling
/// from a stream seeded with `seed ^ r`.
pub fn mca_restarts(graph: &Graph, n_restarts: usize, max_steps: usize, seed: u64) -> Result<RestartOutcome> {
    if n_restarts == 0 {
        return Err(Error::Argument("n_restarts must be positive".into()));
    }
    let outcomes = (0..n_restarts)
        .map(|r| {
            let labels = random_labels(graph.n_vertices(), &mut restart_rng(seed, r));
            mca_run(graph, labels, max_steps)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(best_of(outcomes))
}

/// MCA-soft from `config.n_restarts` random labelings.
pub fn mca_soft_restarts(graph: &Graph, config: &SoftPolicyConfig) -> Result<RestartOutcome> {
    if config.n_restarts == 0 {
        return Err(Error::Argument("n_restarts must be positive".into()));
    }
    let outcomes = (0..config.n_restarts)
        .map(|r| {
            let mut rng = restart_rng(config.rng_seed, r);
            let labels = random_labels(graph.n_vertices(), &mut rng);
            let run = SoftPolicyConfig {
                rng_seed: rng.random(),
                ..config.clone()
            };
            mca_soft_run(graph, labels, &run)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(best_of(outcomes))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TuneOutcome {
    /// Grid value with the highest mean best cut (smallest on ties).
    pub temperature: f64,
    /// Mean over graphs of the best cut across restarts, per grid value.
    pub mean_best_cut: Vec<f64>,
    /// Per-graph winners, filled when tuning each instance independently.
    pub per_instance: Option<Vec<f64>>,
}

fn pick(grid: &[f64], scores: &[f64]) -> f64 {
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| grid[a].total_cmp(&grid[b]));
    let mut best = order[0];
    for &i in &order[1..] {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    grid[best]
}

/// Grid search over the soft-greedy temperature. `template` fixes the step
/// budget, restart count and seed; its temperature is ignored.
pub fn tune_temperature(
    graphs: &[Graph],
    grid: &[f64],
    template: &SoftPolicyConfig,
    per_instance: bool,
) -> Result<TuneOutcome> {
    if grid.is_empty() {
        return Err(Error::Argument("temperature grid is empty".into()));
    }
    if graphs.is_empty() {
        return Err(Error::Argument("no graphs to tune on".into()));
    }
    // scores[t][g]
    let mut scores = vec![vec![0.0; graphs.len()]; grid.len()];
    for (t, &temperature) in grid.iter().enumerate() {
        let config = SoftPolicyConfig {
            temperature,
            ..template.clone()
        };
        for (g, graph) in graphs.iter().enumerate() {
            scores[t][g] = mca_soft_restarts(graph, &config)?.best.best_cut as f64;
        }
    }
    let mean_best_cut: Vec<f64> = scores
        .iter()
        .map(|s| s.iter().sum::<f64>() / graphs.len() as f64)
        .collect();
    let per_instance = per_instance.then(|| {
        (0..graphs.len())
            .map(|g| {
                let column: Vec<f64> = scores.iter().map(|s| s[g]).collect();
                pick(grid, &column)
            })
            .collect()
    });
    Ok(TuneOutcome {
        temperature: pick(grid, &mean_best_cut),
        mean_best_cut,
        per_instance,
    })
}

//! The outer training loop.

use std::collections::VecDeque;
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::replay::{ReplayBuffer, TransitionSegment};
use super::step::{soft_update, train_step, Adam};
use crate::agent::{
    hidden_row_f32, rollout_batched, select_action, AgentParams, BatchDecoder, Budget, Lane, PolicyConfig,
};
use crate::env::{CutState, EnvSnapshot};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::heuristics::random_labels;
use crate::neuro::Scalar;
use crate::seed::derive_seed;

/// Most trajectories decoded together during validation.
const VALIDATION_LANES: usize = 512;

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: usize,
    /// Mean loss of the updates since the previous loss record.
    pub loss: Option<f64>,
    pub epsilon: f64,
    pub validation_ar: Option<f64>,
    pub buffer_len: usize,
    pub updates: usize,
    pub elapsed_s: f64,
}

/// Held-out graph with the cut used as the denominator of its ratio.
#[derive(Clone, Debug)]
pub struct ValidationInstance {
    pub graph: Graph,
    pub reference_cut: i64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub final_params: AgentParams<T>,
    /// Parameters with the highest validation ratio; the final parameters
    /// when no validation ran.
    pub best_params: AgentParams<T>,
    pub best_validation_ar: Option<f64>,
    pub log: Vec<LogRecord>,
}

/// Mean approximation ratio of the greedy policy on `set`, with
/// `n_trajectories` trajectories of `episode_length_per_vertex * |V|` steps.
pub fn validation_ratio<T: Scalar>(
    params: &AgentParams<T>,
    set: &[ValidationInstance],
    n_trajectories: usize,
    steps_per_vertex: f64,
    seed: u64,
) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::Argument("empty validation set".into()));
    }
    let graphs: Vec<Graph> = set.iter().map(|v| v.graph.clone()).collect();
    let cfg = PolicyConfig::greedy(Budget::StepsPerVertex(steps_per_vertex), seed);
    let results = rollout_batched(&graphs, params, &cfg, n_trajectories, VALIDATION_LANES)?;
    let mut total = 0.0;
    for (r, v) in results.iter().zip(set) {
        total += crate::oracle::approximation_ratio(r.best_cut, v.reference_cut)?;
    }
    Ok(total / set.len() as f64)
}

struct Pending {
    snapshot: EnvSnapshot,
    hidden: Vec<f32>,
    action: usize,
}

/// Trains from scratch.
///
/// Every environment step advances `graphs_per_batch` episodes, each on a
/// fresh graph from `source`; episodes restart together once the longest has
/// finished. Every `update_frequency` steps one gradient update runs,
/// followed by a soft target update. `on_record` sees each log line as it is
/// produced.
pub fn train<T, F, L>(
    cfg: &TrainConfig,
    mut source: F,
    validation: &[ValidationInstance],
    mut on_record: L,
) -> Result<TrainOutcome<T>>
where
    T: Scalar,
    F: FnMut(&mut ChaCha8Rng) -> Result<Graph>,
    L: FnMut(&LogRecord),
{
    cfg.validate()?;
    let start = Instant::now();
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut online = AgentParams::<T>::init(cfg.arch, &mut init_rng);
    let mut log = Vec::new();
    if cfg.number_of_training_steps == 0 {
        return Ok(TrainOutcome {
            best_params: online.clone(),
            final_params: online,
            best_validation_ar: None,
            log,
        });
    }

    let mut target = online.clone();
    let mut adam = Adam::new(&online, cfg);
    let mut buffer = ReplayBuffer::new(cfg.buffer_size)?;
    let mut sample_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 1, 0));
    let mut graph_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 2, 0));
    let validation_seed = derive_seed(cfg.seed, 4, 0);
    let validate = !validation.is_empty() && cfg.validation_interval > 0;

    let mut best_params = online.clone();
    let mut best_ar = None;
    let mut emit = |rec: LogRecord, log: &mut Vec<LogRecord>| {
        on_record(&rec);
        log.push(rec);
    };
    if validate {
        let ar = validation_ratio(
            &online,
            validation,
            cfg.validation_trajectories,
            cfg.episode_length_per_vertex,
            validation_seed,
        )?;
        best_ar = Some(ar);
        emit(
            LogRecord {
                step: 0,
                loss: None,
                epsilon: cfg.epsilon(0),
                validation_ar: Some(ar),
                buffer_len: 0,
                updates: 0,
                elapsed_s: start.elapsed().as_secs_f64(),
            },
            &mut log,
        );
    }

    let mut step = 0usize;
    let mut updates = 0usize;
    let mut loss_sum = 0.0;
    let mut loss_count = 0usize;
    let mut episode_batch = 0u64;
    while step < cfg.number_of_training_steps {
        let graphs = (0..cfg.graphs_per_batch)
            .map(|_| source(&mut graph_rng).map(Arc::new))
            .collect::<Result<Vec<_>>>()?;
        if graphs.iter().any(|g| g.n_vertices() == 0) {
            return Err(Error::Argument("training graph without vertices".into()));
        }
        let lanes = graphs
            .iter()
            .enumerate()
            .map(|(l, g)| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 3, episode_batch << 20 | l as u64));
                let labels = random_labels(g.n_vertices(), &mut rng);
                Ok(Lane {
                    graph: l,
                    state: CutState::new(g, labels)?,
                    rng,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        episode_batch += 1;
        let lengths: Vec<usize> = graphs.iter().map(|g| cfg.episode_length(g.n_vertices())).collect();
        let longest = *lengths.iter().max().expect("graphs_per_batch is positive");
        let mut decoder = BatchDecoder::new(&online, graphs.clone(), lanes)?;
        let mut history: Vec<VecDeque<Pending>> = (0..graphs.len()).map(|_| VecDeque::new()).collect();

        for t in 0..longest {
            if step >= cfg.number_of_training_steps {
                break;
            }
            let epsilon = cfg.epsilon(step);
            for (l, h) in history.iter_mut().enumerate() {
                if t < lengths[l] {
                    h.push_back(Pending {
                        snapshot: decoder.lanes[l].state.snapshot(),
                        hidden: hidden_row_f32(&decoder.hidden, l),
                        action: 0,
                    });
                    if h.len() > cfg.bptt_length + 1 {
                        h.pop_front();
                    }
                }
            }
            let records = decoder.step(&online, |_, q, rng| select_action(q, 0.0, epsilon, rng))?;
            for (l, rec) in records.iter().enumerate() {
                if t >= lengths[l] {
                    continue;
                }
                let h = &mut history[l];
                h.back_mut().expect("pushed above").action = rec.action;
                let first = h.front().expect("non-empty");
                buffer.push(TransitionSegment {
                    graph: graphs[l].clone(),
                    start: first.snapshot.clone(),
                    start_hidden: first.hidden.clone(),
                    actions: h.iter().map(|p| p.action).collect(),
                    reward: rec.reward,
                    done: t + 1 == lengths[l],
                });
            }
            step += 1;

            if step % cfg.update_frequency == 0 && buffer.len() >= cfg.batch_size {
                let loss = train_step(&mut online, &target, &mut adam, &buffer, cfg, &mut sample_rng)?;
                soft_update(&mut target, &online, cfg.soft_update_rate)?;
                decoder.refresh(&online);
                loss_sum += loss;
                loss_count += 1;
                updates += 1;
            }

            let log_loss = step % cfg.log_interval == 0;
            let run_validation = validate && step % cfg.validation_interval == 0;
            if log_loss || run_validation || step == cfg.number_of_training_steps {
                let mut validation_ar = None;
                if run_validation {
                    let ar = validation_ratio(
                        &online,
                        validation,
                        cfg.validation_trajectories,
                        cfg.episode_length_per_vertex,
                        validation_seed,
                    )?;
                    if best_ar.is_none_or(|b| ar > b) {
                        best_ar = Some(ar);
                        best_params = online.clone();
                    }
                    validation_ar = Some(ar);
                }
                let loss = (loss_count > 0).then(|| loss_sum / loss_count as f64);
                loss_sum = 0.0;
                loss_count = 0;
                emit(
                    LogRecord {
                        step,
                        loss,
                        epsilon,
                        validation_ar,
                        buffer_len: buffer.len(),
                        updates,
                        elapsed_s: start.elapsed().as_secs_f64(),
                    },
                    &mut log,
                );
            }
        }
    }

    if !online.is_finite() {
        return Err(Error::Argument("training diverged to non-finite parameters".into()));
    }
    if !validate {
        best_params = online.clone();
    }
    Ok(TrainOutcome {
        final_params: online,
        best_params,
        best_validation_ar: best_ar,
        log,
    })
}

/// Writes records as JSON lines.
pub fn write_log<W: std::io::Write>(mut w: W, log: &[LogRecord]) -> Result<()> {
    for rec in log {
        serde_json::to_writer(&mut w, rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

//! Batched trajectories: many labelings decoded in lock-step so that the
//! recurrent update runs as one matrix product per step.

use std::borrow::Borrow;
use std::time::{Duration, Instant};

use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::decoder::{advance_forward, QPlan};
use super::encoder::{encode, NodeEmbeddings};
use super::params::AgentParams;
use super::policy::{select_action, Budget, PolicyConfig};
use crate::env::{global_features, reward, vertex_features, CutState};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::heuristics::random_labels;
use crate::neuro::{cast, Scalar};
use crate::seed::derive_seed;

/// One trajectory: the graph it runs on, its environment and its RNG.
#[derive(Clone, Debug)]
pub struct Lane {
    pub graph: usize,
    pub state: CutState,
    pub rng: ChaCha8Rng,
}

/// Outcome of one lane's step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub action: usize,
    pub prev_best: i64,
    pub reward: f64,
}

/// Lock-step decoder over a set of lanes.
///
/// Embeddings are computed once per graph at construction; stepping never
/// touches the encoder. Parameters are passed to every call so that they may
/// change between steps, after which [`BatchDecoder::refresh`] must be called.
pub struct BatchDecoder<T, G> {
    graphs: Vec<G>,
    embeddings: Vec<NodeEmbeddings<T>>,
    plans: Vec<QPlan<T>>,
    pub lanes: Vec<Lane>,
    /// One decoder state per lane.
    pub hidden: Array2<T>,
    /// Time spent in Q evaluation, action choice and the recurrent update.
    pub decode_time: Duration,
    /// Time spent applying flips to the environments.
    pub env_time: Duration,
    q: Vec<T>,
    scratch: Vec<T>,
}

impl<T: Scalar, G: Borrow<Graph>> BatchDecoder<T, G> {
    pub fn new(params: &AgentParams<T>, graphs: Vec<G>, lanes: Vec<Lane>) -> Result<Self> {
        let embeddings = graphs
            .iter()
            .map(|g| encode(g.borrow(), params))
            .collect::<Result<Vec<_>>>()?;
        Self::with_embeddings(params, graphs, embeddings, lanes)
    }

    pub fn with_embeddings(
        params: &AgentParams<T>,
        graphs: Vec<G>,
        embeddings: Vec<NodeEmbeddings<T>>,
        lanes: Vec<Lane>,
    ) -> Result<Self> {
        if embeddings.len() != graphs.len() {
            return Err(Error::Dimension {
                expected: graphs.len(),
                got: embeddings.len(),
            });
        }
        for lane in &lanes {
            let g = graphs.get(lane.graph).ok_or(Error::Index {
                vertex: lane.graph,
                n_vertices: graphs.len(),
            })?;
            let n = g.borrow().n_vertices();
            if n != lane.state.n_vertices() || n == 0 {
                return Err(Error::Argument("lane state does not fit its graph".into()));
            }
        }
        let plans = embeddings.iter().map(|e| QPlan::new(params, e)).collect();
        let hidden = Array2::zeros((lanes.len(), params.arch.hidden_dim));
        Ok(Self {
            graphs,
            embeddings,
            plans,
            lanes,
            hidden,
            decode_time: Duration::ZERO,
            env_time: Duration::ZERO,
            q: Vec::new(),
            scratch: Vec::new(),
        })
    }

    /// Rebuilds the per-graph Q terms after a parameter change. Embeddings
    /// are kept.
    pub fn refresh(&mut self, params: &AgentParams<T>) {
        self.plans = self.embeddings.iter().map(|e| QPlan::new(params, e)).collect();
    }

    pub fn embeddings(&self) -> &[NodeEmbeddings<T>] {
        &self.embeddings
    }

    pub fn graphs(&self) -> &[G] {
        &self.graphs
    }

    /// Advances every lane by one flip. `choose(lane, q, rng)` picks the
    /// vertex from the lane's Q-values.
    pub fn step<F>(&mut self, params: &AgentParams<T>, mut choose: F) -> Result<Vec<StepRecord>>
    where
        F: FnMut(usize, &[T], &mut ChaCha8Rng) -> usize,
    {
        let arch = params.arch;
        let e = arch.embed_dim;
        let n_lanes = self.lanes.len();
        let t0 = Instant::now();
        let mut env_time = Duration::ZERO;

        let (values, hidden_terms) = QPlan::state_terms(params, self.hidden.view())?;
        let mut v_star = Array2::<T>::zeros((n_lanes, arch.vertex_dim()));
        let mut global_next = Array2::<T>::zeros((n_lanes, 2));
        let mut records = Vec::with_capacity(n_lanes);

        for (l, lane) in self.lanes.iter_mut().enumerate() {
            let graph = self.graphs[lane.graph].borrow();
            let n = graph.n_vertices();
            let horizon = arch.horizon(n);
            self.q.resize(n, T::zero());
            self.plans[lane.graph].fill(
                params,
                &lane.state,
                horizon,
                values[l],
                hidden_terms.row(l),
                &mut self.q,
                &mut self.scratch,
            );
            let action = choose(l, &self.q, &mut lane.rng);
            if action >= n {
                return Err(Error::Index {
                    vertex: action,
                    n_vertices: n,
                });
            }

            let emb = &self.embeddings[lane.graph];
            let obs = vertex_features(&lane.state, action, horizon);
            let mut row = v_star.row_mut(l);
            for k in 0..e {
                row[k] = emb.x[[action, k]];
            }
            for k in 0..e {
                let w = params.dec_w_o.row(k);
                row[e + k] =
                    params.dec_b_o[[0, k]] + w[0] * cast(obs[0]) + w[1] * cast(obs[1]) + w[2] * cast(obs[2]);
            }

            let te = Instant::now();
            let prev_best = lane.state.best_cut();
            lane.state.apply_flip(graph, action)?;
            let r = reward(&lane.state, prev_best, n);
            env_time += te.elapsed();

            let og = global_features(&lane.state);
            global_next[[l, 0]] = cast(og[0]);
            global_next[[l, 1]] = cast(og[1]);
            records.push(StepRecord {
                action,
                prev_best,
                reward: r,
            });
        }

        let (next, _) = advance_forward(params, self.hidden.view(), v_star.view(), global_next.view())?;
        self.hidden = next;
        self.env_time += env_time;
        self.decode_time += t0.elapsed().saturating_sub(env_time);
        Ok(records)
    }
}

/// Result of all trajectories on one graph.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphRollout {
    pub best_cut: i64,
    pub best_labels: Vec<bool>,
    pub initial_cuts: Vec<i64>,
    pub trajectory_best: Vec<i64>,
    /// Flips performed by each trajectory.
    pub actions: Vec<usize>,
    pub elapsed: Duration,
    /// Time in Q evaluation, action choice and recurrent updates.
    pub decode_time: Duration,
}

/// Runs `n_trajectories` trajectories per graph from random labelings with
/// zero decoder state. Graphs are processed one at a time and each is
/// encoded exactly once.
pub fn rollout<T: Scalar>(
    graphs: &[Graph],
    params: &AgentParams<T>,
    cfg: &PolicyConfig,
    n_trajectories: usize,
) -> Result<Vec<GraphRollout>> {
    if n_trajectories == 0 {
        return Err(Error::Argument("n_trajectories must be positive".into()));
    }
    let mut out = Vec::with_capacity(graphs.len());
    for (g, graph) in graphs.iter().enumerate() {
        out.extend(run_group(&[(g, graph)], params, cfg, n_trajectories)?);
    }
    Ok(out)
}

/// Same trajectories as [`rollout`] under a step budget, but graphs with
/// equal step counts share one decoder so that the recurrent update runs on
/// up to `max_lanes` trajectories at once. `elapsed` and `decode_time` of a
/// result are its group's totals divided evenly among the group's graphs.
pub fn rollout_batched<T: Scalar>(
    graphs: &[Graph],
    params: &AgentParams<T>,
    cfg: &PolicyConfig,
    n_trajectories: usize,
    max_lanes: usize,
) -> Result<Vec<GraphRollout>> {
    if n_trajectories == 0 {
        return Err(Error::Argument("n_trajectories must be positive".into()));
    }
    if matches!(cfg.budget, Budget::Time(_)) {
        return rollout(graphs, params, cfg, n_trajectories);
    }
    let per_group = (max_lanes / n_trajectories).max(1);
    let mut order: Vec<usize> = (0..graphs.len()).collect();
    order.sort_by_key(|&g| (cfg.budget.steps_for(graphs[g].n_vertices()), g));
    let mut out: Vec<Option<GraphRollout>> = vec![None; graphs.len()];
    let mut i = 0;
    while i < order.len() {
        let steps = cfg.budget.steps_for(graphs[order[i]].n_vertices());
        let mut j = i;
        while j < order.len() && j - i < per_group && cfg.budget.steps_for(graphs[order[j]].n_vertices()) == steps {
            j += 1;
        }
        let group: Vec<(usize, &Graph)> = order[i..j].iter().map(|&g| (g, &graphs[g])).collect();
        for ((g, _), r) in group.iter().zip(run_group(&group, params, cfg, n_trajectories)?) {
            out[*g] = Some(r);
        }
        i = j;
    }
    Ok(out.into_iter().map(|r| r.expect("every graph is in a group")).collect())
}

fn run_group<T: Scalar>(
    group: &[(usize, &Graph)],
    params: &AgentParams<T>,
    cfg: &PolicyConfig,
    n_trajectories: usize,
) -> Result<Vec<GraphRollout>> {
    let start = Instant::now();
    let mut lanes = Vec::with_capacity(group.len() * n_trajectories);
    for (slot, &(index, graph)) in group.iter().enumerate() {
        for k in 0..n_trajectories {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.rng_seed, index as u64, k as u64));
            let labels = random_labels(graph.n_vertices(), &mut rng);
            lanes.push(Lane {
                graph: slot,
                state: CutState::new(graph, labels)?,
                rng,
            });
        }
    }
    let initial_cuts: Vec<i64> = lanes.iter().map(|l| l.state.cut_value()).collect();

    // all graphs in a group share the same step cap
    let max_steps = cfg.budget.steps_for(group[0].1.n_vertices());
    let empty = group.iter().any(|(_, g)| g.n_vertices() == 0);
    let mut steps = 0usize;
    let mut decode_time = Duration::ZERO;
    let lanes = if empty || max_steps == Some(0) {
        lanes
    } else {
        let graphs: Vec<&Graph> = group.iter().map(|&(_, g)| g).collect();
        let mut decoder = BatchDecoder::new(params, graphs, lanes)?;
        loop {
            if let Some(cap) = max_steps {
                if steps >= cap {
                    break;
                }
            } else if steps % 64 == 0 {
                if let Budget::Time(limit) = cfg.budget {
                    if start.elapsed() >= limit {
                        break;
                    }
                }
            }
            decoder.step(params, |_, q, rng| select_action(q, cfg.temperature, cfg.epsilon, rng))?;
            steps += 1;
        }
        decode_time = decoder.decode_time;
        decoder.lanes
    };

    let share = group.len() as u32;
    let elapsed = start.elapsed() / share;
    Ok(lanes
        .chunks(n_trajectories)
        .zip(initial_cuts.chunks(n_trajectories))
        .map(|(lanes, initial)| {
            let best = lanes
                .iter()
                .enumerate()
                .max_by_key(|(i, l)| (l.state.best_cut(), std::cmp::Reverse(*i)))
                .map(|(_, l)| l)
                .expect("at least one trajectory");
            GraphRollout {
                best_cut: best.state.best_cut(),
                best_labels: best.state.best_labels().to_vec(),
                initial_cuts: initial.to_vec(),
                trajectory_best: lanes.iter().map(|l| l.state.best_cut()).collect(),
                actions: vec![steps; n_trajectories],
                elapsed,
                decode_time: decode_time / share,
            }
        })
        .collect())
}

/// Copies row `row` of `hidden` to a flat `f32` vector.
pub fn hidden_row_f32<T: Scalar>(hidden: &Array2<T>, row: usize) -> Vec<f32> {
    hidden
        .index_axis(Axis(0), row)
        .iter()
        .map(|v| v.to_f32().unwrap())
        .collect()
}

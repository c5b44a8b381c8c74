//! One gradient update: windowed replay, M-DQN targets, backpropagation
//! through the window and into the encoder, Adam.

use std::sync::Arc;

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;

use super::config::TrainConfig;
use super::mdqn::{mdqn_target, MdqnParams};
use super::replay::{ReplayBuffer, TransitionSegment};
use crate::agent::{
    advance_backward, advance_forward, advantage_backward, advantage_forward, encode, encode_backward,
    encode_forward, value_backward, value_forward, AdvanceCache, AgentParams, EncoderCache, NodeEmbeddings, QPlan,
};
use crate::env::{global_features, reward, vertex_features, CutState};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::neuro::{cast, linear_backward, linear_forward, Scalar};

impl TrainConfig {
    pub fn mdqn_params(&self) -> MdqnParams {
        MdqnParams {
            temperature: self.mdqn_temperature,
            alpha: self.mdqn_bootstrap,
            clip: self.mdqn_clipping,
            gamma: self.discount_factor,
        }
    }
}

/// Distinct graphs of a batch and the graph index of every row.
fn distinct_graphs(batch: &[Arc<TransitionSegment>]) -> (Vec<Arc<Graph>>, Vec<usize>) {
    let mut graphs: Vec<Arc<Graph>> = Vec::new();
    let rows = batch
        .iter()
        .map(|seg| match graphs.iter().position(|g| Arc::ptr_eq(g, &seg.graph)) {
            Some(i) => i,
            None => {
                graphs.push(seg.graph.clone());
                graphs.len() - 1
            }
        })
        .collect();
    (graphs, rows)
}

struct StepCache<T> {
    advance: AdvanceCache<T>,
    active: Vec<bool>,
    actions: Vec<usize>,
    obs: Array2<T>,
}

/// Batch state after replaying every window up to its last action.
struct Window<T> {
    states: Vec<CutState>,
    hidden: Array2<T>,
    steps: Vec<StepCache<T>>,
}

fn obs_row<T: Scalar>(o: [f64; 3]) -> [T; 3] {
    [cast(o[0]), cast(o[1]), cast(o[2])]
}

/// Replays all but the last action of each window, right-aligned so that
/// every row reaches its learned transition on the final step. Rows whose
/// window has not started yet carry their stored state unchanged.
fn replay_windows<T: Scalar>(
    params: &AgentParams<T>,
    embs: &[NodeEmbeddings<T>],
    rows: &[usize],
    batch: &[Arc<TransitionSegment>],
    keep_caches: bool,
) -> Result<Window<T>> {
    let arch = params.arch;
    let e = arch.embed_dim;
    let b = batch.len();
    let span = batch.iter().map(|s| s.len()).max().unwrap_or(1) - 1;
    let mut states = batch.iter().map(|s| s.start_state()).collect::<Result<Vec<_>>>()?;
    let mut hidden = Array2::<T>::zeros((b, arch.hidden_dim));
    for (r, seg) in batch.iter().enumerate() {
        if seg.start_hidden.len() != arch.hidden_dim {
            return Err(Error::Shape {
                name: "stored hidden state".into(),
                expected: (1, arch.hidden_dim),
                got: (1, seg.start_hidden.len()),
            });
        }
        for (dst, &src) in hidden.row_mut(r).iter_mut().zip(&seg.start_hidden) {
            *dst = cast(src as f64);
        }
    }

    let mut steps = Vec::new();
    for j in 0..span {
        let mut active = vec![false; b];
        let mut actions = vec![0; b];
        let mut obs = Array2::<T>::zeros((b, 3));
        let mut global = Array2::<T>::zeros((b, 2));
        let mut emb_rows = Array2::<T>::zeros((b, e));
        for (r, seg) in batch.iter().enumerate() {
            let offset = span + 1 - seg.len();
            if j < offset {
                continue;
            }
            let a = seg.actions[j - offset];
            let graph = &seg.graph;
            let o = vertex_features(&states[r], a, arch.horizon(graph.n_vertices()));
            obs.row_mut(r).assign(&ndarray::arr1(&obs_row::<T>(o)));
            emb_rows.row_mut(r).assign(&embs[rows[r]].x.row(a));
            states[r].apply_flip(graph, a)?;
            let g = global_features(&states[r]);
            global[[r, 0]] = cast(g[0]);
            global[[r, 1]] = cast(g[1]);
            active[r] = true;
            actions[r] = a;
        }
        let mut oproj = linear_forward(obs.view(), &params.dec_w_o, Some(&params.dec_b_o))?;
        for (r, &on) in active.iter().enumerate() {
            if !on {
                oproj.row_mut(r).fill(T::zero());
            }
        }
        let v_star = ndarray::concatenate![Axis(1), emb_rows, oproj];
        let (mut next, advance) = advance_forward(params, hidden.view(), v_star.view(), global.view())?;
        for (r, &on) in active.iter().enumerate() {
            if !on {
                next.row_mut(r).assign(&hidden.row(r));
            }
        }
        hidden = next;
        if keep_caches {
            steps.push(StepCache {
                advance,
                active,
                actions,
                obs,
            });
        }
    }
    Ok(Window { states, hidden, steps })
}

/// M-DQN regression targets of a batch under the target network.
pub fn batch_targets<T: Scalar>(
    target: &AgentParams<T>,
    batch: &[Arc<TransitionSegment>],
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    let arch = target.arch;
    let e = arch.embed_dim;
    let (graphs, rows) = distinct_graphs(batch);
    let embs = graphs.iter().map(|g| encode(g, target)).collect::<Result<Vec<_>>>()?;
    let plans: Vec<QPlan<T>> = embs.iter().map(|x| QPlan::new(target, x)).collect();
    let mut window = replay_windows(target, &embs, &rows, batch, false)?;

    let (values, hterms) = QPlan::state_terms(target, window.hidden.view())?;
    let mut scratch = Vec::new();
    let mut current_q = Vec::with_capacity(batch.len());
    let mut v_star = Array2::<T>::zeros((batch.len(), arch.vertex_dim()));
    let mut global = Array2::<T>::zeros((batch.len(), 2));
    let mut rewards = Vec::with_capacity(batch.len());
    for (r, seg) in batch.iter().enumerate() {
        let graph = &seg.graph;
        let n = graph.n_vertices();
        let horizon = arch.horizon(n);
        let state = &mut window.states[r];
        let mut q = vec![T::zero(); n];
        plans[rows[r]].fill(target, state, horizon, values[r], hterms.row(r), &mut q, &mut scratch);
        current_q.push(q.iter().map(|v| v.to_f64().unwrap()).collect::<Vec<_>>());

        let a = *seg.actions.last().expect("validated segment");
        let o = obs_row::<T>(vertex_features(state, a, horizon));
        let mut row = v_star.row_mut(r);
        for k in 0..e {
            row[k] = embs[rows[r]].x[[a, k]];
            let w = target.dec_w_o.row(k);
            row[e + k] = target.dec_b_o[[0, k]] + w[0] * o[0] + w[1] * o[1] + w[2] * o[2];
        }
        let prev = state.best_cut();
        state.apply_flip(graph, a)?;
        let rew = reward(state, prev, n);
        if (rew - seg.reward).abs() > 1e-12 {
            return Err(Error::Argument(format!(
                "replayed reward {rew} differs from stored {}",
                seg.reward
            )));
        }
        rewards.push(rew);
        let g = global_features(state);
        global[[r, 0]] = cast(g[0]);
        global[[r, 1]] = cast(g[1]);
    }

    let (next_hidden, _) = advance_forward(target, window.hidden.view(), v_star.view(), global.view())?;
    let (values, hterms) = QPlan::state_terms(target, next_hidden.view())?;
    let p = cfg.mdqn_params();
    batch
        .iter()
        .enumerate()
        .map(|(r, seg)| {
            let a = *seg.actions.last().expect("validated segment");
            let next_q: Vec<f64> = if seg.done {
                Vec::new()
            } else {
                let n = seg.graph.n_vertices();
                let mut q = vec![T::zero(); n];
                plans[rows[r]].fill(
                    target,
                    &window.states[r],
                    arch.horizon(n),
                    values[r],
                    hterms.row(r),
                    &mut q,
                    &mut scratch,
                );
                q.iter().map(|v| v.to_f64().unwrap()).collect()
            };
            mdqn_target(rewards[r], seg.done, &current_q[r], a, &next_q, &p)
        })
        .collect()
}

/// Loss of a batch and its gradient with respect to the online parameters.
#[derive(Clone, Debug)]
pub struct LossAndGrad<T> {
    pub loss: f64,
    pub grads: AgentParams<T>,
    /// Online `Q(s_t, a_t)` per row.
    pub q: Vec<f64>,
    pub targets: Vec<f64>,
}

/// Online Q-values of the learned transitions, with everything needed to
/// backpropagate.
struct OnlinePass<T> {
    graphs: Vec<Arc<Graph>>,
    rows: Vec<usize>,
    encoder: Vec<EncoderCache<T>>,
    window: Window<T>,
    q: Array2<T>,
    final_obs: Array2<T>,
    value: crate::agent::ValueCache<T>,
    advantage: crate::agent::AdvantageCache<T>,
}

fn online_forward<T: Scalar>(params: &AgentParams<T>, batch: &[Arc<TransitionSegment>]) -> Result<OnlinePass<T>> {
    let arch = params.arch;
    let e = arch.embed_dim;
    let (graphs, rows) = distinct_graphs(batch);
    let mut embs = Vec::with_capacity(graphs.len());
    let mut encoder = Vec::with_capacity(graphs.len());
    for g in &graphs {
        let (x, cache) = encode_forward(g, params)?;
        embs.push(x);
        encoder.push(cache);
    }
    let window = replay_windows(params, &embs, &rows, batch, true)?;

    let b = batch.len();
    let mut final_obs = Array2::<T>::zeros((b, 3));
    let mut emb_rows = Array2::<T>::zeros((b, e));
    for (r, seg) in batch.iter().enumerate() {
        let a = *seg.actions.last().expect("validated segment");
        let o = vertex_features(&window.states[r], a, arch.horizon(seg.graph.n_vertices()));
        final_obs.row_mut(r).assign(&ndarray::arr1(&obs_row::<T>(o)));
        emb_rows.row_mut(r).assign(&embs[rows[r]].x.row(a));
    }
    let oproj = linear_forward(final_obs.view(), &params.dec_w_o, Some(&params.dec_b_o))?;
    let hproj = linear_forward(window.hidden.view(), &params.dec_w_h, Some(&params.dec_b_h))?;
    let input = ndarray::concatenate![Axis(1), emb_rows, oproj, hproj];
    let (a, advantage) = advantage_forward(params, input.view())?;
    let (v, value) = value_forward(params, window.hidden.view())?;
    Ok(OnlinePass {
        graphs,
        rows,
        encoder,
        window,
        q: v + a,
        final_obs,
        value,
        advantage,
    })
}

fn scatter_embedding_grads<T: Scalar>(
    d_emb: &mut [Array2<T>],
    rows: &[usize],
    actions: &[usize],
    active: Option<&[bool]>,
    d: ArrayView2<T>,
) {
    for r in 0..rows.len() {
        if active.is_some_and(|act| !act[r]) {
            continue;
        }
        let mut dst = d_emb[rows[r]].row_mut(actions[r]);
        dst += &d.row(r);
    }
}

fn online_backward<T: Scalar>(
    params: &AgentParams<T>,
    batch: &[Arc<TransitionSegment>],
    pass: &OnlinePass<T>,
    dq: &Array2<T>,
) -> AgentParams<T> {
    let e = params.arch.embed_dim;
    let mut grads = params.zeros_like();
    let mut d_emb: Vec<Array2<T>> = pass
        .graphs
        .iter()
        .map(|g| Array2::zeros((g.n_vertices(), e)))
        .collect();

    let dinput = advantage_backward(params, &pass.advantage, dq, &mut grads);
    let mut dh = value_backward(params, &pass.value, dq, &mut grads);
    dh += &linear_backward(
        pass.window.hidden.view(),
        &params.dec_w_h,
        &dinput.slice(s![.., 2 * e..]).to_owned(),
        &mut grads.dec_w_h,
        Some(&mut grads.dec_b_h),
    );
    linear_backward(
        pass.final_obs.view(),
        &params.dec_w_o,
        &dinput.slice(s![.., e..2 * e]).to_owned(),
        &mut grads.dec_w_o,
        Some(&mut grads.dec_b_o),
    );
    let last_actions: Vec<usize> = batch.iter().map(|s| *s.actions.last().unwrap()).collect();
    scatter_embedding_grads(&mut d_emb, &pass.rows, &last_actions, None, dinput.slice(s![.., ..e]));

    for step in pass.window.steps.iter().rev() {
        let mut d_next = dh.clone();
        let mut d_pass = dh;
        for (r, &on) in step.active.iter().enumerate() {
            if on {
                d_pass.row_mut(r).fill(T::zero());
            } else {
                d_next.row_mut(r).fill(T::zero());
            }
        }
        let (d_prev, mut dv) = advance_backward(params, &step.advance, &d_next, &mut grads);
        for (r, &on) in step.active.iter().enumerate() {
            if !on {
                dv.row_mut(r).fill(T::zero());
            }
        }
        linear_backward(
            step.obs.view(),
            &params.dec_w_o,
            &dv.slice(s![.., e..]).to_owned(),
            &mut grads.dec_w_o,
            Some(&mut grads.dec_b_o),
        );
        scatter_embedding_grads(&mut d_emb, &pass.rows, &step.actions, Some(&step.active), dv.slice(s![.., ..e]));
        dh = d_prev + d_pass;
    }

    for (g, graph) in pass.graphs.iter().enumerate() {
        encode_backward(graph, params, &pass.encoder[g], &d_emb[g], &mut grads);
    }
    grads
}

/// Mean squared error between the online `Q(s_t, a_t)` and the M-DQN targets,
/// and its gradient through the replayed windows and the encoder.
pub fn loss_and_grad<T: Scalar>(
    online: &AgentParams<T>,
    target: &AgentParams<T>,
    batch: &[Arc<TransitionSegment>],
    cfg: &TrainConfig,
) -> Result<LossAndGrad<T>> {
    if batch.is_empty() {
        return Err(Error::Argument("empty batch".into()));
    }
    for seg in batch {
        seg.validate(cfg.bptt_length)?;
    }
    check_manifests(online, target)?;
    let targets = batch_targets(target, batch, cfg)?;
    let pass = online_forward(online, batch)?;
    let b = batch.len() as f64;
    let q: Vec<f64> = pass.q.column(0).iter().map(|v| v.to_f64().unwrap()).collect();
    let loss = q.iter().zip(&targets).map(|(q, y)| (q - y).powi(2)).sum::<f64>() / b;
    let dq = Array2::from_shape_fn((batch.len(), 1), |(r, _)| cast::<T>(2.0 * (q[r] - targets[r]) / b));
    let grads = online_backward(online, batch, &pass, &dq);
    Ok(LossAndGrad {
        loss,
        grads,
        q,
        targets,
    })
}

fn check_manifests<T: Scalar>(a: &AgentParams<T>, b: &AgentParams<T>) -> Result<()> {
    for ((name, x), (_, y)) in a.tensors().into_iter().zip(b.tensors()) {
        if x.dim() != y.dim() {
            return Err(Error::Shape {
                name: name.into(),
                expected: x.dim(),
                got: y.dim(),
            });
        }
    }
    Ok(())
}

/// `target <- rate * online + (1 - rate) * target`, element-wise.
pub fn soft_update<T: Scalar>(target: &mut AgentParams<T>, online: &AgentParams<T>, rate: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::Argument(format!("soft update rate {rate} outside [0, 1]")));
    }
    check_manifests(online, target)?;
    let keep: T = cast(1.0 - rate);
    let take: T = cast(rate);
    for ((_, t), (_, o)) in target.tensors_mut().into_iter().zip(online.tensors()) {
        t.zip_mut_with(o, |t, &o| *t = take * o + keep * *t);
    }
    Ok(())
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    m: AgentParams<T>,
    v: AgentParams<T>,
    t: i32,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(params: &AgentParams<T>, cfg: &TrainConfig) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
            learning_rate: cfg.learning_rate,
            beta1: cfg.adam_beta1,
            beta2: cfg.adam_beta2,
            epsilon: cfg.adam_epsilon,
        }
    }

    pub fn step(&mut self, params: &mut AgentParams<T>, grads: &AgentParams<T>) -> Result<()> {
        check_manifests(params, grads)?;
        self.t += 1;
        let (b1, b2): (T, T) = (cast(self.beta1), cast(self.beta2));
        let one = T::one();
        let lr: T = cast(self.learning_rate / (1.0 - self.beta1.powi(self.t)));
        let c2: T = cast(1.0 / (1.0 - self.beta2.powi(self.t)));
        let eps: T = cast(self.epsilon);
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut().into_iter().zip(self.v.tensors_mut()));
        for (((_, p), (_, g)), ((_, m), (_, v))) in tensors {
            ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                *p -= lr * *m / ((*v * c2).sqrt() + eps);
            });
        }
        Ok(())
    }
}

/// Samples a batch, takes one optimizer step on `online` and returns the
/// loss. Fails with [`Error::NotReady`] while the buffer is too small.
pub fn train_step<T: Scalar, R: Rng + ?Sized>(
    online: &mut AgentParams<T>,
    target: &AgentParams<T>,
    adam: &mut Adam<T>,
    buffer: &ReplayBuffer,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<f64> {
    let batch = buffer.sample(cfg.batch_size, rng)?;
    let out = loss_and_grad(online, target, &batch, cfg)?;
    adam.step(online, &out.grads)?;
    Ok(out.loss)
}

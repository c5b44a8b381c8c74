//! Shared helpers for the integration tests: random instances and
//! central-difference gradient checks at 64-bit.
#![allow(dead_code)]

use std::sync::Arc;

use cutflip_core::agent::{
    advance_backward, advance_forward, advantage_backward, advantage_forward, encode, encode_backward,
    encode_forward, q_values, value_backward, value_forward, AgentParams, ArchConfig, DecoderState,
};
use cutflip_core::env::{observe, reward, CutState};
use cutflip_core::neuro::{
    gru_backward, gru_forward, layer_norm_backward, layer_norm_forward, leaky_relu, leaky_relu_backward,
    linear_backward, linear_forward, tanh_backward, GruGrads, GruWeights,
};
use cutflip_core::training::{loss_and_grad, TrainConfig, TransitionSegment};
use cutflip_core::Graph;
use ndarray::{s, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const OP_TOL: f64 = 1e-5;
pub const COMPOSED_TOL: f64 = 1e-4;
const STEP: f64 = 1e-6;

/// Erdos-Renyi graph with weights drawn from `weights`.
pub fn er_graph<R: Rng>(n: usize, p: f64, weights: &[i64], rng: &mut R) -> Graph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                edges.push((i, j, weights[rng.random_range(0..weights.len())]));
            }
        }
    }
    Graph::from_edges(n, edges).unwrap()
}

pub fn random_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
}

pub fn small_arch() -> ArchConfig {
    ArchConfig {
        embed_dim: 4,
        encoder_rounds: 2,
        hidden_dim: 6,
        message_dim: 5,
        value_hidden: 7,
        advantage_hidden: 8,
        ..ArchConfig::default()
    }
}

/// `||a - n|| / max(||a||, ||n||)`; zero when both vanish.
pub fn rel_err(a: &Array2<f64>, n: &Array2<f64>) -> f64 {
    let diff = (a - n).mapv(|v| v * v).sum().sqrt();
    let scale = a.mapv(|v| v * v).sum().sqrt().max(n.mapv(|v| v * v).sum().sqrt());
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

pub fn numeric_grad(x: &Array2<f64>, f: impl Fn(&Array2<f64>) -> f64) -> Array2<f64> {
    let mut probe = x.clone();
    Array2::from_shape_fn(x.raw_dim(), |idx| {
        let v = x[idx];
        probe[idx] = v + STEP;
        let up = f(&probe);
        probe[idx] = v - STEP;
        let down = f(&probe);
        probe[idx] = v;
        (up - down) / (2.0 * STEP)
    })
}

/// Central differences of `f` w.r.t. every parameter entry.
pub fn numeric_param_grads(params: &AgentParams<f64>, f: impl Fn(&AgentParams<f64>) -> f64) -> AgentParams<f64> {
    let mut probe = params.clone();
    let mut out = params.zeros_like();
    for t in 0..params.tensors().len() {
        for k in 0..params.tensors()[t].1.len() {
            let g = central_difference(&mut probe, t, k, &f);
            out.tensors_mut()[t].1.as_slice_mut().unwrap()[k] = g;
        }
    }
    out
}

fn central_difference(
    probe: &mut AgentParams<f64>,
    tensor: usize,
    k: usize,
    f: &impl Fn(&AgentParams<f64>) -> f64,
) -> f64 {
    let v = probe.tensors()[tensor].1.as_slice().unwrap()[k];
    probe.tensors_mut()[tensor].1.as_slice_mut().unwrap()[k] = v + STEP;
    let up = f(probe);
    probe.tensors_mut()[tensor].1.as_slice_mut().unwrap()[k] = v - STEP;
    let down = f(probe);
    probe.tensors_mut()[tensor].1.as_slice_mut().unwrap()[k] = v;
    (up - down) / (2.0 * STEP)
}

/// Probes `per_tensor` random entries of every tensor and returns the worst
/// tensor-wise relative error over the probed entries only.
pub fn sampled_param_err(
    params: &AgentParams<f64>,
    analytic: &AgentParams<f64>,
    per_tensor: usize,
    seed: u64,
    f: impl Fn(&AgentParams<f64>) -> f64,
) -> (String, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = params.clone();
    let mut worst = (String::new(), 0.0);
    for (t, (name, a)) in analytic.tensors().into_iter().enumerate() {
        let len = a.len();
        let coords: Vec<usize> = (0..per_tensor.min(len)).map(|_| rng.random_range(0..len)).collect();
        let an = Array2::from_shape_fn((1, coords.len()), |(_, i)| a.as_slice().unwrap()[coords[i]]);
        let nu = Array2::from_shape_fn((1, coords.len()), |(_, i)| central_difference(&mut probe, t, coords[i], &f));
        let err = rel_err(&an, &nu);
        if err > worst.1 {
            worst = (name.to_string(), err);
        }
    }
    worst
}

/// Worst tensor-wise relative error between two parameter-shaped gradients.
pub fn worst_param_err(a: &AgentParams<f64>, n: &AgentParams<f64>) -> (String, f64) {
    a.tensors()
        .into_iter()
        .zip(n.tensors())
        .map(|((name, x), (_, y))| (name.to_string(), rel_err(x, y)))
        .fold((String::new(), 0.0), |acc, c| if c.1 > acc.1 { c } else { acc })
}

#[derive(Clone, Debug)]
pub struct GradCheck {
    pub name: String,
    pub rel_err: f64,
    pub tol: f64,
}

impl GradCheck {
    fn new(name: impl Into<String>, rel_err: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            rel_err,
            tol,
        }
    }

    pub fn passed(&self) -> bool {
        self.rel_err < self.tol
    }
}

fn project(y: &Array2<f64>, c: &Array2<f64>) -> f64 {
    (y * c).sum()
}

/// Element-wise ops and the layers built from them.
pub fn op_checks() -> Vec<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut out = Vec::new();

    // keep inputs away from the kink
    let x = random_matrix(5, 6, &mut rng).mapv(|v| if v.abs() < 0.05 { v + 0.1 } else { v });
    let c = random_matrix(5, 6, &mut rng);
    let analytic = leaky_relu_backward(&x, &c);
    let numeric = numeric_grad(&x, |x| project(&x.mapv(leaky_relu), &c));
    out.push(GradCheck::new("leaky_relu", rel_err(&analytic, &numeric), OP_TOL));

    let y = x.mapv(f64::tanh);
    let analytic = tanh_backward(&y, &c);
    let numeric = numeric_grad(&x, |x| project(&x.mapv(f64::tanh), &c));
    out.push(GradCheck::new("tanh", rel_err(&analytic, &numeric), OP_TOL));

    // linear
    let x = random_matrix(4, 5, &mut rng);
    let w = random_matrix(3, 5, &mut rng);
    let b = random_matrix(1, 3, &mut rng);
    let c = random_matrix(4, 3, &mut rng);
    let mut dw = Array2::zeros(w.raw_dim());
    let mut db = Array2::zeros(b.raw_dim());
    let dx = linear_backward(x.view(), &w, &c, &mut dw, Some(&mut db));
    let f = |x: &Array2<f64>, w: &Array2<f64>, b: &Array2<f64>| project(&linear_forward(x.view(), w, Some(b)).unwrap(), &c);
    out.push(GradCheck::new("linear.x", rel_err(&dx, &numeric_grad(&x, |x| f(x, &w, &b))), OP_TOL));
    out.push(GradCheck::new("linear.w", rel_err(&dw, &numeric_grad(&w, |w| f(&x, w, &b))), OP_TOL));
    out.push(GradCheck::new("linear.b", rel_err(&db, &numeric_grad(&b, |b| f(&x, &w, b))), OP_TOL));

    // layer norm
    let x = random_matrix(3, 7, &mut rng);
    let g = random_matrix(1, 7, &mut rng);
    let b = random_matrix(1, 7, &mut rng);
    let c = random_matrix(3, 7, &mut rng);
    let (_, cache) = layer_norm_forward(x.view(), &g, &b).unwrap();
    let mut dg = Array2::zeros(g.raw_dim());
    let mut db = Array2::zeros(b.raw_dim());
    let dx = layer_norm_backward(&cache, &g, &c, &mut dg, &mut db);
    let f = |x: &Array2<f64>, g: &Array2<f64>, b: &Array2<f64>| project(&layer_norm_forward(x.view(), g, b).unwrap().0, &c);
    out.push(GradCheck::new("layer_norm.x", rel_err(&dx, &numeric_grad(&x, |x| f(x, &g, &b))), OP_TOL));
    out.push(GradCheck::new("layer_norm.gain", rel_err(&dg, &numeric_grad(&g, |g| f(&x, g, &b))), OP_TOL));
    out.push(GradCheck::new("layer_norm.bias", rel_err(&db, &numeric_grad(&b, |b| f(&x, &g, b))), OP_TOL));

    // gated recurrent cell
    let (hd, id, rows) = (5, 4, 3);
    let w_ih = random_matrix(3 * hd, id, &mut rng);
    let w_hh = random_matrix(3 * hd, hd, &mut rng);
    let bias = random_matrix(1, 3 * hd, &mut rng);
    let h = random_matrix(rows, hd, &mut rng);
    let x = random_matrix(rows, id, &mut rng);
    let c = random_matrix(rows, hd, &mut rng);
    let weights = GruWeights {
        w_ih: &w_ih,
        w_hh: &w_hh,
        b: &bias,
    };
    let (_, cache) = gru_forward(weights, h.view(), x.view()).unwrap();
    let mut g_ih = Array2::zeros(w_ih.raw_dim());
    let mut g_hh = Array2::zeros(w_hh.raw_dim());
    let mut g_b = Array2::zeros(bias.raw_dim());
    let (dx, dh) = gru_backward(
        weights,
        &cache,
        &c,
        GruGrads {
            w_ih: &mut g_ih,
            w_hh: &mut g_hh,
            b: &mut g_b,
        },
    );
    let f = |w_ih: &Array2<f64>, w_hh: &Array2<f64>, b: &Array2<f64>, h: &Array2<f64>, x: &Array2<f64>| {
        let w = GruWeights { w_ih, w_hh, b };
        project(&gru_forward(w, h.view(), x.view()).unwrap().0, &c)
    };
    out.push(GradCheck::new("gru.h", rel_err(&dh, &numeric_grad(&h, |h| f(&w_ih, &w_hh, &bias, h, &x))), OP_TOL));
    out.push(GradCheck::new("gru.x", rel_err(&dx, &numeric_grad(&x, |x| f(&w_ih, &w_hh, &bias, &h, x))), OP_TOL));
    out.push(GradCheck::new("gru.w_ih", rel_err(&g_ih, &numeric_grad(&w_ih, |w| f(w, &w_hh, &bias, &h, &x))), OP_TOL));
    out.push(GradCheck::new("gru.w_hh", rel_err(&g_hh, &numeric_grad(&w_hh, |w| f(&w_ih, w, &bias, &h, &x))), OP_TOL));
    out.push(GradCheck::new("gru.b", rel_err(&g_b, &numeric_grad(&bias, |b| f(&w_ih, &w_hh, b, &h, &x))), OP_TOL));
    out
}

fn random_state(graph: &Graph, steps: usize, rng: &mut ChaCha8Rng) -> CutState {
    let n = graph.n_vertices();
    let labels = (0..n).map(|_| rng.random()).collect();
    let mut state = CutState::new(graph, labels).unwrap();
    for _ in 0..steps {
        state.apply_flip(graph, rng.random_range(0..n)).unwrap();
    }
    state
}

/// Encoder, Q-head and recurrent update, each checked end to end.
pub fn composed_checks() -> Vec<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let arch = small_arch();
    let params = AgentParams::<f64>::init(arch, &mut rng);
    let graph = er_graph(7, 0.5, &[-1, 1], &mut rng);
    let e = arch.embed_dim;
    let mut out = Vec::new();

    // encoder
    let c = random_matrix(7, e, &mut rng);
    let (_, cache) = encode_forward(&graph, &params).unwrap();
    let mut grads = params.zeros_like();
    encode_backward(&graph, &params, &cache, &c, &mut grads);
    let numeric = numeric_param_grads(&params, |p| project(&encode(&graph, p).unwrap().x, &c));
    let (name, err) = worst_param_err(&grads, &numeric);
    out.push(GradCheck::new(format!("encoder (worst: {name})"), err, COMPOSED_TOL));

    // Q-head, including the encoder and observation projection
    let state = random_state(&graph, 5, &mut rng);
    let horizon = arch.horizon(7);
    let obs = observe(&state, horizon);
    let dec = DecoderState {
        hidden: random_matrix(1, arch.hidden_dim, &mut rng),
        step: 5,
    };
    let c = random_matrix(7, 1, &mut rng);
    let q_loss = |p: &AgentParams<f64>| {
        let emb = encode(&graph, p).unwrap();
        let q = q_values(&emb, &obs, &dec, p).unwrap();
        q.iter().zip(c.iter()).map(|(q, c)| q * c).sum::<f64>()
    };
    let mut grads = params.zeros_like();
    {
        let (emb, enc_cache) = encode_forward(&graph, &params).unwrap();
        let obs_m = Array2::from_shape_fn((7, 3), |(i, k)| obs.per_vertex[i][k]);
        let oproj = linear_forward(obs_m.view(), &params.dec_w_o, Some(&params.dec_b_o)).unwrap();
        let hproj = linear_forward(dec.hidden.view(), &params.dec_w_h, Some(&params.dec_b_h)).unwrap();
        let hb = hproj.broadcast((7, hproj.ncols())).unwrap().to_owned();
        let input = ndarray::concatenate![Axis(1), emb.x, oproj, hb];
        let (_, acache) = advantage_forward(&params, input.view()).unwrap();
        let (_, vcache) = value_forward(&params, dec.hidden.view()).unwrap();
        let dinput = advantage_backward(&params, &acache, &c, &mut grads);
        let dv = Array2::from_elem((1, 1), c.sum());
        value_backward(&params, &vcache, &dv, &mut grads);
        let dh = dinput.slice(s![.., 2 * e..]).sum_axis(Axis(0)).insert_axis(Axis(0));
        linear_backward(dec.hidden.view(), &params.dec_w_h, &dh, &mut grads.dec_w_h, Some(&mut grads.dec_b_h));
        let doproj = dinput.slice(s![.., e..2 * e]).to_owned();
        linear_backward(obs_m.view(), &params.dec_w_o, &doproj, &mut grads.dec_w_o, Some(&mut grads.dec_b_o));
        let demb = dinput.slice(s![.., ..e]).to_owned();
        encode_backward(&graph, &params, &enc_cache, &demb, &mut grads);
    }
    let numeric = numeric_param_grads(&params, q_loss);
    let (name, err) = worst_param_err(&grads, &numeric);
    out.push(GradCheck::new(format!("q-head (worst: {name})"), err, COMPOSED_TOL));

    // five recurrent updates
    let rows = 2;
    let h0 = random_matrix(rows, arch.hidden_dim, &mut rng);
    let v_stars: Vec<Array2<f64>> = (0..5).map(|_| random_matrix(rows, arch.vertex_dim(), &mut rng)).collect();
    let globals: Vec<Array2<f64>> = (0..5).map(|_| random_matrix(rows, 2, &mut rng)).collect();
    let c = random_matrix(rows, arch.hidden_dim, &mut rng);
    let chain = |p: &AgentParams<f64>, h0: &Array2<f64>, v0: &Array2<f64>| {
        let mut h = h0.clone();
        for k in 0..5 {
            let v = if k == 0 { v0 } else { &v_stars[k] };
            h = advance_forward(p, h.view(), v.view(), globals[k].view()).unwrap().0;
        }
        project(&h, &c)
    };
    let mut grads = params.zeros_like();
    let mut caches = Vec::new();
    let mut h = h0.clone();
    for k in 0..5 {
        let (next, cache) = advance_forward(&params, h.view(), v_stars[k].view(), globals[k].view()).unwrap();
        caches.push(cache);
        h = next;
    }
    let mut dh = c.clone();
    let mut dv0 = Array2::zeros((rows, arch.vertex_dim()));
    for (k, cache) in caches.iter().enumerate().rev() {
        let (d_prev, dv) = advance_backward(&params, cache, &dh, &mut grads);
        if k == 0 {
            dv0 = dv;
        }
        dh = d_prev;
    }
    let numeric = numeric_param_grads(&params, |p| chain(p, &h0, &v_stars[0]));
    let (name, err) = worst_param_err(&grads, &numeric);
    out.push(GradCheck::new(format!("advance x5 params (worst: {name})"), err, COMPOSED_TOL));
    let nh = numeric_grad(&h0, |h| chain(&params, h, &v_stars[0]));
    out.push(GradCheck::new("advance x5 initial hidden", rel_err(&dh, &nh), COMPOSED_TOL));
    let nv = numeric_grad(&v_stars[0], |v| chain(&params, &h0, v));
    out.push(GradCheck::new("advance x5 first vertex input", rel_err(&dv0, &nv), COMPOSED_TOL));
    out
}

/// Segments of one random-action episode, one per transition, with random
/// stored decoder states.
pub fn episode_segments(
    graph: &Arc<Graph>,
    episode_length: usize,
    bptt_length: usize,
    hidden_dim: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Arc<TransitionSegment>> {
    let n = graph.n_vertices();
    let labels = (0..n).map(|_| rng.random()).collect();
    let mut state = CutState::new(graph, labels).unwrap();
    let mut history: Vec<(cutflip_core::EnvSnapshot, Vec<f32>, usize)> = Vec::new();
    let mut out = Vec::new();
    for t in 0..episode_length {
        let hidden = (0..hidden_dim).map(|_| rng.random_range(-0.9f32..0.9)).collect();
        let a = rng.random_range(0..n);
        history.push((state.snapshot(), hidden, a));
        if history.len() > bptt_length + 1 {
            history.remove(0);
        }
        let prev = state.best_cut();
        state.apply_flip(graph, a).unwrap();
        out.push(Arc::new(TransitionSegment {
            graph: graph.clone(),
            start: history[0].0.clone(),
            start_hidden: history[0].1.clone(),
            actions: history.iter().map(|h| h.2).collect(),
            reward: reward(&state, prev, n),
            done: t + 1 == episode_length,
        }));
    }
    out
}

/// Full training loss on a 2-vertex graph with a BPTT length of 2, and a
/// sampled check of the same loss at the default architecture.
pub fn training_loss_checks() -> Vec<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut out = Vec::new();
    let cfg = TrainConfig {
        bptt_length: 2,
        mdqn_temperature: 0.5,
        arch: small_arch(),
        ..TrainConfig::default()
    };
    let online = AgentParams::<f64>::init(cfg.arch, &mut rng);
    let target = AgentParams::<f64>::init(cfg.arch, &mut rng);
    let graph = Arc::new(Graph::from_edges(2, [(0, 1, 1)]).unwrap());
    let mut batch = Vec::new();
    for _ in 0..2 {
        batch.extend(episode_segments(&graph, 4, 2, cfg.arch.hidden_dim, &mut rng));
    }
    let analytic = loss_and_grad(&online, &target, &batch, &cfg).unwrap();
    let numeric = numeric_param_grads(&online, |p| {
        loss_and_grad(p, &target, &batch, &cfg).unwrap().loss
    });
    let (name, err) = worst_param_err(&analytic.grads, &numeric);
    out.push(GradCheck::new(format!("training loss, 2 vertices (worst: {name})"), err, COMPOSED_TOL));

    let cfg = TrainConfig {
        bptt_length: 5,
        ..TrainConfig::default()
    };
    let online = AgentParams::<f64>::init(cfg.arch, &mut rng);
    let target = AgentParams::<f64>::init(cfg.arch, &mut rng);
    let graph = Arc::new(er_graph(9, 0.4, &[-1, 1], &mut rng));
    let batch: Vec<_> = episode_segments(&graph, 18, 5, cfg.arch.hidden_dim, &mut rng)
        .into_iter()
        .step_by(3)
        .collect();
    let analytic = loss_and_grad(&online, &target, &batch, &cfg).unwrap();
    let (name, err) = sampled_param_err(&online, &analytic.grads, 3, 7, |p| {
        loss_and_grad(p, &target, &batch, &cfg).unwrap().loss
    });
    out.push(GradCheck::new(
        format!("training loss, default sizes, sampled (worst: {name})"),
        err,
        COMPOSED_TOL,
    ));
    out
}

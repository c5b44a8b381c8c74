//! Per-step Q-values and the recurrent state update.
//!
//! `Q(v_i, h) = V(h) + A([v_i, W_h h])` with `v_i = [x_i, W_o o_i]`;
//! `h' = GRU(h, leaky(W_m [v_*, o_G']))`.

use ndarray::{s, Array2, ArrayView1, ArrayView2, Axis};

use super::encoder::NodeEmbeddings;
use super::params::AgentParams;
use crate::env::{vertex_features, CutState, Observation};
use crate::error::{Error, Result};
use crate::neuro::{
    cast, gru_backward, gru_forward, layer_norm_backward, layer_norm_forward, leaky_relu,
    leaky_relu_backward, linear_backward, linear_forward, tanh_backward, GruCache, GruGrads,
    GruWeights, LayerNormCache, Scalar, LAYER_NORM_EPS,
};

/// Recurrent decoder state `h` (a `1 x hidden_dim` row) and its step count.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderState<T> {
    pub hidden: Array2<T>,
    pub step: usize,
}

impl<T: Scalar> DecoderState<T> {
    pub fn zeros(params: &AgentParams<T>) -> Self {
        Self {
            hidden: Array2::zeros((1, params.arch.hidden_dim)),
            step: 0,
        }
    }
}

pub(crate) fn decoder_gru<T: Scalar>(p: &AgentParams<T>) -> GruWeights<'_, T> {
    GruWeights {
        w_ih: &p.dec_gru_w_ih,
        w_hh: &p.dec_gru_w_hh,
        b: &p.dec_gru_b,
    }
}

fn observation_matrix<T: Scalar>(rows: &[[f64; 3]]) -> Array2<T> {
    Array2::from_shape_fn((rows.len(), 3), |(i, k)| cast(rows[i][k]))
}

/// `[x_i, W_o o_i + b_o]` for each row.
pub fn vertex_inputs<T: Scalar>(
    params: &AgentParams<T>,
    x: ArrayView2<T>,
    obs: ArrayView2<T>,
) -> Result<Array2<T>> {
    if x.nrows() != obs.nrows() {
        return Err(Error::Dimension {
            expected: x.nrows(),
            got: obs.nrows(),
        });
    }
    let o = linear_forward(obs, &params.dec_w_o, Some(&params.dec_b_o))?;
    Ok(ndarray::concatenate![Axis(1), x, o])
}

pub struct ValueCache<T> {
    squashed: Array2<T>,
    pre: Array2<T>,
    act: Array2<T>,
}

/// `V(h) = w2 . leaky(W1 tanh(h) + b1) + b2`, one row per state.
pub fn value_forward<T: Scalar>(params: &AgentParams<T>, h: ArrayView2<T>) -> Result<(Array2<T>, ValueCache<T>)> {
    let squashed = h.mapv(|v| v.tanh());
    let pre = linear_forward(squashed.view(), &params.val_w1, Some(&params.val_b1))?;
    let act = pre.mapv(leaky_relu);
    let v = linear_forward(act.view(), &params.val_w2, Some(&params.val_b2))?;
    Ok((v, ValueCache { squashed, pre, act }))
}

pub fn value_backward<T: Scalar>(
    params: &AgentParams<T>,
    cache: &ValueCache<T>,
    dv: &Array2<T>,
    grads: &mut AgentParams<T>,
) -> Array2<T> {
    let dact = linear_backward(cache.act.view(), &params.val_w2, dv, &mut grads.val_w2, Some(&mut grads.val_b2));
    let dpre = leaky_relu_backward(&cache.pre, &dact);
    let dsq = linear_backward(cache.squashed.view(), &params.val_w1, &dpre, &mut grads.val_w1, Some(&mut grads.val_b1));
    tanh_backward(&cache.squashed, &dsq)
}

pub struct AdvantageCache<T> {
    input: Array2<T>,
    norm: LayerNormCache<T>,
    normed: Array2<T>,
    act: Array2<T>,
}

/// `A(u) = w2 . leaky(layernorm(W1 u + b1)) + b2` for rows `u = [v_i, W_h h]`.
pub fn advantage_forward<T: Scalar>(
    params: &AgentParams<T>,
    input: ArrayView2<T>,
) -> Result<(Array2<T>, AdvantageCache<T>)> {
    let pre = linear_forward(input, &params.adv_w1, Some(&params.adv_b1))?;
    let (normed, norm) = layer_norm_forward(pre.view(), &params.adv_ln_gain, &params.adv_ln_bias)?;
    let act = normed.mapv(leaky_relu);
    let a = linear_forward(act.view(), &params.adv_w2, Some(&params.adv_b2))?;
    Ok((
        a,
        AdvantageCache {
            input: input.to_owned(),
            norm,
            normed,
            act,
        },
    ))
}

pub fn advantage_backward<T: Scalar>(
    params: &AgentParams<T>,
    cache: &AdvantageCache<T>,
    da: &Array2<T>,
    grads: &mut AgentParams<T>,
) -> Array2<T> {
    let dact = linear_backward(cache.act.view(), &params.adv_w2, da, &mut grads.adv_w2, Some(&mut grads.adv_b2));
    let dnormed = leaky_relu_backward(&cache.normed, &dact);
    let dpre = layer_norm_backward(
        &cache.norm,
        &params.adv_ln_gain,
        &dnormed,
        &mut grads.adv_ln_gain,
        &mut grads.adv_ln_bias,
    );
    linear_backward(cache.input.view(), &params.adv_w1, &dpre, &mut grads.adv_w1, Some(&mut grads.adv_b1))
}

/// Q-values of every vertex for a single decoder state.
pub fn q_values<T: Scalar>(
    emb: &NodeEmbeddings<T>,
    obs: &Observation,
    dec: &DecoderState<T>,
    params: &AgentParams<T>,
) -> Result<Vec<T>> {
    let n = emb.n_vertices();
    if obs.per_vertex.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: obs.per_vertex.len(),
        });
    }
    if dec.hidden.dim() != (1, params.arch.hidden_dim) {
        return Err(Error::Shape {
            name: "hidden".into(),
            expected: (1, params.arch.hidden_dim),
            got: dec.hidden.dim(),
        });
    }
    let (value, _) = value_forward(params, dec.hidden.view())?;
    let hproj = linear_forward(dec.hidden.view(), &params.dec_w_h, Some(&params.dec_b_h))?;
    let v = vertex_inputs(params, emb.view(), observation_matrix::<T>(&obs.per_vertex).view())?;
    let hb = hproj.broadcast((n, hproj.ncols())).unwrap();
    let input = ndarray::concatenate![Axis(1), v, hb];
    let (a, _) = advantage_forward(params, input.view())?;
    Ok(a.column(0).iter().map(|&ai| ai + value[[0, 0]]).collect())
}

pub struct MessageCache<T> {
    input: Array2<T>,
    pre: Array2<T>,
}

pub struct AdvanceCache<T> {
    message: MessageCache<T>,
    gru: Option<GruCache<T>>,
}

/// Batched hidden update from `v_star: B x 2E` and `global_next: B x 2`.
pub fn advance_forward<T: Scalar>(
    params: &AgentParams<T>,
    hidden: ArrayView2<T>,
    v_star: ArrayView2<T>,
    global_next: ArrayView2<T>,
) -> Result<(Array2<T>, AdvanceCache<T>)> {
    let input = ndarray::concatenate![Axis(1), v_star, global_next];
    let pre = linear_forward(input.view(), &params.dec_w_m, Some(&params.dec_b_m))?;
    let message = MessageCache { input, pre };
    if !params.arch.use_recurrence {
        return Ok((Array2::zeros(hidden.raw_dim()), AdvanceCache { message, gru: None }));
    }
    let m = message.pre.mapv(leaky_relu);
    let (next, gru) = gru_forward(decoder_gru(params), hidden, m.view())?;
    Ok((
        next,
        AdvanceCache {
            message,
            gru: Some(gru),
        },
    ))
}

/// Returns `(d_hidden, d_v_star)`.
pub fn advance_backward<T: Scalar>(
    params: &AgentParams<T>,
    cache: &AdvanceCache<T>,
    d_next: &Array2<T>,
    grads: &mut AgentParams<T>,
) -> (Array2<T>, Array2<T>) {
    let vd = params.arch.vertex_dim();
    let Some(gru) = &cache.gru else {
        return (Array2::zeros(d_next.raw_dim()), Array2::zeros((d_next.nrows(), vd)));
    };
    let (dm, dh) = gru_backward(
        decoder_gru(params),
        gru,
        d_next,
        GruGrads {
            w_ih: &mut grads.dec_gru_w_ih,
            w_hh: &mut grads.dec_gru_w_hh,
            b: &mut grads.dec_gru_b,
        },
    );
    let dpre = leaky_relu_backward(&cache.message.pre, &dm);
    let dinput = linear_backward(
        cache.message.input.view(),
        &params.dec_w_m,
        &dpre,
        &mut grads.dec_w_m,
        Some(&mut grads.dec_b_m),
    );
    (dh, dinput.slice(s![.., ..vd]).to_owned())
}

/// `h' = GRU(h, leaky(W_m [v_star, o_G']))` for one trajectory.
pub fn advance_hidden<T: Scalar>(
    dec: &DecoderState<T>,
    v_star: ArrayView1<T>,
    global_next: [f64; 2],
    params: &AgentParams<T>,
) -> Result<DecoderState<T>> {
    if v_star.len() != params.arch.vertex_dim() {
        return Err(Error::Dimension {
            expected: params.arch.vertex_dim(),
            got: v_star.len(),
        });
    }
    let og = Array2::from_shape_fn((1, 2), |(_, k)| cast(global_next[k]));
    let (hidden, _) = advance_forward(params, dec.hidden.view(), v_star.insert_axis(Axis(0)), og.view())?;
    Ok(DecoderState {
        hidden,
        step: dec.step + 1,
    })
}

/// Advantage-head terms that depend only on the graph, folded ahead of the
/// episode so that each step costs `O(|V| * advantage_hidden)`.
#[derive(Clone, Debug)]
pub struct QPlan<T> {
    /// `W1_x x_i + W1_o b_o + b1`, one row per vertex.
    base: Array2<T>,
    /// `W1_o W_o`, maps raw observation rows into the first layer.
    obs_map: Array2<T>,
}

impl<T: Scalar> QPlan<T> {
    pub fn new(params: &AgentParams<T>, emb: &NodeEmbeddings<T>) -> Self {
        let e = params.arch.embed_dim;
        let w1 = &params.adv_w1;
        let w1x = w1.slice(s![.., ..e]);
        let w1o = w1.slice(s![.., e..2 * e]);
        let mut base = emb.x.dot(&w1x.t());
        let shift = params.dec_b_o.dot(&w1o.t()) + &params.adv_b1;
        base += &shift;
        Self {
            base,
            obs_map: w1o.dot(&params.dec_w_o),
        }
    }

    /// Per-state terms: `V(h)` and `W1_h (W_h h + b_h)`, one row per state.
    pub fn state_terms(params: &AgentParams<T>, hidden: ArrayView2<T>) -> Result<(Vec<T>, Array2<T>)> {
        let e = params.arch.embed_dim;
        let (value, _) = value_forward(params, hidden)?;
        let hproj = linear_forward(hidden, &params.dec_w_h, Some(&params.dec_b_h))?;
        let w1h = params.adv_w1.slice(s![.., 2 * e..]);
        Ok((value.column(0).to_vec(), hproj.dot(&w1h.t())))
    }

    /// Writes `Q_i` for every vertex of `state` into `out`.
    #[allow(clippy::too_many_arguments)]
    pub fn fill(
        &self,
        params: &AgentParams<T>,
        state: &CutState,
        horizon: usize,
        value: T,
        hidden_term: ArrayView1<T>,
        out: &mut [T],
        scratch: &mut Vec<T>,
    ) {
        let ah = self.base.ncols();
        let inv_n: T = cast(1.0 / ah as f64);
        let eps: T = cast(LAYER_NORM_EPS);
        let gain = params.adv_ln_gain.row(0);
        let bias = params.adv_ln_bias.row(0);
        let w2 = params.adv_w2.row(0);
        let b2 = params.adv_b2[[0, 0]];
        scratch.resize(ah, T::zero());
        for (i, q) in out.iter_mut().enumerate() {
            let o = vertex_features(state, i, horizon);
            let o: [T; 3] = [cast(o[0]), cast(o[1]), cast(o[2])];
            let base = self.base.row(i);
            let mut mean = T::zero();
            for k in 0..ah {
                let m = self.obs_map.row(k);
                let v = base[k] + hidden_term[k] + m[0] * o[0] + m[1] * o[1] + m[2] * o[2];
                scratch[k] = v;
                mean += v;
            }
            mean *= inv_n;
            let mut var = T::zero();
            for v in scratch.iter_mut() {
                *v -= mean;
                var += *v * *v;
            }
            let inv_std = T::one() / (var * inv_n + eps).sqrt();
            let mut a = b2;
            for k in 0..ah {
                a += w2[k] * leaky_relu(gain[k] * scratch[k] * inv_std + bias[k]);
            }
            *q = value + a;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{encode, ArchConfig};
    use crate::env::observe;
    use crate::graph::Graph;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn arch() -> ArchConfig {
        ArchConfig {
            hidden_dim: 12,
            value_hidden: 6,
            ..ArchConfig::default()
        }
    }

    fn setup(seed: u64) -> (Graph, AgentParams<f64>, CutState) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges = Vec::new();
        for i in 0..9 {
            for j in i + 1..9 {
                if rng.random_bool(0.4) {
                    edges.push((i, j, rng.random_range(-1..=1)));
                }
            }
        }
        let g = Graph::from_edges(9, edges).unwrap();
        let params = AgentParams::init(arch(), &mut rng);
        let mut state = CutState::new(&g, (0..9).map(|_| rng.random()).collect()).unwrap();
        for _ in 0..5 {
            state.apply_flip(&g, rng.random_range(0..9)).unwrap();
        }
        (g, params, state)
    }

    #[test]
    fn plan_matches_reference_path() {
        let (g, params, state) = setup(1);
        let emb = encode(&g, &params).unwrap();
        let mut dec = DecoderState::zeros(&params);
        dec.hidden.mapv_inplace(|_| 0.3);
        dec.hidden[[0, 2]] = -0.7;
        let q_ref = q_values(&emb, &observe(&state, 18), &dec, &params).unwrap();

        let plan = QPlan::new(&params, &emb);
        let (value, hterm) = QPlan::state_terms(&params, dec.hidden.view()).unwrap();
        let mut q = vec![0.0; 9];
        plan.fill(&params, &state, 18, value[0], hterm.row(0), &mut q, &mut Vec::new());
        for (a, b) in q.iter().zip(&q_ref) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_advantage_output_gives_flat_q() {
        let (g, mut params, state) = setup(2);
        params.adv_w2.fill(0.0);
        let emb = encode(&g, &params).unwrap();
        let q = q_values(&emb, &observe(&state, 18), &DecoderState::zeros(&params), &params).unwrap();
        assert!(q.iter().all(|&v| (v - q[0]).abs() < 1e-15));
    }

    #[test]
    fn value_shift_moves_every_q() {
        let (g, mut params, state) = setup(3);
        let emb = encode(&g, &params).unwrap();
        let obs = observe(&state, 18);
        let dec = DecoderState::zeros(&params);
        let q0 = q_values(&emb, &obs, &dec, &params).unwrap();
        params.val_b2[[0, 0]] += 2.5;
        let q1 = q_values(&emb, &obs, &dec, &params).unwrap();
        for (a, b) in q0.iter().zip(&q1) {
            assert!((b - a - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_inputs_identical_q() {
        let (_, params, _) = setup(4);
        // two isolated vertices with identical state
        let g2 = Graph::from_edges(4, [(0, 1, 1)]).unwrap();
        let emb = encode(&g2, &params).unwrap();
        let state = CutState::new(&g2, vec![false, true, true, true]).unwrap();
        let q = q_values(&emb, &observe(&state, 8), &DecoderState::zeros(&params), &params).unwrap();
        assert_eq!(q[2], q[3]);
    }

    #[test]
    fn zero_recurrent_parameters_halve_hidden() {
        let (_, mut params, _) = setup(5);
        params.dec_gru_w_ih.fill(0.0);
        params.dec_gru_w_hh.fill(0.0);
        params.dec_gru_b.fill(0.0);
        let mut dec = DecoderState::zeros(&params);
        dec.hidden.fill(1.0);
        let v = ndarray::Array1::from_elem(32, 0.4);
        for k in 1..=3 {
            dec = advance_hidden(&dec, v.view(), [0.1, 0.2], &params).unwrap();
            assert!(dec.hidden.iter().all(|&h| (h - 0.5f64.powi(k)).abs() < 1e-15));
            assert_eq!(dec.step, k as usize);
        }
        let again = advance_hidden(&DecoderState::zeros(&params), v.view(), [0.1, 0.2], &params).unwrap();
        let again2 = advance_hidden(&DecoderState::zeros(&params), v.view(), [0.1, 0.2], &params).unwrap();
        assert_eq!(again, again2);
    }

    #[test]
    fn shape_errors() {
        let (g, params, state) = setup(6);
        let emb = encode(&g, &params).unwrap();
        let bad = DecoderState {
            hidden: Array2::zeros((1, 3)),
            step: 0,
        };
        assert!(q_values(&emb, &observe(&state, 18), &bad, &params).is_err());
        let v = ndarray::Array1::from_elem(5, 0.0);
        assert!(advance_hidden(&DecoderState::zeros(&params), v.view(), [0.0, 0.0], &params).is_err());
    }
}

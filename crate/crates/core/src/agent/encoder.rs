//! One-shot graph encoder: gated message passing with layer normalization,
//! then a linear projection.
//!
//! ```text
//! m_i    = (1/|N(i)|) sum_j w_ij (W_g x_j + b_g)
//! x_i'   = layernorm(GRU(x_i, m_i))
//! x_out  = W_p x^(L) + b_p
//! ```
//!
//! Initial features are one learned vector shared by all vertices, so the
//! output depends on the weighted adjacency alone.

use std::cell::Cell;

use ndarray::{Array2, ArrayView2, Axis};

use super::params::AgentParams;
use crate::error::Result;
use crate::graph::Graph;
use crate::neuro::{
    cast, gru_backward, gru_forward, layer_norm_backward, layer_norm_forward, linear_backward,
    linear_forward, GruCache, GruGrads, GruWeights, LayerNormCache, Scalar,
};

thread_local! {
    static ENCODE_CALLS: Cell<u64> = const { Cell::new(0) };
}

/// Number of encoder passes run on the current thread so far.
pub fn encode_call_count() -> u64 {
    ENCODE_CALLS.with(|c| c.get())
}

/// Static per-vertex embeddings, `|V| x embed_dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeEmbeddings<T> {
    pub x: Array2<T>,
}

struct Round<T> {
    input: Array2<T>,
    gru: GruCache<T>,
    norm: LayerNormCache<T>,
}

pub struct EncoderCache<T> {
    rounds: Vec<Round<T>>,
    last: Array2<T>,
}

fn encoder_gru<T: Scalar>(p: &AgentParams<T>) -> GruWeights<'_, T> {
    GruWeights {
        w_ih: &p.enc_gru_w_ih,
        w_hh: &p.enc_gru_w_hh,
        b: &p.enc_gru_b,
    }
}

/// `out_i = sum_j w_ij y_j / |N(i)|`; isolated vertices receive zero.
fn aggregate<T: Scalar>(graph: &Graph, y: &Array2<T>) -> Array2<T> {
    let mut out = Array2::zeros(y.dim());
    for i in 0..graph.n_vertices() {
        let deg = graph.degree(i);
        if deg == 0 {
            continue;
        }
        let scale: T = cast(1.0 / deg as f64);
        let mut row = out.row_mut(i);
        for (j, w) in graph.adjacent(i) {
            if w != 0 {
                row.scaled_add(scale * cast(w as f64), &y.row(j));
            }
        }
    }
    out
}

/// Adjoint of [`aggregate`].
fn aggregate_transpose<T: Scalar>(graph: &Graph, d_out: &Array2<T>) -> Array2<T> {
    let mut dy = Array2::zeros(d_out.dim());
    for i in 0..graph.n_vertices() {
        let deg = graph.degree(i);
        if deg == 0 {
            continue;
        }
        let scale: T = cast(1.0 / deg as f64);
        for (j, w) in graph.adjacent(i) {
            if w != 0 {
                dy.row_mut(j).scaled_add(scale * cast(w as f64), &d_out.row(i));
            }
        }
    }
    dy
}

/// Forward pass that keeps what [`encode_backward`] needs.
pub fn encode_forward<T: Scalar>(graph: &Graph, params: &AgentParams<T>) -> Result<(NodeEmbeddings<T>, EncoderCache<T>)> {
    ENCODE_CALLS.with(|c| c.set(c.get() + 1));
    let n = graph.n_vertices();
    let e = params.arch.embed_dim;
    if !params.arch.use_encoder {
        return Ok((
            NodeEmbeddings {
                x: Array2::zeros((n, e)),
            },
            EncoderCache {
                rounds: Vec::new(),
                last: Array2::zeros((n, e)),
            },
        ));
    }

    let mut x = params.enc_x0.broadcast((n, e)).unwrap().to_owned();
    let mut rounds = Vec::with_capacity(params.arch.encoder_rounds);
    for _ in 0..params.arch.encoder_rounds {
        let y = linear_forward(x.view(), &params.enc_w_g, Some(&params.enc_b_g))?;
        let m = aggregate(graph, &y);
        let (g, gru) = gru_forward(encoder_gru(params), x.view(), m.view())?;
        let (next, norm) = layer_norm_forward(g.view(), &params.enc_ln_gain, &params.enc_ln_bias)?;
        rounds.push(Round { input: x, gru, norm });
        x = next;
    }
    let out = linear_forward(x.view(), &params.enc_w_p, Some(&params.enc_b_p))?;
    Ok((NodeEmbeddings { x: out }, EncoderCache { rounds, last: x }))
}

/// Embeds `graph`; the result is fixed for the rest of an episode.
pub fn encode<T: Scalar>(graph: &Graph, params: &AgentParams<T>) -> Result<NodeEmbeddings<T>> {
    encode_forward(graph, params).map(|(emb, _)| emb)
}

/// Backpropagates `d_emb` (gradient w.r.t. the embeddings) into `grads`.
pub fn encode_backward<T: Scalar>(
    graph: &Graph,
    params: &AgentParams<T>,
    cache: &EncoderCache<T>,
    d_emb: &Array2<T>,
    grads: &mut AgentParams<T>,
) {
    if !params.arch.use_encoder {
        return;
    }
    let mut dx = linear_backward(
        cache.last.view(),
        &params.enc_w_p,
        d_emb,
        &mut grads.enc_w_p,
        Some(&mut grads.enc_b_p),
    );
    for round in cache.rounds.iter().rev() {
        let dg = layer_norm_backward(
            &round.norm,
            &params.enc_ln_gain,
            &dx,
            &mut grads.enc_ln_gain,
            &mut grads.enc_ln_bias,
        );
        let (dm, dh) = gru_backward(
            encoder_gru(params),
            &round.gru,
            &dg,
            GruGrads {
                w_ih: &mut grads.enc_gru_w_ih,
                w_hh: &mut grads.enc_gru_w_hh,
                b: &mut grads.enc_gru_b,
            },
        );
        let dy = aggregate_transpose(graph, &dm);
        let dx_msg = linear_backward(
            round.input.view(),
            &params.enc_w_g,
            &dy,
            &mut grads.enc_w_g,
            Some(&mut grads.enc_b_g),
        );
        dx = dh + dx_msg;
    }
    grads.enc_x0 += &dx.sum_axis(Axis(0)).insert_axis(Axis(0));
}

impl<T: Scalar> NodeEmbeddings<T> {
    pub fn n_vertices(&self) -> usize {
        self.x.nrows()
    }

    pub fn view(&self) -> ArrayView2<'_, T> {
        self.x.view()
    }
}

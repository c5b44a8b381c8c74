//! Architecture hyperparameters and the full learnable parameter set.

use std::io::{Read, Write};

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neuro::{cast, read_checkpoint, write_checkpoint, Scalar};

/// Layer widths and ablation switches.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    /// Width of the static vertex embedding (also of `W_o o_i`).
    pub embed_dim: usize,
    /// Message-passing rounds of the encoder.
    pub encoder_rounds: usize,
    /// Recurrent decoder state width.
    pub hidden_dim: usize,
    /// Width of the recurrent cell's input message.
    pub message_dim: usize,
    /// Intermediate width of the state-value head.
    pub value_hidden: usize,
    /// Intermediate width of the advantage head.
    pub advantage_hidden: usize,
    /// When false the encoder is skipped and embeddings are zero.
    pub use_encoder: bool,
    /// When false the decoder state stays at zero.
    pub use_recurrence: bool,
    /// Steps-since-flip features saturate after this many steps per vertex.
    pub observation_horizon: f64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            embed_dim: 16,
            encoder_rounds: 4,
            hidden_dim: 1024,
            message_dim: 64,
            value_hidden: 256,
            advantage_hidden: 64,
            use_encoder: true,
            use_recurrence: true,
            observation_horizon: 2.0,
        }
    }
}

impl ArchConfig {
    /// Width of `v_i = [x_i, W_o o_i]`.
    pub fn vertex_dim(&self) -> usize {
        2 * self.embed_dim
    }

    /// Input width of the advantage head, `[v_i, W_h h]`.
    pub fn advantage_input(&self) -> usize {
        2 * self.vertex_dim()
    }

    /// Input width of `W_m`, `[v_*, o_G]`.
    pub fn message_input(&self) -> usize {
        self.vertex_dim() + 2
    }

    /// Normalizer of the steps-since-flip feature on a graph with `n`
    /// vertices.
    pub fn horizon(&self, n: usize) -> usize {
        ((self.observation_horizon * n as f64).ceil() as usize).max(1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Init {
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`
    Uniform(usize),
    Ones,
    Zeros,
}

macro_rules! agent_params {
    ($( $field:ident => $name:literal ),* $(,)?) => {
        /// Every learnable tensor of the agent. Biases and vectors are
        /// stored as `1 x n` matrices.
        #[derive(Clone, Debug, PartialEq)]
        pub struct AgentParams<T> {
            pub arch: ArchConfig,
            $(pub $field: Array2<T>,)*
        }

        impl<T: Scalar> AgentParams<T> {
            /// Tensor names in manifest order.
            pub const NAMES: &'static [&'static str] = &[$($name),*];

            pub fn tensors(&self) -> Vec<(&'static str, &Array2<T>)> {
                vec![$(($name, &self.$field)),*]
            }

            pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Array2<T>)> {
                vec![$(($name, &mut self.$field)),*]
            }

            fn build(arch: ArchConfig, mut make: impl FnMut(&'static str) -> Array2<T>) -> Self {
                Self { arch, $($field: make($name),)* }
            }
        }
    };
}

agent_params! {
    enc_x0 => "encoder.x0",
    enc_w_g => "encoder.w_g",
    enc_b_g => "encoder.b_g",
    enc_gru_w_ih => "encoder.gru.w_ih",
    enc_gru_w_hh => "encoder.gru.w_hh",
    enc_gru_b => "encoder.gru.b",
    enc_ln_gain => "encoder.ln.gain",
    enc_ln_bias => "encoder.ln.bias",
    enc_w_p => "encoder.w_p",
    enc_b_p => "encoder.b_p",
    dec_w_o => "decoder.w_o",
    dec_b_o => "decoder.b_o",
    dec_w_h => "decoder.w_h",
    dec_b_h => "decoder.b_h",
    dec_w_m => "decoder.w_m",
    dec_b_m => "decoder.b_m",
    dec_gru_w_ih => "decoder.gru.w_ih",
    dec_gru_w_hh => "decoder.gru.w_hh",
    dec_gru_b => "decoder.gru.b",
    val_w1 => "value.w1",
    val_b1 => "value.b1",
    val_w2 => "value.w2",
    val_b2 => "value.b2",
    adv_w1 => "advantage.w1",
    adv_b1 => "advantage.b1",
    adv_ln_gain => "advantage.ln.gain",
    adv_ln_bias => "advantage.ln.bias",
    adv_w2 => "advantage.w2",
    adv_b2 => "advantage.b2",
}

fn layout(arch: &ArchConfig, name: &str) -> ((usize, usize), Init) {
    use Init::*;
    let e = arch.embed_dim;
    let h = arch.hidden_dim;
    let m = arch.message_dim;
    let vh = arch.value_hidden;
    let ah = arch.advantage_hidden;
    let vd = arch.vertex_dim();
    let ai = arch.advantage_input();
    let mi = arch.message_input();
    match name {
        "encoder.x0" => ((1, e), Uniform(1)),
        "encoder.w_g" => ((e, e), Uniform(e)),
        "encoder.b_g" => ((1, e), Uniform(e)),
        "encoder.gru.w_ih" => ((3 * e, e), Uniform(e)),
        "encoder.gru.w_hh" => ((3 * e, e), Uniform(e)),
        "encoder.gru.b" => ((1, 3 * e), Uniform(e)),
        "encoder.ln.gain" => ((1, e), Ones),
        "encoder.ln.bias" => ((1, e), Zeros),
        "encoder.w_p" => ((e, e), Uniform(e)),
        "encoder.b_p" => ((1, e), Uniform(e)),
        "decoder.w_o" => ((e, 3), Uniform(3)),
        "decoder.b_o" => ((1, e), Uniform(3)),
        "decoder.w_h" => ((vd, h), Uniform(h)),
        "decoder.b_h" => ((1, vd), Uniform(h)),
        "decoder.w_m" => ((m, mi), Uniform(mi)),
        "decoder.b_m" => ((1, m), Uniform(mi)),
        "decoder.gru.w_ih" => ((3 * h, m), Uniform(m)),
        "decoder.gru.w_hh" => ((3 * h, h), Uniform(h)),
        "decoder.gru.b" => ((1, 3 * h), Uniform(h)),
        "value.w1" => ((vh, h), Uniform(h)),
        "value.b1" => ((1, vh), Uniform(h)),
        "value.w2" => ((1, vh), Uniform(vh)),
        "value.b2" => ((1, 1), Uniform(vh)),
        "advantage.w1" => ((ah, ai), Uniform(ai)),
        "advantage.b1" => ((1, ah), Uniform(ai)),
        "advantage.ln.gain" => ((1, ah), Ones),
        "advantage.ln.bias" => ((1, ah), Zeros),
        "advantage.w2" => ((1, ah), Uniform(ah)),
        "advantage.b2" => ((1, 1), Uniform(ah)),
        other => unreachable!("unknown tensor {other}"),
    }
}

/// Tensor names and shapes for `arch`, in manifest order.
pub fn shape_manifest(arch: &ArchConfig) -> Vec<(&'static str, (usize, usize))> {
    AgentParams::<f64>::NAMES
        .iter()
        .map(|&n| (n, layout(arch, n).0))
        .collect()
}

impl<T: Scalar> AgentParams<T> {
    /// Fan-in scaled uniform initialization; layer-norm gains start at one
    /// and their biases at zero.
    pub fn init<R: Rng + ?Sized>(arch: ArchConfig, rng: &mut R) -> Self {
        Self::build(arch, |name| {
            let ((r, c), init) = layout(&arch, name);
            match init {
                Init::Ones => Array2::ones((r, c)),
                Init::Zeros => Array2::zeros((r, c)),
                Init::Uniform(fan_in) => {
                    let bound = 1.0 / (fan_in as f64).sqrt();
                    Array2::from_shape_simple_fn((r, c), || cast(rng.random_range(-bound..bound)))
                }
            }
        })
    }

    pub fn zeros(arch: ArchConfig) -> Self {
        Self::build(arch, |name| Array2::zeros(layout(&arch, name).0))
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.arch)
    }

    /// Converts every tensor to another precision.
    pub fn cast<U: Scalar>(&self) -> AgentParams<U> {
        let mut out = AgentParams::<U>::zeros(self.arch);
        for ((_, dst), (_, src)) in out.tensors_mut().into_iter().zip(self.tensors()) {
            dst.zip_mut_with(src, |d, &s| *d = cast(s.to_f64().unwrap()));
        }
        out
    }

    pub fn n_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Applies `f(self_tensor, other_tensor)` pairwise.
    pub fn zip_apply(&mut self, other: &Self, mut f: impl FnMut(&mut Array2<T>, &Array2<T>)) -> Result<()> {
        if self.arch != other.arch {
            return Err(Error::Argument("parameter sets have different architectures".into()));
        }
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            f(a, b);
        }
        Ok(())
    }

    pub fn fill_zero(&mut self) {
        for (_, t) in self.tensors_mut() {
            t.fill(T::zero());
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    pub fn save<W: Write>(&self, w: W) -> Result<()> {
        let meta = serde_json::to_string(&self.arch)?;
        write_checkpoint(w, &meta, self.tensors())
    }

    /// Reads a checkpoint written by [`AgentParams::save`]. The stored
    /// manifest must match the manifest implied by its architecture.
    pub fn load<R: Read>(r: R) -> Result<Self> {
        let ck = read_checkpoint(r)?;
        let arch: ArchConfig = serde_json::from_str(&ck.metadata)?;
        let mut params = Self::zeros(arch);
        ck.load_into(params.tensors_mut())?;
        Ok(params)
    }
}

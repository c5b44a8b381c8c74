//! Dense kernels with hand-written reverse-mode gradients.
//!
//! Every forward function that participates in training returns a cache;
//! the matching `*_backward` consumes it, accumulates parameter gradients
//! into caller-owned buffers and returns the gradient w.r.t. its input.

mod checkpoint;
mod gru;
mod ops;
mod softmax;

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, ToPrimitive};

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use gru::{gru_backward, gru_forward, GruCache, GruGrads, GruWeights};
pub use ops::{
    layer_norm_backward, layer_norm_forward, leaky_relu, leaky_relu_backward, leaky_relu_grad,
    linear_backward, linear_forward, sigmoid, tanh_backward, LayerNormCache, LAYER_NORM_EPS,
    LEAKY_SLOPE,
};
pub use softmax::{log_softmax_with_temperature, logsumexp, softmax_with_temperature};

/// Floating-point element type of every tensor.
pub trait Scalar:
    LinalgScalar
    + Float
    + FromPrimitive
    + ToPrimitive
    + ScalarOperand
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Converts an `f64` constant into `T`.
#[inline]
pub fn cast<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("finite constant")
}

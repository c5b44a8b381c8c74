//! Recurrent Q-network agent: graph encoder, decoder heads and batched
//! rollouts.

mod decoder;
mod encoder;
mod params;
mod policy;
mod rollout;

pub use decoder::*;
pub use encoder::*;
pub use params::*;
pub use policy::*;
pub use rollout::*;

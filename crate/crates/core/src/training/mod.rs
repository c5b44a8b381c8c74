//! Munchausen-DQN training with truncated backpropagation through time.

mod config;
mod mdqn;
mod replay;
mod run;
mod step;

pub use config::*;
pub use mdqn::*;
pub use replay::*;
pub use run::*;
pub use step::*;
